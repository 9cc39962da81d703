import numpy as np
import pytest

from mesodyn.errors import HermitianViolation, InvalidField, ModeRangeError
from mesodyn.spectral import (
    GridSpec,
    RealGridField,
    SpectralField,
    embed_modes,
    forward_transform,
    grid_1d,
    grid_2d,
    hermitian_defect,
    inverse_transform,
    spectral_derivative,
    truncate_modes,
    wavenumbers,
)


def naive_dft(values: np.ndarray) -> np.ndarray:
    """O(N^2) direct summation oracle with the package's 1/N convention."""
    n = values.size
    j = np.arange(n)
    k = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(k, j) / n)
    return mat @ values / n


def random_field(grid, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return RealGridField(grid, scale * rng.normal(size=grid.shape))


class TestGridSpec:
    def test_rejects_odd_or_tiny_grids(self):
        with pytest.raises(InvalidField):
            grid_1d(7)
        with pytest.raises(InvalidField):
            grid_1d(2)
        with pytest.raises(InvalidField):
            GridSpec(1, (8,), (-1.0,))

    def test_rejects_bad_dim(self):
        with pytest.raises(InvalidField):
            GridSpec(3, (8, 8, 8), (1.0, 1.0, 1.0))

    def test_cell_volume(self):
        assert grid_2d(8, 16, 2.0, 1.0).cell_volume == pytest.approx(2.0 / 8 / 16)


class TestForwardTransform:
    def test_constant_field_has_only_mean_mode(self):
        grid = grid_1d(8)
        spec = forward_transform(RealGridField(grid, np.full(8, 3.0)))
        assert spec.coeffs[0] == pytest.approx(3.0)
        assert np.max(np.abs(spec.coeffs[1:])) < 1e-14

    def test_single_sine_mode(self):
        grid = grid_1d(8)
        x = grid.axis_coordinates(0)
        spec = forward_transform(RealGridField(grid, np.sin(2 * np.pi * x)))
        assert spec.coeffs[1] == pytest.approx(-0.5j, abs=1e-14)
        assert spec.coeffs[-1] == pytest.approx(0.5j, abs=1e-14)

    def test_matches_naive_dft(self):
        grid = grid_1d(16)
        field = random_field(grid, 0)
        spec = forward_transform(field)
        oracle = naive_dft(field.values)
        assert np.max(np.abs(spec.coeffs - oracle)) < 1e-12

    def test_rejects_non_finite(self):
        grid = grid_1d(8)
        values = np.zeros(8)
        values[3] = np.inf
        with pytest.raises(InvalidField):
            RealGridField(grid, values)

    def test_output_exactly_hermitian(self):
        for seed in range(5):
            spec = forward_transform(random_field(grid_1d(32), seed))
            assert hermitian_defect(spec.coeffs) == 0.0


class TestInverseTransform:
    def test_mean_mode_only(self):
        grid = grid_1d(8)
        coeffs = np.zeros(8, dtype=complex)
        coeffs[0] = 3.0
        field = inverse_transform(SpectralField(grid, coeffs))
        assert np.allclose(field.values, 3.0)

    def test_round_trip_identity(self):
        grid = grid_1d(32)
        field = random_field(grid, 1)
        back = inverse_transform(forward_transform(field))
        scale = np.max(np.abs(field.values))
        assert np.max(np.abs(back.values - field.values)) < 1e-12 * scale

    def test_asymmetric_input_rejected(self):
        grid = grid_1d(8)
        coeffs = np.zeros(8, dtype=complex)
        coeffs[1] = 1.0
        coeffs[-1] = 2.0
        with pytest.raises(HermitianViolation):
            inverse_transform(SpectralField(grid, coeffs))

    def test_round_trip_2d(self):
        grid = grid_2d(8, 12)
        field = random_field(grid, 2)
        back = inverse_transform(forward_transform(field))
        assert np.max(np.abs(back.values - field.values)) < 1e-12


class TestSpectralDerivative:
    def test_constant_derivative_is_zero(self):
        spec = forward_transform(RealGridField(grid_1d(16), np.full(16, 2.5)))
        for order in (1, 2, 3, 4):
            out = spectral_derivative(spec, order)
            assert np.max(np.abs(out.coeffs)) < 1e-12

    def test_sine_first_derivative(self):
        grid = grid_1d(64)
        x = grid.axis_coordinates(0)
        spec = forward_transform(RealGridField(grid, np.sin(2 * np.pi * x)))
        du = inverse_transform(spectral_derivative(spec, 1))
        assert np.max(np.abs(du.values - 2 * np.pi * np.cos(2 * np.pi * x))) < 1e-10

    def test_sine_third_derivative(self):
        grid = grid_1d(64)
        x = grid.axis_coordinates(0)
        spec = forward_transform(RealGridField(grid, np.sin(2 * np.pi * x)))
        d3 = inverse_transform(spectral_derivative(spec, 3))
        expect = -((2 * np.pi) ** 3) * np.cos(2 * np.pi * x)
        assert np.max(np.abs(d3.values - expect)) < 1e-8

    def test_order_out_of_range(self):
        spec = forward_transform(random_field(grid_1d(16), 3))
        with pytest.raises(ValueError):
            spectral_derivative(spec, 5)

    def test_mixed_derivatives_commute_2d(self):
        spec = forward_transform(random_field(grid_2d(16, 16), 4))
        a = spectral_derivative(spectral_derivative(spec, 1, 0), 1, 1)
        b = spectral_derivative(spectral_derivative(spec, 1, 1), 1, 0)
        assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-10


class TestTruncation:
    def test_cutoff_16_gives_17_entries(self):
        spec = forward_transform(random_field(grid_1d(256), 5))
        low = truncate_modes(spec, 16)
        assert low.shape == (17,)
        assert low[0] == pytest.approx(spec.coeffs[0])

    def test_cutoff_1_on_constant(self):
        spec = forward_transform(RealGridField(grid_1d(8), np.full(8, 3.0)))
        low = truncate_modes(spec, 1)
        assert low[0] == pytest.approx(3.0)
        assert abs(low[1]) < 1e-14

    def test_cutoff_too_large(self):
        spec = forward_transform(random_field(grid_1d(16), 6))
        with pytest.raises(ModeRangeError):
            truncate_modes(spec, 9)

    def test_band_limited_round_trip(self):
        grid = grid_1d(64)
        x = grid.axis_coordinates(0)
        u = np.sin(2 * np.pi * 3 * x) + 0.5 * np.cos(2 * np.pi * 5 * x)
        spec = forward_transform(RealGridField(grid, u))
        low = truncate_modes(spec, 8)
        back = inverse_transform(embed_modes(low, grid))
        assert np.max(np.abs(back.values - u)) < 1e-12

    def test_band_limited_round_trip_2d(self):
        grid = grid_2d(32, 32)
        x = grid.axis_coordinates(0)
        y = grid.axis_coordinates(1)
        xx, yy = np.meshgrid(x, y, indexing="ij")
        u = np.sin(2 * np.pi * (2 * xx + yy)) + np.cos(2 * np.pi * 3 * yy)
        spec = forward_transform(RealGridField(grid, u))
        low = truncate_modes(spec, 4)
        assert low.shape == (5, 9)
        back = inverse_transform(embed_modes(low, grid))
        assert np.max(np.abs(back.values - u)) < 1e-12


class TestInvariants:
    def test_parseval(self):
        for seed in range(5):
            grid = grid_1d(64)
            field = random_field(grid, seed)
            spec = forward_transform(field)
            physical = np.sum(field.values**2) / grid.n_total
            spectral = np.sum(np.abs(spec.coeffs) ** 2)
            assert physical == pytest.approx(spectral, rel=1e-10)

    def test_linearity(self):
        grid = grid_1d(32)
        a = random_field(grid, 10)
        b = random_field(grid, 11)
        combo = RealGridField(grid, 2.0 * a.values - 3.0 * b.values)
        lhs = forward_transform(combo).coeffs
        rhs = 2.0 * forward_transform(a).coeffs - 3.0 * forward_transform(b).coeffs
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_wavenumbers_symmetric(self):
        wn = wavenumbers(grid_1d(16))
        k = wn.modes[0]
        lap = wn.laplacian_symbol
        for i, kv in enumerate(k):
            j = np.where(k == -kv)[0]
            if j.size:
                assert lap[i] == pytest.approx(lap[j[0]])
