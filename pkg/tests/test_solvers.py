import numpy as np
import pytest

from mesodyn.dataset import IcConfig, random_initial_condition
from mesodyn.errors import InvalidField
from mesodyn.solvers import (
    PdeModel,
    SolverConfig,
    free_energy,
    kdv_soliton,
    sbdf1_step,
    sbdf2_step,
    simulate_pde,
)
from mesodyn.spectral import (
    RealGridField,
    SpectralField,
    forward_transform,
    grid_1d,
    inverse_transform,
)


def ac_model(eps=0.1):
    return PdeModel("allen_cahn", ac_epsilon=eps)


class TestFreeEnergy:
    def test_zero_field(self):
        grid = grid_1d(32)
        zero = RealGridField(grid, np.zeros(32))
        assert free_energy(ac_model(), zero) == pytest.approx(0.0)
        assert free_energy(PdeModel("kdv"), zero) == pytest.approx(0.0)

    def test_allen_cahn_constant_one(self):
        grid = grid_1d(32)
        one = RealGridField(grid, np.ones(32))
        assert free_energy(ac_model(), one) == pytest.approx(-25.0)

    def test_kdv_sine(self):
        grid = grid_1d(64)
        x = grid.axis_coordinates(0)
        u = RealGridField(grid, np.sin(2 * np.pi * x))
        assert free_energy(PdeModel("kdv"), u) == pytest.approx(np.pi**2, rel=1e-10)


class TestSbdf1:
    def test_kdv_zero_fixed_point(self):
        grid = grid_1d(32)
        state = forward_transform(RealGridField(grid, np.zeros(32)))
        out = sbdf1_step(PdeModel("kdv"), state, 1e-3)
        assert np.max(np.abs(out.coeffs)) < 1e-15

    def test_pure_diffusion_mode_decay(self):
        # nonlinearity vanishes at tiny amplitude for kdv-like models; build
        # the diffusion check directly from an allen_cahn model with the
        # cubic suppressed by linearity of the step at infinitesimal input
        grid = grid_1d(32)
        diffusion = PdeModel("allen_cahn", ac_epsilon=1e6)  # 1/eps^2 ~ 0
        x = grid.axis_coordinates(0)
        amp = 1e-8  # cubic term ~ 1e-24, far below tolerance
        state = forward_transform(RealGridField(grid, amp * np.sin(2 * np.pi * x)))
        dt = 1e-3
        out = sbdf1_step(diffusion, state, dt)
        expect = state.coeffs[1] / (1.0 + (2 * np.pi) ** 2 * dt - dt / 1e12)
        assert out.coeffs[1] == pytest.approx(expect, rel=1e-10)

    def test_allen_cahn_matches_dense_oracle(self):
        grid = grid_1d(32)
        rng = np.random.default_rng(3)
        u = rng.normal(size=32) * 0.5
        state = forward_transform(RealGridField(grid, u))
        model = ac_model()
        dt = 4e-5
        out = sbdf1_step(model, state, dt)

        # dense physical-space oracle on the same grid: solve the diagonal
        # implicit system mode by mode with explicit matrices
        n = 32
        k = np.rint(np.fft.fftfreq(n) * n)
        lin = (2 * np.pi * k) ** 2 - 100.0
        u_hat = np.fft.fft(u) / n
        n_hat = np.fft.fft(u**3 * 100.0) / n
        expect = (u_hat - n_hat * dt) / (1.0 + lin * dt)
        assert np.max(np.abs(out.coeffs - expect)) < 1e-10


class TestSbdf2:
    def test_zero_fixed_point(self):
        grid = grid_1d(32)
        zero = forward_transform(RealGridField(grid, np.zeros(32)))
        out = sbdf2_step(PdeModel("kdv"), zero, zero, 1e-3)
        assert np.max(np.abs(out.coeffs)) < 1e-15

    def test_linear_recurrence(self):
        # with N = 0 the scheme is u+ = u- / (1 + 2 T L dt) per mode
        grid = grid_1d(32)
        diffusion = PdeModel("allen_cahn", ac_epsilon=1e6)
        x = grid.axis_coordinates(0)
        amp = 1e-8
        prev = forward_transform(RealGridField(grid, amp * np.sin(2 * np.pi * x)))
        state = forward_transform(RealGridField(grid, 0.9 * amp * np.sin(2 * np.pi * x)))
        dt = 1e-3
        out = sbdf2_step(diffusion, state, prev, dt)
        lam = (2 * np.pi) ** 2 - 1e-12
        expect = prev.coeffs[1] / (1.0 + 2 * lam * dt)
        assert out.coeffs[1] == pytest.approx(expect, rel=1e-9)

    def test_soliton_self_convergence(self):
        # halving dt shrinks the error ~4x (order 2)
        errs = []
        for dt in (4e-4, 2e-4):
            errs.append(_soliton_error(dt, n_points=512, horizon=0.05))
        order = np.log2(errs[0] / errs[1])
        assert order > 1.8


def _soliton_error(dt, n_points, horizon, speed=16.0, length=20.0):
    grid = grid_1d(n_points, length)
    x = grid.axis_coordinates(0)
    model = PdeModel("kdv")
    u0 = kdv_soliton(x, 0.0, speed, length / 2, length=length)
    steps = int(round(horizon / dt))
    cfg = SolverConfig(dt_record=horizon, substeps=steps, n_snapshots=2, stepper="sbdf2")
    traj = simulate_pde(model, RealGridField(grid, u0), cfg)
    exact = kdv_soliton(x, horizon, speed, length / 2, length=length)
    diff = traj.snapshots[-1].values - exact
    return float(np.sqrt(np.sum(diff**2) / np.sum(exact**2)))


class TestSimulate:
    def test_equilibrium_stays(self):
        grid = grid_1d(32)
        one = RealGridField(grid, np.ones(32))
        traj = simulate_pde(ac_model(), one, SolverConfig(n_snapshots=5, stepper="sbdf1"))
        for snap in traj.snapshots:
            assert np.max(np.abs(snap.values - 1.0)) < 1e-10

    def test_allen_cahn_free_energy_non_increasing(self):
        grid = grid_1d(64)
        ic = random_initial_condition(IcConfig(seed=2, target_amp=0.9, max_wavenumber=4), grid)
        traj = simulate_pde(ac_model(), ic, SolverConfig(n_snapshots=50, stepper="sbdf1"))
        model = ac_model()
        energies = [free_energy(model, s) for s in traj.snapshots]
        for a, b in zip(energies, energies[1:]):
            assert b <= a + 1e-9

    def test_kdv_mass_conserved(self):
        grid = grid_1d(64)
        ic = random_initial_condition(IcConfig(seed=3, target_amp=1.0, max_wavenumber=4), grid)
        traj = simulate_pde(PdeModel("kdv"), ic, SolverConfig(n_snapshots=20))
        masses = [forward_transform(s).coeffs[0].real for s in traj.snapshots]
        assert np.max(np.abs(np.diff(masses))) < 1e-10

    def test_kdv_free_energy_near_conserved(self):
        grid = grid_1d(256)
        ic = random_initial_condition(IcConfig(seed=4, target_amp=1.0, max_wavenumber=4), grid)
        traj = simulate_pde(PdeModel("kdv"), ic, SolverConfig(n_snapshots=100))
        model = PdeModel("kdv")
        v0 = free_energy(model, traj.snapshots[0])
        drift = max(abs(free_energy(model, s) - v0) for s in traj.snapshots)
        assert drift / max(1.0, abs(v0)) <= 1e-3

    def test_snapshot_count_and_ic(self):
        grid = grid_1d(32)
        ic = random_initial_condition(IcConfig(seed=5, target_amp=0.5), grid)
        traj = simulate_pde(ac_model(), ic, SolverConfig(n_snapshots=7, stepper="sbdf1"))
        assert len(traj) == 7
        assert np.array_equal(traj.snapshots[0].values, ic.values)

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidField):
            PdeModel("heat")
