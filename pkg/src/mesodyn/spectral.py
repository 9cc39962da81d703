"""Discrete Fourier machinery for periodic fields on uniform 1D/2D grids.

Conventions (fixed for the whole package):

* the forward transform carries the 1/N normalization, so ``coeffs[0]``
  (or ``coeffs[0, 0]``) is the field mean;
* spectra are stored as full complex arrays in standard FFT ordering,
  indexed by the signed integer mode k;
* after every transform and operator application coefficients are
  projected back onto exact Hermitian symmetry,
  ``c[k] <- (c[k] + conj(c[-k])) / 2``, so inverse transforms are real
  regardless of floating-point drift;
* grids have an even number of points per axis and the unmatched Nyquist
  coefficient is forced real.

All functions are pure; field objects are treated as immutable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HermitianViolation, InvalidField, ModeRangeError

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid: number of points and domain length per axis."""

    dim: int
    points: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidField(f"dim must be 1 or 2, got {self.dim}")
        if len(self.points) != self.dim or len(self.lengths) != self.dim:
            raise InvalidField("points/lengths must have one entry per axis")
        for n in self.points:
            if n < 4 or n % 2 != 0:
                raise InvalidField(f"points per axis must be even and >= 4, got {n}")
        for length in self.lengths:
            if not (length > 0):
                raise InvalidField(f"domain length must be positive, got {length}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def n_total(self) -> int:
        return int(np.prod(self.points))

    @property
    def cell_volume(self) -> float:
        vol = 1.0
        for n, length in zip(self.points, self.lengths):
            vol *= length / n
        return vol

    def axis_coordinates(self, axis: int = 0) -> np.ndarray:
        n = self.points[axis]
        return np.arange(n) * (self.lengths[axis] / n)


def grid_1d(n: int, length: float = 1.0) -> GridSpec:
    return GridSpec(1, (n,), (length,))


def grid_2d(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> GridSpec:
    return GridSpec(2, (nx, ny), (lx, ly))


@dataclass(frozen=True)
class RealGridField:
    """Real samples of a periodic field on a uniform grid."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            if values.size == self.grid.n_total:
                values = values.reshape(self.grid.shape)
            else:
                raise InvalidField(
                    f"field shape {values.shape} does not match grid {self.grid.shape}"
                )
        if not np.all(np.isfinite(values)):
            raise InvalidField("field contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class SpectralField:
    """Complex Fourier coefficients in standard FFT ordering (mean at k=0)."""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.shape != self.grid.shape:
            raise InvalidField(
                f"spectrum shape {coeffs.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)


@dataclass(frozen=True)
class WaveNumbers:
    """Signed integer mode indices per axis and the Lapl2 symbol (2*pi*|k|/L)^2."""

    grid: GridSpec
    modes: tuple[np.ndarray, ...]
    laplacian_symbol: np.ndarray


def wavenumbers(grid: GridSpec) -> WaveNumbers:
    per_axis = []
    for axis in range(grid.dim):
        n = grid.points[axis]
        per_axis.append(np.rint(np.fft.fftfreq(n) * n).astype(np.int64))
    if grid.dim == 1:
        modes = (per_axis[0],)
        lap = (2.0 * np.pi * per_axis[0] / grid.lengths[0]) ** 2
    else:
        kx, ky = np.meshgrid(per_axis[0], per_axis[1], indexing="ij")
        modes = (kx, ky)
        lap = (2.0 * np.pi * kx / grid.lengths[0]) ** 2 + (
            2.0 * np.pi * ky / grid.lengths[1]
        ) ** 2
    return WaveNumbers(grid, modes, lap)


def _reverse_modes(coeffs: np.ndarray) -> np.ndarray:
    """Map c[k] to c[-k] in FFT ordering (index negation modulo N per axis)."""
    out = coeffs
    for axis in range(coeffs.ndim):
        n = coeffs.shape[axis]
        idx = (-np.arange(n)) % n
        out = np.take(out, idx, axis=axis)
    return out


def hermitian_defect(coeffs: np.ndarray) -> float:
    """Max absolute deviation from c[k] == conj(c[-k])."""
    return float(np.max(np.abs(coeffs - np.conj(_reverse_modes(coeffs)))))


def hermitian_project(coeffs: np.ndarray) -> np.ndarray:
    """Exact projection onto Hermitian-symmetric spectra (real inverse)."""
    return 0.5 * (coeffs + np.conj(_reverse_modes(coeffs)))


def check_hermitian(spec: SpectralField, rtol: float = HERMITIAN_RTOL) -> None:
    scale = max(1.0, float(np.max(np.abs(spec.coeffs))) if spec.coeffs.size else 0.0)
    defect = hermitian_defect(spec.coeffs)
    if defect > rtol * scale:
        raise HermitianViolation(
            f"Hermitian defect {defect:.3e} exceeds {rtol:.1e} * {scale:.3e}"
        )


def forward_transform(field: RealGridField) -> SpectralField:
    """DFT with 1/N normalization; output is exactly Hermitian-symmetric."""
    if not np.all(np.isfinite(field.values)):
        raise InvalidField("cannot transform a non-finite field")
    coeffs = np.fft.fftn(field.values) / field.grid.n_total
    return SpectralField(field.grid, hermitian_project(coeffs))


def inverse_transform(spec: SpectralField) -> RealGridField:
    """Inverse DFT; raises HermitianViolation for asymmetric input."""
    check_hermitian(spec)
    values = np.fft.ifftn(hermitian_project(spec.coeffs)) * spec.grid.n_total
    return RealGridField(spec.grid, values.real)


def derivative_symbol(grid: GridSpec, order: int, axis: int) -> np.ndarray:
    """Multiplier (2*pi*i*k/L)^order along one axis, broadcast to the grid shape.

    The Nyquist entry is zeroed for odd orders: the unpaired mode has no
    Hermitian-consistent odd derivative.
    """
    if order < 1 or order > 4:
        raise ValueError(f"derivative order must be in 1..4, got {order}")
    if axis < 0 or axis >= grid.dim:
        raise ValueError(f"axis {axis} out of range for dim {grid.dim}")
    n = grid.points[axis]
    k = np.rint(np.fft.fftfreq(n) * n)
    sym = (2.0j * np.pi * k / grid.lengths[axis]) ** order
    if order % 2 == 1:
        sym[n // 2] = 0.0
    if grid.dim == 2:
        shape = [1, 1]
        shape[axis] = n
        sym = sym.reshape(shape)
    return sym


def spectral_derivative(spec: SpectralField, order: int, axis: int = 0) -> SpectralField:
    sym = derivative_symbol(spec.grid, order, axis)
    return SpectralField(spec.grid, hermitian_project(spec.coeffs * sym))


def truncate_modes(spec: SpectralField, cutoff: int) -> np.ndarray:
    """Low-mode Hermitian half-spectrum: modes 0..cutoff per axis.

    1D: returns ``cutoff + 1`` complex entries for k = 0..cutoff.
    2D: returns a ``(cutoff + 1, 2 * cutoff + 1)`` block holding
    k0 = 0..cutoff (half axis) and k1 = -cutoff..cutoff in FFT order
    along the second axis.
    """
    if cutoff < 1:
        raise ModeRangeError(f"cutoff must be positive, got {cutoff}")
    for n in spec.grid.points:
        if cutoff > n // 2:
            raise ModeRangeError(f"cutoff {cutoff} exceeds Nyquist {n // 2}")
    c = spec.coeffs
    if spec.grid.dim == 1:
        return c[: cutoff + 1].copy()
    rows = c[: cutoff + 1]
    pos = rows[:, : cutoff + 1]
    neg = rows[:, -cutoff:]
    return np.concatenate([pos, neg], axis=1)


def embed_modes(low: np.ndarray, grid: GridSpec) -> SpectralField:
    """Zero-padded inverse of :func:`truncate_modes`.

    Negative k0 content is reconstructed from the Hermitian mirror so the
    result always describes a real field.
    """
    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    if grid.dim == 1:
        cutoff = low.shape[0] - 1
        n = grid.points[0]
        if cutoff > n // 2:
            raise ModeRangeError("low-mode vector longer than the target spectrum")
        coeffs[: cutoff + 1] = low
        for k in range(1, cutoff + 1):
            if k < n - k:  # skip the self-paired Nyquist mode
                coeffs[n - k] = np.conj(low[k])
    else:
        cutoff = low.shape[0] - 1
        if low.shape[1] != 2 * cutoff + 1:
            raise ModeRangeError("2D low-mode block has inconsistent shape")
        n0, n1 = grid.points
        for n in grid.points:
            if cutoff > n // 2:
                raise ModeRangeError("low-mode block larger than the target spectrum")
        k1_values = list(range(cutoff + 1)) + list(range(-cutoff, 0))
        for k0 in range(cutoff + 1):
            for col, k1 in enumerate(k1_values):
                coeffs[k0, k1 % n1] = low[k0, col]
        # rows k0 >= 1 need their Hermitian mirror rows at -k0
        for k0 in range(1, cutoff + 1):
            for col, k1 in enumerate(k1_values):
                coeffs[(n0 - k0) % n0, (-k1) % n1] = np.conj(low[k0, col])
    return SpectralField(grid, hermitian_project(coeffs))


def dealias_mask(grid: GridSpec) -> np.ndarray:
    """2/3-rule mask: True where |k| <= N/3 on every axis."""
    wn = wavenumbers(grid)
    mask = np.ones(grid.shape, dtype=bool)
    for axis in range(grid.dim):
        mask &= np.abs(wn.modes[axis]) <= grid.points[axis] // 3
    return mask
