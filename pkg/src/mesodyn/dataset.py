"""Random initial conditions, trajectory containers, and the OMTRAJ v1 file format.

OMTRAJ v1 layout::

    OMTRAJ1 dim=<d> nx=<n> [ny=<n>] snaps=<S> dt=<f> len=<f> [leny=<f>] meta=<urlenc>\\n
    <S frames of little-endian float64, row-major>
    <8-byte little-endian CRC-64 of the frame bytes>

The checksum is CRC-64/XZ (ECMA-182 reflected, polynomial
0x42F0E1EBA9EA3693, init and xor-out 0xFFFFFFFFFFFFFFFF) computed over
the frame payload only.  Floats in the header are written with
``repr`` so the round trip is bit-exact.
"""

from __future__ import annotations

import urllib.parse
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ChecksumMismatch,
    InvalidField,
    MagicMismatch,
    SplitError,
    TruncatedFile,
)
from .rng import SplitMix64
from .spectral import GridSpec, RealGridField, grid_1d, grid_2d

GENERATOR_VERSION = "mesodyn-1"

_CRC64_POLY_REFLECTED = 0xC96C5795D7870F42  # ECMA-182 0x42F0E1EBA9EA3693 bit-reversed


def _crc64_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            if crc & 1:
                crc = (crc >> 1) ^ _CRC64_POLY_REFLECTED
            else:
                crc >>= 1
        table.append(crc)
    return table


_TABLE = _crc64_table()


def crc64(data: bytes) -> int:
    crc = 0xFFFFFFFFFFFFFFFF
    for b in data:
        crc = (crc >> 8) ^ _TABLE[(crc ^ b) & 0xFF]
    return crc ^ 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class Trajectory:
    """Ordered snapshots at uniform recording interval plus generation metadata."""

    snapshots: tuple[RealGridField, ...]
    dt_record: float
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.snapshots) < 2:
            raise InvalidField("a trajectory needs at least 2 snapshots")
        grid = self.snapshots[0].grid
        for snap in self.snapshots:
            if snap.grid != grid:
                raise InvalidField("all snapshots must share one grid")
        if not (self.dt_record > 0):
            raise InvalidField("dt_record must be positive")
        object.__setattr__(self, "snapshots", tuple(self.snapshots))

    @property
    def grid(self) -> GridSpec:
        return self.snapshots[0].grid

    def __len__(self) -> int:
        return len(self.snapshots)

    def stacked(self) -> np.ndarray:
        return np.stack([s.values for s in self.snapshots])


@dataclass(frozen=True)
class IcConfig:
    """Sampler for random superpositions of sinusoidal waves.

    Per wave w the stream draws, in order: the wavenumber k_w uniform in
    1..max_wavenumber (2D: kx then ky in 0..max_wavenumber, redrawing the
    pair while both are zero), the phase theta_w uniform in [0, 2*pi),
    and the amplitude a_w uniform in amplitude_range.  The sum is then
    rescaled so the max of |u| over the grid equals target_amp.
    """

    n_waves: int = 5
    max_wavenumber: int = 8
    amplitude_range: tuple[float, float] = (0.2, 1.0)
    target_amp: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_waves < 1:
            raise InvalidField("n_waves must be >= 1")
        if self.max_wavenumber < 1:
            raise InvalidField("max_wavenumber must be >= 1")
        if not (self.target_amp > 0):
            raise InvalidField("target_amp must be positive")


def random_initial_condition(cfg: IcConfig, grid: GridSpec) -> RealGridField:
    for n in grid.points:
        if cfg.max_wavenumber >= n // 2:
            raise InvalidField(
                f"max_wavenumber {cfg.max_wavenumber} must stay below Nyquist {n // 2}"
            )
    rng = SplitMix64(cfg.seed)
    lo, hi = cfg.amplitude_range
    if grid.dim == 1:
        x = grid.axis_coordinates(0) / grid.lengths[0]
        u = np.zeros(grid.shape)
        for _ in range(cfg.n_waves):
            k = rng.randint(1, cfg.max_wavenumber)
            theta = rng.uniform_in(0.0, 2.0 * np.pi)
            amp = rng.uniform_in(lo, hi)
            u += amp * np.sin(2.0 * np.pi * k * x + theta)
    else:
        x = grid.axis_coordinates(0) / grid.lengths[0]
        y = grid.axis_coordinates(1) / grid.lengths[1]
        xx, yy = np.meshgrid(x, y, indexing="ij")
        u = np.zeros(grid.shape)
        for _ in range(cfg.n_waves):
            kx = rng.randint(0, cfg.max_wavenumber)
            ky = rng.randint(0, cfg.max_wavenumber)
            while kx == 0 and ky == 0:
                kx = rng.randint(0, cfg.max_wavenumber)
                ky = rng.randint(0, cfg.max_wavenumber)
            theta = rng.uniform_in(0.0, 2.0 * np.pi)
            amp = rng.uniform_in(lo, hi)
            u += amp * np.sin(2.0 * np.pi * (kx * xx + ky * yy) + theta)
    peak = float(np.max(np.abs(u)))
    if peak < 1e-12:
        raise InvalidField("degenerate wave superposition (all-zero field)")
    return RealGridField(grid, u * (cfg.target_amp / peak))


def _format_float(x: float) -> str:
    return repr(float(x))


def write_trajectory(traj: Trajectory, path) -> None:
    grid = traj.grid
    parts = [f"OMTRAJ1 dim={grid.dim} nx={grid.points[0]}"]
    if grid.dim == 2:
        parts.append(f"ny={grid.points[1]}")
    parts.append(f"snaps={len(traj)}")
    parts.append(f"dt={_format_float(traj.dt_record)}")
    parts.append(f"len={_format_float(grid.lengths[0])}")
    if grid.dim == 2:
        parts.append(f"leny={_format_float(grid.lengths[1])}")
    meta = urllib.parse.urlencode(sorted(traj.meta.items()))
    parts.append(f"meta={meta}")
    header = " ".join(parts) + "\n"
    payload = np.ascontiguousarray(traj.stacked(), dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)
        fh.write(crc64(payload).to_bytes(8, "little"))


def read_trajectory(path) -> Trajectory:
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0 or not raw.startswith(b"OMTRAJ1 "):
        raise MagicMismatch(f"{path}: missing OMTRAJ1 header")
    tokens = raw[:newline].decode("ascii").split()
    fields: dict[str, str] = {}
    for tok in tokens[1:]:
        key, _, val = tok.partition("=")
        fields[key] = val
    try:
        dim = int(fields["dim"])
        nx = int(fields["nx"])
        snaps = int(fields["snaps"])
        dt = float(fields["dt"])
        length = float(fields["len"])
    except (KeyError, ValueError) as exc:
        raise MagicMismatch(f"{path}: malformed header ({exc})") from exc
    if dim == 1:
        grid = grid_1d(nx, length)
    else:
        ny = int(fields["ny"])
        leny = float(fields.get("leny", fields["len"]))
        grid = grid_2d(nx, ny, length, leny)
    meta = dict(urllib.parse.parse_qsl(fields.get("meta", ""), keep_blank_values=True))

    body = raw[newline + 1 :]
    frame_bytes = snaps * grid.n_total * 8
    if len(body) < frame_bytes + 8:
        raise TruncatedFile(f"{path}: expected {frame_bytes + 8} payload bytes, got {len(body)}")
    payload = body[:frame_bytes]
    stored = int.from_bytes(body[frame_bytes : frame_bytes + 8], "little")
    if crc64(payload) != stored:
        raise ChecksumMismatch(f"{path}: CRC64 mismatch")
    frames = np.frombuffer(payload, dtype="<f8").reshape((snaps,) + grid.shape)
    snapshots = tuple(RealGridField(grid, frames[s].copy()) for s in range(snaps))
    return Trajectory(snapshots, dt, meta)


def split_dataset(
    trajectories: list, fractions: tuple[float, ...], seed: int
) -> tuple[list, ...]:
    """Deterministic shuffled split into len(fractions) disjoint parts."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(trajectories)
    indices = list(range(n))
    SplitMix64(seed).shuffle(indices)
    bounds = [int(round(sum(fractions[: i + 1]) * n)) for i in range(len(fractions))]
    parts = []
    start = 0
    for bound in bounds:
        part = [trajectories[i] for i in indices[start:bound]]
        if not part:
            raise SplitError(f"split of {n} trajectories by {fractions} leaves an empty part")
        parts.append(part)
        start = bound
    return tuple(parts)


def with_meta(traj: Trajectory, **extra: str) -> Trajectory:
    meta = dict(traj.meta)
    meta.update({k: str(v) for k, v in extra.items()})
    return replace(traj, meta=meta)
