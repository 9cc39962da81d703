"""Spectrally constrained Onsager dynamics model.

State travels as the Hermitian half-spectrum (modes 0..N/2) split into
real and imaginary parts, so the structural constraints hold exactly by
construction:

* dissipative multiplier  M(k) = Re(G_psi)^2  -- real, nonnegative, even;
* conservative multiplier W(k) = i Im(G_psi)  -- imaginary, odd, W(0) = 0;
* the driving force mu is the exact discrete functional derivative of

      V(u) = int(alpha/2 u^2 + F_phi(u)) + int(beta/2 |grad u|^2) + v_phi(u_hat)

  with alpha, beta kept positive through a softplus and the residual
  v_phi acting on the first `cutoff` modes.  The spectral part of mu uses
  the conjugate Wirtinger gradient, with the mode-0 (and Nyquist) entries
  handled so mu stays Hermitian; this is what makes the finite-difference
  directional-derivative check pass.

One update is an explicit Euler step per mode:

    u_hat <- u_hat - dt * [M(k) + W(k)] * mu_hat(k)

Multipliers and the residual gradient vanish beyond the cutoff, so modes
above it are carried unchanged.

Networks G_psi, F_phi, v_phi are MLPs (SiLU hidden activations); F_phi
and v_phi end in a sine layer so the non-quadratic potential terms stay
bounded, while G_psi ends linearly so the multipliers can reach the
magnitudes the dissipative dynamics require.

Checkpoint format OMCKPT1::

    OMCKPT1 key=value ...\\n
    <float64 little-endian parameter blob>
    <8-byte little-endian CRC-64 of the blob>

with parameters serialized in the documented flatten order raw_alpha,
raw_beta, then per layer (W row-major, then b) for psi, phi_f, phi_v.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .dataset import GENERATOR_VERSION, Trajectory, crc64
from .errors import BlowUp, InvalidField, MagicMismatch, ChecksumMismatch, TruncatedFile
from .rng import SplitMix64
from .solvers import PdeModel, free_energy
from .spectral import (
    GridSpec,
    RealGridField,
    SpectralField,
    derivative_symbol,
    forward_transform,
    grid_1d,
    hermitian_project,
    inverse_transform,
)

KNOWN_POTENTIALS = (None, "allen_cahn", "kdv")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and mode switches for one model instance (1D grids)."""

    grid_points: int
    domain_length: float = 1.0
    cutoff: int = 16
    psi_width: int = 64
    psi_depth: int = 3
    f_width: int = 64
    f_depth: int = 3
    v_width: int = 64
    v_depth: int = 3
    known_potential: str | None = None
    ac_epsilon: float = 0.1
    kdv_a: float = 6.0
    kdv_b: float = 1.0
    force_dissipative: bool = False
    force_conservative: bool = False

    def __post_init__(self):
        if self.grid_points < 4 or self.grid_points % 2 != 0:
            raise InvalidField("grid_points must be even and >= 4")
        if not (1 <= self.cutoff < self.grid_points // 2):
            raise InvalidField("cutoff must satisfy 1 <= cutoff < grid_points/2")
        if self.known_potential not in KNOWN_POTENTIALS:
            raise InvalidField(f"known_potential must be one of {KNOWN_POTENTIALS}")
        if self.force_dissipative and self.force_conservative:
            raise InvalidField("cannot force both multipliers to zero")

    @property
    def n_half(self) -> int:
        return self.grid_points // 2 + 1

    @property
    def n_retained(self) -> int:
        return self.cutoff + 1

    @property
    def grid(self) -> GridSpec:
        return grid_1d(self.grid_points, self.domain_length)

    @property
    def psi_spec(self) -> nn.MlpSpec:
        d = 2 * self.n_retained
        return nn.MlpSpec(d, d, self.psi_width, self.psi_depth, "silu", "identity")

    @property
    def f_spec(self) -> nn.MlpSpec:
        return nn.MlpSpec(1, 1, self.f_width, self.f_depth, "silu", "sine")

    @property
    def v_spec(self) -> nn.MlpSpec:
        return nn.MlpSpec(2 * self.n_retained, 1, self.v_width, self.v_depth, "silu", "sine")


@dataclass
class ModelParameters:
    """All trainable quantities plus the architecture they belong to."""

    cfg: ModelConfig
    psi: list[tuple[Tensor, Tensor]]
    phi_f: list[tuple[Tensor, Tensor]]
    phi_v: list[tuple[Tensor, Tensor]]
    raw_alpha: Tensor
    raw_beta: Tensor
    cache: dict = field(default_factory=dict, repr=False)

    def constants(self) -> "_Constants":
        key = "constants"
        if key not in self.cache:
            self.cache[key] = _Constants(self.cfg)
        return self.cache[key]


class _Constants:
    """Precomputed constant tensors shared by every tape evaluation."""

    def __init__(self, cfg: ModelConfig):
        m = cfg.n_half
        c1 = cfg.n_retained
        length = cfg.domain_length
        k = np.arange(m, dtype=np.float64)
        self.ksq = ad.constant((2.0 * np.pi * k / length) ** 2)
        kd = 2.0 * np.pi * k / length
        kd[-1] = 0.0  # no Hermitian-consistent odd derivative at Nyquist
        self.kderiv = ad.constant(kd)
        self.ksq_grad = ad.constant(kd**2)  # exact derivative of the V1 quadrature
        w_mask = np.ones(c1)
        w_mask[0] = 0.0  # W(0) = 0
        self.w_mask = ad.constant(w_mask)
        wa = np.full(c1, 0.5 / length)
        wa[0] = 1.0 / length  # unpaired mean mode
        wb = np.full(c1, 0.5 / length)
        wb[0] = 0.0
        self.v_weight_re = ad.constant(wa)
        self.v_weight_im = ad.constant(wb)
        self.cell = length / cfg.grid_points


def init_parameters(cfg: ModelConfig, seed: int) -> ModelParameters:
    """Deterministic initialization; sub-streams drawn in the order
    psi, phi_f, phi_v from the given seed, raw scalars start at zero."""
    root = SplitMix64(seed)
    return ModelParameters(
        cfg=cfg,
        psi=nn.mlp_init(cfg.psi_spec, root.derive(1)),
        phi_f=nn.mlp_init(cfg.f_spec, root.derive(2)),
        phi_v=nn.mlp_init(cfg.v_spec, root.derive(3)),
        raw_alpha=ad.parameter(0.0),
        raw_beta=ad.parameter(0.0),
    )


def parameter_list(params: ModelParameters) -> list[Tensor]:
    """Flatten order: raw_alpha, raw_beta, psi, phi_f, phi_v (W then b)."""
    out = [params.raw_alpha, params.raw_beta]
    for layers in (params.psi, params.phi_f, params.phi_v):
        for w, b in layers:
            out.extend([w, b])
    return out


def trainable_parameters(params: ModelParameters) -> list[Tensor]:
    """Known-potential mode trains only the multiplier network."""
    if params.cfg.known_potential is not None:
        return [t for layer in params.psi for t in layer]
    return parameter_list(params)


def n_parameters(params: ModelParameters) -> int:
    return sum(t.data.size for t in parameter_list(params))


# half-spectrum conversions ------------------------------------------


def half_from_field(u: RealGridField) -> tuple[np.ndarray, np.ndarray]:
    spec = np.fft.rfft(u.values) / u.grid.n_total
    re = spec.real.copy()
    im = spec.imag.copy()
    im[0] = 0.0
    im[-1] = 0.0
    return re, im


def half_from_spectral(spec: SpectralField) -> tuple[np.ndarray, np.ndarray]:
    coeffs = hermitian_project(spec.coeffs)
    m = spec.grid.points[0] // 2 + 1
    half = coeffs[:m]
    re = half.real.copy()
    im = half.imag.copy()
    im[0] = 0.0
    im[-1] = 0.0
    return re, im


def spectral_from_half(re: np.ndarray, im: np.ndarray, grid: GridSpec) -> SpectralField:
    n = grid.points[0]
    coeffs = np.zeros(n, dtype=np.complex128)
    half = re + 1j * im
    half[0] = re[0]
    half[-1] = re[-1]
    coeffs[: n // 2 + 1] = half
    coeffs[n // 2 + 1 :] = np.conj(half[1 : n // 2][::-1])
    return SpectralField(grid, coeffs)


def field_from_half(re: np.ndarray, im: np.ndarray, grid: GridSpec) -> RealGridField:
    values = np.fft.irfft(re + 1j * im, n=grid.points[0]) * grid.points[0]
    return RealGridField(grid, values)


# tape-level model ----------------------------------------------------


def _t_physical(re: Tensor, im: Tensor) -> Tensor:
    """(B, M) half-spectrum pair -> (B, N) physical field."""
    b, m = re.shape
    stacked = ad.concat([ad.reshape(re, (b, 1, m)), ad.reshape(im, (b, 1, m))], 1)
    return ad.dft_c2r(stacked)


def _t_spectrum(u: Tensor) -> tuple[Tensor, Tensor]:
    """(B, N) physical field -> (B, M) half-spectrum pair."""
    y = ad.dft_r2c(u)
    b, _, m = y.shape
    re = ad.reshape(ad.narrow(y, 1, 0, 1), (b, m))
    im = ad.reshape(ad.narrow(y, 1, 1, 1), (b, m))
    return re, im


def _t_net_input(cfg: ModelConfig, re: Tensor, im: Tensor) -> Tensor:
    c1 = cfg.n_retained
    return ad.concat([ad.narrow(re, 1, 0, c1), ad.narrow(im, 1, 0, c1)], 1)


def _t_multipliers(params: ModelParameters, re: Tensor, im: Tensor) -> tuple[Tensor, Tensor]:
    """Nonnegative M(k) and imaginary part w(k) of W(k), padded to n_half."""
    cfg = params.cfg
    cst = params.constants()
    c1 = cfg.n_retained
    g = nn.mlp_apply(params.psi, _t_net_input(cfg, re, im), cfg.psi_spec)
    m_half = ad.pow_const(ad.narrow(g, 1, 0, c1), 2.0)
    w_half = ad.narrow(g, 1, c1, c1) * cst.w_mask
    if cfg.force_dissipative:
        w_half = w_half * ad.constant(0.0)
    if cfg.force_conservative:
        m_half = m_half * ad.constant(0.0)
    m_pad = ad.pad_slice(m_half, 1, 0, cfg.n_half)
    w_pad = ad.pad_slice(w_half, 1, 0, cfg.n_half)
    return m_pad, w_pad


def _t_known_mu(params: ModelParameters, re: Tensor, im: Tensor, u: Tensor):
    cfg = params.cfg
    cst = params.constants()
    b, n = u.shape
    if cfg.known_potential == "allen_cahn":
        lin = cst.ksq - ad.constant(1.0 / cfg.ac_epsilon**2)
        nonlin = ad.pow_const(u, 3.0) * ad.constant(1.0 / cfg.ac_epsilon**2)
    else:
        lin = cst.ksq * ad.constant(cfg.kdv_b)
        nonlin = ad.pow_const(u, 2.0) * ad.constant(-cfg.kdv_a / 2.0)
    nl_re, nl_im = _t_spectrum(nonlin)
    return lin * re + nl_re, lin * im + nl_im


def _t_mu(params: ModelParameters, re: Tensor, im: Tensor, u: Tensor):
    """Spectral driving force mu_hat as a half-spectrum pair (B, M)."""
    cfg = params.cfg
    if cfg.known_potential is not None:
        return _t_known_mu(params, re, im, u)
    cst = params.constants()
    b, n = u.shape
    alpha = nn.softplus_positive(params.raw_alpha)
    beta = nn.softplus_positive(params.raw_beta)
    lin = alpha + beta * cst.ksq_grad
    mu_re = lin * re
    mu_im = lin * im

    u_col = ad.reshape(u, (b * n, 1))
    f_vals = nn.mlp_apply(params.phi_f, u_col, cfg.f_spec)
    f_prime = ad.gradient(ad.sum_all(f_vals), u_col)
    fp_re, fp_im = _t_spectrum(ad.reshape(f_prime, (b, n)))
    mu_re = mu_re + fp_re
    mu_im = mu_im + fp_im

    x = _t_net_input(cfg, re, im)
    v_vals = nn.mlp_apply(params.phi_v, x, cfg.v_spec)
    gv = ad.gradient(ad.sum_all(v_vals), x)
    c1 = cfg.n_retained
    va = ad.narrow(gv, 1, 0, c1) * cst.v_weight_re
    vb = ad.narrow(gv, 1, c1, c1) * cst.v_weight_im
    mu_re = mu_re + ad.pad_slice(va, 1, 0, cfg.n_half)
    mu_im = mu_im + ad.pad_slice(vb, 1, 0, cfg.n_half)
    return mu_re, mu_im


def _t_step(params: ModelParameters, re: Tensor, im: Tensor, u: Tensor, dt: float):
    """One explicit Euler update; u must be the physical field of (re, im)."""
    mu_re, mu_im = _t_mu(params, re, im, u)
    m_mult, w_mult = _t_multipliers(params, re, im)
    drive_re = m_mult * mu_re - w_mult * mu_im
    drive_im = m_mult * mu_im + w_mult * mu_re
    dt_c = ad.constant(dt)
    return re - dt_c * drive_re, im - dt_c * drive_im


def _t_potential(params: ModelParameters, re: Tensor, im: Tensor, u: Tensor):
    """Learned potential components (V0, V1, V2), each of shape (B,)."""
    cfg = params.cfg
    cst = params.constants()
    b, n = u.shape
    alpha = nn.softplus_positive(params.raw_alpha)
    beta = nn.softplus_positive(params.raw_beta)
    u_col = ad.reshape(u, (b * n, 1))
    f_vals = ad.reshape(nn.mlp_apply(params.phi_f, u_col, cfg.f_spec), (b, n))
    half = ad.constant(0.5)
    v0 = ad.sum_axes(half * alpha * u * u + f_vals, (1,)) * ad.constant(cst.cell)
    dx_re = ad.constant(-1.0) * cst.kderiv * im
    dx_im = cst.kderiv * re
    ux = _t_physical(dx_re, dx_im)
    v1 = ad.sum_axes(half * beta * ux * ux, (1,)) * ad.constant(cst.cell)
    v2 = ad.reshape(nn.mlp_apply(params.phi_v, _t_net_input(cfg, re, im), cfg.v_spec), (b,))
    return v0, v1, v2


# public numpy-level operations ---------------------------------------


@dataclass(frozen=True)
class MultiplierSet:
    """Full-spectrum multipliers in FFT ordering: m real >= 0 even,
    w purely imaginary odd."""

    m: np.ndarray
    w: np.ndarray


def _mirror_full(half: np.ndarray, odd: bool) -> np.ndarray:
    n = 2 * (half.size - 1)
    full = np.zeros(n, dtype=half.dtype)
    full[: half.size] = half
    tail = half[1 : n // 2][::-1]
    full[half.size :] = -tail if odd else tail
    return full


def _check_grid(params: ModelParameters, grid: GridSpec) -> None:
    cfg = params.cfg
    if grid.dim != 1 or grid.points[0] != cfg.grid_points:
        raise InvalidField("field grid does not match the model configuration")
    if abs(grid.lengths[0] - cfg.domain_length) > 1e-12:
        raise InvalidField("field domain length does not match the model")


def multiplier_eval(params: ModelParameters, u_hat: SpectralField) -> MultiplierSet:
    _check_grid(params, u_hat.grid)
    re, im = half_from_spectral(u_hat)
    with ad.no_grad():
        m_t, w_t = _t_multipliers(
            params, ad.constant(re[None, :]), ad.constant(im[None, :])
        )
    m_full = _mirror_full(m_t.data[0], odd=False)
    w_full = 1j * _mirror_full(w_t.data[0], odd=True)
    return MultiplierSet(m_full, w_full)


def mu_hat_eval(params: ModelParameters, u: RealGridField) -> SpectralField:
    # the tape must record here: mu contains gradients taken inside the graph
    _check_grid(params, u.grid)
    re, im = half_from_field(u)
    mu_re, mu_im = _t_mu(
        params,
        ad.constant(re[None, :]),
        ad.constant(im[None, :]),
        ad.constant(u.values[None, :]),
    )
    return spectral_from_half(mu_re.data[0], mu_im.data[0], u.grid)


def euler_spectral_step(params: ModelParameters, u_hat: SpectralField, dt: float) -> SpectralField:
    if dt < 0:
        raise InvalidField("dt must be nonnegative")
    _check_grid(params, u_hat.grid)
    re, im = half_from_spectral(u_hat)
    re_t = ad.constant(re[None, :])
    im_t = ad.constant(im[None, :])
    u_t = _t_physical(re_t, im_t)
    new_re, new_im = _t_step(params, re_t, im_t, u_t, dt)
    out_re, out_im = new_re.data[0], new_im.data[0]
    if not (np.all(np.isfinite(out_re)) and np.all(np.isfinite(out_im))):
        raise BlowUp(0, "non-finite state after one Euler step")
    return spectral_from_half(out_re, out_im, u_hat.grid)


def rollout_fields(
    params: ModelParameters, u0: RealGridField, dt: float, n_steps: int
) -> list[RealGridField]:
    """n_steps explicit updates; returns n_steps + 1 physical snapshots."""
    _check_grid(params, u0.grid)
    re, im = half_from_field(u0)
    snapshots = [RealGridField(u0.grid, u0.values)]
    re_t = ad.constant(re[None, :])
    im_t = ad.constant(im[None, :])
    for step in range(1, n_steps + 1):
        u_t = _t_physical(re_t, im_t)
        re_t, im_t = _t_step(params, re_t, im_t, u_t, dt)
        # detach so each step's graph can be freed immediately
        re_t, im_t = ad.detach(re_t), ad.detach(im_t)
        if not (np.all(np.isfinite(re_t.data)) and np.all(np.isfinite(im_t.data))):
            raise BlowUp(step)
        snapshots.append(field_from_half(re_t.data[0], im_t.data[0], u0.grid))
    return snapshots


def rollout(params: ModelParameters, u0: RealGridField, dt: float, n_steps: int) -> Trajectory:
    """Rollout packaged as a Trajectory (needs n_steps >= 1)."""
    if n_steps < 1:
        raise InvalidField("a Trajectory rollout needs n_steps >= 1; use rollout_fields")
    snapshots = rollout_fields(params, u0, dt, n_steps)
    return Trajectory(
        tuple(snapshots),
        dt,
        {"model": "speconsnet", "version": GENERATOR_VERSION},
    )


def learned_potential_components(params: ModelParameters, u: RealGridField) -> tuple[float, float, float]:
    _check_grid(params, u.grid)
    cfg = params.cfg
    if cfg.known_potential is not None:
        pde = known_pde_model(cfg)
        if pde.kind == "kdv":
            v1 = free_energy(PdeModel("kdv", kdv_a=0.0, kdv_b=pde.kdv_b), u)
        else:
            v1 = _gradient_energy(u)
        v_total = free_energy(pde, u)
        return v_total - v1, v1, 0.0
    re, im = half_from_field(u)
    with ad.no_grad():
        v0, v1, v2 = _t_potential(
            params,
            ad.constant(re[None, :]),
            ad.constant(im[None, :]),
            ad.constant(u.values[None, :]),
        )
    return float(v0.data[0]), float(v1.data[0]), float(v2.data[0])


def _gradient_energy(u: RealGridField) -> float:
    spec = forward_transform(u)
    du = inverse_transform(
        SpectralField(u.grid, hermitian_project(spec.coeffs * derivative_symbol(u.grid, 1, 0)))
    )
    return float(np.sum(0.5 * du.values**2) * u.grid.cell_volume)


def learned_potential(params: ModelParameters, u: RealGridField) -> float:
    v0, v1, v2 = learned_potential_components(params, u)
    return v0 + v1 + v2


def known_pde_model(cfg: ModelConfig) -> PdeModel:
    if cfg.known_potential is None:
        raise InvalidField("model is not in known-potential mode")
    if cfg.known_potential == "allen_cahn":
        return PdeModel("allen_cahn", ac_epsilon=cfg.ac_epsilon)
    return PdeModel("kdv", kdv_a=cfg.kdv_a, kdv_b=cfg.kdv_b)


# checkpoints ----------------------------------------------------------


def save_checkpoint(params: ModelParameters, path, extra: dict | None = None) -> None:
    cfg = params.cfg
    fields = {
        "n": cfg.grid_points,
        "length": repr(cfg.domain_length),
        "cutoff": cfg.cutoff,
        "psi_width": cfg.psi_width,
        "psi_depth": cfg.psi_depth,
        "f_width": cfg.f_width,
        "f_depth": cfg.f_depth,
        "v_width": cfg.v_width,
        "v_depth": cfg.v_depth,
        "known": cfg.known_potential or "none",
        "ac_epsilon": repr(cfg.ac_epsilon),
        "kdv_a": repr(cfg.kdv_a),
        "kdv_b": repr(cfg.kdv_b),
        "force_dissipative": int(cfg.force_dissipative),
        "force_conservative": int(cfg.force_conservative),
    }
    if extra:
        fields.update(extra)
    header = "OMCKPT1 " + " ".join(f"{k}={v}" for k, v in fields.items()) + "\n"
    blob = np.concatenate(
        [np.ravel(t.data) for t in parameter_list(params)]
    ).astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(blob)
        fh.write(crc64(blob).to_bytes(8, "little"))


def load_checkpoint(path) -> tuple[ModelParameters, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0 or not raw.startswith(b"OMCKPT1 "):
        raise MagicMismatch(f"{path}: missing OMCKPT1 header")
    fields: dict[str, str] = {}
    for tok in raw[:newline].decode("ascii").split()[1:]:
        key, _, val = tok.partition("=")
        fields[key] = val
    known = fields.get("known", "none")
    cfg = ModelConfig(
        grid_points=int(fields["n"]),
        domain_length=float(fields["length"]),
        cutoff=int(fields["cutoff"]),
        psi_width=int(fields["psi_width"]),
        psi_depth=int(fields["psi_depth"]),
        f_width=int(fields["f_width"]),
        f_depth=int(fields["f_depth"]),
        v_width=int(fields["v_width"]),
        v_depth=int(fields["v_depth"]),
        known_potential=None if known == "none" else known,
        ac_epsilon=float(fields.get("ac_epsilon", 0.1)),
        kdv_a=float(fields.get("kdv_a", 6.0)),
        kdv_b=float(fields.get("kdv_b", 1.0)),
        force_dissipative=bool(int(fields.get("force_dissipative", 0))),
        force_conservative=bool(int(fields.get("force_conservative", 0))),
    )
    params = init_parameters(cfg, seed=0)
    flat = parameter_list(params)
    count = sum(t.data.size for t in flat)
    body = raw[newline + 1 :]
    if len(body) < count * 8 + 8:
        raise TruncatedFile(f"{path}: checkpoint shorter than {count} parameters")
    blob = body[: count * 8]
    stored = int.from_bytes(body[count * 8 : count * 8 + 8], "little")
    if crc64(blob) != stored:
        raise ChecksumMismatch(f"{path}: CRC64 mismatch")
    values = np.frombuffer(blob, dtype="<f8")
    offset = 0
    for t in flat:
        size = t.data.size
        t.data = values[offset : offset + size].reshape(t.data.shape).copy()
        offset += size
    return params, fields


def clone_parameters(params: ModelParameters) -> ModelParameters:
    clone = init_parameters(params.cfg, seed=0)
    restore_parameter_data(clone, copy_parameter_data(params))
    return clone


def copy_parameter_data(params: ModelParameters) -> list[np.ndarray]:
    return [t.data.copy() for t in parameter_list(params)]


def restore_parameter_data(params: ModelParameters, saved: list[np.ndarray]) -> None:
    for t, d in zip(parameter_list(params), saved):
        t.data = d.copy()
