"""Physics-facing analyses of trained models, emitted as CSV-friendly data:
potential traces, affine identifiability fits, step-size scaling fits,
amplitude scans, pointwise potential profiles, structural constraint audits,
and the dissipative critical-step estimate.

The norm underlying the step-size estimate is the spectral H1 norm
sum_k (1 + (2 pi k / L)^2) |w_k|^2 over the full signed-mode spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as mdl
from .dataset import Trajectory
from .errors import BlowUp, DegenerateFit, InvalidField, ZeroDrivingForce
from .spectral import (
    RealGridField,
    forward_transform,
    hermitian_defect,
    inverse_transform,
)

# ------------------------------------------------------------------ fits


@dataclass(frozen=True)
class FitRecord:
    slope: float
    intercept: float
    r_squared: float


def affine_fit(x_values, y_values) -> FitRecord:
    """Ordinary least squares y = slope * x + intercept.

    Constant y gives slope 0 with R^2 defined as 0; constant x is
    degenerate and rejected.
    """
    x = np.asarray(x_values, dtype=np.float64)
    y = np.asarray(y_values, dtype=np.float64)
    if x.size < 3 or x.size != y.size:
        raise DegenerateFit("need at least 3 paired points")
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise DegenerateFit("abscissae are all equal")
    sxy = float(np.sum((x - x.mean()) * (y - y.mean())))
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return FitRecord(slope, intercept, 0.0)
    ss_res = float(np.sum((y - slope * x - intercept) ** 2))
    return FitRecord(slope, intercept, 1.0 - ss_res / ss_tot)


def loglog_fit(x_values, y_values) -> FitRecord:
    """OLS in log-log space; the slope is the scaling exponent.

    Non-positive entries are excluded (they carry no scale information).
    """
    x = np.asarray(x_values, dtype=np.float64)
    y = np.asarray(y_values, dtype=np.float64)
    keep = (x > 0) & (y > 0)
    if np.count_nonzero(keep) < 3:
        raise DegenerateFit("not enough positive points for a log-log fit")
    return affine_fit(np.log(x[keep]), np.log(y[keep]))


# ------------------------------------------------------------ diagnostics


@dataclass
class DiagnosticsReport:
    """Named scalars, series, and fit records plus their generating config."""

    context: dict[str, str] = field(default_factory=dict)
    scalars: dict[str, float] = field(default_factory=dict)
    series: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    fits: dict[str, FitRecord] = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["section,name,x,y"]
        for key in sorted(self.context):
            lines.append(f"context,{key},,{self.context[key]}")
        for key in sorted(self.scalars):
            lines.append(f"scalar,{key},,{self.scalars[key]!r}")
        for key in sorted(self.fits):
            fit = self.fits[key]
            lines.append(f"fit,{key}.slope,,{fit.slope!r}")
            lines.append(f"fit,{key}.intercept,,{fit.intercept!r}")
            lines.append(f"fit,{key}.r_squared,,{fit.r_squared!r}")
        for key in sorted(self.series):
            xs, ys = self.series[key]
            for xv, yv in zip(xs, ys):
                lines.append(f"series,{key},{xv!r},{yv!r}")
        return "\n".join(lines) + "\n"


def potential_trace(params: mdl.ModelParameters, trajectory: Trajectory) -> np.ndarray:
    """Learned potential evaluated on every snapshot."""
    return np.array(
        [mdl.learned_potential(params, snap) for snap in trajectory.snapshots]
    )


def one_step_variation_medians(
    params: mdl.ModelParameters,
    test_states: list[RealGridField],
    dt_list,
    step_fn=None,
) -> tuple[np.ndarray, int]:
    """Median one-step |V(step(u)) - V(u)| per dt; diverged states are
    excluded from the median and counted."""
    if step_fn is None:
        step_fn = lambda spec, dt: mdl.euler_spectral_step(params, spec, dt)
    dt_arr = np.asarray(list(dt_list), dtype=np.float64)
    medians = np.empty_like(dt_arr)
    excluded = 0
    for i, dt in enumerate(dt_arr):
        variations = []
        for state in test_states:
            v_before = mdl.learned_potential(params, state)
            try:
                stepped = step_fn(forward_transform(state), float(dt))
                after = inverse_transform(stepped)
            except BlowUp:
                excluded += 1
                continue
            if not np.all(np.isfinite(after.values)):
                excluded += 1
                continue
            variations.append(abs(mdl.learned_potential(params, after) - v_before))
        if not variations:
            raise BlowUp(i, f"all test states diverged at dt = {dt}")
        medians[i] = float(np.median(variations))
    return medians, excluded


def one_step_variation_scaling(
    params: mdl.ModelParameters,
    test_states: list[RealGridField],
    dt_list,
    step_fn=None,
) -> FitRecord:
    """Log-log fit of the median one-step potential variation against dt."""
    dt_arr = np.asarray(list(dt_list), dtype=np.float64)
    if dt_arr.size < 3 or float(dt_arr.max() / dt_arr.min()) < 10.0 - 1e-9:
        raise InvalidField("dt_list must span at least one decade with >= 3 points")
    medians, _ = one_step_variation_medians(params, test_states, dt_arr, step_fn)
    return loglog_fit(dt_arr, medians)


def _h1_weights(n: int, length: float) -> np.ndarray:
    k = np.rint(np.fft.fftfreq(n) * n)
    return 1.0 + (2.0 * np.pi * k / length) ** 2


def critical_dt_estimate(params: mdl.ModelParameters, state: RealGridField) -> float:
    """kappa = 2 <mu, M mu> / ||(M + W) mu||_{H1}^2 at the given state.

    Zero for a conservative configuration; the usable time step is
    proportional to kappa with an empirically bracketed constant.
    """
    mu = mdl.mu_hat_eval(params, state)
    mu_c = mu.coeffs
    if float(np.max(np.abs(mu_c))) < 1e-14:
        raise ZeroDrivingForce("mu vanishes at this state")
    ms = mdl.multiplier_eval(params, forward_transform(state))
    n = state.grid.points[0]
    weights = _h1_weights(n, state.grid.lengths[0])
    quad = float(np.sum(ms.m * np.abs(mu_c) ** 2))
    drive = (ms.m + ms.w) * mu_c
    denom = float(np.sum(weights * np.abs(drive) ** 2))
    if denom == 0.0:
        raise ZeroDrivingForce("transport multipliers vanish at this state")
    return 2.0 * quad / denom


def amplitude_scan(
    params: mdl.ModelParameters, u0: RealGridField, amplitudes
) -> DiagnosticsReport:
    """V0 and V2 on a * u0 over an amplitude grid, with a log-log fit of V0."""
    amps = np.asarray(list(amplitudes), dtype=np.float64)
    v0s = np.empty_like(amps)
    v2s = np.empty_like(amps)
    for i, a in enumerate(amps):
        scaled = RealGridField(u0.grid, a * u0.values)
        v0, _, v2 = mdl.learned_potential_components(params, scaled)
        v0s[i] = v0
        v2s[i] = v2
    report = DiagnosticsReport()
    report.series["v0"] = (amps, v0s)
    report.series["v2"] = (amps, v2s)
    # a = 0 offset carries no scaling information; fit the increment
    base = v0s[np.argmin(np.abs(amps))] if np.min(np.abs(amps)) == 0 else None
    shifted = v0s - base if base is not None else v0s
    try:
        report.fits["v0_scaling"] = loglog_fit(np.abs(amps), np.abs(shifted))
    except DegenerateFit:
        pass
    return report


def pointwise_F_profile(params: mdl.ModelParameters, u_range) -> tuple[np.ndarray, np.ndarray]:
    """The pointwise potential term F evaluated over a scalar grid."""
    from . import autodiff as ad
    from . import nn

    u = np.asarray(list(u_range), dtype=np.float64)
    with ad.no_grad():
        out = nn.mlp_apply(
            params.phi_f, ad.constant(u[:, None]), params.cfg.f_spec
        )
    return u, out.data[:, 0].copy()


# ------------------------------------------------------------- audits


@dataclass
class ConstraintAudit:
    violations: dict[str, float]
    passed: bool

    def worst(self) -> float:
        return max(self.violations.values()) if self.violations else 0.0


def audit_multiplier_set(ms: mdl.MultiplierSet) -> dict[str, float]:
    """Max violation per structural clause; all zero for a valid model."""
    n = ms.m.size
    rev = (-np.arange(n)) % n
    return {
        "m_real": 0.0 if not np.iscomplexobj(ms.m) else float(np.max(np.abs(ms.m.imag))),
        "m_nonnegative": float(max(0.0, -np.min(np.real(ms.m)))),
        "m_even": float(np.max(np.abs(np.real(ms.m) - np.real(ms.m)[rev]))),
        "w_imaginary": float(np.max(np.abs(np.real(ms.w)))),
        "w_odd": float(np.max(np.abs(ms.w + ms.w[rev]))),
        "w_zero_mode": float(np.abs(ms.w[0])),
    }


def constraint_audit(
    params: mdl.ModelParameters,
    sample_states: list[RealGridField],
    rollout_steps: int = 5,
    dt: float = 1e-3,
) -> ConstraintAudit:
    """Exact structural checks on every sample state plus rollout reality."""
    violations: dict[str, float] = {}
    for state in sample_states:
        ms = mdl.multiplier_eval(params, forward_transform(state))
        for key, val in audit_multiplier_set(ms).items():
            violations[key] = max(violations.get(key, 0.0), val)
        mu = mdl.mu_hat_eval(params, state)
        violations["mu_hermitian"] = max(
            violations.get("mu_hermitian", 0.0), hermitian_defect(mu.coeffs)
        )
    snaps = mdl.rollout_fields(params, sample_states[0], dt, rollout_steps)
    leak = 0.0
    for snap in snaps:
        spec = forward_transform(snap)
        leak = max(leak, hermitian_defect(spec.coeffs))
    violations["rollout_reality"] = leak
    passed = all(v <= 1e-10 for v in violations.values())
    return ConstraintAudit(violations, passed)
