"""K-step accumulated loss, the training loop, and evaluation metrics.

The loss for one trajectory with snapshots u^0..u^{S-1} is

    J = sum_{s=0}^{S-1-K} sum_{k=1}^{K} || step^k(u^s) - u^{s+k} ||^2

with the squared norm taken in physical space (sum of squared nodal
differences times the cell volume).  All rollout offsets are batched
into one array axis, evaluated in memory-bounded chunks, and gradients
are accumulated in a fixed order, so runs are bit-reproducible.

Full-batch gradients are the default; setting ``batch_offsets`` samples
that many offsets per trajectory per epoch from a seeded stream (with
replacement), making one epoch one optimizer step on the sampled subset.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as mdl
from . import nn
from .dataset import Trajectory
from .errors import InvalidField, TrainingDiverged, ZeroReference
from .rng import SplitMix64
from .spectral import RealGridField


@dataclass(frozen=True)
class TrainConfig:
    k_steps: int = 3
    lr: float = 1e-3
    plateau_patience_epochs: int = 300
    lr_decay_factor: float = 0.5
    validation_every: int = 100
    early_stop_validations: int = 5
    seed: int = 0
    max_epochs: int = 1000
    batch_offsets: int | None = None
    chunk_states: int = 96

    def __post_init__(self):
        if self.k_steps < 1:
            raise InvalidField("k_steps must be >= 1")
        if not (0.0 < self.lr_decay_factor < 1.0):
            raise InvalidField("lr_decay_factor must lie in (0, 1)")
        if self.validation_every < 1 or self.chunk_states < 1:
            raise InvalidField("validation_every and chunk_states must be >= 1")


@dataclass
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    val_epochs: list[int] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    wall_clock: float = 0.0  # kept in memory / timing log only, never in the CSV


class _Prepared:
    """Snapshot values and half-spectra of one trajectory, ready to batch."""

    def __init__(self, traj: Trajectory):
        self.grid = traj.grid
        self.dt = traj.dt_record
        self.values = traj.stacked()
        spec = np.fft.rfft(self.values, axis=-1) / self.grid.n_total
        self.re = spec.real.copy()
        self.im = spec.imag.copy()
        self.im[:, 0] = 0.0
        self.im[:, -1] = 0.0

    def __len__(self):
        return self.values.shape[0]


def _prepare(params: mdl.ModelParameters, trajectories: list[Trajectory]) -> list[_Prepared]:
    prepared = []
    for traj in trajectories:
        mdl._check_grid(params, traj.grid)
        prepared.append(_Prepared(traj))
    if not prepared:
        raise InvalidField("empty trajectory set")
    dts = {p.dt for p in prepared}
    if len(dts) != 1:
        raise InvalidField("trajectories must share one recording interval")
    return prepared


def _t_chunk_loss(
    params: mdl.ModelParameters,
    re0: np.ndarray,
    im0: np.ndarray,
    targets: np.ndarray,
    dt: float,
    k_steps: int,
    cell: float,
):
    """Scalar loss tensor for one batched chunk.

    re0/im0: (B, M) initial half-spectra; targets: (K, B, N) physical
    snapshots k steps ahead of each offset.
    """
    re = ad.constant(re0)
    im = ad.constant(im0)
    u = mdl._t_physical(re, im)
    total = None
    for k in range(k_steps):
        re, im = mdl._t_step(params, re, im, u, dt)
        u = mdl._t_physical(re, im)
        diff = u - ad.constant(targets[k])
        sq = ad.sum_all(diff * diff) * ad.constant(cell)
        total = sq if total is None else total + sq
    return total


def _chunk_ranges(n: int, size: int):
    for start in range(0, n, size):
        yield start, min(start + size, n)


def _gather(prepared: list[_Prepared], picks: list[tuple[int, int]], k_steps: int):
    re0 = np.stack([prepared[t].re[s] for t, s in picks])
    im0 = np.stack([prepared[t].im[s] for t, s in picks])
    targets = np.stack(
        [
            np.stack([prepared[t].values[s + k + 1] for t, s in picks])
            for k in range(k_steps)
        ]
    )
    return re0, im0, targets


def _loss_and_grads(
    params: mdl.ModelParameters,
    prepared: list[_Prepared],
    picks: list[tuple[int, int]],
    k_steps: int,
    chunk_states: int,
    wrt: list | None,
):
    """Loss over the picked (trajectory, offset) states; optionally gradients."""
    dt = prepared[0].dt
    cell = prepared[0].grid.cell_volume
    total = 0.0
    grads = None if wrt is None else [np.zeros_like(t.data) for t in wrt]
    for lo, hi in _chunk_ranges(len(picks), chunk_states):
        re0, im0, targets = _gather(prepared, picks[lo:hi], k_steps)
        loss_t = _t_chunk_loss(params, re0, im0, targets, dt, k_steps, cell)
        total += float(loss_t.data)
        if wrt is not None:
            for g, acc in zip(ad.gradient(loss_t, wrt), grads):
                acc += g.data
    return total, grads


def _all_picks(prepared: list[_Prepared], k_steps: int) -> list[tuple[int, int]]:
    picks = []
    for t, p in enumerate(prepared):
        if len(p) <= k_steps:
            raise InvalidField(f"trajectory {t} shorter than K = {k_steps} + 1 snapshots")
        picks.extend((t, s) for s in range(len(p) - k_steps))
    return picks


def k_step_loss(params: mdl.ModelParameters, trajectory: Trajectory, k_steps: int,
                chunk_states: int = 96) -> float:
    """Accumulated K-step squared error of the model on one trajectory."""
    prepared = _prepare(params, [trajectory])
    picks = _all_picks(prepared, k_steps)
    total, _ = _loss_and_grads(params, prepared, picks, k_steps, chunk_states, None)
    return total


def train(
    config: TrainConfig,
    train_set: list[Trajectory],
    val_set: list[Trajectory],
    model_init: mdl.ModelParameters,
) -> tuple[mdl.ModelParameters, TrainHistory]:
    """Adam on the (possibly sampled) K-step loss with plateau-halved
    learning rate and early stopping on stale validations; returns the
    best-validation checkpoint."""
    t_start = time.perf_counter()
    params = mdl.clone_parameters(model_init)
    wrt = mdl.trainable_parameters(params)
    state = nn.AdamState.init(wrt, lr=config.lr)
    train_prep = _prepare(params, train_set)
    val_prep = _prepare(params, val_set)
    k = config.k_steps
    full_picks = _all_picks(train_prep, k)
    val_picks = _all_picks(val_prep, k)
    sampler = SplitMix64(config.seed)

    history = TrainHistory()
    best_val = float("inf")
    best_data = mdl.copy_parameter_data(params)
    epochs_since_improve = 0
    validations_since_improve = 0

    for epoch in range(1, config.max_epochs + 1):
        if config.batch_offsets is None:
            picks = full_picks
        else:
            picks = []
            for t, p in enumerate(train_prep):
                hi = len(p) - k - 1
                picks.extend(
                    (t, sampler.randint(0, hi)) for _ in range(config.batch_offsets)
                )
        loss, grads = _loss_and_grads(params, train_prep, picks, k, config.chunk_states, wrt)
        if not np.isfinite(loss):
            mdl.restore_parameter_data(params, best_data)
            raise TrainingDiverged(
                f"training loss became non-finite at epoch {epoch}", checkpoint=params
            )
        nn.adam_step(wrt, grads, state)
        history.epochs.append(epoch)
        history.train_loss.append(loss)
        history.lr.append(state.lr)
        epochs_since_improve += 1

        if epoch % config.validation_every == 0:
            val, _ = _loss_and_grads(params, val_prep, val_picks, k, config.chunk_states, None)
            history.val_epochs.append(epoch)
            history.val_loss.append(val)
            if val < best_val and np.isfinite(val):
                best_val = val
                best_data = mdl.copy_parameter_data(params)
                epochs_since_improve = 0
                validations_since_improve = 0
            else:
                validations_since_improve += 1
            if validations_since_improve >= config.early_stop_validations:
                break
            if epochs_since_improve >= config.plateau_patience_epochs:
                state.lr *= config.lr_decay_factor
                epochs_since_improve = 0

    mdl.restore_parameter_data(params, best_data)
    history.wall_clock = time.perf_counter() - t_start
    return params, history


def relative_rmse(pred: RealGridField, ref: RealGridField) -> float:
    """sqrt( sum |pred - ref|^2 / sum |ref|^2 ) on matching grids."""
    if pred.grid != ref.grid:
        raise InvalidField("relative_rmse needs matching grids")
    denom = float(np.sum(ref.values**2))
    if denom == 0.0:
        raise ZeroReference("reference field is identically zero")
    return float(np.sqrt(np.sum((pred.values - ref.values) ** 2) / denom))


@dataclass
class EvalReport:
    """Per-trajectory error curves plus the 5-step summary."""

    rows: list[tuple[int, int, float]]  # (trajectory_id, step, relative_rmse)
    horizon: int
    five_step_mean: float
    five_step_std: float

    def curve(self, trajectory_id: int) -> list[float]:
        return [r[2] for r in self.rows if r[0] == trajectory_id]

    def mean_curve(self) -> list[float]:
        out = []
        for step in range(1, self.horizon + 1):
            vals = [r[2] for r in self.rows if r[1] == step]
            out.append(float(np.mean(vals)))
        return out


def evaluate(params: mdl.ModelParameters, test_set: list[Trajectory], horizon: int) -> EvalReport:
    """Roll the model from every test IC and score against the references."""
    rows: list[tuple[int, int, float]] = []
    five: list[float] = []
    for tid, traj in enumerate(test_set):
        n_steps = min(horizon, len(traj) - 1)
        snaps = mdl.rollout_fields(params, traj.snapshots[0], traj.dt_record, n_steps)
        for step in range(1, n_steps + 1):
            err = relative_rmse(snaps[step], traj.snapshots[step])
            rows.append((tid, step, err))
            if step == 5:
                five.append(err)
    mean = float(np.mean(five)) if five else float("nan")
    std = float(np.std(five)) if five else float("nan")
    return EvalReport(rows, horizon, mean, std)


def metrics_csv(report: EvalReport) -> str:
    lines = ["trajectory_id,step,relative_rmse"]
    lines += [f"{tid},{step},{err!r}" for tid, step, err in report.rows]
    return "\n".join(lines) + "\n"


def history_csv(history: TrainHistory) -> str:
    """Deterministic training trace (wall clock deliberately excluded)."""
    val_at = dict(zip(history.val_epochs, history.val_loss))
    lines = ["epoch,train_loss,lr,val_loss"]
    for i, epoch in enumerate(history.epochs):
        val = val_at.get(epoch, "")
        val_repr = repr(val) if val != "" else ""
        lines.append(f"{epoch},{history.train_loss[i]!r},{history.lr[i]!r},{val_repr}")
    return "\n".join(lines) + "\n"
