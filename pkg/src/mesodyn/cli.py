"""The ``meso`` command line: data generation, training, evaluation,
diagnostics, and checkpoint-driven simulation.

Every command is a pure function of its configuration and input files:
rerunning with the same seed gives byte-identical outputs.  Outputs land
under ``--out`` together with ``run-config.txt`` (the resolved
configuration) and ``manifest.txt`` (CRC-64 checksums of every artifact).
Wall-clock timing goes to stderr only.

Configuration files are flat ``key=value`` lines with ``#`` comments;
command-line flags override file values; unknown keys are rejected.  The
seed falls back to the ``MESO_SEED`` environment variable when neither a
flag nor a config entry provides one.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import model as mdl
from . import training as trn
from .chains import ForceLaw, ScalingParams, default_node_count, simulate_chain
from .dataset import (
    IcConfig,
    crc64,
    random_initial_condition,
    read_trajectory,
    split_dataset,
    with_meta,
    write_trajectory,
)
from .errors import ConfigError, MesodynError
from .solvers import PdeModel, SolverConfig, free_energy, simulate_pde
from .spectral import grid_1d, grid_2d

PDE_MODELS = ("allen-cahn-1d", "allen-cahn-2d", "kdv")
CHAIN_MODELS = ("fput", "fene")
REPORTS = ("potential", "dt-scaling", "affine", "amplitude", "f-profile", "constraints")


# ------------------------------------------------------------- config


def read_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = val.strip()
    return out


def resolve_config(defaults: dict, file_path: str | None, overrides: dict) -> dict:
    """defaults <- config file <- command-line flags; unknown keys rejected."""
    resolved = dict(defaults)
    if file_path:
        for key, val in read_config_file(file_path).items():
            if key not in defaults:
                raise ConfigError(f"unknown config key {key!r}")
            resolved[key] = type(defaults[key])(val) if defaults[key] is not None else val
    for key, val in overrides.items():
        if val is None:
            continue
        if key not in resolved:
            raise ConfigError(f"unknown option {key!r}")
        resolved[key] = val
    return resolved


def resolve_seed(explicit: int | None, cfg_seed) -> int:
    if explicit is not None:
        return explicit
    if cfg_seed is not None and str(cfg_seed) != "":
        return int(cfg_seed)
    env = os.environ.get("MESO_SEED")
    return int(env) if env else 0


def load_directory(data_dir: str) -> list:
    paths = sorted(Path(data_dir).glob("*.omtraj"))
    if not paths:
        raise ConfigError(f"no .omtraj files under {data_dir}")
    return [read_trajectory(p) for p in paths]


def split_from_config(trajectories: list, spec: str, seed: int):
    fractions = tuple(float(tok) for tok in spec.split(","))
    return split_dataset(trajectories, fractions, seed)


# ------------------------------------------------------------- gen-pde


_GEN_PDE_DEFAULTS = {
    "model": "allen-cahn-1d",
    "n_traj": 10,
    "seed": None,
    "grid": 0,  # 0 = model default (256 / 128x128)
    "length": 1.0,
    "dt": 1e-3,
    "substeps": 25,
    "snapshots": 100,
    "stepper": "",  # "" = model default (sbdf1 for allen-cahn, sbdf2 for kdv)
    "ac_epsilon": 0.1,
    "kdv_a": 6.0,
    "kdv_b": 1.0,
    "n_waves": 5,
    "max_wavenumber": 8,
    "target_amp": 1.0,
    "amp_lo": 0.2,
    "amp_hi": 1.0,
    "jobs": 1,
}


def _pde_worker(payload):
    cfg, index = payload
    seed = cfg["seed"] + index
    if cfg["model"] == "allen-cahn-2d":
        n = cfg["grid"] or 128
        grid = grid_2d(n, n, cfg["length"], cfg["length"])
    else:
        grid = grid_1d(cfg["grid"] or 256, cfg["length"])
    kind = "kdv" if cfg["model"] == "kdv" else "allen_cahn"
    pde = PdeModel(kind, ac_epsilon=cfg["ac_epsilon"], kdv_a=cfg["kdv_a"], kdv_b=cfg["kdv_b"])
    stepper = cfg["stepper"] or ("sbdf2" if kind == "kdv" else "sbdf1")
    solver = SolverConfig(cfg["dt"], cfg["substeps"], cfg["snapshots"], stepper)
    ic_cfg = IcConfig(
        n_waves=cfg["n_waves"],
        max_wavenumber=cfg["max_wavenumber"],
        amplitude_range=(cfg["amp_lo"], cfg["amp_hi"]),
        target_amp=cfg["target_amp"],
        seed=seed,
    )
    ic = random_initial_condition(ic_cfg, grid)
    traj = simulate_pde(pde, ic, solver)
    return index, with_meta(traj, seed=seed, ic_max_wavenumber=cfg["max_wavenumber"],
                            ic_target_amp=cfg["target_amp"])


def cmd_gen_pde(args) -> int:
    cfg = resolve_config(
        _GEN_PDE_DEFAULTS,
        args.config,
        {
            "model": args.model,
            "n_traj": args.n_traj,
            "grid": args.grid,
            "dt": args.dt,
            "substeps": args.substeps,
            "snapshots": args.snapshots,
            "stepper": args.stepper,
            "ac_epsilon": args.epsilon,
            "target_amp": args.target_amp,
            "max_wavenumber": args.max_wavenumber,
            "jobs": args.jobs,
        },
    )
    if cfg["model"] not in PDE_MODELS:
        raise ConfigError(f"model must be one of {PDE_MODELS}")
    cfg["seed"] = resolve_seed(args.seed, cfg["seed"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    work = [(cfg, i) for i in range(cfg["n_traj"])]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(_pde_worker, work))
    else:
        results = [_pde_worker(item) for item in work]
    artifacts = {}
    for index, traj in sorted(results):
        name = f"traj_{index:04d}.omtraj"
        write_trajectory(traj, out_dir / name)
        artifacts[name] = None
    _finalize_dir(out_dir, cfg, list(artifacts))
    print(f"wrote {len(artifacts)} trajectories to {out_dir}")
    return 0


def _finalize_dir(out_dir: Path, config: dict, artifact_names: list[str]) -> None:
    lines = [f"{key}={config[key]}" for key in sorted(config)]
    (out_dir / "run-config.txt").write_text("\n".join(lines) + "\n")
    manifest = []
    for name in sorted(artifact_names + ["run-config.txt"]):
        digest = crc64((out_dir / name).read_bytes())
        manifest.append(f"{digest:016x}  {name}")
    (out_dir / "manifest.txt").write_text("\n".join(manifest) + "\n")


# ----------------------------------------------------------- gen-chain


_GEN_CHAIN_DEFAULTS = {
    "model": "fput",
    "n_traj": 10,
    "seed": None,
    "grid": 0,  # 0 = as many points as the chain can cover
    "length": 1.0,
    "dt": 1e-3,
    "substeps": 25,
    "snapshots": 100,
    "epsilon": 0.0,  # 0 = model default (0.05 fput / 0.03 fene)
    "c": 1.0,
    "alpha": 1.0,
    "H": 1.0,
    "n_nodes": 0,  # 0 = ceil(length / epsilon)
    "n_waves": 5,
    "max_wavenumber": 2,
    "target_amp": 1.0,
    "amp_lo": 0.2,
    "amp_hi": 1.0,
    "jobs": 1,
}


def _chain_worker(payload):
    cfg, index = payload
    seed = cfg["seed"] + index
    eps = cfg["epsilon"] or (0.05 if cfg["model"] == "fput" else 0.03)
    scaling = ScalingParams(epsilon=eps, c_wave=cfg["c"] if cfg["model"] == "fput" else 1.0)
    n_nodes = cfg["n_nodes"] or default_node_count(scaling, cfg["length"])
    # default grid: the largest even point count the chain nodes can cover
    grid_points = cfg["grid"] or (n_nodes if n_nodes % 2 == 0 else n_nodes - 1)
    grid = grid_1d(grid_points, cfg["length"])
    if cfg["model"] == "fput":
        law = ForceLaw("fput", c=cfg["c"], alpha=cfg["alpha"])
    else:
        law = ForceLaw("fene", H=cfg["H"]).resolved(scaling)
    solver = SolverConfig(cfg["dt"], cfg["substeps"], cfg["snapshots"], "sbdf1")
    ic_cfg = IcConfig(
        n_waves=cfg["n_waves"],
        max_wavenumber=cfg["max_wavenumber"],
        amplitude_range=(cfg["amp_lo"], cfg["amp_hi"]),
        target_amp=cfg["target_amp"],
        seed=seed,
    )
    ic = random_initial_condition(ic_cfg, grid)
    traj = simulate_chain(law, scaling, ic, solver, n_nodes)
    return index, with_meta(traj, seed=seed)


def cmd_gen_chain(args) -> int:
    cfg = resolve_config(
        _GEN_CHAIN_DEFAULTS,
        args.config,
        {
            "model": args.model,
            "n_traj": args.n_traj,
            "epsilon": args.epsilon,
            "grid": args.grid,
            "n_nodes": args.n_nodes,
            "snapshots": args.snapshots,
            "target_amp": args.target_amp,
            "max_wavenumber": args.max_wavenumber,
            "jobs": args.jobs,
        },
    )
    if cfg["model"] not in CHAIN_MODELS:
        raise ConfigError(f"model must be one of {CHAIN_MODELS}")
    cfg["seed"] = resolve_seed(args.seed, cfg["seed"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    work = [(cfg, i) for i in range(cfg["n_traj"])]
    try:
        if cfg["jobs"] > 1:
            with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
                results = list(pool.map(_chain_worker, work))
        else:
            results = []
            for item in work:
                results.append(_chain_worker(item))
    except MesodynError as exc:
        raise MesodynError(f"chain generation failed: {exc}") from exc
    names = []
    for index, traj in sorted(results):
        name = f"traj_{index:04d}.omtraj"
        write_trajectory(traj, out_dir / name)
        names.append(name)
    _finalize_dir(out_dir, cfg, names)
    print(f"wrote {len(names)} trajectories to {out_dir}")
    return 0


# --------------------------------------------------------------- train


_TRAIN_DEFAULTS = {
    "k_steps": 3,
    "lr": 1e-3,
    "max_epochs": 1000,
    "batch_offsets": 0,  # 0 = full batch
    "validation_every": 100,
    "plateau_patience_epochs": 300,
    "early_stop_validations": 5,
    "seed": None,
    "split": "0.8,0.1,0.1",
    "split_seed": 0,
    "cutoff": 16,
    "width": 64,
    "depth": 3,
    "known_potential": "none",
    "init_seed": 0,
}


def cmd_train(args) -> int:
    cfg = resolve_config(
        _TRAIN_DEFAULTS,
        args.config,
        {
            "k_steps": args.k_steps,
            "lr": args.lr,
            "max_epochs": args.epochs,
            "batch_offsets": args.batch_offsets,
            "validation_every": args.val_every,
            "width": args.width,
            "cutoff": args.cutoff,
            "split": args.split,
            "split_seed": args.split_seed,
            "known_potential": args.known_potential,
        },
    )
    cfg["seed"] = resolve_seed(args.seed, cfg["seed"])
    trajectories = load_directory(args.data)
    train_set, val_set, _ = split_from_config(trajectories, cfg["split"], cfg["split_seed"])
    grid = train_set[0].grid
    meta = train_set[0].meta
    known = None if cfg["known_potential"] == "none" else cfg["known_potential"]
    model_cfg = mdl.ModelConfig(
        grid_points=grid.points[0],
        domain_length=grid.lengths[0],
        cutoff=cfg["cutoff"],
        psi_width=cfg["width"],
        psi_depth=cfg["depth"],
        f_width=cfg["width"],
        f_depth=cfg["depth"],
        v_width=cfg["width"],
        v_depth=cfg["depth"],
        known_potential=known,
        ac_epsilon=float(meta.get("ac_epsilon", 0.1)),
        kdv_a=float(meta.get("kdv_a", 6.0)),
        kdv_b=float(meta.get("kdv_b", 1.0)),
    )
    params = mdl.init_parameters(model_cfg, seed=cfg["init_seed"])
    train_cfg = trn.TrainConfig(
        k_steps=cfg["k_steps"],
        lr=cfg["lr"],
        plateau_patience_epochs=cfg["plateau_patience_epochs"],
        validation_every=cfg["validation_every"],
        early_stop_validations=cfg["early_stop_validations"],
        seed=cfg["seed"],
        max_epochs=cfg["max_epochs"],
        batch_offsets=cfg["batch_offsets"] or None,
    )
    best, history = trn.train(train_cfg, train_set, val_set, params)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "model.omckpt"
    mdl.save_checkpoint(
        best,
        ckpt,
        extra={
            "dt": repr(train_set[0].dt_record),
            "k_steps": cfg["k_steps"],
            "split": cfg["split"],
            "split_seed": cfg["split_seed"],
        },
    )
    (out_dir / "history.csv").write_text(trn.history_csv(history))
    _finalize_dir(out_dir, cfg, ["model.omckpt", "history.csv"])
    print(f"trained {history.epochs[-1] if history.epochs else 0} epochs, "
          f"best validation {min(history.val_loss) if history.val_loss else float('nan'):.6g}")
    print(f"wall clock {history.wall_clock:.1f}s", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- eval


def _select_subset(trajectories, fields: dict, subset: str):
    if subset == "all":
        return trajectories
    split = fields.get("split", "0.8,0.1,0.1")
    split_seed = int(fields.get("split_seed", 0))
    train_part, val_part, test_part = split_from_config(trajectories, split, split_seed)
    return {"train": train_part, "val": val_part, "test": test_part}[subset]


def cmd_eval(args) -> int:
    params, fields = mdl.load_checkpoint(args.checkpoint)
    trajectories = load_directory(args.data)
    chosen = _select_subset(trajectories, fields, args.subset)
    report = trn.evaluate(params, chosen, args.horizon)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(trn.metrics_csv(report))
    summary = (
        f"five_step_mean={report.five_step_mean!r}\n"
        f"five_step_std={report.five_step_std!r}\n"
    )
    (out_dir / "summary.txt").write_text(summary)
    cfg = {
        "checkpoint": args.checkpoint,
        "horizon": args.horizon,
        "subset": args.subset,
    }
    _finalize_dir(out_dir, cfg, ["metrics.csv", "summary.txt"])
    print(f"5-step relative error {report.five_step_mean:.6g} +- {report.five_step_std:.6g}")
    return 0


# ------------------------------------------------------------ diagnose


def _true_pde_from_meta(meta: dict) -> PdeModel | None:
    kind = meta.get("model")
    if kind == "allen_cahn":
        return PdeModel("allen_cahn", ac_epsilon=float(meta.get("ac_epsilon", 0.1)))
    if kind == "kdv":
        return PdeModel("kdv", kdv_a=float(meta.get("kdv_a", 6.0)),
                        kdv_b=float(meta.get("kdv_b", 1.0)))
    return None


def cmd_diagnose(args) -> int:
    params, fields = mdl.load_checkpoint(args.checkpoint)
    trajectories = load_directory(args.data)
    chosen = _select_subset(trajectories, fields, args.subset)
    dt_train = float(fields.get("dt", chosen[0].dt_record))
    report = diag.DiagnosticsReport(
        context={"checkpoint": str(args.checkpoint), "report": args.report,
                 "subset": args.subset}
    )
    if args.report == "potential":
        for tid, traj in enumerate(chosen):
            trace = diag.potential_trace(params, traj)
            steps = np.arange(len(trace), dtype=float)
            report.series[f"potential_{tid:03d}"] = (steps, trace)
    elif args.report == "dt-scaling":
        states = [traj.snapshots[0] for traj in chosen]
        dt_list = np.linspace(0.1, 1.0, 10) * dt_train
        medians, excluded = diag.one_step_variation_medians(params, states, dt_list)
        report.series["median_variation"] = (dt_list, medians)
        fit = diag.loglog_fit(dt_list, medians)
        report.fits["variation_scaling"] = fit
        report.scalars["excluded_states"] = float(excluded)
    elif args.report == "affine":
        pde = _true_pde_from_meta(chosen[0].meta)
        if pde is None:
            raise ConfigError("affine report needs PDE-generated data with model metadata")
        xs, ys = [], []
        for traj in chosen:
            for snap in traj.snapshots:
                xs.append(free_energy(pde, snap))
                ys.append(mdl.learned_potential(params, snap))
        xs_arr, ys_arr = np.array(xs), np.array(ys)
        report.series["true_vs_learned"] = (xs_arr, ys_arr)
        report.fits["affine"] = diag.affine_fit(xs_arr, ys_arr)
    elif args.report == "amplitude":
        amps = np.linspace(0.0, 2.0, 41)
        scan = diag.amplitude_scan(params, chosen[0].snapshots[0], amps)
        report.series.update(scan.series)
        report.fits.update(scan.fits)
    elif args.report == "f-profile":
        lo = min(float(np.min(t.stacked())) for t in chosen)
        hi = max(float(np.max(t.stacked())) for t in chosen)
        us, fs = diag.pointwise_F_profile(params, np.linspace(lo, hi, 101))
        report.series["f_profile"] = (us, fs)
    elif args.report == "constraints":
        states = [traj.snapshots[s] for traj in chosen[:10] for s in (0, len(traj) // 2)]
        audit = diag.constraint_audit(params, states, dt=dt_train)
        for key, val in audit.violations.items():
            report.scalars[f"violation_{key}"] = val
        report.scalars["passed"] = float(audit.passed)
    else:
        raise ConfigError(f"report must be one of {REPORTS}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = f"report_{args.report}.csv"
    (out_dir / name).write_text(report.to_csv())
    cfg = {"checkpoint": args.checkpoint, "report": args.report, "subset": args.subset}
    _finalize_dir(out_dir, cfg, [name])
    print(f"wrote {out_dir / name}")
    return 0


# ------------------------------------------------------------ simulate


def cmd_simulate(args) -> int:
    params, fields = mdl.load_checkpoint(args.checkpoint)
    source = read_trajectory(args.ic)
    dt = args.dt if args.dt is not None else float(fields.get("dt", source.dt_record))
    traj = mdl.rollout(params, source.snapshots[0], dt, args.steps)
    write_trajectory(traj, args.out)
    print(f"wrote rollout of {args.steps} steps to {args.out}")
    return 0


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meso",
        description="mesoscopic data generation and constrained dynamics learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-pde", help="generate PDE reference trajectories")
    p.add_argument("--model", choices=PDE_MODELS)
    p.add_argument("--n-traj", type=int, dest="n_traj")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--substeps", type=int)
    p.add_argument("--snapshots", type=int)
    p.add_argument("--stepper", choices=("sbdf1", "sbdf2"))
    p.add_argument("--epsilon", type=float, help="Allen-Cahn interface width")
    p.add_argument("--target-amp", type=float, dest="target_amp")
    p.add_argument("--max-wavenumber", type=int, dest="max_wavenumber")
    p.add_argument("--jobs", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_pde)

    p = sub.add_parser("gen-chain", help="generate coarse-grained chain trajectories")
    p.add_argument("--model", choices=CHAIN_MODELS)
    p.add_argument("--n-traj", type=int, dest="n_traj")
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--grid", type=int)
    p.add_argument("--n-nodes", type=int, dest="n_nodes")
    p.add_argument("--snapshots", type=int)
    p.add_argument("--target-amp", type=float, dest="target_amp")
    p.add_argument("--max-wavenumber", type=int, dest="max_wavenumber")
    p.add_argument("--jobs", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_chain)

    p = sub.add_parser("train", help="train a model on trajectory data")
    p.add_argument("--data", required=True)
    p.add_argument("--k-steps", type=int, dest="k_steps")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-offsets", type=int, dest="batch_offsets")
    p.add_argument("--val-every", type=int, dest="val_every")
    p.add_argument("--width", type=int)
    p.add_argument("--cutoff", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--split")
    p.add_argument("--split-seed", type=int, dest="split_seed")
    p.add_argument("--known-potential", choices=("none", "allen_cahn", "kdv"),
                   dest="known_potential")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against reference data")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--horizon", type=int, default=5)
    p.add_argument("--subset", choices=("all", "train", "val", "test"), default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diagnose", help="physics diagnostics of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", choices=REPORTS, required=True)
    p.add_argument("--subset", choices=("all", "train", "val", "test"), default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", help="roll a checkpoint from an initial condition")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ic", required=True, help="OMTRAJ file; snapshot 0 is the IC")
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MesodynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
