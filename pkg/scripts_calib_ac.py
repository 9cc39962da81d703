"""Calibration run: desk-scale Allen-Cahn training convergence probe."""
import time
import numpy as np
from mesodyn import model as M, training as T, solvers as S
from mesodyn.spectral import grid_1d
from mesodyn.dataset import IcConfig, random_initial_condition, split_dataset

t0 = time.perf_counter()
grid = grid_1d(128)
pde = S.PdeModel("allen_cahn", ac_epsilon=0.1)
cfg_s = S.SolverConfig(dt_record=1e-3, substeps=25, n_snapshots=100, stepper="sbdf1")
trajs = []
for seed in range(35):
    ic = random_initial_condition(IcConfig(seed=1000 + seed, target_amp=0.9), grid)
    trajs.append(S.simulate_pde(pde, ic, cfg_s))
train_set, val_set, test_set = split_dataset(trajs, (20/35, 5/35, 10/35), seed=7)
print(f"gen done {time.perf_counter()-t0:.1f}s sizes {len(train_set)}/{len(val_set)}/{len(test_set)}", flush=True)

mcfg = M.ModelConfig(grid_points=128, cutoff=16, psi_width=32, psi_depth=3,
                     f_width=32, f_depth=3, v_width=32, v_depth=3)
params = M.init_parameters(mcfg, seed=11)

stage_epochs = [500, 500, 1000, 1000, 1000]
total = 0
for stage, n_ep in enumerate(stage_epochs):
    tcfg = T.TrainConfig(k_steps=3, lr=1e-3, max_epochs=n_ep, batch_offsets=1,
                         validation_every=100, plateau_patience_epochs=300,
                         early_stop_validations=50, seed=100 + stage, chunk_states=96)
    params, hist = T.train(tcfg, train_set, val_set, params)
    total += len(hist.epochs)
    report = T.evaluate(params, test_set, horizon=10)
    print(f"epochs {total}: val {hist.val_loss[-1] if hist.val_loss else float('nan'):.4g} "
          f"5-step err {report.five_step_mean:.4f} +- {report.five_step_std:.4f} "
          f"({time.perf_counter()-t0:.0f}s)", flush=True)

# identifiability probe: affine fit of V_theta vs V_AC over test snapshots
xs, ys = [], []
for tr in test_set:
    for snap in tr.snapshots:
        xs.append(S.free_energy(pde, snap))
        ys.append(M.learned_potential(params, snap))
xs, ys = np.array(xs), np.array(ys)
A = np.stack([xs, np.ones_like(xs)], axis=1)
coef, res, *_ = np.linalg.lstsq(A, ys, rcond=None)
pred = A @ coef
ss_res = np.sum((ys - pred) ** 2)
ss_tot = np.sum((ys - ys.mean()) ** 2)
print("affine fit slope", coef[0], "R2", 1 - ss_res / ss_tot, flush=True)

M.save_checkpoint(params, "/tmp/calib_ac.omckpt", extra={"dt": repr(1e-3)})
print("done", time.perf_counter() - t0, flush=True)
