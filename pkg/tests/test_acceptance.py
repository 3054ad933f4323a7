"""Acceptance suite: one PASS/FAIL line per criterion.

Each test prints its line (see ``conftest.py``; the lines are repeated in
the terminal summary) and then asserts the same condition.  The desk-scale
experiments read their settings from ``configs/``.
"""

import json
import math
from pathlib import Path
import time

import numpy as np
import pytest

from meanfield import pipeline
from meanfield.cli import main
from meanfield.config import load_config
from meanfield.dynamics import (AttractionRepulsionKernel, GaussianKernel, ParticleState, SystemSpec,
                                cucker_smale_accel, motsch_tadmor_drift, multigroup_drift, pairwise_drift,
                                simulate, system_drift)
from meanfield.evaluation import sliced_wasserstein
from meanfield.io import load_checkpoint, read_trajectory, save_checkpoint, write_trajectory
from meanfield.mvnn import (DriftBatch, MgMvnnModel, MvnnModel, embed_mean, mg_mvnn_loss_grad, mvnn_drift,
                            mvnn_drift_all, mvnn_loss_grad)
from meanfield.nn import finite_diff_grad, flatten

import oracles

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
D_HIER = ((5.0, 10.0, 0.0), (0.0, 2.0, 5.0), (0.0, 0.0, 1.0))
R_HIER = (1.0, 2.5, 5.0)


def max_rel(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / scale)


def rel_errors(analytic, fd):
    a, f = flatten(analytic), flatten(fd)
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)


def best_time(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


class Experiment:
    """Generated data, trained model and summary of one desk config."""

    def __init__(self, name):
        self.cfg = load_config(CONFIGS / name)
        t0 = time.perf_counter()
        self.trajectories = pipeline.generate(self.cfg)
        self.model, self.history, self.summary = pipeline.fit(self.cfg, self.trajectories)
        self.seconds = time.perf_counter() - t0

    @property
    def test_trajectories(self):
        return self.trajectories[self.cfg.split.train:]

    def rollout(self, truth):
        # same noise seed as the reference: a synchronous coupling
        return pipeline.rollout(self.model, self.cfg, pipeline.initial_state(truth), truth.seed)


@pytest.fixture(scope="session")
def motsch_tadmor():
    return Experiment("desk_motsch_tadmor.json")


def kde_ratios(exp, t_final):
    ratios = []
    for truth in exp.test_trajectories:
        rep = pipeline.evaluate(truth, exp.rollout(truth), exp.cfg.eval)
        row = next(r for r in rep["per_time"] if math.isclose(r["time"], t_final))
        ratios.append(row["kde_l2"] / row["baseline_kde_l2"])
    return ratios


def true_drift_mse(exp):
    """Test-set MSE of the learned drift against the exact drift, and of zero."""
    drift = system_drift(exp.cfg.system)
    err = zero = count = 0.0
    for truth in exp.test_trajectories:
        for x in truth.positions[:-1]:
            b = drift(ParticleState(x))
            err += np.sum((mvnn_drift_all(exp.model, x) - b) ** 2)
            zero += np.sum(b ** 2)
            count += len(x)
    return err / count, zero / count


def test_criterion_01_gradient_exactness(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    m = MvnnModel.create(1, k=4, emb_hidden=(8,), int_hidden=(8,), seed=1)
    snaps = rng.normal(size=(2, 4, 1))
    batch = DriftBatch(snaps, np.repeat(np.arange(2), 4), np.tile(np.arange(4), 2), rng.normal(size=(8, 1)))
    _, g = mvnn_loss_grad(m, batch)
    fd = finite_diff_grad(lambda q: mvnn_loss_grad(q, batch, need_grad=False)[0], m, 1e-6)
    err_single = float(np.max(rel_errors(g, fd)))

    mg = MgMvnnModel.create(1, [4, 4], emb_hidden=(8,), int_hidden=(8,), seed=2)
    mg_batch = DriftBatch(snaps, batch.sample_snapshot, batch.sample_particle, batch.targets, (2, 2))
    _, g = mg_mvnn_loss_grad(mg, mg_batch)
    fd = finite_diff_grad(lambda q: mg_mvnn_loss_grad(q, mg_batch, need_grad=False)[0], mg, 1e-6)
    err_groups = float(np.max(rel_errors(g, fd)))
    seconds = time.perf_counter() - t0

    ok = max(err_single, err_groups) <= 1e-5 and seconds < 5
    criterion(1, ok, f"max rel err single {err_single:.1e}, K=2 {err_groups:.1e} (<= 1e-5); {seconds:.2f}s (< 5s)")
    assert ok


def test_criterion_02_brute_force_drifts(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    errs = {}
    for N, d in ((8, 1), (17, 2), (64, 1), (40, 3)):
        x, v = rng.normal(size=(N, d)), rng.normal(size=(N, d))
        s = ParticleState(x, v)
        ar = AttractionRepulsionKernel(1.0, 0.5, 0.7, 2.0)
        pairs = {
            "pairwise": (pairwise_drift(s, GaussianKernel(0.5)), oracles.loop_pairwise(x, oracles.gaussian(0.5))),
            "motsch_tadmor": (motsch_tadmor_drift(s, GaussianKernel(0.5)),
                              oracles.loop_motsch_tadmor(x, oracles.gaussian(0.5))),
            "cucker_smale": (cucker_smale_accel(s, ar), oracles.loop_cucker_smale(x, v, oracles.attraction_repulsion())),
        }
        sizes = (N - 2 * (N // 3), N // 3, N // 3)
        g = ParticleState(2.0 * x, group_sizes=sizes)
        pairs["multigroup"] = (np.concatenate(multigroup_drift(g, D_HIER, R_HIER)),
                               np.concatenate(oracles.loop_multigroup(g.groups(), D_HIER, R_HIER)))
        for name, (fast, loop) in pairs.items():
            errs[name] = max(errs.get(name, 0.0), max_rel(fast, loop))

    exact = True
    for model in (MvnnModel.create(2, k=8, seed=3), MvnnModel.create(2, k=8, order=2, seed=4)):
        rows = rng.normal(size=(64, model.d_state))
        full = mvnn_drift_all(model, rows)
        z = embed_mean(model, rows)
        per = np.vstack([mvnn_drift(model, rows[i:i + 1], z) for i in range(64)])
        exact &= np.array_equal(full, per)
    seconds = time.perf_counter() - t0

    worst = max(errs.values())
    ok = worst <= 1e-12 and exact and seconds < 5
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    criterion(2, ok, f"max rel vs loop oracle: {detail} (<= 1e-12); MVNN per-particle exact={exact}; "
                     f"{seconds:.2f}s (< 5s)")
    assert ok


def test_criterion_03_conservation(criterion):
    rng = np.random.default_rng(2)
    ar = AttractionRepulsionKernel(1.0, 0.5, 0.7, 2.0)
    worst_sum = worst_shift = 0.0
    for _ in range(100):
        N = int(rng.integers(2, 64))
        s = ParticleState(rng.normal(size=(N, 2)), rng.normal(size=(N, 2)))
        for total in (pairwise_drift(s, ar).sum(axis=0), cucker_smale_accel(s, ar).sum(axis=0)):
            worst_sum = max(worst_sum, float(np.max(np.abs(total))) / (1e-10 * N))
    for _ in range(20):
        N = int(rng.integers(6, 48))
        s = ParticleState(rng.normal(size=(N, 2)), rng.normal(size=(N, 2)))
        c = rng.uniform(-5, 5, size=2)
        moved = s.shifted(c)
        for f in (lambda q: pairwise_drift(q, ar), lambda q: motsch_tadmor_drift(q, GaussianKernel(0.5)),
                  lambda q: cucker_smale_accel(q, ar)):
            worst_shift = max(worst_shift, float(np.max(np.abs(f(moved) - f(s)))))
        sizes = (N - 2 * (N // 3), N // 3, N // 3)
        g, gm = (ParticleState(q.positions, group_sizes=sizes) for q in (s, moved))
        for a, b in zip(multigroup_drift(g, D_HIER, R_HIER), multigroup_drift(gm, D_HIER, R_HIER)):
            worst_shift = max(worst_shift, float(np.max(np.abs(a - b))))
    ok = worst_sum <= 1.0 and worst_shift <= 1e-12
    criterion(3, ok, f"max |sum of drifts| / (1e-10 N) = {worst_sum:.2e} (<= 1); "
                     f"translation error {worst_shift:.1e} (<= 1e-12)")
    assert ok


def test_criterion_04_permutation_invariance(criterion):
    rng = np.random.default_rng(3)
    worst = 0.0
    for model in (MvnnModel.create(1, k=16, seed=5), MvnnModel.create(2, k=16, order=2, seed=6)):
        rows = rng.normal(size=(128, model.d_state))
        base = mvnn_drift_all(model, rows)
        for _ in range(50):
            perm = rng.permutation(128)
            worst = max(worst, max_rel(mvnn_drift_all(model, rows[perm]), base[perm]))
    ok = worst <= 1e-10
    criterion(4, ok, f"100 permutations, max rel change {worst:.1e} (<= 1e-10)")
    assert ok


def test_criterion_05_motsch_tadmor_learning(criterion, motsch_tadmor):
    exp = motsch_tadmor
    s = exp.summary
    mse_ratio = s["test_mse"] / s["test_zero_mse"]
    ratios = kde_ratios(exp, 2.0)
    ok = mse_ratio <= 0.1 and max(ratios) <= 0.5 and exp.seconds < 600
    criterion(5, ok, f"(a) test MSE / zero MSE = {mse_ratio:.3f} (<= 0.1); (b) KDE-L2(t=2) / static = "
                     f"{', '.join(f'{r:.3f}' for r in ratios)} (each <= 0.5); {exp.seconds:.0f}s (< 600s)")
    assert ok


def test_criterion_06_stochastic(criterion):
    exp = Experiment("desk_stochastic.json")
    s = exp.summary
    sigma, dt, d = exp.cfg.system.sigma, exp.cfg.dt, exp.cfg.system.d
    floor = sigma ** 2 * d / dt
    mse, zero = true_drift_mse(exp)
    ratios = kde_ratios(exp, 2.0)
    ok = mse / zero <= 0.3 and max(ratios) <= 0.5 and exp.seconds < 600
    criterion(6, ok, f"(a) drift MSE vs exact drift / zero = {mse / zero:.3f} (<= 0.3); "
                     f"noisy-target MSE {s['test_mse']:.4f} vs zero {s['test_zero_mse']:.4f} "
                     f"(noise floor sigma^2 d/dt = {floor:.4f}, excess over floor {s['test_mse'] - floor:.2e}); "
                     f"(b) KDE-L2(t=2) / static = {', '.join(f'{r:.3f}' for r in ratios)} (each <= 0.5); "
                     f"{exp.seconds:.0f}s (< 600s)")
    assert ok


def test_criterion_07_chaos(criterion, motsch_tadmor):
    exp = motsch_tadmor
    t0 = time.perf_counter()
    rows = pipeline.chaos(exp.cfg, exp.model)
    seconds = time.perf_counter() - t0
    means = [r["mean_w2"] for r in rows[:-1]]
    decreasing = all(a > b for a, b in zip(means, means[1:]))
    ok = decreasing and rows[-1]["N"] == 8192 and rows[0]["n_rep"] == 20 and seconds < 600
    table = ", ".join(f"N={r['N']}: {r['mean_w2']:.4f}" for r in rows[:-1])
    criterion(7, ok, f"mean terminal W2 vs N=8192: {table} (strictly decreasing); {seconds:.0f}s (< 600s)")
    assert ok


def test_criterion_08_linear_cost(criterion):
    model = MvnnModel.create(1, k=32, seed=0)
    rng = np.random.default_rng(4)
    small, large = rng.normal(size=(1024, 1)), rng.normal(size=(8192, 1))
    mvnn = best_time(lambda: mvnn_drift_all(model, large)) / best_time(lambda: mvnn_drift_all(model, small))
    kern = GaussianKernel(0.5)
    pair = (best_time(lambda: pairwise_drift(ParticleState(large), kern), 3)
            / best_time(lambda: pairwise_drift(ParticleState(small), kern), 3))
    ok = mvnn <= 12 and pair >= 40
    criterion(8, ok, f"t(8192)/t(1024): MVNN {mvnn:.1f} (<= 12), pairwise {pair:.1f} (>= 40)")
    assert ok


def test_criterion_09_cucker_smale(criterion):
    exp = Experiment("desk_cucker_smale.json")
    s = exp.summary
    mse_ratio = s["test_mse"] / s["test_zero_mse"]
    pairs = []
    for truth in exp.test_trajectories:
        learned = exp.rollout(truth)
        final = truth.positions[-1]
        pairs.append((sliced_wasserstein(learned.positions[-1], final, exp.cfg.eval.n_proj),
                      sliced_wasserstein(pipeline.ballistic_baseline(truth)[-1], final, exp.cfg.eval.n_proj)))
    ok = mse_ratio <= 0.1 and all(a < b for a, b in pairs)
    criterion(9, ok, f"test accel MSE / zero = {mse_ratio:.3f} (<= 0.1); terminal sliced W2 learned vs "
                     f"ballistic: {', '.join(f'{a:.3f}<{b:.3f}' for a, b in pairs)}")
    assert ok


def test_criterion_10_multigroup(criterion):
    exp = Experiment("desk_multigroup.json")
    s = exp.summary
    ratios = [m / z for m, z in zip(s["test_group_mse"], s["test_group_zero_mse"])]

    rng = np.random.default_rng(5)
    x12 = rng.uniform(0, 1, size=(40, 1))
    x3 = rng.uniform(100, 101, size=(10, 1))
    full = SystemSpec(order=1, d=1, drift_form="multigroup", group_sizes=(30, 10, 10),
                      influence=D_HIER, radii=R_HIER)
    sub = SystemSpec(order=1, d=1, drift_form="multigroup", group_sizes=(30, 10),
                     influence=[r[:2] for r in D_HIER[:2]], radii=R_HIER[:2])
    a = simulate(full, ParticleState(np.vstack([x12, x3]), group_sizes=(30, 10, 10)), 100, 0.01)
    b = simulate(sub, ParticleState(x12, group_sizes=(30, 10)), 100, 0.01)
    support = np.array_equal(a.positions[:, :40], b.positions)

    ok = max(ratios) <= 0.1 and support
    criterion(10, ok, f"per-group test MSE / zero = {', '.join(f'{r:.3f}' for r in ratios)} (each <= 0.1); "
                      f"distant group invisible to groups 1-2: {support}")
    assert ok


TINY = {
    "system": {"order": 1, "d": 1, "drift_form": "motsch_tadmor",
               "kernel": {"kind": "gaussian", "length": 0.5}, "sigma": 0.1},
    "init": {"position": [{"kind": "gaussian_mixture"}]},
    "N": 64, "M": 3, "L": 20, "dt": 0.01, "split": {"train": 2, "test": 1},
    "model": {"k": 4, "embedding_widths": [8], "interaction_widths": [8]},
    "optim": {"epochs": 2, "batch_size": 256},
    "eval": {"n_grid": 64},
    "seed": 11,
}


def test_criterion_11_persistence(criterion, tmp_path):
    rng = np.random.default_rng(6)
    spec = SystemSpec(order=2, d=2, drift_form="cucker_smale", kernel=AttractionRepulsionKernel(), sigma=0.05)
    traj = simulate(spec, ParticleState(rng.normal(size=(20, 2)), rng.normal(size=(20, 2))), 5, 0.01, seed=9)
    write_trajectory(tmp_path / "t.bin", traj)
    back = read_trajectory(tmp_path / "t.bin")
    traj_ok = (back.positions.tobytes() == traj.positions.tobytes()
               and back.velocities.tobytes() == traj.velocities.tobytes() and back.spec == traj.spec)

    ckpt_ok = True
    for model in (MvnnModel.create(2, k=5, order=2, seed=1), MgMvnnModel.create(1, [2, 3], seed=2)):
        save_checkpoint(tmp_path / "m.json", model, {})
        loaded, _ = load_checkpoint(tmp_path / "m.json")
        ckpt_ok &= flatten(loaded.nets()).tobytes() == flatten(model.nets()).tobytes()

    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(TINY))
    outputs = []
    for rep in ("a", "b"):
        d = tmp_path / rep
        codes = [main([str(a) for a in argv] + ["--config", str(cfg), "--threads", "1"]) for argv in (
            ["generate", "--out", d / "data"],
            ["train", "--data", d / "data", "--out", d / "m.json"],
            ["rollout", "--checkpoint", d / "m.json", "--init", d / "data" / "traj_0002.bin", "--out", d / "l.bin"],
            ["evaluate", "--truth", d / "data" / "traj_0002.bin", "--learned", d / "l.bin", "--out", d / "r.json"],
        )]
        files = sorted(p for p in d.rglob("*") if p.is_file())
        outputs.append((codes, [(p.relative_to(d), p.read_bytes()) for p in files]))
    pipeline_ok = outputs[0] == outputs[1] and outputs[0][0] == [0, 0, 0, 0]

    ok = traj_ok and ckpt_ok and pipeline_ok
    criterion(11, ok, f"trajectory bit-exact {traj_ok}, checkpoint bit-exact {ckpt_ok}, "
                      f"two pipeline runs byte-identical over {len(outputs[0][1])} files {pipeline_ok}")
    assert ok
