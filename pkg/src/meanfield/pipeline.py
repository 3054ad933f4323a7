"""End-to-end steps shared by the command line and scripted experiments."""

from concurrent.futures import ThreadPoolExecutor
import logging

import numpy as np

from .config import ChaosConfig
from .data import build_dataset, sample_initial
from .dynamics import ParticleState, simulate
from .errors import ConfigError, ShapeError
from .evaluation import (distribution_distance, export_density_csv, gaussian_kde, l2_density_error,
                         make_grid, silverman_bandwidth, chaos_diagnostic)
from .mvnn import MgMvnnModel, MvnnModel, mvnn_rollout
from .training import dataset_mse, group_mse, train, zero_predictor_mse

log = logging.getLogger(__name__)


def trajectory_seeds(seed, M):
    """Per-trajectory ``(init_seed, noise_seed)`` pairs derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(M)
    return [tuple(int(v) for v in c.generate_state(2, np.uint64)) for c in children]


def _ordered_map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def generate(cfg, threads=1):
    """Simulate the ``M`` ground-truth trajectories of ``cfg``."""
    h = cfg.hash()
    seeds = trajectory_seeds(cfg.seed, cfg.M)

    def one(m):
        init_seed, noise_seed = seeds[m]
        init = sample_initial(cfg.init, cfg.N, init_seed, cfg.system.group_sizes)
        traj = simulate(cfg.system, init, cfg.L, cfg.dt, noise_seed)
        traj.meta.update({"config_hash": h, "index": m, "init_seed": init_seed, "learned": False})
        return traj

    return _ordered_map(one, list(range(cfg.M)), threads)


def build_model(cfg):
    m, s = cfg.model, cfg.system
    if s.n_groups > 1:
        return MgMvnnModel.create(s.d, [m.k] * s.n_groups, tuple(m.embedding_widths),
                                  tuple(m.interaction_widths), m.activation, cfg.model_seed)
    return MvnnModel.create(s.d, m.k, tuple(m.embedding_widths), tuple(m.interaction_widths), s.order,
                            m.activation, cfg.model_seed)


def fit(cfg, trajectories, callback=None):
    """Train a fresh model on the configured split.

    Returns ``(model, history, summary)``; ``summary`` holds final train and
    test MSE next to the zero-drift predictor MSE (per group as well for
    multi-group systems).
    """
    train_set, test_set = build_dataset(trajectories, cfg.split.train, cfg.split.test)
    test = test_set if test_set.n_snapshots else None
    model, history = train(build_model(cfg), train_set, cfg.optim, test, callback)
    summary = {"train_mse": dataset_mse(model, train_set), "train_zero_mse": zero_predictor_mse(train_set)}
    if test is not None:
        summary.update(test_mse=dataset_mse(model, test), test_zero_mse=zero_predictor_mse(test))
        if isinstance(model, MgMvnnModel):
            per, zero = group_mse(model, test)
            summary.update(test_group_mse=per, test_group_zero_mse=zero)
    return model, history, summary


def rollout(model, cfg, init, seed, L=None):
    traj = mvnn_rollout(model, init, cfg.system.sigma, cfg.dt, cfg.L if L is None else L, seed)
    traj.meta["config_hash"] = cfg.hash()
    return traj


def time_indices(traj, times):
    """Snapshot indices for the requested times (default: quarters of the run)."""
    if times is None:
        return sorted({int(round(q * traj.L / 4)) for q in range(5)})
    out = []
    for t in times:
        idx = int(round(t / traj.dt))
        if not 0 <= idx <= traj.L or abs(idx * traj.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ShapeError(f"time {t} is not on the trajectory grid")
        out.append(idx)
    return out


def _kde_triplet(truth, learned, baseline, ev):
    h = silverman_bandwidth(truth) if ev.bandwidth == "auto" else float(ev.bandwidth)
    grid = make_grid([truth, learned, baseline], ev.n_grid, pad=6.0 * h)
    return h, [gaussian_kde(x, h, grid) for x in (truth, learned, baseline)]


def evaluate(truth, learned, ev, density_dir=None, prefix=""):
    """Compare a learned rollout with the reference trajectory.

    Per requested time: KDE-L2 (1D) or sliced W2 (2D and up) of the learned
    and of the static initial-density baseline against the reference, plus W2
    (sliced above 1D).  The KDE bandwidth is the reference's Silverman value
    (or the configured one) shared by all three densities.
    """
    if truth.dt != learned.dt or truth.L != learned.L:
        raise ShapeError("time grids differ")
    if truth.d != learned.d:
        raise ShapeError("dimensions differ")
    d = truth.d
    rows = []
    for l in time_indices(truth, ev.times):
        x_true, x_learned, x_static = truth.positions[l], learned.positions[l], truth.positions[0]
        row = {"step": l, "time": l * truth.dt,
               "w2": distribution_distance(x_learned, x_true, ev.n_proj),
               "baseline_w2": distribution_distance(x_static, x_true, ev.n_proj)}
        if d == 1:
            h, (k_true, k_learned, k_static) = _kde_triplet(x_true[:, 0], x_learned[:, 0], x_static[:, 0], ev)
            row.update(kde_l2=l2_density_error(k_learned, k_true),
                       baseline_kde_l2=l2_density_error(k_static, k_true), bandwidth=h)
            if density_dir is not None:
                for name, k in (("truth", k_true), ("learned", k_learned)):
                    export_density_csv(f"{density_dir}/{prefix}density_{name}_step{l}.csv", k)
        else:
            row.update(sliced_w2=row["w2"], baseline_sliced_w2=row["baseline_w2"])
            if density_dir is not None and d == 2:
                for name, x in (("truth", x_true), ("learned", x_learned)):
                    export_density_csv(f"{density_dir}/{prefix}density_{name}_step{l}.csv",
                                       gaussian_kde(x, ev.bandwidth, n_grid=min(ev.n_grid, 128)))
        rows.append(row)
    report = {
        "metric": "kde_l2" if d == 1 else "sliced_w2",
        "parameters": {"bandwidth": ev.bandwidth, "bandwidth_rule": "silverman of reference"
                       if ev.bandwidth == "auto" else "fixed", "n_grid": ev.n_grid, "n_proj": ev.n_proj},
        "per_time": rows,
        "terminal_w2": distribution_distance(learned.positions[-1], truth.positions[-1], ev.n_proj),
    }
    if truth.spec.group_sizes is not None:
        off = np.concatenate([[0], np.cumsum(truth.spec.group_sizes)])
        report["terminal_group_w2"] = [
            distribution_distance(learned.positions[-1, a:b], truth.positions[-1, a:b], ev.n_proj)
            for a, b in zip(off[:-1], off[1:])]
    return report


def ballistic_baseline(truth):
    """Positions under zero acceleration from the reference initial state."""
    t = truth.times[:, None, None]
    return truth.positions[0] + t * truth.velocities[0]


def chaos(cfg, model=None, seed=None, threads=1):
    """Chaos ladder for a learned model, or for the ground truth without one."""
    if cfg.system.n_groups > 1:
        raise ConfigError("the chaos ladder is defined for single-group systems")
    ch = cfg.eval.chaos
    if ch is None:
        ch = ChaosConfig()
    seed = cfg.seed if seed is None else seed
    law = cfg.init.draw_law(np.random.default_rng(np.random.SeedSequence((seed, 7))))

    if model is None:
        def terminal(state, s):
            return simulate(cfg.system, state, cfg.L, cfg.dt, s).positions[-1]
    else:
        def terminal(state, s):
            return mvnn_rollout(model, state, cfg.system.sigma, cfg.dt, cfg.L, s).positions[-1]

    return chaos_diagnostic(terminal, law, ch.ladder, seed, ch.n_rep, cfg.eval.n_proj, threads)


def initial_state(traj):
    return ParticleState(traj.positions[0], None if traj.velocities is None else traj.velocities[0],
                         traj.spec.group_sizes)
