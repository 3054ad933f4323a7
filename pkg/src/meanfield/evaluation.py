"""Density and distributional metrics for comparing particle clouds."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import csv

import numpy as np

from .errors import ConfigError, DegenerateError, ShapeError


@dataclass
class DensityGrid:
    """Density values on a uniform 1D grid or a 2D tensor grid.

    ``axes`` is a tuple of 1D coordinate arrays; ``values`` has shape
    ``tuple(len(a) for a in axes)``.
    """

    axes: tuple
    values: np.ndarray
    bandwidth: float = None

    @property
    def dim(self):
        return len(self.axes)

    def integral(self):
        return _trapezoid_nd(self.values, self.axes)


def _trapezoid_nd(values, axes):
    out = values
    for ax in reversed(axes):
        out = np.trapezoid(out, ax, axis=-1)
    return float(out)


def _as_samples(samples):
    x = np.asarray(samples, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def silverman_bandwidth(samples):
    x = _as_samples(samples)
    n, d = x.shape
    if n < 2:
        raise DegenerateError("automatic bandwidth needs at least two samples")
    spread = float(np.mean(np.std(x, axis=0, ddof=1)))
    if not spread > 0:
        raise DegenerateError("zero sample variance; cannot choose a bandwidth")
    return (4.0 / (d + 2)) ** (1.0 / (d + 4)) * n ** (-1.0 / (d + 4)) * spread


def make_grid(sample_sets, n_grid=512, pad=None, bandwidth="auto"):
    """Uniform grid covering every sample set with a margin of six bandwidths."""
    sets = [_as_samples(s) for s in sample_sets]
    d = sets[0].shape[1]
    if pad is None:
        hs = [bandwidth if bandwidth != "auto" else silverman_bandwidth(s) for s in sets]
        pad = 6.0 * max(hs)
    lo = np.min([s.min(axis=0) for s in sets], axis=0) - pad
    hi = np.max([s.max(axis=0) for s in sets], axis=0) + pad
    return tuple(np.linspace(lo[i], hi[i], n_grid) for i in range(d))


def gaussian_kde(samples, bandwidth="auto", grid=None, n_grid=512):
    """Isotropic Gaussian KDE evaluated on a grid (1D or 2D)."""
    x = _as_samples(samples)
    n, d = x.shape
    if n < 1:
        raise ShapeError("KDE needs samples")
    h = silverman_bandwidth(x) if bandwidth == "auto" else float(bandwidth)
    if not h > 0:
        raise ConfigError("bandwidth must be positive")
    if grid is None:
        grid = make_grid([x], n_grid, pad=6.0 * h)
    axes = tuple(np.asarray(a, dtype=np.float64) for a in (grid if isinstance(grid, tuple) else (grid,)))
    if len(axes) != d:
        raise ShapeError(f"{len(axes)}-D grid for {d}-D samples")
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    norm = 1.0 / (n * h ** d * (2 * np.pi) ** (d / 2))
    values = np.empty(mesh.shape[0])
    step = max(1, (1 << 22) // max(1, n))
    for start in range(0, mesh.shape[0], step):
        blk = mesh[start:start + step]
        sq = ((blk[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
        values[start:start + step] = norm * np.exp(-sq / (2 * h * h)).sum(axis=1)
    return DensityGrid(axes, values.reshape([a.size for a in axes]), h)


def l2_density_error(a, b):
    """``sqrt(int (a - b)^2)`` by the trapezoidal rule on a shared grid."""
    if len(a.axes) != len(b.axes) or any(
            x.shape != y.shape or not np.array_equal(x, y) for x, y in zip(a.axes, b.axes)):
        raise ShapeError("densities live on different grids")
    return float(np.sqrt(max(_trapezoid_nd((a.values - b.values) ** 2, a.axes), 0.0)))


def _quantiles(sorted_x, n):
    """Empirical quantiles of ``sorted_x`` at ``n`` equally spaced ranks."""
    m = sorted_x.size
    if m == n:
        return sorted_x
    pos = np.clip((np.arange(n) + 0.5) * m / n - 0.5, 0.0, m - 1)
    return np.interp(pos, np.arange(m), sorted_x)


def wasserstein_1d(a, b, p=2):
    """``W_p`` between two 1D empirical measures via the sorted coupling.

    Unequal sample counts are coupled at ``max(n_a, n_b)`` ranks using
    linearly interpolated empirical quantiles.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ShapeError("empty sample set")
    if p not in (1, 2):
        raise ConfigError("p must be 1 or 2")
    n = max(a.size, b.size)
    diff = np.abs(_quantiles(a, n) - _quantiles(b, n))
    return float(np.mean(diff)) if p == 1 else float(np.sqrt(np.mean(diff * diff)))


def random_directions(d, n_proj, seed):
    v = np.random.default_rng(seed).standard_normal((n_proj, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sliced_wasserstein(a, b, n_proj=64, seed=0, p=2, directions=None):
    """Mean of 1D ``W_p`` over random unit projection directions."""
    a, b = _as_samples(a), _as_samples(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError("sample sets differ in dimension")
    if directions is None:
        if n_proj < 1:
            raise ConfigError("n_proj must be >= 1")
        directions = random_directions(a.shape[1], n_proj, seed)
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    return float(np.mean([wasserstein_1d(a @ u, b @ u, p) for u in directions]))


def distribution_distance(a, b, n_proj=64, seed=0):
    """``W_2`` in 1D, sliced ``W_2`` otherwise."""
    a, b = _as_samples(a), _as_samples(b)
    if a.shape[1] == 1:
        return wasserstein_1d(a[:, 0], b[:, 0], 2)
    return sliced_wasserstein(a, b, n_proj, seed)


def chaos_diagnostic(terminal_fn, init_law, n_ladder, seed=0, n_rep=20, n_proj=64, max_workers=1):
    """Mean terminal ``W_2`` of ``N``-particle runs against the largest-``N`` run.

    ``terminal_fn(state, seed)`` must return the terminal particle positions
    of a run started at ``state``.  ``init_law.sample(sizes, rng)`` supplies
    iid initial particles from one fixed law.  The largest entry of
    ``n_ladder`` is the reference; its own row is zero by construction.
    Replicates run on up to ``max_workers`` threads; every replicate owns a
    spawned seed and results are reduced in ladder order, so the table does
    not depend on the worker count.
    """
    ladder = sorted(int(n) for n in n_ladder)
    if not ladder or ladder[0] < 1:
        raise ConfigError("ladder must contain positive sizes")
    if n_rep < 1:
        raise ConfigError("n_rep must be >= 1")
    root = np.random.SeedSequence(seed)
    ref_seed = root.spawn(1)[0]
    jobs = [(n, child) for n in ladder[:-1] for child in root.spawn(n_rep)]

    def run(n, child):
        state = init_law.sample((n,), np.random.default_rng(child))
        return terminal_fn(state, int(child.generate_state(1)[0]))

    ref = run(ladder[-1], ref_seed)

    def replicate(job):
        return distribution_distance(run(*job), ref, n_proj, seed)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            dists = list(pool.map(replicate, jobs))
    else:
        dists = [replicate(j) for j in jobs]
    rows = [{"N": n, "mean_w2": float(np.mean(dists[i * n_rep:(i + 1) * n_rep])), "n_rep": n_rep}
            for i, n in enumerate(ladder[:-1])]
    rows.append({"N": ladder[-1], "mean_w2": 0.0, "n_rep": n_rep})
    return rows


def export_density_csv(path, density):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if density.dim == 1:
            w.writerow(["x", "density"])
            for x, v in zip(density.axes[0], density.values):
                w.writerow([repr(float(x)), repr(float(v))])
        else:
            w.writerow(["x", "y", "density"])
            for i, x in enumerate(density.axes[0]):
                for j, y in enumerate(density.axes[1]):
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(density.values[i, j]))])
