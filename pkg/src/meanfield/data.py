"""Initial-condition samplers, finite-difference targets and minibatching.

Samplers separate the random *law* of a trajectory (mixture weights, random
scales) from the iid particle draws, so a fixed law can be re-sampled at any
``N``: ``law = sampler.draw_law(rng); x = law.sample(N, rng)``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .dynamics import ParticleState
from .errors import ConfigError, ShapeError
from .mvnn import DriftBatch


def _vec(x, d=2):
    return np.broadcast_to(np.asarray(x, dtype=np.float64), (d,)).copy()


class _FixedLaw:
    """Sampler whose law has no per-trajectory randomness."""

    def draw_law(self, rng):
        return self


@dataclass
class MixtureLaw:
    means: np.ndarray
    weights: np.ndarray
    variance: float

    def sample(self, n, rng):
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.means[comp] + math.sqrt(self.variance) * rng.standard_normal((n, self.means.shape[1]))


@dataclass
class GaussianMixture:
    """Random mixture: 2-8 components, means U[0, 3], variance 0.25, Dirichlet(1) weights."""

    min_components: int = 2
    max_components: int = 8
    mean_low: float = 0.0
    mean_high: float = 3.0
    variance: float = 0.25
    alpha: float = 1.0
    d: int = 1

    kind = "gaussian_mixture"

    def __post_init__(self):
        if not 1 <= self.min_components <= self.max_components:
            raise ConfigError("invalid component range")
        if not self.mean_low <= self.mean_high:
            raise ConfigError("invalid mean range")
        if not (self.variance > 0 and self.alpha > 0):
            raise ConfigError("variance and alpha must be positive")

    def draw_law(self, rng):
        c = int(rng.integers(self.min_components, self.max_components + 1))
        weights = rng.dirichlet(np.full(c, self.alpha))
        means = rng.uniform(self.mean_low, self.mean_high, size=(c, self.d))
        return MixtureLaw(means, weights, self.variance)


@dataclass
class Annulus(_FixedLaw):
    r0: float = 1.5
    width: float = 0.5
    sigma0: float = 0.05
    center: tuple = (0.0, 0.0)

    kind = "annulus"

    def __post_init__(self):
        if not (self.r0 > 0 and self.width >= 0 and self.sigma0 >= 0):
            raise ConfigError("annulus needs r0 > 0, width >= 0, sigma0 >= 0")
        if self.width / 2 > self.r0:
            raise ConfigError("annulus width exceeds twice the radius")

    def polar_draws(self, n, rng):
        theta = rng.uniform(0.0, 2 * np.pi, size=n)
        rho = rng.uniform(self.r0 - self.width / 2, self.r0 + self.width / 2, size=n)
        eps = self.sigma0 * rng.standard_normal((n, 2))
        return rho[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1) + eps

    def sample(self, n, rng):
        return _vec(self.center) + self.polar_draws(n, rng)


@dataclass
class DoubleAnnulus(_FixedLaw):
    """Two rings built from one set of polar draws, shifted to two centers."""

    r0: float = 1.5
    width: float = 0.5
    sigma0: float = 0.05
    centers: tuple = ((0.5, 0.5), (-0.5, -0.5))

    kind = "double_annulus"

    def __post_init__(self):
        Annulus(self.r0, self.width, self.sigma0)

    def sample(self, n, rng):
        n1 = n // 2
        ring = Annulus(self.r0, self.width, self.sigma0).polar_draws(n - n1, rng)
        c1, c2 = _vec(self.centers[0]), _vec(self.centers[1])
        return np.concatenate([c1 + ring[:n1], c2 + ring[:n - n1]], axis=0)


@dataclass
class Disk(_FixedLaw):
    radius: float = 1.5
    center: tuple = (0.0, 0.0)

    kind = "disk"

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("disk radius must be positive")

    def sample(self, n, rng):
        rho = self.radius * np.sqrt(rng.uniform(size=n))
        theta = rng.uniform(0.0, 2 * np.pi, size=n)
        return _vec(self.center) + rho[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)


@dataclass
class BinaryAsymmetric(_FixedLaw):
    """Low-density box on the left, high-density box on the right."""

    left_fraction: float = 0.25
    left_box: tuple = ((-2.0, -1.0), (-0.5, 1.0))
    right_box: tuple = ((0.5, -1.0), (2.0, 1.0))

    kind = "binary_asymmetric"

    def __post_init__(self):
        if not 0 <= self.left_fraction <= 1:
            raise ConfigError("left_fraction must lie in [0, 1]")

    def sample(self, n, rng):
        n_left = int(round(self.left_fraction * n))
        out = []
        for box, m in ((self.left_box, n_left), (self.right_box, n - n_left)):
            lo, hi = _vec(box[0]), _vec(box[1])
            out.append(lo + (hi - lo) * rng.uniform(size=(m, 2)))
        return np.concatenate(out, axis=0)


@dataclass
class GaussianLaw:
    mean: np.ndarray
    std: float

    def sample(self, n, rng):
        return self.mean + self.std * rng.standard_normal((n, self.mean.size))


@dataclass
class ScaledGaussian:
    """``N(mean, (s * sigma)^2 I)`` with ``s ~ U(s_min, s_max)`` drawn per trajectory."""

    mean: tuple = (0.0, 0.0)
    sigma: float = 1.0
    s_min: float = 0.5
    s_max: float = 2.0

    kind = "scaled_gaussian"

    def __post_init__(self):
        if not (self.sigma > 0 and 0 < self.s_min <= self.s_max):
            raise ConfigError("scaled Gaussian needs sigma > 0 and 0 < s_min <= s_max")

    def draw_law(self, rng):
        s = rng.uniform(self.s_min, self.s_max)
        return GaussianLaw(np.asarray(self.mean, dtype=np.float64), s * self.sigma)


@dataclass
class SplitLaw:
    laws: list

    def sample(self, n, rng):
        n1 = n // 2
        return np.concatenate([self.laws[0].sample(n1, rng), self.laws[1].sample(n - n1, rng)])


@dataclass
class ScaledGaussianMixture2:
    first: ScaledGaussian = field(default_factory=lambda: ScaledGaussian((-1.0, 0.0)))
    second: ScaledGaussian = field(default_factory=lambda: ScaledGaussian((1.0, 0.0)))

    kind = "scaled_gaussian_mixture2"

    def draw_law(self, rng):
        return SplitLaw([self.first.draw_law(rng), self.second.draw_law(rng)])


SAMPLERS = {c.kind: c for c in (GaussianMixture, Annulus, DoubleAnnulus, Disk, BinaryAsymmetric,
                                 ScaledGaussian, ScaledGaussianMixture2)}


def _tuplify(v):
    return tuple(_tuplify(x) for x in v) if isinstance(v, list) else v


def _listify(v):
    if isinstance(v, (tuple, np.ndarray)):
        return [_listify(x) for x in v]
    return v


def sampler_to_dict(sampler):
    out = {"kind": sampler.kind}
    for name in sampler.__dataclass_fields__:
        v = getattr(sampler, name)
        out[name] = sampler_to_dict(v) if hasattr(v, "kind") else _listify(v)
    return out


def sampler_from_dict(doc):
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind not in SAMPLERS:
        raise ConfigError(f"unknown initial distribution {kind!r}")
    args = {k: sampler_from_dict(v) if isinstance(v, dict) else _tuplify(v) for k, v in doc.items()}
    try:
        return SAMPLERS[kind](**args)
    except TypeError as exc:
        raise ConfigError(f"bad {kind} parameters: {exc}") from None


@dataclass
class InitLaw:
    """A realized initial law: per-group position laws plus velocity variance."""

    position_laws: list
    velocity_var: float = None

    def sample(self, sizes, rng):
        xs = [law.sample(n, rng) for law, n in zip(self.position_laws, sizes)]
        x = np.concatenate(xs, axis=0)
        v = None
        if self.velocity_var is not None:
            v = math.sqrt(self.velocity_var) * rng.standard_normal(x.shape)
        groups = tuple(sizes) if len(sizes) > 1 else None
        return ParticleState(x, v, groups)


@dataclass
class InitSpec:
    """Position sampler(s), one per group, and an optional Gaussian velocity variance."""

    position: list
    velocity_var: float = None

    def __post_init__(self):
        if not isinstance(self.position, (list, tuple)):
            self.position = [self.position]
        if self.velocity_var is not None and not self.velocity_var > 0:
            raise ConfigError("velocity variance must be positive")

    def draw_law(self, rng):
        return InitLaw([s.draw_law(rng) for s in self.position], self.velocity_var)

    def to_dict(self):
        return {"position": [sampler_to_dict(s) for s in self.position],
                "velocity_var": self.velocity_var}

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - {"position", "velocity_var"}
        if unknown:
            raise ConfigError(f"unknown init keys {sorted(unknown)}")
        pos = doc["position"]
        if isinstance(pos, dict):
            pos = [pos]
        return cls([sampler_from_dict(p) for p in pos], doc.get("velocity_var"))


def sample_initial(spec, N, seed, group_sizes=None):
    """Draw a law from ``spec`` and then ``N`` iid particles from it.

    ``group_sizes`` (for multi-group specs) overrides ``N``.
    """
    sizes = tuple(group_sizes) if group_sizes is not None else (int(N),)
    if any(n < 1 for n in sizes):
        raise ConfigError("particle counts must be >= 1")
    if len(sizes) != len(spec.position):
        raise ConfigError(f"{len(spec.position)} position samplers for {len(sizes)} groups")
    rng = np.random.default_rng(seed)
    return spec.draw_law(rng).sample(sizes, rng)


# --------------------------------------------------------------------------
# targets and datasets


def finite_difference_targets(traj, times=None):
    """Forward differences of positions (order 1) or velocities (order 2).

    Returns an ``(L, N, d)`` array; ``times`` allows non-uniform spacing.
    """
    if traj.L < 1:
        raise ShapeError("finite differences need at least two snapshots")
    t = traj.times if times is None else np.asarray(times, dtype=np.float64)
    if t.shape != (traj.L + 1,) or np.any(np.diff(t) <= 0):
        raise ShapeError("times must be increasing with one entry per snapshot")
    series = traj.positions if traj.spec.order == 1 else traj.velocities
    return (series[1:] - series[:-1]) / np.diff(t)[:, None, None]


@dataclass
class Dataset:
    states: np.ndarray
    targets: np.ndarray
    traj_ids: np.ndarray
    time_ids: np.ndarray
    group_sizes: tuple = None
    split: str = "train"

    @property
    def n_snapshots(self):
        return self.states.shape[0]

    @property
    def N(self):
        return self.states.shape[1]

    @property
    def n_samples(self):
        return self.n_snapshots * self.N

    def batch(self, snapshot_ids, particle_ids=None):
        """All (or the given) samples of ``snapshot_ids`` as one batch."""
        snapshot_ids = np.asarray(snapshot_ids)
        if particle_ids is None:
            local = np.repeat(np.arange(len(snapshot_ids)), self.N)
            parts = np.tile(np.arange(self.N), len(snapshot_ids))
            return DriftBatch(self.states[snapshot_ids], local, parts,
                              self.targets[snapshot_ids].reshape(-1, self.targets.shape[2]),
                              self.group_sizes)
        uniq, local = np.unique(snapshot_ids, return_inverse=True)
        return DriftBatch(self.states[uniq], local, particle_ids,
                          self.targets[snapshot_ids, particle_ids], self.group_sizes)


def _trajectory_arrays(traj, m):
    targets = finite_difference_targets(traj)
    L = traj.L
    states = traj.positions[:L]
    if traj.spec.order == 2:
        states = np.concatenate([states, traj.velocities[:L]], axis=2)
    return states, targets, np.full(L, m), np.arange(L)


def _assemble(trajs, ids, split):
    if not trajs:
        return Dataset(np.empty((0, 0, 0)), np.empty((0, 0, 0)), np.empty(0, int),
                       np.empty(0, int), None, split)
    parts = [_trajectory_arrays(t, m) for t, m in zip(trajs, ids)]
    if len({p[0].shape[1:] for p in parts}) != 1:
        raise ShapeError("all trajectories in a split must share N and d")
    return Dataset(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                   np.concatenate([p[2] for p in parts]), np.concatenate([p[3] for p in parts]),
                   trajs[0].spec.group_sizes, split)


def build_dataset(trajectories, n_train, n_test):
    """First ``n_train`` trajectories train, the next ``n_test`` test."""
    if n_train < 0 or n_test < 0 or n_train + n_test != len(trajectories):
        raise ConfigError(f"split {n_train}/{n_test} does not match {len(trajectories)} trajectories")
    ids = list(range(len(trajectories)))
    return (_assemble(trajectories[:n_train], ids[:n_train], "train"),
            _assemble(trajectories[n_train:], ids[n_train:], "test"))


def minibatch_iter(dataset, batch_size, epoch_seed, snapshots_per_batch=None):
    """Yield :class:`DriftBatch` objects covering every sample exactly once.

    By default the flat sample index ``(snapshot, particle)`` is shuffled
    globally.  With ``snapshots_per_batch`` the shuffle is stratified: snapshots
    are shuffled and grouped, and the samples of each group are shuffled and cut
    into batches, which bounds how many full snapshots one batch must embed.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    rng = np.random.default_rng(epoch_seed)
    N = dataset.N
    if snapshots_per_batch is None:
        order = rng.permutation(dataset.n_samples)
        for start in range(0, order.size, batch_size):
            idx = order[start:start + batch_size]
            yield dataset.batch(idx // N, idx % N)
        return
    snaps = rng.permutation(dataset.n_snapshots)
    for g in range(0, snaps.size, snapshots_per_batch):
        group = snaps[g:g + snapshots_per_batch]
        local = rng.permutation(group.size * N)
        for start in range(0, local.size, batch_size):
            idx = local[start:start + batch_size]
            yield dataset.batch(group[idx // N], idx % N)
