"""Ground-truth interacting particle systems and their time integrators.

All drift evaluators are vectorized over particle pairs and processed in row
blocks so memory stays bounded for large ``N``.  Noise for step ``s`` of a run
seeded with ``seed`` comes from a Philox generator keyed by
``SeedSequence((seed, s))``; particle ``i`` receives row ``i`` of that block,
which makes every increment a pure function of (seed, step, particle).
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .errors import (BlowUpError, ConfigError, DegenerateError, DomainError,
                     ShapeError)

RNG_ID = "numpy-philox4x64/seedseq(seed,step)/v1"
BLOWUP_LIMIT = 1e6
DRIFT_FORMS = ("pairwise_position", "motsch_tadmor", "cucker_smale", "multigroup", "learned")
# pair-block size in array elements; small enough that temporaries stay in L2
_BLOCK = 1 << 14


# --------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class GaussianKernel:
    length: float = 0.5

    kind = "gaussian"

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigError("kernel length must be positive")

    def __call__(self, r):
        return np.exp(-(r / self.length) ** 2)

    def to_dict(self):
        return {"kind": self.kind, "length": self.length}


@dataclass(frozen=True)
class AttractionRepulsionKernel:
    c_rep: float = 1.0
    l_rep: float = 0.5
    c_att: float = 0.7
    l_att: float = 2.0

    kind = "attraction_repulsion"

    def __post_init__(self):
        if not (self.l_rep > 0 and self.l_att > 0):
            raise ConfigError("kernel lengths must be positive")

    def __call__(self, r):
        return (self.c_rep * np.exp(-(r / self.l_rep) ** 2)
                - self.c_att * np.exp(-(r / self.l_att) ** 2))

    def to_dict(self):
        return {"kind": self.kind, "c_rep": self.c_rep, "l_rep": self.l_rep,
                "c_att": self.c_att, "l_att": self.l_att}


@dataclass(frozen=True)
class CompactBumpKernel:
    """``D * exp(1 - 1/(1 - (r/R)^p))`` on ``r < R``, zero elsewhere."""

    strength: float = 1.0
    radius: float = 1.0
    exponent: int = 10

    kind = "compact_bump"

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("bump radius must be positive")
        if self.exponent <= 0 or self.exponent % 2:
            raise ConfigError("bump exponent must be a positive even integer")

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        u = (r / self.radius) ** self.exponent
        inside = u < 1.0
        safe = np.where(inside, u, 0.0)
        return np.where(inside, self.strength * np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)

    def to_dict(self):
        return {"kind": self.kind, "strength": self.strength, "radius": self.radius,
                "exponent": self.exponent}


_KERNELS = {k.kind: k for k in (GaussianKernel, AttractionRepulsionKernel, CompactBumpKernel)}


def kernel_from_dict(doc):
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind not in _KERNELS:
        raise ConfigError(f"unknown kernel kind {kind!r}")
    try:
        return _KERNELS[kind](**doc)
    except TypeError as exc:
        raise ConfigError(f"bad {kind} kernel parameters: {exc}") from None


def eval_kernel(kernel, r):
    """Evaluate ``kernel`` at distance(s) ``r >= 0``."""
    r_arr = np.asarray(r, dtype=np.float64)
    if np.any(r_arr < 0):
        raise DomainError("kernel distance must be non-negative")
    out = kernel(r_arr)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# system and state records


@dataclass
class SystemSpec:
    order: int = 1
    d: int = 1
    drift_form: str = "motsch_tadmor"
    kernel: object = None
    sigma: float = 0.0
    group_sizes: tuple = None
    influence: tuple = None
    radii: tuple = None
    exponent: int = 10
    sign: float = 1.0

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ConfigError("order must be 1 or 2")
        if self.d < 1:
            raise ConfigError("dimension must be >= 1")
        if self.drift_form not in DRIFT_FORMS:
            raise ConfigError(f"unknown drift form {self.drift_form!r}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ConfigError("invalid sigma")
        if self.drift_form == "cucker_smale" and self.order != 2:
            raise ConfigError("cucker_smale requires order 2")
        if self.drift_form in ("motsch_tadmor", "multigroup") and self.order != 1:
            raise ConfigError(f"{self.drift_form} requires order 1")
        if self.drift_form in ("pairwise_position", "motsch_tadmor", "cucker_smale"):
            if self.kernel is None:
                raise ConfigError(f"{self.drift_form} needs a kernel")
        if self.drift_form == "multigroup":
            if self.group_sizes is None or self.influence is None or self.radii is None:
                raise ConfigError("multigroup needs group_sizes, influence and radii")
            K = len(self.group_sizes)
            D = np.asarray(self.influence, dtype=np.float64)
            if D.shape != (K, K) or not np.all(np.isfinite(D)):
                raise ConfigError("influence matrix must be a finite KxK array")
            if len(self.radii) != K or any(not r > 0 for r in self.radii):
                raise ConfigError("radii must be K positive numbers")
        if self.group_sizes is not None and any(n < 1 for n in self.group_sizes):
            raise ConfigError("group sizes must be >= 1")

    @property
    def n_groups(self):
        return 1 if self.group_sizes is None else len(self.group_sizes)

    def to_dict(self):
        return {
            "order": self.order,
            "d": self.d,
            "drift_form": self.drift_form,
            "kernel": None if self.kernel is None else self.kernel.to_dict(),
            "sigma": self.sigma,
            "group_sizes": None if self.group_sizes is None else [int(n) for n in self.group_sizes],
            "influence": None if self.influence is None else [list(map(float, r)) for r in self.influence],
            "radii": None if self.radii is None else [float(r) for r in self.radii],
            "exponent": self.exponent,
            "sign": self.sign,
        }

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        allowed = set(cls.__dataclass_fields__)
        unknown = set(doc) - allowed
        if unknown:
            raise ConfigError(f"unknown system keys {sorted(unknown)}")
        if doc.get("kernel") is not None:
            doc["kernel"] = kernel_from_dict(doc["kernel"])
        for key in ("group_sizes", "radii"):
            if doc.get(key) is not None:
                doc[key] = tuple(doc[key])
        if doc.get("influence") is not None:
            doc["influence"] = tuple(tuple(float(x) for x in row) for row in doc["influence"])
        return cls(**doc)


@dataclass
class ParticleState:
    positions: np.ndarray
    velocities: np.ndarray = None
    group_sizes: tuple = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim == 1:
            self.positions = self.positions[:, None]
        if self.positions.ndim != 2 or self.positions.shape[0] < 1:
            raise ShapeError("positions must be an (N, d) array with N >= 1")
        if self.velocities is not None:
            self.velocities = np.asarray(self.velocities, dtype=np.float64)
            if self.velocities.ndim == 1:
                self.velocities = self.velocities[:, None]
            if self.velocities.shape != self.positions.shape:
                raise ShapeError("velocities must match positions")
        if self.group_sizes is not None:
            self.group_sizes = tuple(int(n) for n in self.group_sizes)
            if sum(self.group_sizes) != self.positions.shape[0]:
                raise ShapeError("group sizes do not add up to N")

    @property
    def N(self):
        return self.positions.shape[0]

    @property
    def d(self):
        return self.positions.shape[1]

    @property
    def order(self):
        return 1 if self.velocities is None else 2

    @property
    def offsets(self):
        sizes = self.group_sizes or (self.N,)
        return np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    def stacked(self):
        """Per-particle state rows: positions, or positions|velocities."""
        if self.velocities is None:
            return self.positions
        return np.concatenate([self.positions, self.velocities], axis=1)

    def groups(self):
        off = self.offsets
        return [self.positions[off[k]:off[k + 1]] for k in range(len(off) - 1)]

    def shifted(self, c):
        return replace(self, positions=self.positions + np.asarray(c, dtype=np.float64))


@dataclass
class Trajectory:
    spec: SystemSpec
    dt: float
    positions: np.ndarray
    velocities: np.ndarray = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def L(self):
        return self.positions.shape[0] - 1

    @property
    def N(self):
        return self.positions.shape[1]

    @property
    def d(self):
        return self.positions.shape[2]

    @property
    def times(self):
        return self.dt * np.arange(self.L + 1)

    def snapshot(self, l):
        v = None if self.velocities is None else self.velocities[l]
        return ParticleState(self.positions[l], v, self.spec.group_sizes)

    def final(self):
        return self.snapshot(self.L)


# --------------------------------------------------------------------------
# drift evaluators


def _require_nonempty(state):
    if state.N == 0:
        raise ShapeError("empty particle state")


def _row_blocks(n_rows, n_cols, d):
    step = max(1, _BLOCK // max(1, n_cols * d))
    for start in range(0, n_rows, step):
        yield slice(start, min(n_rows, start + step))


def _weighted_sums(x_rows, x_all, kernel, values_rows=None, values_all=None):
    """Rows of ``sum_j phi(|x_j - x_i|) (y_j - y_i)`` and ``sum_j phi(...)``.

    ``y`` defaults to ``x``.
    """
    if values_rows is None:
        values_rows, values_all = x_rows, x_all
    num = np.empty_like(values_rows)
    den = np.empty(x_rows.shape[0])
    for blk in _row_blocks(x_rows.shape[0], x_all.shape[0], x_all.shape[1]):
        diff = x_all[None, :, :] - x_rows[blk, None, :]
        w = kernel(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)))
        if values_rows is not x_rows:
            diff = values_all[None, :, :] - values_rows[blk, None, :]
        num[blk] = np.einsum("ij,ijk->ik", w, diff)
        den[blk] = w.sum(axis=1)
    return num, den


def pairwise_drift(state, kernel):
    """``(1/N) sum_j phi(|X^j - X^i|) (X^j - X^i)`` for every particle."""
    _require_nonempty(state)
    x = state.positions
    num, _ = _weighted_sums(x, x, kernel)
    return num / state.N


def motsch_tadmor_drift(state, kernel):
    """Interaction sum normalized by the total kernel weight of each particle."""
    _require_nonempty(state)
    x = state.positions
    num, den = _weighted_sums(x, x, kernel)
    if np.any(den == 0) or not np.all(np.isfinite(den)):
        raise DegenerateError("zero Motsch-Tadmor normalizer")
    return num / den[:, None]


def cucker_smale_accel(state, kernel):
    """Velocity alignment ``(1/N) sum_j phi(|X^j - X^i|) (V^j - V^i)``."""
    _require_nonempty(state)
    if state.velocities is None:
        raise ShapeError("Cucker-Smale needs velocities")
    x, v = state.positions, state.velocities
    num, _ = _weighted_sums(x, x, kernel, v, v)
    return num / state.N


def multigroup_drift(state, influence, radii, exponent=10, sign=1.0):
    """Per-group drifts of the hierarchical bump-kernel system.

    Agent ``i`` of group ``k`` receives
    ``sign * sum_l 1/(N_l - [k==l]) sum_j phi_kl(|X^ik - X^jl|) (X^ik - X^jl)``
    with ``phi_kl = D[k, l] * bump(r / R_l)``.
    """
    _require_nonempty(state)
    groups = state.groups()
    K = len(groups)
    D = np.asarray(influence, dtype=np.float64)
    if D.shape != (K, K) or len(radii) != K:
        raise ShapeError(f"influence/radii do not match {K} groups")
    drifts = []
    for k in range(K):
        acc = np.zeros_like(groups[k])
        for l in range(K):
            if D[k, l] == 0.0:
                continue
            norm = len(groups[l]) - (1 if k == l else 0)
            if norm < 1:
                raise DegenerateError(f"group {k} has one agent but nonzero self-influence")
            kern = CompactBumpKernel(D[k, l], radii[l], exponent)
            # self pair has zero displacement, so including it is harmless
            num, _ = _weighted_sums(groups[k], groups[l], kern)
            acc -= num / norm
        drifts.append(sign * acc)
    return drifts


def system_drift(spec):
    """Drift (first order) or acceleration (second order) callable for ``spec``."""
    form = spec.drift_form
    if form == "pairwise_position":
        return lambda s: pairwise_drift(s, spec.kernel)
    if form == "motsch_tadmor":
        return lambda s: motsch_tadmor_drift(s, spec.kernel)
    if form == "cucker_smale":
        return lambda s: cucker_smale_accel(s, spec.kernel)
    if form == "multigroup":
        return lambda s: np.concatenate(
            multigroup_drift(s, spec.influence, spec.radii, spec.exponent, spec.sign), axis=0)
    raise ConfigError(f"no ground-truth drift for {form!r}")


# --------------------------------------------------------------------------
# integration


def step_generator(seed, step):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), int(step)))))


def step(state, drift_fn, sigma, dt, rng=None, step_index=0):
    """One forward-Euler / Euler-Maruyama step.

    Second-order states advance positions with the pre-step velocity.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    drift = np.asarray(drift_fn(state), dtype=np.float64)
    if drift.shape != state.positions.shape:
        raise ShapeError(f"drift shape {drift.shape} != state shape {state.positions.shape}")
    if not np.all(np.isfinite(drift)):
        raise BlowUpError(step_index, "non-finite drift")
    noise = 0.0
    if sigma > 0:
        if rng is None:
            raise ConfigError("stochastic step needs a generator")
        noise = sigma * np.sqrt(dt) * rng.standard_normal(state.positions.shape)
    if state.velocities is None:
        new = replace(state, positions=state.positions + drift * dt + noise)
    else:
        new = replace(state, positions=state.positions + state.velocities * dt,
                      velocities=state.velocities + drift * dt + noise)
    for arr in (new.positions, new.velocities):
        if arr is not None and not (np.all(np.isfinite(arr)) and np.max(np.abs(arr)) <= BLOWUP_LIMIT):
            raise BlowUpError(step_index)
    return new


def integrate(init, drift_fn, sigma, dt, L, seed):
    """Run ``L`` steps from ``init``; returns position and velocity stacks."""
    positions = np.empty((L + 1,) + init.positions.shape)
    velocities = None if init.velocities is None else np.empty_like(positions)
    positions[0] = init.positions
    if velocities is not None:
        velocities[0] = init.velocities
    state = init
    for s in range(L):
        rng = step_generator(seed, s) if sigma > 0 else None
        state = step(state, drift_fn, sigma, dt, rng, step_index=s)
        positions[s + 1] = state.positions
        if velocities is not None:
            velocities[s + 1] = state.velocities
    return positions, velocities


def check_state(spec, state):
    if state.d != spec.d:
        raise ShapeError(f"state dimension {state.d} != spec dimension {spec.d}")
    if state.order != spec.order:
        raise ShapeError(f"state order {state.order} != spec order {spec.order}")
    if spec.group_sizes is not None and tuple(state.group_sizes or ()) != tuple(spec.group_sizes):
        raise ShapeError("state group sizes do not match the system")


def simulate(spec, init, L, dt, seed=0):
    """Simulate the ground-truth system for ``L`` steps of size ``dt``."""
    if L < 0:
        raise ConfigError("L must be non-negative")
    check_state(spec, init)
    positions, velocities = integrate(init, system_drift(spec), spec.sigma, dt, L, seed)
    return Trajectory(spec, float(dt), positions, velocities, int(seed), {"rng": RNG_ID})
