"""Measure-valued neural drifts ``b(x, mu) = int_net(x, <emb_net, mu>)``.

The measure enters only through the particle average of the embedding
network, so a drift evaluation for all ``N`` particles costs one embedding
pass and one interaction pass per particle.  For second-order systems the
per-particle state is the pair ``(x, v)`` and the same code applies with
``d_state = 2 d``.
"""

from dataclasses import dataclass

import numpy as np

from .dynamics import ParticleState, SystemSpec, Trajectory, RNG_ID, integrate
from .errors import ConfigError, ShapeError, TrainingDivergedError
from .nn import MlpParams, mlp_backward, mlp_forward, mlp_init


def _rows(particles):
    if isinstance(particles, ParticleState):
        return particles.stacked()
    arr = np.asarray(particles, dtype=np.float64)
    return arr[:, None] if arr.ndim == 1 else arr


@dataclass
class MvnnModel:
    embedding: MlpParams
    interaction: MlpParams
    order: int = 1
    d: int = 1

    def __post_init__(self):
        ds = self.d_state
        if self.embedding.layer_dims[0] != ds:
            raise ShapeError(f"embedding input {self.embedding.layer_dims[0]} != state dim {ds}")
        if self.interaction.layer_dims[0] != ds + self.k:
            raise ShapeError("interaction input must be state dim + embedding dim")
        if self.interaction.layer_dims[-1] != self.d:
            raise ShapeError("interaction output must have dimension d")

    @property
    def k(self):
        return self.embedding.layer_dims[-1]

    @property
    def d_state(self):
        return self.order * self.d

    @property
    def n_groups(self):
        return 1

    @classmethod
    def create(cls, d, k=32, emb_hidden=(64, 64), int_hidden=(64, 64), order=1,
               activation="tanh", seed=0):
        ss = np.random.SeedSequence(seed).spawn(2)
        ds = order * d
        emb = mlp_init([ds, *emb_hidden, k], activation, ss[0])
        inter = mlp_init([ds + k, *int_hidden, d], activation, ss[1])
        return cls(emb, inter, order, d)

    def nets(self):
        return [self.embedding, self.interaction]

    def with_nets(self, nets):
        emb, inter = nets
        return MvnnModel(emb, inter, self.order, self.d)

    def drift(self, state):
        return mvnn_drift_all(self, state)


@dataclass
class MgMvnnModel:
    """One embedding network per group and one interaction network per group."""

    embeddings: list
    interactions: list
    d: int = 1

    def __post_init__(self):
        if len(self.embeddings) != len(self.interactions) or not self.embeddings:
            raise ShapeError("need one embedding and one interaction net per group")
        width = self.d + sum(self.ranks)
        for e in self.embeddings:
            if e.layer_dims[0] != self.d:
                raise ShapeError("group embeddings take d-dimensional states")
        for net in self.interactions:
            if net.layer_dims[0] != width or net.layer_dims[-1] != self.d:
                raise ShapeError("interaction nets must map d + sum(r_l) -> d")

    order = 1

    @property
    def ranks(self):
        return [e.layer_dims[-1] for e in self.embeddings]

    @property
    def n_groups(self):
        return len(self.embeddings)

    @property
    def d_state(self):
        return self.d

    @classmethod
    def create(cls, d, ranks, emb_hidden=(32, 32), int_hidden=(64, 64), activation="tanh",
               seed=0):
        K = len(ranks)
        ss = np.random.SeedSequence(seed).spawn(2 * K)
        embs = [mlp_init([d, *emb_hidden, r], activation, ss[i]) for i, r in enumerate(ranks)]
        ints = [mlp_init([d + sum(ranks), *int_hidden, d], activation, ss[K + i])
                for i in range(K)]
        return cls(embs, ints, d)

    def nets(self):
        return list(self.embeddings) + list(self.interactions)

    def with_nets(self, nets):
        K = self.n_groups
        return MgMvnnModel(list(nets[:K]), list(nets[K:]), self.d)

    def drift(self, state):
        return np.concatenate(mg_mvnn_drift_all(self, state), axis=0)


@dataclass
class DriftBatch:
    """Loss terms drawn from a set of snapshots.

    ``snapshots`` holds every particle of each referenced snapshot so the
    embedding mean always uses the full empirical measure; the sample arrays
    select which particles contribute a regression term.
    """

    snapshots: np.ndarray
    sample_snapshot: np.ndarray
    sample_particle: np.ndarray
    targets: np.ndarray
    group_sizes: tuple = None

    def __post_init__(self):
        S, N = self.snapshots.shape[:2]
        if self.sample_snapshot.shape != self.sample_particle.shape:
            raise ShapeError("sample index arrays differ in length")
        if len(self.sample_snapshot) == 0:
            raise ShapeError("empty batch")
        if self.sample_snapshot.max() >= S or self.sample_particle.max() >= N:
            raise ShapeError("sample index out of range")
        if self.targets.shape[0] != len(self.sample_snapshot):
            raise ShapeError("one target per sample required")

    @property
    def size(self):
        return len(self.sample_snapshot)

    @property
    def offsets(self):
        sizes = self.group_sizes or (self.snapshots.shape[1],)
        return np.concatenate([[0], np.cumsum(sizes)]).astype(int)


# --------------------------------------------------------------------------
# evaluation


# inference runs over particle blocks so activations stay cache-resident;
# without this the per-particle cost grows with N once layers spill from L2
BLOCK = 512


def _blocked_mean(net, rows):
    total = 0.0
    for start in range(0, max(rows.shape[0], 1), BLOCK):
        total = total + mlp_forward(net, rows[start:start + BLOCK])[0].sum(axis=0)
    return total / rows.shape[0]


def _blocked_forward(net, rows):
    return np.concatenate([mlp_forward(net, rows[start:start + BLOCK], row_stable=True)[0]
                           for start in range(0, max(rows.shape[0], 1), BLOCK)], axis=0)


def embed_mean(model, particles):
    """Average of the embedding network over all particles."""
    return _blocked_mean(model.embedding, _rows(particles))


def mvnn_drift(model, x, z):
    """Interaction network applied to ``concat(x, z)``; ``x`` may be a batch."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.ndim == 2:
        z = np.broadcast_to(z, (x.shape[0], z.shape[-1]))
        return _blocked_forward(model.interaction, np.concatenate([x, z], axis=-1))
    out, _ = mlp_forward(model.interaction, np.concatenate([x, z], axis=-1), row_stable=True)
    return out


def second_order_drift(model, x, v, z):
    if model.order != 2:
        raise ShapeError("second_order_drift needs an order-2 model")
    return mvnn_drift(model, np.concatenate([np.asarray(x, float), np.asarray(v, float)], axis=-1), z)


def mvnn_drift_all(model, particles):
    rows = _rows(particles)
    if rows.shape[1] != model.d_state:
        raise ShapeError(f"particle state width {rows.shape[1]} != model state dim {model.d_state}")
    z = embed_mean(model, rows)
    return mvnn_drift(model, rows, z)


def group_embeddings(model, state):
    """Concatenated per-group embedding means ``(z_1, ..., z_K)``."""
    groups = state.groups()
    if len(groups) != model.n_groups:
        raise ShapeError(f"state has {len(groups)} groups, model {model.n_groups}")
    return np.concatenate([_blocked_mean(e, g) for e, g in zip(model.embeddings, groups)])


def mg_mvnn_drift_all(model, state):
    z = group_embeddings(model, state)
    out = []
    for net, g in zip(model.interactions, state.groups()):
        inp = np.concatenate([g, np.broadcast_to(z, (g.shape[0], z.size))], axis=1)
        out.append(_blocked_forward(net, inp))
    return out


# --------------------------------------------------------------------------
# loss and exact gradients


def _check_loss(loss):
    if not np.isfinite(loss):
        raise TrainingDivergedError("non-finite loss")


def mvnn_loss_grad(model, batch, need_grad=True):
    """Mean squared drift residual over the batch and its exact gradient.

    Returns ``(loss, grad)`` where ``grad`` is an :class:`MvnnModel` whose
    networks hold gradients (``None`` when ``need_grad`` is false).
    """
    snaps = batch.snapshots
    S, N, ds = snaps.shape
    if ds != model.d_state:
        raise ShapeError(f"snapshot state width {ds} != model state dim {model.d_state}")
    emb_out, emb_tape = mlp_forward(model.embedding, snaps.reshape(S * N, ds))
    z = emb_out.reshape(S, N, -1).mean(axis=1)
    ss, sp = batch.sample_snapshot, batch.sample_particle
    x = snaps[ss, sp]
    pred, int_tape = mlp_forward(model.interaction, np.concatenate([x, z[ss]], axis=1))
    resid = pred - batch.targets
    B = batch.size
    loss = float(np.sum(resid * resid) / B)
    _check_loss(loss)
    if not need_grad:
        return loss, None
    g_in, g_int = mlp_backward(model.interaction, int_tape, (2.0 / B) * resid)
    g_z = np.zeros((S, model.k))
    np.add.at(g_z, ss, g_in[:, ds:])
    g_emb_out = np.repeat(g_z / N, N, axis=0)
    _, g_emb = mlp_backward(model.embedding, emb_tape, g_emb_out)
    return loss, MvnnModel(g_emb, g_int, model.order, model.d)


def mg_mvnn_loss_grad(model, batch, need_grad=True):
    """Sum over groups of the per-group mean squared residual.

    Every group embedding feeds all interaction networks, so each embedding
    gradient collects contributions from every group's residuals.
    """
    snaps = batch.snapshots
    S, _, d = snaps.shape
    off = batch.offsets
    K = len(off) - 1
    if K != model.n_groups:
        raise ShapeError(f"batch has {K} groups, model {model.n_groups}")
    ranks = model.ranks
    r_off = np.concatenate([[0], np.cumsum(ranks)]).astype(int)
    tapes, zs = [], []
    for l in range(K):
        n_l = off[l + 1] - off[l]
        out, tape = mlp_forward(model.embeddings[l], snaps[:, off[l]:off[l + 1]].reshape(S * n_l, d))
        tapes.append(tape)
        zs.append(out.reshape(S, n_l, -1).mean(axis=1))
    Z = np.concatenate(zs, axis=1)
    ss, sp = batch.sample_snapshot, batch.sample_particle
    group_of = np.searchsorted(off, sp, side="right") - 1
    loss = 0.0
    g_Z = np.zeros_like(Z)
    g_ints = []
    for k in range(K):
        net = model.interactions[k]
        mask = group_of == k
        if not np.any(mask):
            g_ints.append(net.zeros_like())
            continue
        sk = ss[mask]
        x = snaps[sk, sp[mask]]
        pred, tape = mlp_forward(net, np.concatenate([x, Z[sk]], axis=1))
        resid = pred - batch.targets[mask]
        B_k = int(mask.sum())
        loss += float(np.sum(resid * resid) / B_k)
        if need_grad:
            g_in, g_int = mlp_backward(net, tape, (2.0 / B_k) * resid)
            np.add.at(g_Z, sk, g_in[:, d:])
            g_ints.append(g_int)
    _check_loss(loss)
    if not need_grad:
        return loss, None
    g_embs = []
    for l in range(K):
        n_l = off[l + 1] - off[l]
        g_out = np.repeat(g_Z[:, r_off[l]:r_off[l + 1]] / n_l, n_l, axis=0)
        g_embs.append(mlp_backward(model.embeddings[l], tapes[l], g_out)[1])
    return loss, MgMvnnModel(g_embs, g_ints, model.d)


def loss_grad(model, batch, need_grad=True):
    """Dispatch to the single- or multi-group loss."""
    if isinstance(model, MgMvnnModel):
        return mg_mvnn_loss_grad(model, batch, need_grad)
    return mvnn_loss_grad(model, batch, need_grad)


# --------------------------------------------------------------------------
# rollout


def mvnn_rollout(model, init, sigma, dt, L, seed=0, spec=None):
    """Integrate the learned particle system with the ground-truth step rule."""
    if init.d != model.d or init.order != model.order:
        raise ShapeError("initial state does not match the model dimensions")
    if isinstance(model, MgMvnnModel) and len(init.groups()) != model.n_groups:
        raise ShapeError("initial state group count does not match the model")
    if not sigma >= 0:
        raise ConfigError("invalid sigma")
    positions, velocities = integrate(init, model.drift, sigma, dt, L, seed)
    if spec is None:
        spec = SystemSpec(order=model.order, d=model.d, drift_form="learned", sigma=float(sigma),
                          group_sizes=init.group_sizes)
    return Trajectory(spec, float(dt), positions, velocities, int(seed),
                      {"rng": RNG_ID, "learned": True})
