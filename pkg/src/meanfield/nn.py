"""Dense feedforward networks with hand-written reverse-mode gradients and Adam.

Networks act on row vectors: an input of shape ``(n_0,)`` or a batch of shape
``(B, n_0)`` is mapped layer by layer through ``h @ W.T + b``.  Hidden layers use
the configured activation, the output layer is affine.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, TrainingDivergedError

ACTIVATIONS = ("relu", "tanh")


@dataclass
class MlpParams:
    layer_dims: list
    weights: list
    biases: list
    activation: str = "tanh"

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self):
        """All parameter arrays in a fixed order (W_0, b_0, W_1, b_1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_arrays(self, arrays):
        arrays = list(arrays)
        return MlpParams(list(self.layer_dims), arrays[0::2], arrays[1::2], self.activation)

    def copy(self):
        return self.with_arrays([a.copy() for a in self.arrays()])

    def zeros_like(self):
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])

    def to_dict(self):
        return {
            "activation": self.activation,
            "layer_dims": [int(n) for n in self.layer_dims],
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, doc):
        dims = [int(n) for n in doc["layer_dims"]]
        weights = [np.asarray(w, dtype=np.float64).reshape(dims[i + 1], dims[i])
                   for i, w in enumerate(doc["weights"])]
        biases = [np.asarray(b, dtype=np.float64).reshape(dims[i + 1])
                  for i, b in enumerate(doc["biases"])]
        params = cls(dims, weights, biases, doc["activation"])
        _check_params(params)
        return params


@dataclass
class Tape:
    """Intermediates of one forward pass, consumed by :func:`mlp_backward`."""

    input: np.ndarray
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)
    squeeze: bool = False


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        leaves = _leaves(params)
        return cls([np.zeros_like(a) for a in leaves], [np.zeros_like(a) for a in leaves],
                   0, lr, beta1, beta2, eps)


def _check_params(params):
    if params.activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {params.activation!r}")
    dims = params.layer_dims
    if len(params.weights) != len(dims) - 1 or len(params.biases) != len(dims) - 1:
        raise ShapeError("layer count does not match layer_dims")
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
            raise ShapeError(f"layer {i} has shapes {w.shape}, {b.shape}")


def mlp_init(layer_dims, activation="tanh", seed=0):
    """He-uniform (relu) or Xavier-uniform (tanh) weights and zero biases."""
    dims = [int(n) for n in layer_dims]
    if len(dims) < 2 or any(n < 1 for n in dims):
        raise ConfigError(f"invalid layer dims {list(layer_dims)}")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        if activation == "relu":
            bound = np.sqrt(6.0 / n_in)
        else:
            bound = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return MlpParams(dims, weights, biases, activation)


def _act(name, x):
    if name == "relu":
        return np.maximum(x, 0.0)
    return np.tanh(x)


def mlp_forward(params, x, row_stable=False):
    """Evaluate the network; returns ``(output, tape)``.

    BLAS matrix products may round a row differently depending on how many
    rows share the call.  ``row_stable=True`` issues one identically shaped
    product per row instead, so each output row is a bitwise function of its
    input row alone (slower; meant for inference).
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != params.layer_dims[0]:
        raise ShapeError(f"input shape {x.shape} does not match layer dims {params.layer_dims}")
    tape = Tape(input=h, squeeze=squeeze)
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = ((h[:, None, :] @ w.T)[:, 0, :] if row_stable else h @ w.T) + b
        h = a if i == last else _act(params.activation, a)
        tape.pre.append(a)
        tape.post.append(h)
    return (h[0] if squeeze else h), tape


def mlp_backward(params, tape, output_grad):
    """Reverse-mode gradients of ``<output_grad, output>``.

    Returns ``(input_grad, param_grads)``; ``param_grads`` is an
    :class:`MlpParams` holding gradients, summed over the batch.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if tape.squeeze:
        g = g[None, :]
    if len(tape.pre) != params.n_layers or g.shape != tape.post[-1].shape:
        raise ShapeError("tape does not belong to these parameters")
    grads_w = [None] * params.n_layers
    grads_b = [None] * params.n_layers
    for i in range(params.n_layers - 1, -1, -1):
        h_prev = tape.post[i - 1] if i > 0 else tape.input
        grads_w[i] = g.T @ h_prev
        grads_b[i] = g.sum(axis=0)
        g = g @ params.weights[i]
        if i > 0:
            if params.activation == "relu":
                # subgradient 0 at the kink
                g = g * (tape.pre[i - 1] > 0.0)
            else:
                g = g * (1.0 - tape.post[i - 1] ** 2)
    grads = MlpParams(list(params.layer_dims), grads_w, grads_b, params.activation)
    return (g[0] if tape.squeeze else g), grads


def _leaves(tree):
    if isinstance(tree, MlpParams):
        return tree.arrays()
    if isinstance(tree, np.ndarray):
        return [tree]
    if hasattr(tree, "nets"):
        return _leaves(tree.nets())
    out = []
    for item in tree:
        out.extend(_leaves(item))
    return out


def _rebuild(tree, leaves):
    """Inverse of :func:`_leaves`; consumes ``leaves`` (an iterator)."""
    if isinstance(tree, MlpParams):
        return tree.with_arrays([next(leaves) for _ in range(2 * tree.n_layers)])
    if isinstance(tree, np.ndarray):
        return next(leaves)
    if hasattr(tree, "nets"):
        return tree.with_nets(_rebuild(tree.nets(), leaves))
    return [_rebuild(item, leaves) for item in tree]


def tree_map(fn, *trees):
    """Apply ``fn`` leafwise over parameter trees of identical structure."""
    columns = zip(*(_leaves(t) for t in trees))
    return _rebuild(trees[0], iter([fn(*c) for c in columns]))


def flatten(tree):
    return np.concatenate([a.ravel() for a in _leaves(tree)])


def unflatten(tree, vector):
    vector = np.asarray(vector, dtype=np.float64)
    leaves, pos = [], 0
    for a in _leaves(tree):
        leaves.append(vector[pos:pos + a.size].reshape(a.shape).copy())
        pos += a.size
    if pos != vector.size:
        raise ShapeError("vector length does not match parameter count")
    return _rebuild(tree, iter(leaves))


def adam_step(state, params, grads):
    """One bias-corrected Adam update; returns ``(new_state, new_params)``.

    ``params`` and ``grads`` may be an :class:`MlpParams`, a model exposing
    ``nets()``, or a list of either.
    """
    p_leaves, g_leaves = _leaves(params), _leaves(grads)
    if len(p_leaves) != len(g_leaves) or len(p_leaves) != len(state.m):
        raise ShapeError("parameter, gradient and optimizer state trees differ")
    for g in g_leaves:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient")
    t = state.t + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(p_leaves, g_leaves, state.m, state.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise ShapeError(f"shape mismatch {p.shape} vs {g.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        new_p.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(new_m, new_v, t, state.lr, state.beta1, state.beta2, state.eps)
    return new_state, _rebuild(params, iter(new_p))


def finite_diff_grad(loss_fn, params, h=1e-6):
    """Central-difference gradient of a scalar ``loss_fn(params)``.

    Works on any parameter tree accepted by :func:`adam_step`; the returned
    gradient has the same structure as ``params``.
    """
    theta = flatten(params)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + h
        up = loss_fn(unflatten(params, theta))
        theta[i] = orig - h
        down = loss_fn(unflatten(params, theta))
        theta[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return unflatten(params, grad)
