"""Trajectory binary files, model checkpoints and dataset manifests.

Trajectory layout (little-endian)::

    b"MVNT" | u32 version | u32 order | u32 d | u32 K | u32 N_k * K | u32 L
    | f64 dt | f64 sigma | u64 seed | u32 n | n bytes of UTF-8 JSON header
    | f64 positions[L+1][N][d] | f64 velocities[L+1][N][d]  (order 2 only)

The JSON header holds the system spec plus free-form metadata (RNG id,
config hash, learned flag).
"""

import hashlib
import json
import os
import struct

import numpy as np

from .dynamics import SystemSpec, Trajectory
from .errors import FormatError
from .mvnn import MgMvnnModel, MvnnModel
from .nn import MlpParams

MAGIC = b"MVNT"
TRAJECTORY_VERSION = 1
CHECKPOINT_VERSION = 1


def config_hash(config_doc):
    """SHA-256 of the canonical JSON form of a config document."""
    blob = json.dumps(config_doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _atomic_write(path, data, mode="wb"):
    tmp = f"{path}.tmp"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def trajectory_bytes(traj):
    spec = traj.spec
    sizes = spec.group_sizes or (traj.N,)
    header = json.dumps({"spec": spec.to_dict(), "meta": traj.meta}, sort_keys=True).encode()
    parts = [
        MAGIC,
        struct.pack("<4I", TRAJECTORY_VERSION, spec.order, traj.d, len(sizes)),
        struct.pack(f"<{len(sizes)}I", *sizes),
        struct.pack("<I2dQ", traj.L, traj.dt, spec.sigma, traj.seed),
        struct.pack("<I", len(header)),
        header,
        np.ascontiguousarray(traj.positions, dtype="<f8").tobytes(),
    ]
    if spec.order == 2:
        parts.append(np.ascontiguousarray(traj.velocities, dtype="<f8").tobytes())
    return b"".join(parts)


def write_trajectory(path, traj):
    _atomic_write(path, trajectory_bytes(traj))


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise FormatError("truncated trajectory file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def trajectory_from_bytes(buf):
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise FormatError("bad magic bytes")
    version, order, d, K = r.unpack("<4I")
    if version > TRAJECTORY_VERSION or version < 1:
        raise FormatError(f"unsupported trajectory version {version}")
    if order not in (1, 2):
        raise FormatError(f"bad order {order}")
    sizes = r.unpack(f"<{K}I")
    L, dt, sigma, seed = r.unpack("<I2dQ")
    (n_json,) = r.unpack("<I")
    try:
        header = json.loads(r.take(n_json).decode())
        spec = SystemSpec.from_dict(header["spec"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad JSON header: {exc}") from None
    N = sum(sizes)
    count = (L + 1) * N * d
    positions = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(L + 1, N, d)
    velocities = None
    if order == 2:
        velocities = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(L + 1, N, d)
    if r.pos != len(buf):
        raise FormatError("trailing bytes after trajectory payload")
    if spec.order != order or spec.d != d or spec.sigma != sigma:
        raise FormatError("binary header disagrees with JSON spec")
    return Trajectory(spec, dt, positions, velocities, seed, header.get("meta", {}))


def read_trajectory(path):
    with open(path, "rb") as fh:
        return trajectory_from_bytes(fh.read())


# --------------------------------------------------------------------------
# checkpoints


def model_to_dict(model, meta=None):
    if isinstance(model, MgMvnnModel):
        doc = {"model_kind": "mg_mvnn", "order": 1, "d": model.d, "r": model.ranks,
               "group_count": model.n_groups,
               "networks": {"embeddings": [e.to_dict() for e in model.embeddings],
                            "interactions": [n.to_dict() for n in model.interactions]}}
    else:
        doc = {"model_kind": "mvnn" if model.order == 1 else "mvnn2", "order": model.order,
               "d": model.d, "k": model.k, "group_count": 1,
               "networks": {"embedding": model.embedding.to_dict(),
                            "interaction": model.interaction.to_dict()}}
    doc["format_version"] = CHECKPOINT_VERSION
    doc["activation"] = model.nets()[0].activation
    doc["input_normalization"] = "none"
    doc["meta"] = dict(meta or {})
    return doc


def model_from_dict(doc):
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {doc.get('format_version')}")
    try:
        nets = doc["networks"]
        if doc["model_kind"] == "mg_mvnn":
            return MgMvnnModel([MlpParams.from_dict(e) for e in nets["embeddings"]],
                               [MlpParams.from_dict(n) for n in nets["interactions"]], doc["d"])
        if doc["model_kind"] in ("mvnn", "mvnn2"):
            return MvnnModel(MlpParams.from_dict(nets["embedding"]),
                             MlpParams.from_dict(nets["interaction"]), doc["order"], doc["d"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad checkpoint: {exc}") from None
    raise FormatError(f"unknown model kind {doc.get('model_kind')!r}")


def save_checkpoint(path, model, meta=None):
    # json writes floats with repr(), the shortest round-trip form
    _atomic_write(path, json.dumps(model_to_dict(model, meta)), mode="w")


def load_checkpoint(path):
    """Returns ``(model, meta)``."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"checkpoint is not JSON: {exc}") from None
    return model_from_dict(doc), doc.get("meta", {})


def write_json(path, doc):
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True), mode="w")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
