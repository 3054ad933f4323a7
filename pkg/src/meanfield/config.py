"""Experiment configuration: one JSON document drives a whole pipeline run.

Schema (all sections optional except ``system`` and ``init``)::

    {
      "system": SystemSpec fields, e.g. {"order": 1, "d": 1,
                 "drift_form": "motsch_tadmor",
                 "kernel": {"kind": "gaussian", "length": 0.5}, "sigma": 0.0},
      "init":   {"position": [sampler, ...], "velocity_var": null},
      "N": 512, "M": 20, "L": 200, "dt": 0.01,
      "split":  {"train": 17, "test": 3},
      "model":  {"k": 32, "embedding_widths": [64, 64],
                 "interaction_widths": [64, 64], "activation": "tanh"},
      "optim":  OptimConfig fields,
      "eval":   {"n_grid": 512, "bandwidth": "auto", "times": [...],
                 "n_proj": 64, "chaos": {"ladder": [...], "n_rep": 20}},
      "seed": 0
    }

Unknown keys anywhere raise :class:`ConfigError`.  For multi-group systems
``N`` is implied by ``system.group_sizes``.
"""

from dataclasses import asdict, dataclass, field, fields
import json

from .data import InitSpec
from .dynamics import SystemSpec
from .errors import ConfigError
from .io import config_hash
from .training import OptimConfig


def _strict(cls, doc, where):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown {where} keys {sorted(unknown)}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ConfigError(f"bad {where}: {exc}") from None


@dataclass
class SplitConfig:
    train: int = 1
    test: int = 0


@dataclass
class ModelConfig:
    k: int = 32
    embedding_widths: list = field(default_factory=lambda: [64, 64])
    interaction_widths: list = field(default_factory=lambda: [64, 64])
    activation: str = "tanh"
    seed: int = None

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("model.k must be >= 1")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError("model.activation must be 'tanh' or 'relu'")
        self.embedding_widths = [int(w) for w in self.embedding_widths]
        self.interaction_widths = [int(w) for w in self.interaction_widths]
        if any(w < 1 for w in self.embedding_widths + self.interaction_widths):
            raise ConfigError("hidden widths must be >= 1")


@dataclass
class ChaosConfig:
    ladder: list = field(default_factory=lambda: [128, 512, 2048, 8192])
    n_rep: int = 20

    def __post_init__(self):
        if len(self.ladder) < 1 or any(int(n) < 1 for n in self.ladder):
            raise ConfigError("chaos.ladder needs positive sizes")
        if self.n_rep < 1:
            raise ConfigError("chaos.n_rep must be >= 1")


@dataclass
class EvalConfig:
    n_grid: int = 512
    bandwidth: object = "auto"
    times: list = None
    n_proj: int = 64
    chaos: ChaosConfig = None

    def __post_init__(self):
        if isinstance(self.chaos, dict):
            self.chaos = _strict(ChaosConfig, self.chaos, "eval.chaos")
        if self.bandwidth != "auto" and not (isinstance(self.bandwidth, (int, float)) and self.bandwidth > 0):
            raise ConfigError("eval.bandwidth must be 'auto' or a positive number")
        if self.n_grid < 2 or self.n_proj < 1:
            raise ConfigError("eval.n_grid must be >= 2 and eval.n_proj >= 1")


@dataclass
class ExperimentConfig:
    system: SystemSpec
    init: InitSpec
    N: int = 512
    M: int = 1
    L: int = 100
    dt: float = 0.01
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0

    def __post_init__(self):
        if self.system.group_sizes is not None:
            self.N = sum(self.system.group_sizes)
        if self.N < 1 or self.M < 1 or self.L < 1:
            raise ConfigError("N, M and L must be >= 1")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.split.train < 0 or self.split.test < 0 or self.split.train + self.split.test != self.M:
            raise ConfigError(f"split {self.split.train}/{self.split.test} does not add up to M={self.M}")
        if len(self.init.position) != self.system.n_groups:
            raise ConfigError("init needs one position sampler per group")
        if (self.init.velocity_var is not None) != (self.system.order == 2):
            raise ConfigError("init.velocity_var must be set exactly for second-order systems")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def model_seed(self):
        return self.seed if self.model.seed is None else self.model.seed

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "system" not in doc or "init" not in doc:
            raise ConfigError("config needs 'system' and 'init'")
        try:
            body = {k: v for k, v in doc.items() if k in ("N", "M", "L", "dt", "seed")}
            return cls(system=SystemSpec.from_dict(doc["system"]),
                       init=InitSpec.from_dict(doc["init"]),
                       split=_strict(SplitConfig, doc.get("split"), "split"),
                       model=_strict(ModelConfig, doc.get("model"), "model"),
                       optim=_strict(OptimConfig, doc.get("optim"), "optim"),
                       eval=_strict(EvalConfig, doc.get("eval"), "eval"),
                       **body)
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"bad config: {exc}") from None

    def to_dict(self):
        ev = asdict(self.eval)
        return {
            "system": self.system.to_dict(),
            "init": self.init.to_dict(),
            "N": self.N, "M": self.M, "L": self.L, "dt": self.dt,
            "split": asdict(self.split),
            "model": asdict(self.model),
            "optim": asdict(self.optim),
            "eval": ev,
            "seed": self.seed,
        }

    def hash(self):
        """Hash of the normalized document (defaults filled in)."""
        return config_hash(self.to_dict())


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(doc)
