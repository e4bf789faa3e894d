"""Run configuration (schedule, ladder, post-processing) and JSON loading."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError
from .model import PriorConfig


@dataclass
class AdaptationSchedule:
    n_blocks: int = 100
    block_len: int = 100
    target_single: float = 0.40
    target_vector: float = 0.20

    def __post_init__(self):
        if self.n_blocks < 0 or self.block_len < 1:
            raise ConfigError("adaptation needs n_blocks >= 0 and block_len >= 1")
        for t in (self.target_single, self.target_vector):
            if not 0 < t < 1:
                raise ConfigError("acceptance targets must lie in (0, 1)")

    @property
    def n_iter(self):
        return self.n_blocks * self.block_len


@dataclass
class Ladder:
    temperatures: tuple = (1.0, 2.0, 5.0, 10.0, 20.0)
    n_pt: int = 1000

    def __post_init__(self):
        self.temperatures = tuple(float(t) for t in self.temperatures)
        if not self.temperatures or self.temperatures[0] != 1.0:
            raise ConfigError("the ladder must start at temperature 1")
        if any(b <= a for a, b in zip(self.temperatures, self.temperatures[1:])):
            raise ConfigError("temperatures must be strictly ascending")
        if self.n_pt < 1:
            raise ConfigError("n_pt must be >= 1")

    @property
    def L(self):
        return len(self.temperatures)


@dataclass
class Schedule:
    adaptation: AdaptationSchedule = field(default_factory=AdaptationSchedule)
    burnin: int = 20000
    iterations: int = 40000
    thin: int = 1

    def __post_init__(self):
        if isinstance(self.adaptation, dict):
            self.adaptation = AdaptationSchedule(**self.adaptation)
        if self.burnin < 0 or self.iterations < 0 or self.thin < 1:
            raise ConfigError("need burnin >= 0, iterations >= 0, thin >= 1")

    @property
    def total(self):
        return self.adaptation.n_iter + self.burnin + self.iterations


@dataclass
class PostprocessConfig:
    method: str = "pam"
    k_max: int = 10
    vi_stride: int = 0          # 0 = automatic: thin only when n_iter > 5000

    def __post_init__(self):
        if self.method not in ("binder", "pam", "vi"):
            raise ConfigError(f"unknown post-processing method {self.method!r}")
        if self.k_max < 2:
            raise ConfigError("k_max must be >= 2")


@dataclass
class RunConfig:
    prior: PriorConfig = field(default_factory=PriorConfig)
    schedule: Schedule = field(default_factory=Schedule)
    ladder: Ladder = field(default_factory=Ladder)
    postprocess: PostprocessConfig = field(default_factory=PostprocessConfig)
    seed: int = 1
    alpha_init: float = 1.0
    init_clusters: int = 10
    max_clusters: int = 100
    workers: int = 1
    parallel_tempering: bool = True
    out: str = "out"

    def __post_init__(self):
        for name, cls in (("prior", PriorConfig), ("schedule", Schedule), ("ladder", Ladder),
                          ("postprocess", PostprocessConfig)):
            v = getattr(self, name)
            if isinstance(v, dict):
                setattr(self, name, cls(**v))
        if self.alpha_init <= 0:
            raise ConfigError("alpha_init must be > 0")
        if self.init_clusters < 1 or self.max_clusters < 1 or self.init_clusters > self.max_clusters:
            raise ConfigError("need 1 <= init_clusters <= max_clusters")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def effective_ladder(self):
        return self.ladder if self.parallel_tempering else Ladder((1.0,), self.ladder.n_pt)

    def to_dict(self):
        d = asdict(self)
        d["prior"] = self.prior.to_dict()
        d["ladder"]["temperatures"] = list(self.ladder.temperatures)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_dict(d)
