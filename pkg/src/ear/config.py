"""Run configuration: one INI-style file drives every command.

Sections mirror the pipeline stages; unknown sections or keys are
rejected so typos fail loudly. Every artifact a run writes embeds the
sha256 hash of the resolved configuration.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .adaptor import TrainConfig
from .continual import StreamConfig
from .encoder import ScenarioSpec
from .errors import ConfigError

ENV_CONFIG_PATH = "EAR_CONFIG"
SCHEMA_VERSION = 1


@dataclass
class HdSection:
    gamma_focal: float = 2.0

    def validate(self):
        if self.gamma_focal < 0:
            raise ConfigError("hd.gamma_focal must be nonnegative")


@dataclass
class TrainSection:
    lr: float = 1e-3
    batch: int = 128
    epochs: int = 40
    hidden_width: int = 64
    depth: int = 1

    def validate(self):
        if self.lr <= 0:
            raise ConfigError("train.lr must be positive")
        if self.batch < 1 or self.epochs < 1:
            raise ConfigError("train.batch and train.epochs must be >= 1")
        if self.depth < 0 or self.depth > 3:
            raise ConfigError("train.depth must lie in [0, 3]")
        if self.hidden_width < 1:
            raise ConfigError("train.hidden_width must be positive")


@dataclass
class NasSection:
    beta0: float = 3e-6
    beta1: float = 5.0
    gamma_spectral: float = 3.0
    knn: int = 2
    batch: int = 128
    budget: int = 50
    warmup: int = 10
    kappa: float = 2.5
    shrink: float = 0.9
    width_min: int = 16
    width_max: int = 128
    max_depth: int = 3

    def validate(self):
        if self.knn < 1:
            raise ConfigError("nas.knn must be >= 1")
        if self.batch < 8:
            raise ConfigError("nas.batch must be >= 8")
        if not (1 <= self.warmup <= self.budget):
            raise ConfigError("need 1 <= nas.warmup <= nas.budget")
        if self.kappa <= 0 or not (0 < self.shrink < 1):
            raise ConfigError("nas.kappa must be > 0 and nas.shrink in (0, 1)")
        if not (1 <= self.width_min <= self.width_max):
            raise ConfigError("need 1 <= nas.width_min <= nas.width_max")
        if not (0 <= self.max_depth <= 3):
            raise ConfigError("nas.max_depth must lie in [0, 3]")


@dataclass
class StreamSection:
    window: int = 50
    trigger_fraction: float = 0.6
    ood_threshold: float = 0.7
    buffer: int = 1000
    segment: int = 2000
    routing: str = "slow"

    def validate(self):
        if self.window < 1 or self.buffer < 1 or self.segment < 1:
            raise ConfigError("stream sizes must be positive")
        if not (0 < self.trigger_fraction <= 1):
            raise ConfigError("stream.trigger_fraction must lie in (0, 1]")
        if not (0 < self.ood_threshold < 1):
            raise ConfigError("stream.ood_threshold must lie in (0, 1)")
        if self.routing not in ("oracle", "slow", "instant"):
            raise ConfigError(f"unknown stream.routing {self.routing!r}")


@dataclass
class ScenarioSection:
    num_tasks: int = 3
    classes_per_task: int = 10
    repeats: int = 2
    separation: float = 6.0
    class_spread: float = 2.5
    noise_scale: float = 1.0
    raw_dim: int = 24
    test_per_class: int = 40
    train_per_task: int = 1000

    def validate(self):
        if self.num_tasks < 1 or self.classes_per_task < 2:
            raise ConfigError("need >= 1 task and >= 2 classes per task")
        if self.separation < 0:
            raise ConfigError("scenario.separation must be nonnegative")
        if self.train_per_task < 1 or self.test_per_class < 1:
            raise ConfigError("scenario sample counts must be positive")


@dataclass
class EncoderSection:
    tap_dims: str = "48,40,32,28,24,20,16"

    def validate(self):
        dims = self.parsed_tap_dims()
        if not dims or any(d < 1 for d in dims):
            raise ConfigError("encoder.tap_dims must be positive integers")

    def parsed_tap_dims(self) -> tuple[int, ...]:
        try:
            return tuple(int(x) for x in self.tap_dims.split(",") if x.strip())
        except ValueError as exc:
            raise ConfigError(f"bad encoder.tap_dims {self.tap_dims!r}") from exc


@dataclass
class SeedsSection:
    master: int = 0
    data: int = -1    # -1 derives from master
    train: int = -1
    stream: int = -1
    eval: int = -1
    nas: int = -1

    def validate(self):
        pass

    def _derive(self, slot: int, override: int) -> int:
        if override >= 0:
            return override
        ss = np.random.SeedSequence([self.master, slot])
        return int(ss.generate_state(1)[0] % (2**31))

    @property
    def data_seed(self) -> int:
        return self._derive(1, self.data)

    @property
    def train_seed(self) -> int:
        return self._derive(2, self.train)

    @property
    def stream_seed(self) -> int:
        return self._derive(3, self.stream)

    @property
    def eval_seed(self) -> int:
        return self._derive(4, self.eval)

    @property
    def nas_seed(self) -> int:
        return self._derive(5, self.nas)


@dataclass
class RunConfig:
    hd: HdSection = field(default_factory=HdSection)
    train: TrainSection = field(default_factory=TrainSection)
    nas: NasSection = field(default_factory=NasSection)
    stream: StreamSection = field(default_factory=StreamSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    seeds: SeedsSection = field(default_factory=SeedsSection)

    def validate(self):
        for f in fields(self):
            getattr(self, f.name).validate()

    # -- conversions into component configs --------------------------------

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.train.lr, batch_size=self.train.batch,
                           epochs=self.train.epochs,
                           gamma_focal=self.hd.gamma_focal,
                           seed=self.seeds.train_seed)

    def scenario_spec(self) -> ScenarioSpec:
        s = self.scenario
        return ScenarioSpec(num_tasks=s.num_tasks, classes_per_task=s.classes_per_task,
                            repeats=s.repeats, segment_length=self.stream.segment,
                            separation=s.separation, class_spread=s.class_spread,
                            noise_scale=s.noise_scale, raw_dim=s.raw_dim,
                            test_per_class=s.test_per_class)

    def stream_config(self, routing: str | None = None) -> StreamConfig:
        n = self.nas
        return StreamConfig(
            window=self.stream.window,
            trigger_fraction=self.stream.trigger_fraction,
            ood_threshold=self.stream.ood_threshold,
            buffer_size=self.stream.buffer,
            routing=routing or self.stream.routing,
            nas_budget=n.budget, nas_warmup=n.warmup, nas_batch=n.batch,
            nas_kappa=n.kappa, nas_shrink=n.shrink, nas_beta0=n.beta0,
            nas_beta1=n.beta1, nas_gamma=n.gamma_spectral, nas_knn=n.knn,
            width_min=n.width_min, width_max=n.width_max, max_depth=n.max_depth,
            train=self.train_config(), eval_seed=self.seeds.eval_seed,
        )

    # -- canonical text and hashing ----------------------------------------

    def canonical_lines(self) -> list[str]:
        lines = []
        for f in fields(self):
            section = getattr(self, f.name)
            for sf in fields(section):
                lines.append(f"{f.name}.{sf.name}={getattr(section, sf.name)}")
        return sorted(lines)

    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.canonical_lines()).encode()).hexdigest()[:16]

    def to_ini(self) -> str:
        out = []
        for f in fields(self):
            out.append(f"[{f.name}]")
            section = getattr(self, f.name)
            for sf in fields(section):
                out.append(f"{sf.name} = {getattr(section, sf.name)}")
            out.append("")
        return "\n".join(out)


_SECTION_TYPES = {f.name: f.default_factory for f in fields(RunConfig)}


def _coerce(raw: str, target_type: type):
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is str:
        return raw
    raise ConfigError(f"unsupported config value type {target_type}")


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    cfg = RunConfig()
    for section_name in parser.sections():
        if section_name not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section [{section_name}]")
        section = getattr(cfg, section_name)
        known = {f.name: f.type for f in fields(section)}
        for key, raw in parser.items(section_name):
            if key not in known:
                raise ConfigError(f"unknown key {section_name}.{key}")
            current = getattr(section, key)
            try:
                setattr(section, key, _coerce(raw, type(current)))
            except ValueError as exc:
                raise ConfigError(f"bad value for {section_name}.{key}: {raw!r}") from exc
    cfg.validate()
    return cfg


def load_config(path=None) -> RunConfig:
    """Read config from ``path``, the EAR_CONFIG env var, or defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG_PATH)
    if path is None:
        cfg = RunConfig()
        cfg.validate()
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
