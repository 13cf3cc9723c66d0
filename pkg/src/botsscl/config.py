"""Run configuration: one TOML file plus dotted ``--set key=value`` overrides.

Every section maps onto a dataclass; unknown keys and type mismatches raise
``ConfigurationError`` carrying the dotted field path. The single top-level
``seed`` feeds every random stream (data, split, training, augmentation).
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .adversarial import FEATURE_BOUNDS, AttackSpec
from .augmentation import AugmentationConfig
from .errors import ConfigurationError
from .evaluation import ProbeConfig
from .model import TrainConfig
from .schema import TEMPORAL_NAMES, TWEET_META_NAMES, USER_META_NAMES, FeatureSchema


@dataclass
class PathsSection:
    data: str = ""  # CSV dataset; empty -> synthetic
    target: str = ""  # LOBO target CSV; empty -> shifted synthetic twin
    checkpoint: str = ""  # empty -> <out>/checkpoint.json


@dataclass
class SyntheticSection:
    n_per_class: int = 1000
    class_separation: float = 4.0
    embedding_dim: int = 768
    shift: float = 0.5
    covariance_mix: float = 0.5


@dataclass
class DataSection:
    test_fraction: float = 0.2


@dataclass
class TrainSection:
    batch_size: int = 512
    epochs: int = 5000
    learning_rate: float = 0.001
    temperature: float = 1.0
    loss: str = "self"
    optimizer: str = "adam"
    d: int = 16
    out_dim: int = 64


@dataclass
class AugmentationSection:
    kind: str = "corruption"
    corruption_rate: float = 0.6
    nan_rate: float = 0.3
    mice_iterations: int = 5
    view_mode: str = "one_view"


@dataclass
class ProbeSection:
    max_iter: int = 10_000
    tol: float = 1e-6
    lr: float = 0.0  # 0 -> automatic step size
    fine_tune: bool = False
    fine_tune_epochs: int = 100
    fine_tune_lr: float = 0.001


@dataclass
class AttackSection:
    group: str = "temporal"
    max_queries_per_sample: int = 1_000_000
    n_each: int = 100
    steps: dict = field(default_factory=dict)  # feature -> grid step override


@dataclass
class SweepSection:
    corruption_rate: list = field(default_factory=lambda: [0.4, 0.5, 0.6, 0.7, 0.8])
    batch_size: list = field(default_factory=lambda: [128, 256, 512])
    epochs: list = field(default_factory=lambda: [100, 500, 1000])
    loss: list = field(default_factory=lambda: ["self", "sup", "sup_mod"])


@dataclass
class GradcheckSection:
    n_pairs: int = 8
    category_width: int = 5  # four categories -> raw width 20
    d: int = 4
    out_dim: int = 8
    eps: float = 1e-5
    tolerance: float = 1e-5
    temperature: float = 1.0


SECTIONS = {
    "paths": PathsSection,
    "synthetic": SyntheticSection,
    "data": DataSection,
    "train": TrainSection,
    "augmentation": AugmentationSection,
    "probe": ProbeSection,
    "attack": AttackSection,
    "sweep": SweepSection,
    "gradcheck": GradcheckSection,
}
SWEEP_AXES = tuple(f.name for f in fields(SweepSection))


def _check_type(value, default, path):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigurationError(
            f"expected {type(default).__name__}, got {type(value).__name__} {value!r}", field=path
        )
    return value


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigurationError("expected a table", field=prefix)
    defaults = cls()
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigurationError("unknown key", field=f"{prefix}.{key}")
    kw = {k: _check_type(v, getattr(defaults, k), f"{prefix}.{k}") for k, v in data.items()}
    return replace(defaults, **kw)


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    paths: PathsSection = field(default_factory=PathsSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    data: DataSection = field(default_factory=DataSection)
    train: TrainSection = field(default_factory=TrainSection)
    augmentation: AugmentationSection = field(default_factory=AugmentationSection)
    probe: ProbeSection = field(default_factory=ProbeSection)
    attack: AttackSection = field(default_factory=AttackSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    gradcheck: GradcheckSection = field(default_factory=GradcheckSection)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kw = {}
        for top in ("seed", "out"):
            if top in d:
                kw[top] = _check_type(d.pop(top), getattr(cls(), top), top)
        for name, value in d.items():
            if name not in SECTIONS:
                raise ConfigurationError("unknown section or key", field=name)
            kw[name] = _build(SECTIONS[name], value, name)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def to_dict(self):
        return asdict(self)

    def validate(self):
        """Build every domain config once so errors surface with a field path."""
        self.train_config()
        self.augmentation_config()
        self.probe_config()
        self.attack_spec()
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative", field="seed")
        if not 0 < self.data.test_fraction < 1:
            raise ConfigurationError("must lie in (0, 1)", field="data.test_fraction")
        if self.attack.n_each < 1:
            raise ConfigurationError("must be >= 1", field="attack.n_each")
        for key in ("data", "target"):
            p = getattr(self.paths, key)
            if p and not Path(p).exists():
                raise ConfigurationError(f"file not found: {p}", field=f"paths.{key}")

    def _wrap(self, section, fn):
        try:
            return fn()
        except ConfigurationError as exc:
            raise ConfigurationError(
                str(exc), field=f"{section}.{exc.field}" if exc.field else section
            ) from None

    def train_config(self) -> TrainConfig:
        return self._wrap("train", lambda: TrainConfig(seed=self.seed, **asdict(self.train)))

    def augmentation_config(self) -> AugmentationConfig:
        return self._wrap(
            "augmentation", lambda: AugmentationConfig(seed=self.seed, **asdict(self.augmentation))
        )

    def probe_config(self) -> ProbeConfig:
        kw = asdict(self.probe)
        kw["lr"] = kw["lr"] or None
        return self._wrap("probe", lambda: ProbeConfig(**kw))

    def attack_spec(self) -> AttackSpec:
        for name, step in self.attack.steps.items():
            if name not in FEATURE_BOUNDS:
                raise ConfigurationError("not a perturbable feature", field=f"attack.steps.{name}")
            if isinstance(step, bool) or not isinstance(step, (int, float)):
                raise ConfigurationError("step must be a number", field=f"attack.steps.{name}")
        return self._wrap(
            "attack",
            lambda: AttackSpec.default(
                self.attack.group, self.attack.max_queries_per_sample, self.seed, self.attack.steps
            ),
        )

    def schema(self) -> FeatureSchema:
        return FeatureSchema(
            USER_META_NAMES, self.synthetic.embedding_dim, TWEET_META_NAMES, TEMPORAL_NAMES
        )

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.paths.checkpoint) if self.paths.checkpoint else Path(self.out) / "checkpoint.json"


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``key.path=value`` strings; values parse as TOML, else string."""
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value", field=item)
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = raw
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigurationError("cannot descend into a scalar", field=key)
            node[p] = nxt = dict(nxt)
            node = nxt
        node[parts[-1]] = _parse_value(text.strip())
    return raw


def load_config(path=None, overrides=(), seed=None, out=None) -> RunConfig:
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}", field="--config")
        try:
            raw = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}", field="--config") from None
    raw = apply_overrides(raw, overrides)
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = str(out)
    return RunConfig.from_dict(raw)
