"""JSON checkpoints: every tensor, normalizer, probe, configs and history.

Floats are written with ``repr`` round-tripping, keys sorted, so identical
runs give byte-identical files. Per-epoch wall-clock is not stored.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .augmentation import AugmentationConfig
from .dataset import NormStats
from .errors import ConfigurationError, ParseError
from .evaluation import FrozenPipeline, ProbeConfig, ProbeParams
from .model import ModelParams, TrainConfig, TrainHistory
from .schema import FeatureSchema

FORMAT = "botsscl-checkpoint"
VERSION = 1


def _tensor(a):
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _array(d):
    return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])


def to_dict(schema: FeatureSchema, pipeline: FrozenPipeline, train_cfg: TrainConfig,
            aug_cfg: AugmentationConfig, probe_cfg: ProbeConfig | None = None,
            history: TrainHistory | None = None, seed: int = 0):
    params = pipeline.params
    return {
        "format": FORMAT,
        "version": VERSION,
        "seed": int(seed),
        "d": int(params.d),
        "out_dim": int(params.out_dim),
        "schema": schema.to_dict(),
        "schema_hash": schema.fingerprint(),
        "norm_stats": pipeline.stats.to_dict(),
        "tensors": {k: _tensor(v) for k, v in params.tensors().items()},
        "params_fingerprint": params.fingerprint(),
        "probe": pipeline.probe.to_dict(),
        "train_config": train_cfg.to_dict(),
        "augmentation_config": aug_cfg.to_dict(),
        "probe_config": (probe_cfg or ProbeConfig()).to_dict(),
        "history": history.to_dict(normalized=True) if history is not None else None,
    }


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_checkpoint(path, schema, pipeline, train_cfg, aug_cfg, probe_cfg=None, history=None, seed=0):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(to_dict(schema, pipeline, train_cfg, aug_cfg, probe_cfg, history, seed)))
    return path


class Checkpoint:
    """Loaded checkpoint; ``pipeline`` is ready for ``predict``."""

    def __init__(self, raw):
        self.raw = raw
        self.schema = FeatureSchema.from_dict(raw["schema"])
        if self.schema.fingerprint() != raw["schema_hash"]:
            raise ParseError("checkpoint schema hash does not match its schema")
        params = ModelParams.from_tensors({k: _array(v) for k, v in raw["tensors"].items()})
        if params.fingerprint() != raw["params_fingerprint"]:
            raise ParseError("checkpoint tensors do not match their fingerprint")
        self.pipeline = FrozenPipeline(
            NormStats.from_dict(raw["norm_stats"]), params, ProbeParams.from_dict(raw["probe"])
        )
        self.train_config = TrainConfig(**raw["train_config"])
        self.augmentation_config = AugmentationConfig(**raw["augmentation_config"])
        self.probe_config = ProbeConfig(**raw["probe_config"])
        self.seed = raw["seed"]

    @property
    def params(self):
        return self.pipeline.params

    def check_schema(self, schema: FeatureSchema):
        if schema.fingerprint() != self.schema.fingerprint():
            raise ConfigurationError(
                f"dataset schema {schema.fingerprint()} does not match checkpoint schema "
                f"{self.schema.fingerprint()}"
            )


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"checkpoint not found: {path}", field="paths.checkpoint")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc.msg})", row=exc.lineno) from exc
    if raw.get("format") != FORMAT:
        raise ParseError(f"{path}: not a checkpoint file")
    if raw.get("version") != VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {raw.get('version')!r}")
    try:
        return Checkpoint(raw)
    except KeyError as exc:
        raise ParseError(f"{path}: missing field {exc.args[0]!r}") from exc
