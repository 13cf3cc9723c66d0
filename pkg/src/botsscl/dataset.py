"""Dataset container, z-score normalization, splitting, synthetic data and CSV I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, DimensionError, ParseError
from .schema import FeatureSchema

STD_FLOOR = 1e-12


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Row-major feature matrix with optional binary labels (1 = bot)."""

    schema: FeatureSchema
    rows: np.ndarray
    labels: np.ndarray | None = None
    ids: tuple = ()
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.schema.total_width:
            raise DimensionError(
                f"rows must have shape (n, {self.schema.total_width}), got {rows.shape}"
            )
        if not np.all(np.isfinite(rows)):
            bad = np.argwhere(~np.isfinite(rows))[0]
            raise DataError(
                f"non-finite value at row {bad[0]}, column "
                f"{self.schema.column_names[bad[1]]!r}"
            )
        object.__setattr__(self, "rows", _frozen(rows))
        n = rows.shape[0]
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise DimensionError(f"labels length {labels.shape} != row count {n}")
            bad = ~np.isin(labels, (0, 1))
            if bad.any():
                i = int(np.argmax(bad))
                ident = self.ids[i] if self.ids else i
                raise DataError(f"label {labels[i]!r} for id {ident!r} is not 0/1")
            object.__setattr__(self, "labels", _frozen(labels, np.int64))
        ids = tuple(self.ids) if len(self.ids) else tuple(f"u{i}" for i in range(n))
        if len(ids) != n:
            raise DimensionError(f"{len(ids)} ids for {n} rows")
        object.__setattr__(self, "ids", tuple(str(i) for i in ids))

    def __len__(self):
        return self.rows.shape[0]

    @property
    def width(self):
        return self.rows.shape[1]

    def subset(self, index):
        index = np.asarray(index, dtype=np.int64)
        return Dataset(
            self.schema,
            self.rows[index],
            None if self.labels is None else self.labels[index],
            tuple(self.ids[i] for i in index),
            dict(self.provenance),
        )

    def with_rows(self, rows, **provenance):
        return Dataset(self.schema, rows, self.labels, self.ids, {**self.provenance, **provenance})

    def equals(self, other):
        """Value equality on every field."""
        if self.schema != other.schema or self.ids != other.ids:
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        if self.labels is not None and not np.array_equal(self.labels, other.labels):
            return False
        return np.array_equal(self.rows, other.rows)


@dataclass(frozen=True, eq=False)
class NormStats:
    means: np.ndarray
    stds: np.ndarray
    normalized_columns: tuple
    schema_fingerprint: str

    def to_dict(self):
        return {
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "normalized_columns": list(self.normalized_columns),
            "schema_fingerprint": self.schema_fingerprint,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            _frozen(d["means"]),
            _frozen(d["stds"]),
            tuple(int(i) for i in d["normalized_columns"]),
            d["schema_fingerprint"],
        )


def fit_normalizer(train: Dataset) -> NormStats:
    if len(train) < 2:
        raise ConfigurationError("fit_normalizer needs at least 2 rows")
    cols = train.schema.normalized_columns
    x = train.rows[:, cols]
    means = x.mean(axis=0)
    stds = x.std(axis=0)  # population (ddof=0)
    stds = np.where(stds < STD_FLOOR, 1.0, stds)
    return NormStats(_frozen(means), _frozen(stds), cols, train.schema.fingerprint())


def normalize_rows(stats: NormStats, rows):
    """Normalize a raw matrix (or single row) without building a Dataset."""
    rows = np.array(rows, dtype=np.float64, copy=True)
    cols = list(stats.normalized_columns)
    rows[..., cols] = (rows[..., cols] - stats.means) / stats.stds
    return rows


def apply_normalizer(stats: NormStats, ds: Dataset) -> Dataset:
    if ds.schema.fingerprint() != stats.schema_fingerprint:
        raise ConfigurationError("dataset schema does not match normalizer schema")
    return ds.with_rows(normalize_rows(stats, ds.rows), normalized=True)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split_dataset(ds: Dataset, test_fraction: float, seed: int):
    """Stratified, seeded train/test split; returns ``(train, test)``."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigurationError("test_fraction must lie in (0, 1)", field="test_fraction")
    if ds.labels is None:
        raise ConfigurationError("split_dataset requires labels")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in (0, 1):
        members = np.flatnonzero(ds.labels == cls)
        if len(members) == 0:
            continue
        if len(members) < 2:
            raise ConfigurationError(f"class {cls} has fewer than 2 members")
        members = members[rng.permutation(len(members))]
        n_test = min(max(_round_half_up(len(members) * test_fraction), 1), len(members) - 1)
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return ds.subset(train_idx), ds.subset(test_idx)


@dataclass(frozen=True)
class SyntheticConfig:
    """Two-Gaussian stand-in for labelled account data.

    ``shift`` adds a constant offset (in within-class std units) to every
    column, ``covariance_mix`` blends random cross-column correlation into the
    noise while keeping unit marginal variance. ``structure_seed`` fixes the
    class direction and raw-unit scaling so two configs can share class
    structure while drawing different samples.
    """

    n_per_class: int = 1000
    class_separation: float = 4.0
    seed: int = 0
    schema: FeatureSchema = field(default_factory=FeatureSchema)
    shift: float = 0.0
    covariance_mix: float = 0.0
    structure_seed: int | None = None

    def __post_init__(self):
        if int(self.n_per_class) < 2:
            raise ConfigurationError("n_per_class must be >= 2", field="n_per_class")
        if not self.class_separation >= 0:
            raise ConfigurationError("class_separation must be >= 0", field="class_separation")
        if not 0.0 <= self.covariance_mix:
            raise ConfigurationError("covariance_mix must be >= 0", field="covariance_mix")


def _structure(schema, seed):
    rng = np.random.default_rng([seed, 0x5EED])
    w = schema.total_width
    direction = rng.standard_normal(w)
    direction /= np.linalg.norm(direction)
    loc = rng.uniform(0.0, 50.0, w)
    scale = np.exp(rng.uniform(np.log(0.5), np.log(50.0), w))
    emb = schema.slices()["embedding"]
    # embedding block mimics averaged sentence-encoder outputs
    loc[emb] = 0.0
    scale[emb] = 0.1
    return direction, loc, scale, rng


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    schema = cfg.schema
    w = schema.total_width
    structure_seed = cfg.seed if cfg.structure_seed is None else cfg.structure_seed
    direction, loc, scale, srng = _structure(schema, structure_seed)
    mix = None
    if cfg.covariance_mix > 0:
        mix = np.eye(w) + cfg.covariance_mix * srng.standard_normal((w, w)) / np.sqrt(w)
        mix /= np.linalg.norm(mix, axis=1, keepdims=True)

    rng = np.random.default_rng(cfg.seed)
    n = int(cfg.n_per_class)
    labels = np.repeat(np.array([0, 1]), n)
    noise = rng.standard_normal((2 * n, w))
    if mix is not None:
        noise = noise @ mix.T
    z = noise + cfg.shift + np.outer(labels - 0.5, cfg.class_separation * direction)
    order = rng.permutation(2 * n)
    rows = loc + scale * z[order]
    labels = labels[order]
    ids = tuple(f"acct_{i:06d}" for i in range(2 * n))
    prov = {
        "generator": "synthetic",
        "n_per_class": n,
        "class_separation": float(cfg.class_separation),
        "seed": int(cfg.seed),
        "shift": float(cfg.shift),
        "covariance_mix": float(cfg.covariance_mix),
        "structure_seed": int(structure_seed),
    }
    return Dataset(schema, rows, labels, ids, prov)


def make_lobo_pair(cfg: SyntheticConfig, shift=0.5, covariance_mix=0.5):
    """Two datasets with shared class structure; the second has shifted
    marginals and remixed noise covariance."""
    a = generate_synthetic(cfg)
    b_cfg = SyntheticConfig(
        n_per_class=cfg.n_per_class,
        class_separation=cfg.class_separation,
        seed=cfg.seed + 1,
        schema=cfg.schema,
        shift=shift,
        covariance_mix=covariance_mix,
        structure_seed=cfg.seed if cfg.structure_seed is None else cfg.structure_seed,
    )
    return a, generate_synthetic(b_cfg)


def _sidecar(path):
    path = Path(path)
    return path.with_name(path.name + ".schema.json")


def save_dataset(ds: Dataset, path):
    """Write ``path`` (CSV) and ``path + '.schema.json'``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema": ds.schema.to_dict(),
        "has_labels": ds.labels is not None,
        "provenance": ds.provenance,
    }
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["id", *ds.schema.column_names, "label"])
        for i, row in enumerate(ds.rows):
            label = "" if ds.labels is None else str(int(ds.labels[i]))
            wr.writerow([ds.ids[i], *(repr(float(v)) for v in row), label])


def load_dataset(path) -> Dataset:
    path = Path(path)
    side = _sidecar(path)
    if not path.exists():
        raise ParseError(f"dataset file {str(path)!r} does not exist")
    if not side.exists():
        raise ParseError(f"schema sidecar {str(side)!r} does not exist")
    try:
        meta = json.loads(side.read_text())
        schema = FeatureSchema.from_dict(meta["schema"])
        has_labels = bool(meta.get("has_labels", True))
    except (json.JSONDecodeError, KeyError, TypeError, ConfigurationError) as e:
        raise ParseError(f"malformed schema sidecar: {e}") from None

    expected = ["id", *schema.column_names, "label"]
    ids, rows, labels = [], [], []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != expected:
            if header is None:
                raise ParseError("empty dataset file", row=1)
            for j, (got, want) in enumerate(zip(header, expected)):
                if got != want:
                    raise ParseError(f"header mismatch: expected {want!r}, got {got!r}", row=1, column=got)
            raise ParseError(
                f"header has {len(header)} columns, schema implies {len(expected)}", row=1
            )
        for lineno, rec in enumerate(rd, start=2):
            if len(rec) != len(expected):
                raise ParseError(
                    f"expected {len(expected)} columns, got {len(rec)}", row=lineno
                )
            ident = rec[0]
            vals = []
            for name, cell in zip(expected[1:-1], rec[1:-1]):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"not a number: {cell!r}", row=lineno, column=name) from None
                if not math.isfinite(v):
                    raise ParseError(f"non-finite value {cell!r}", row=lineno, column=name)
                vals.append(v)
            lab = rec[-1].strip()
            if has_labels:
                if lab not in ("0", "1"):
                    raise ParseError(
                        f"label {lab!r} for id {ident!r} is not 0/1", row=lineno, column="label"
                    )
                labels.append(int(lab))
            elif lab:
                raise ParseError(f"unexpected label for id {ident!r}", row=lineno, column="label")
            ids.append(ident)
            rows.append(vals)
    rows = np.array(rows, dtype=np.float64).reshape(len(rows), schema.total_width)
    return Dataset(
        schema,
        rows,
        np.array(labels, dtype=np.int64) if has_labels else None,
        tuple(ids),
        meta.get("provenance", {}),
    )
