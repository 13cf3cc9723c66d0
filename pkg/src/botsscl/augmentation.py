"""Positive-view generation for tabular contrastive training.

All three augmentations act on the normalized raw feature vector, before the
representation layer.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import _backend
from .errors import ConfigurationError, DimensionError

log = logging.getLogger(__name__)

KINDS = ("corruption", "imputation", "linear")
VIEW_MODES = ("one_view", "two_view")


@dataclass(frozen=True)
class AugmentationConfig:
    kind: str = "corruption"
    corruption_rate: float = 0.6
    nan_rate: float = 0.3
    mice_iterations: int = 5
    view_mode: str = "one_view"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}", field="kind")
        if self.view_mode not in VIEW_MODES:
            raise ConfigurationError(f"view_mode must be one of {VIEW_MODES}", field="view_mode")
        for name in ("corruption_rate", "nan_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]", field=name)
        if int(self.mice_iterations) < 1:
            raise ConfigurationError("mice_iterations must be >= 1", field="mice_iterations")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class LinearAugParams:
    weight: np.ndarray
    bias: np.ndarray
    seed: int = 0

    def __post_init__(self):
        w = np.asarray(self.weight)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or self.bias.shape != (w.shape[0],):
            raise DimensionError("linear augmentation needs a square weight and matching bias")


def init_linear_aug(n, seed) -> LinearAugParams:
    rng = np.random.default_rng([seed, 0xA06])
    return LinearAugParams(rng.standard_normal((n, n)) / np.sqrt(n), np.zeros(n), seed)


def replacement_count(rate, width):
    """round-half-up(rate * width), at least 1 whenever rate > 0."""
    if rate <= 0:
        return 0
    return min(width, max(1, int(math.floor(rate * width + 0.5))))


def corrupt_many(x, train_rows, rate, rng):
    """Corrupt every row of ``x``; returns ``(out, replaced_cols)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    train_rows = np.asarray(train_rows, dtype=np.float64)
    if len(train_rows) == 0:
        raise ConfigurationError("corruption needs a non-empty training set")
    b, w = x.shape
    if train_rows.shape[1] != w:
        raise DimensionError(f"sample width {w} != training width {train_rows.shape[1]}")
    k = replacement_count(rate, w)
    if k == 0:
        return x.copy(), np.empty((b, 0), dtype=np.int64)
    offsets = rng.integers(0, w - np.arange(k), size=(b, k))
    donors = rng.integers(0, len(train_rows), size=(b, k))
    return _backend.corrupt_batch(x, train_rows, offsets, donors)


def corrupt(x, train, rate, rng):
    """Replace ``replacement_count(rate, width)`` random coordinates of ``x``
    with the same column of independently drawn training rows."""
    rows = getattr(train, "rows", train)
    x = np.asarray(x, dtype=np.float64)
    return corrupt_many(x[None, :], rows, rate, rng)[0][0]


class ChainedImputer:
    """Fixed-iteration chained least-squares imputation.

    One regression per column (on every other column, with intercept) is
    fitted once over the training matrix and reused for every sample.
    Rank-deficient regressions fall back to the column mean.
    """

    def __init__(self, train_rows):
        train_rows = np.asarray(train_rows, dtype=np.float64)
        n, w = train_rows.shape
        self.width = w
        self.means = train_rows.mean(axis=0)
        self.coef = np.zeros((w, w))  # coef[j, j] stays 0
        self.intercept = self.means.copy()
        self.fallback = np.zeros(w, dtype=bool)
        ones = np.ones((n, 1))
        for j in range(w):
            others = np.delete(np.arange(w), j)
            design = np.hstack([ones, train_rows[:, others]])
            sol, _, rank, _ = np.linalg.lstsq(design, train_rows[:, j], rcond=None)
            if rank < design.shape[1]:
                self.fallback[j] = True
                continue
            self.intercept[j] = sol[0]
            self.coef[j, others] = sol[1:]
        if self.fallback.any():
            log.info("chained imputation: %d columns use mean fallback", int(self.fallback.sum()))

    def impute(self, x, mask, iterations):
        """``x`` (b, w), ``mask`` (b, w) bool of entries to re-estimate."""
        out = np.array(x, dtype=np.float64, copy=True)
        out[mask] = np.broadcast_to(self.means, out.shape)[mask]
        for _ in range(iterations):
            for j in range(self.width):
                rows = mask[:, j]
                if not rows.any() or self.fallback[j]:
                    continue
                out[rows, j] = self.intercept[j] + out[rows] @ self.coef[j]
        return out


def impute_many(x, imputer: ChainedImputer, nan_rate, iterations, rng):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    b, w = x.shape
    m = int(math.floor(nan_rate * w + 0.5))
    if m == 0:
        return x.copy()
    keys = rng.random((b, w))
    cols = np.argsort(keys, axis=1, kind="stable")[:, :m]
    mask = np.zeros((b, w), dtype=bool)
    mask[np.arange(b)[:, None], cols] = True
    return imputer.impute(x, mask, iterations)


def impute_augment(x, train, nan_rate, iters, rng, imputer=None):
    """Mask ``round(nan_rate * width)`` coordinates and re-estimate them."""
    rows = getattr(train, "rows", train)
    imputer = imputer or ChainedImputer(rows)
    x = np.asarray(x, dtype=np.float64)
    return impute_many(x[None, :], imputer, nan_rate, iters, rng)[0]


def linear_augment(params: LinearAugParams, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.weight.shape[1]:
        raise DimensionError(f"input width {x.shape[-1]} != {params.weight.shape[1]}")
    return x @ params.weight.T + params.bias


class Augmenter:
    """Binds an ``AugmentationConfig`` to a training matrix.

    Builds the per-run state (the chained-equation regressions or the fixed
    linear map) once so that ``make_views`` stays cheap per batch.
    """

    def __init__(self, cfg: AugmentationConfig, train_rows):
        self.cfg = cfg
        self.train_rows = np.asarray(getattr(train_rows, "rows", train_rows), dtype=np.float64)
        self.imputer = None
        self.linear = None
        if cfg.kind == "imputation":
            self.imputer = ChainedImputer(self.train_rows)
        elif cfg.kind == "linear":
            self.linear = init_linear_aug(self.train_rows.shape[1], cfg.seed)

    def augment(self, x, rng):
        cfg = self.cfg
        if cfg.kind == "corruption":
            return corrupt_many(x, self.train_rows, cfg.corruption_rate, rng)[0]
        if cfg.kind == "imputation":
            return impute_many(x, self.imputer, cfg.nan_rate, cfg.mice_iterations, rng)
        return linear_augment(self.linear, np.atleast_2d(x))

    def make_views(self, batch, rng):
        """Return ``(left, right)``; row ``i`` of each is a positive pair."""
        batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        if len(batch) == 0:
            raise ConfigurationError("cannot build views for an empty batch")
        if self.cfg.view_mode == "one_view":
            return batch.copy(), self.augment(batch, rng)
        return self.augment(batch, rng), self.augment(batch, rng)


def make_views(batch, cfg: AugmentationConfig, train, rng):
    return Augmenter(cfg, train).make_views(batch, rng)
