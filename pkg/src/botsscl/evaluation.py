"""Linear-probe evaluation, classification metrics, LOBO and gradient checks."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .augmentation import AugmentationConfig
from .dataset import Dataset, NormStats, apply_normalizer, fit_normalizer, normalize_rows, split_dataset
from .errors import ConfigurationError, DimensionError
from .model import (
    AdamState,
    ModelParams,
    TrainConfig,
    adam_step,
    backward_from_h,
    batch_loss,
    embed,
    forward,
    loss_and_grads,
    train,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProbeConfig:
    max_iter: int = 10_000
    tol: float = 1e-6
    lr: float | None = None  # None -> 1 / Lipschitz bound of the loss
    fine_tune: bool = False
    fine_tune_epochs: int = 100
    fine_tune_lr: float = 0.001

    def to_dict(self):
        return asdict(self)


@dataclass
class ProbeParams:
    weight: np.ndarray
    bias: float
    class_weights: tuple
    epochs: int = 0
    lr: float = 0.0
    converged: bool = False

    def to_dict(self):
        return {
            "weight": self.weight.tolist(),
            "bias": float(self.bias),
            "class_weights": list(self.class_weights),
            "epochs": int(self.epochs),
            "lr": float(self.lr),
            "converged": bool(self.converged),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["weight"], dtype=np.float64),
            float(d["bias"]),
            tuple(d["class_weights"]),
            int(d.get("epochs", 0)),
            float(d.get("lr", 0.0)),
            bool(d.get("converged", False)),
        )


def balanced_class_weights(labels):
    """``n_total / (2 * n_class)`` for classes 0 and 1."""
    labels = np.asarray(labels)
    n = len(labels)
    counts = np.array([np.sum(labels == 0), np.sum(labels == 1)])
    if np.any(counts == 0):
        raise ConfigurationError("probe needs both classes present")
    return tuple(float(n / (2 * c)) for c in counts)


def _sigmoid(t):
    out = np.empty_like(t, dtype=np.float64)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def fit_probe(embeddings, labels, cfg: ProbeConfig | None = None) -> ProbeParams:
    """Class-balanced logistic regression by full-batch gradient descent.

    Features are standardized internally for conditioning; the returned
    weights act on the raw embeddings.
    """
    cfg = cfg or ProbeConfig()
    x = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise DimensionError("embeddings and labels differ in length")
    cw = balanced_class_weights(y)
    sw = np.where(y == 1, cw[1], cw[0]) / len(y)

    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    xs = np.hstack([(x - mu) / sd, np.ones((len(x), 1))])
    if cfg.lr is None:
        hess_bound = 0.25 * (xs.T * sw) @ xs
        lr = 1.0 / max(np.linalg.eigvalsh(hess_bound)[-1], 1e-12)
    else:
        lr = float(cfg.lr)

    theta = np.zeros(xs.shape[1])
    converged, it = False, 0
    for it in range(1, int(cfg.max_iter) + 1):
        p = _sigmoid(xs @ theta)
        grad = xs.T @ (sw * (p - y))
        if np.linalg.norm(grad) < cfg.tol:
            converged = True
            break
        theta -= lr * grad
    w = theta[:-1] / sd
    b = theta[-1] - float(np.dot(theta[:-1], mu / sd))
    return ProbeParams(w, b, cw, it, lr, converged)


def predict(probe: ProbeParams, h):
    """Return ``(labels, scores)``; label is 1 (bot) iff score >= 0.5."""
    h = np.asarray(h, dtype=np.float64)
    t = np.atleast_1d(h @ probe.weight + probe.bias)
    scores = _sigmoid(t)
    labels = (scores >= 0.5).astype(np.int64)
    if h.ndim == 1:
        return int(labels[0]), float(scores[0])
    return labels, scores


def fine_tune(params: ModelParams, probe: ProbeParams, rows, labels, cfg: ProbeConfig):
    """Jointly update encoder, representation and probe on the class-weighted
    cross-entropy. Works on copies; the inputs are left untouched."""
    params = params.copy()
    w = probe.weight.copy()
    b = np.array([probe.bias])
    y = np.asarray(labels, dtype=np.float64)
    cw = balanced_class_weights(y)
    sw = np.where(y == 1, cw[1], cw[0]) / len(y)
    state = AdamState.zeros_like(params)
    state.m.update({"probe.w": np.zeros_like(w), "probe.b": np.zeros(1)})
    state.v.update({"probe.w": np.zeros_like(w), "probe.b": np.zeros(1)})

    class _Joint:
        def tensors(self_inner):
            return {**params.tensors(), "probe.w": w, "probe.b": b}

    joint = _Joint()
    for _ in range(int(cfg.fine_tune_epochs)):
        cache = forward(params, rows)
        p = _sigmoid(cache.h @ w + b[0])
        dt = sw * (p - y)
        grads = backward_from_h(params, cache, np.outer(dt, w))
        grads = {k: grads.get(k, np.zeros_like(v)) for k, v in params.tensors().items()}
        grads["probe.w"] = cache.h.T @ dt
        grads["probe.b"] = np.array([dt.sum()])
        adam_step(state, joint, grads, cfg.fine_tune_lr)
    return params, ProbeParams(w, float(b[0]), cw, probe.epochs, probe.lr, probe.converged)


@dataclass
class MetricsReport:
    tn: int
    fp: int
    fn: int
    tp: int
    per_class: dict = field(default_factory=dict)
    macro: dict = field(default_factory=dict)
    weighted: dict = field(default_factory=dict)
    accuracy: float = 0.0

    @property
    def macro_f1(self):
        return self.macro["f1"]

    def to_dict(self):
        return {
            "confusion": {"tn": self.tn, "fp": self.fp, "fn": self.fn, "tp": self.tp},
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "macro": self.macro,
            "weighted": self.weighted,
            "accuracy": self.accuracy,
        }

    @classmethod
    def from_counts(cls, tn, fp, fn, tp):
        def ratio(a, b):
            return a / b if b else 0.0

        def prf(tp_, fp_, fn_):
            p = ratio(tp_, tp_ + fp_)
            r = ratio(tp_, tp_ + fn_)
            return {"precision": p, "recall": r, "f1": ratio(2 * p * r, p + r)}

        per = {
            0: {**prf(tn, fn, fp), "support": tn + fp},
            1: {**prf(tp, fp, fn), "support": tp + fn},
        }
        total = tn + fp + fn + tp
        keys = ("precision", "recall", "f1")
        macro = {k: (per[0][k] + per[1][k]) / 2 for k in keys}
        weighted = {
            k: ratio(per[0][k] * per[0]["support"] + per[1][k] * per[1]["support"], total)
            for k in keys
        }
        return cls(int(tn), int(fp), int(fn), int(tp), per, macro, weighted, ratio(tn + tp, total))


def metrics(preds, labels) -> MetricsReport:
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise DimensionError(f"{preds.shape} predictions vs {labels.shape} labels")
    if preds.size < 1:
        raise DimensionError("metrics need at least one prediction")
    tp = int(np.sum((preds == 1) & (labels == 1)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    return MetricsReport.from_counts(tn, fp, fn, tp)


class FrozenPipeline:
    """Normalizer + encoder + probe, queried on raw feature rows."""

    def __init__(self, stats: NormStats, params: ModelParams, probe: ProbeParams):
        self.stats = stats
        self.params = params
        self.probe = probe

    def embed_raw(self, rows):
        return embed(self.params, normalize_rows(self.stats, np.atleast_2d(rows)))

    def predict(self, rows):
        """Labels for raw rows (1 = bot)."""
        return predict(self.probe, self.embed_raw(rows))[0]

    def scores(self, rows):
        return predict(self.probe, self.embed_raw(rows))[1]


def fit_pipeline(train_ds: Dataset, train_cfg: TrainConfig, aug_cfg: AugmentationConfig,
                 probe_cfg: ProbeConfig | None = None, progress=None):
    """Normalize, contrastive-train and probe on ``train_ds``.

    Returns ``(pipeline, history)``.
    """
    probe_cfg = probe_cfg or ProbeConfig()
    stats = fit_normalizer(train_ds)
    norm = apply_normalizer(stats, train_ds)
    params, hist = train(norm, train_cfg, aug_cfg, progress=progress)
    probe = fit_probe(embed(params, norm.rows), norm.labels, probe_cfg)
    if probe_cfg.fine_tune:
        params, probe = fine_tune(params, probe, norm.rows, norm.labels, probe_cfg)
    return FrozenPipeline(stats, params, probe), hist


def evaluate(pipeline: FrozenPipeline, ds: Dataset) -> MetricsReport:
    if ds.labels is None:
        raise ConfigurationError("evaluation needs labels")
    return metrics(pipeline.predict(ds.rows), ds.labels)


def lobo(train_ds: Dataset, target_ds: Dataset, model_cfg: TrainConfig, aug_cfg: AugmentationConfig,
         probe_cfg: ProbeConfig | None = None, test_fraction=0.2, seed=0):
    """Fit on the train split of ``train_ds``; score the test split of ``target_ds``.

    With ``target_ds is train_ds`` this is exactly the within-dataset pipeline.
    """
    if train_ds.schema != target_ds.schema:
        raise ConfigurationError("LOBO datasets must share a schema")
    fit_part, _ = split_dataset(train_ds, test_fraction, seed)
    _, target_test = split_dataset(target_ds, test_fraction, seed)
    pipeline, _ = fit_pipeline(fit_part, model_cfg, aug_cfg, probe_cfg)
    return evaluate(pipeline, target_test)


def relative_error(analytic, numeric, floor=1e-4):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps round-off on near-zero gradients (absolute error around
    1e-10 for eps=1e-5) from reading as a large relative error.
    """
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradients(loss_kind, params: ModelParams, batch, eps=1e-5, tau=1.0):
    left, right, labels = batch
    work = params.copy()
    out = {}
    for name, t in work.tensors().items():
        g = np.zeros_like(t)
        for i in range(t.size):
            old = t.flat[i]
            t.flat[i] = old + eps
            lp = batch_loss(work, left, right, loss_kind, tau, labels)
            t.flat[i] = old - eps
            lm = batch_loss(work, left, right, loss_kind, tau, labels)
            t.flat[i] = old
            g.flat[i] = (lp - lm) / (2 * eps)
        out[name] = g
    return out


def grad_check(loss_kind, params: ModelParams, batch, eps=1e-5, tau=1.0, analytic=None, per_tensor=False):
    """Worst per-scalar relative error between analytic and central-difference
    gradients. ``batch`` is ``(left, right, labels)``."""
    left, right, labels = batch
    if analytic is None:
        _, analytic = loss_and_grads(params, left, right, loss_kind, tau, labels)
    numeric = numeric_gradients(loss_kind, params, batch, eps, tau)
    errs = {k: float(relative_error(analytic[k], numeric[k]).max()) for k in numeric}
    worst = max(errs.values())
    return (worst, errs) if per_tensor else worst
