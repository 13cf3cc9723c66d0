"""Twin-MLP contrastive encoder: forward pass, losses, exact gradients,
optimizers and the training loop.

The network maps a normalized raw row through the four-block representation
(width ``4d``), two ReLU layers of width ``d`` (the encoder output ``h``) and
a linear projection head whose output is L2-normalized (``z``).
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _backend
from .augmentation import AugmentationConfig, Augmenter
from .errors import ConfigurationError, DimensionError
from .representation import (
    BLOCKS,
    LinearBlock,
    RepresentationParams,
    build_representation,
    init_representation,
    representation_backward,
)

log = logging.getLogger(__name__)

LOSSES = ("self", "sup", "sup_mod")
OPTIMIZERS = ("adam", "sgd")
_MODE = {"self": _backend.MODE_SELF, "sup": _backend.MODE_SUP, "sup_mod": _backend.MODE_SUP_MOD}


@dataclass
class ModelParams:
    rep: RepresentationParams
    enc_w1: np.ndarray
    enc_b1: np.ndarray
    enc_w2: np.ndarray
    enc_b2: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray

    def __post_init__(self):
        d = self.rep.d
        if self.enc_w1.shape != (d, 4 * d) or self.enc_w2.shape != (d, d):
            raise DimensionError("encoder layers must be (d, 4d) and (d, d)")
        if self.head_w.shape[1] != d or self.head_b.shape != (self.head_w.shape[0],):
            raise DimensionError("projection head must take d inputs")

    @property
    def d(self):
        return self.rep.d

    @property
    def out_dim(self):
        return self.head_w.shape[0]

    def tensors(self):
        """Ordered name -> array mapping over every trainable tensor."""
        out = {}
        for name, blk in zip(BLOCKS, self.rep.blocks):
            out[f"rep.{name}.weight"] = blk.weight
            out[f"rep.{name}.bias"] = blk.bias
        out.update(
            {
                "enc.w1": self.enc_w1,
                "enc.b1": self.enc_b1,
                "enc.w2": self.enc_w2,
                "enc.b2": self.enc_b2,
                "head.w": self.head_w,
                "head.b": self.head_b,
            }
        )
        return out

    def copy(self):
        return ModelParams.from_tensors({k: v.copy() for k, v in self.tensors().items()})

    @classmethod
    def from_tensors(cls, t):
        blocks = [
            LinearBlock(np.asarray(t[f"rep.{n}.weight"], dtype=np.float64), np.asarray(t[f"rep.{n}.bias"], dtype=np.float64))
            for n in BLOCKS
        ]
        d = blocks[0].weight.shape[0]
        arr = lambda k: np.asarray(t[k], dtype=np.float64)  # noqa: E731
        return cls(
            RepresentationParams(d, *blocks),
            arr("enc.w1"), arr("enc.b1"), arr("enc.w2"), arr("enc.b2"), arr("head.w"), arr("head.b"),
        )

    def fingerprint(self):
        h = hashlib.sha256()
        for name, a in self.tensors().items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
        return h.hexdigest()


def init_model(widths, d=16, out_dim=64, seed=0) -> ModelParams:
    rng = np.random.default_rng([seed, 0x1417])
    rep = init_representation(widths, d, rng)

    def dense(n_out, n_in, bias):
        return rng.standard_normal((n_out, n_in)) / np.sqrt(n_in), np.full(n_out, bias)

    # small positive encoder bias keeps ReLUs alive; a random head bias keeps
    # the projection away from the zero vector
    w1, b1 = dense(d, 4 * d, 0.1)
    w2, b2 = dense(d, d, 0.1)
    hw, _ = dense(out_dim, d, 0.0)
    hb = rng.standard_normal(out_dim) / np.sqrt(d)
    return ModelParams(rep, w1, b1, w2, b2, hw, hb)


@dataclass
class ForwardCache:
    x: np.ndarray
    r: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    a2: np.ndarray
    h: np.ndarray
    u: np.ndarray
    norm: np.ndarray
    z: np.ndarray


def forward(params: ModelParams, x) -> ForwardCache:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    r = build_representation(params.rep, x)
    a1 = r @ params.enc_w1.T + params.enc_b1
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ params.enc_w2.T + params.enc_b2
    h = np.maximum(a2, 0.0)
    u = h @ params.head_w.T + params.head_b
    norm = np.linalg.norm(u, axis=1)
    dead = norm == 0.0
    safe = np.where(dead, 1.0, norm)
    z = u / safe[:, None]
    if dead.any():
        log.warning("zero-norm projection for %d rows; using first basis vector", int(dead.sum()))
        z[dead] = 0.0
        z[dead, 0] = 1.0
    return ForwardCache(x, r, a1, h1, a2, h, u, norm, z)


def encode(params: ModelParams, raw_row):
    """Return ``(h, z)``: encoder output and unit-norm projection."""
    c = forward(params, raw_row)
    if np.ndim(raw_row) == 1:
        return c.h[0], c.z[0]
    return c.h, c.z


def embed(params: ModelParams, rows):
    """Encoder outputs ``h`` for a batch of normalized rows."""
    return forward(params, rows).h


def similarity(z1, z2):
    return float(np.dot(z1, z2))


def default_pairing(n):
    """Partner index for the stacked layout ``[left_0..left_{n-1}, right_0..]``."""
    return np.concatenate([np.arange(n, 2 * n), np.arange(n)])


def _check_pairing(partner, m):
    partner = np.asarray(partner, dtype=np.int64)
    if partner.shape != (m,):
        raise DimensionError(f"pairing must have length {m}")
    idx = np.arange(m)
    if np.any(partner == idx) or np.any(partner[partner] != idx) or partner.min() < 0:
        raise ConfigurationError("pairing must be a fixed-point-free involution")
    return partner


def contrastive_loss(z, kind="self", tau=1.0, partner=None, labels=None, with_grad=False):
    """Mean per-anchor contrastive loss over ``2N`` unit vectors.

    ``kind='self'`` is the InfoNCE loss over all non-self indices; ``'sup'``
    averages over every same-label index; ``'sup_mod'`` additionally drops
    same-label indices from the denominator.
    """
    if kind not in LOSSES:
        raise ConfigurationError(f"loss must be one of {LOSSES}", field="loss")
    if not tau > 0:
        raise ConfigurationError("temperature must be positive", field="temperature")
    z = np.asarray(z, dtype=np.float64)
    m = z.shape[0]
    if m % 2 or m < 4:
        raise ConfigurationError("need 2N embeddings with N >= 2")
    partner = _check_pairing(default_pairing(m // 2) if partner is None else partner, m)
    if kind != "self":
        if labels is None:
            raise ConfigurationError(f"loss {kind!r} requires labels")
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (m,):
            raise DimensionError(f"labels must have length {m}")
        counts = {v: c for v, c in zip(*np.unique(labels, return_counts=True))}
        if any(counts[v] < 2 for v in labels):
            raise ConfigurationError("a sample has no same-label partner in the batch")
        if kind == "sup_mod" and len(counts) < 2:
            raise ConfigurationError("sup_mod needs at least two classes in every batch")
    sim = z @ z.T
    loss, dsim = _backend.contrastive_loss_grad(sim, partner, labels, _MODE[kind], float(tau))
    if not with_grad:
        return loss
    return loss, (dsim + dsim.T) @ z


def info_nce(z, partner=None, tau=1.0):
    return contrastive_loss(z, "self", tau, partner)


def supcon(z, labels, partner=None, tau=1.0):
    return contrastive_loss(z, "sup", tau, partner, labels)


def supcon_mod(z, labels, partner=None, tau=1.0):
    return contrastive_loss(z, "sup_mod", tau, partner, labels)


def backward(params: ModelParams, cache: ForwardCache, dz):
    """Exact gradients of every trainable tensor given ``dL/dz``."""
    z, norm = cache.z, cache.norm
    live = (norm > 0.0)[:, None]
    safe = np.where(norm > 0.0, norm, 1.0)[:, None]
    du = np.where(live, (dz - z * np.sum(z * dz, axis=1, keepdims=True)) / safe, 0.0)
    g = {"head.w": du.T @ cache.h, "head.b": du.sum(axis=0)}
    g.update(backward_from_h(params, cache, du @ params.head_w))
    return {k: g[k] for k in params.tensors()}


def backward_from_h(params: ModelParams, cache: ForwardCache, dh):
    """Encoder and representation gradients given ``dL/dh``."""
    g = {}
    da2 = dh * (cache.a2 > 0)
    g["enc.w2"] = da2.T @ cache.h1
    g["enc.b2"] = da2.sum(axis=0)
    da1 = (da2 @ params.enc_w2) * (cache.a1 > 0)
    g["enc.w1"] = da1.T @ cache.r
    g["enc.b1"] = da1.sum(axis=0)
    dr = da1 @ params.enc_w1
    for name, (dw, db) in zip(BLOCKS, representation_backward(params.rep, cache.x, dr)):
        g[f"rep.{name}.weight"] = dw
        g[f"rep.{name}.bias"] = db
    return g


def loss_and_grads(params, left, right, kind="self", tau=1.0, labels=None):
    """Forward both views, evaluate the loss and back-propagate.

    ``labels`` are per source sample (length N); views inherit them.
    """
    cache = forward(params, np.vstack([np.atleast_2d(left), np.atleast_2d(right)]))
    lab2 = None if labels is None else np.concatenate([labels, labels])
    loss, dz = contrastive_loss(cache.z, kind, tau, None, lab2, with_grad=True)
    return loss, backward(params, cache, dz)


def batch_loss(params, left, right, kind="self", tau=1.0, labels=None):
    z = forward(params, np.vstack([left, right])).z
    lab2 = None if labels is None else np.concatenate([labels, labels])
    return contrastive_loss(z, kind, tau, None, lab2)


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ModelParams):
        t = params.tensors()
        return cls({k: np.zeros_like(a) for k, a in t.items()}, {k: np.zeros_like(a) for k, a in t.items()})


def adam_step(state: AdamState, params: ModelParams, grads, lr):
    """Bias-corrected Adam update applied in place; returns ``params``."""
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for name, p in params.tensors().items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def sgd_step(params: ModelParams, grads, lr):
    for name, p in params.tensors().items():
        p -= lr * grads[name]
    return params


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    epochs: int = 5000
    learning_rate: float = 0.001
    temperature: float = 1.0
    loss: str = "self"
    optimizer: str = "adam"
    seed: int = 0
    d: int = 16
    out_dim: int = 64

    def __post_init__(self):
        if int(self.batch_size) < 4:
            raise ConfigurationError("batch_size must be >= 4", field="batch_size")
        if int(self.epochs) < 0:
            raise ConfigurationError("epochs must be >= 0", field="epochs")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive", field="learning_rate")
        if not self.temperature > 0:
            raise ConfigurationError("temperature must be positive", field="temperature")
        if self.loss not in LOSSES:
            raise ConfigurationError(f"loss must be one of {LOSSES}", field="loss")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"optimizer must be one of {OPTIMIZERS}", field="optimizer")
        if int(self.d) < 1 or int(self.out_dim) < 1:
            raise ConfigurationError("d and out_dim must be positive", field="d")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    fingerprint: str = ""
    backend: str = _backend.BACKEND

    def to_dict(self, normalized=False):
        return {
            "losses": list(self.losses),
            "epoch_seconds": [0.0] * len(self.epoch_seconds) if normalized else list(self.epoch_seconds),
            "fingerprint": self.fingerprint,
            "backend": self.backend,
        }


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        if len(idx) < 4:
            break
        yield idx


def train(train_ds, cfg: TrainConfig, aug: AugmentationConfig, init=None, progress=None):
    """Contrastive training on an already-normalized dataset.

    Each epoch shuffles, cuts mini-batches of ``cfg.batch_size`` (a trailing
    batch smaller than 4 is dropped), builds views, and takes one optimizer
    step per batch. Returns ``(params, history)``.
    """
    rows = np.asarray(getattr(train_ds, "rows", train_ds), dtype=np.float64)
    labels = getattr(train_ds, "labels", None)
    if cfg.loss != "self" and labels is None:
        raise ConfigurationError(f"loss {cfg.loss!r} requires labelled training data")
    widths = train_ds.schema.widths
    params = init.copy() if init is not None else init_model(widths, cfg.d, cfg.out_dim, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 0x7EA1])
    augmenter = Augmenter(aug, rows)
    state = AdamState.zeros_like(params)
    hist = TrainHistory()
    for epoch in range(int(cfg.epochs)):
        t0 = time.perf_counter()
        total, count = 0.0, 0
        for idx in _batches(len(rows), int(cfg.batch_size), rng):
            left, right = augmenter.make_views(rows[idx], rng)
            lab = None if labels is None or cfg.loss == "self" else labels[idx]
            loss, grads = loss_and_grads(params, left, right, cfg.loss, cfg.temperature, lab)
            if cfg.optimizer == "adam":
                adam_step(state, params, grads, cfg.learning_rate)
            else:
                sgd_step(params, grads, cfg.learning_rate)
            total += loss
            count += 1
        hist.losses.append(total / max(count, 1))
        hist.epoch_seconds.append(time.perf_counter() - t0)
        if progress is not None:
            progress(epoch, hist.losses[-1])
    hist.fingerprint = params.fingerprint()
    return params, hist
