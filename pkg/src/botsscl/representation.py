"""Four-block linear user representation.

Each feature category is projected to ``d`` dimensions by its own trainable
affine map and the four results are concatenated, giving a ``4*d`` vector per
account. Functions accept a single row or a ``(n, width)`` batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError

BLOCKS = ("user_meta", "tweet_text", "tweet_meta", "temporal")


@dataclass
class LinearBlock:
    weight: np.ndarray  # (d, in_dim)
    bias: np.ndarray  # (d,)

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]


@dataclass
class RepresentationParams:
    d: int
    block_user_meta: LinearBlock
    block_tweet_text: LinearBlock
    block_tweet_meta: LinearBlock
    block_temporal: LinearBlock

    def __post_init__(self):
        for blk in self.blocks:
            if blk.weight.shape[0] != self.d or blk.bias.shape != (self.d,):
                raise DimensionError(f"every block must output d={self.d}")

    @property
    def blocks(self):
        return (self.block_user_meta, self.block_tweet_text, self.block_tweet_meta, self.block_temporal)

    @property
    def in_widths(self):
        return tuple(b.in_dim for b in self.blocks)

    @property
    def out_width(self):
        return 4 * self.d


def init_linear_block(in_dim, d, rng):
    # fan-in scaling: variance 1/in_dim, zero bias
    return LinearBlock(rng.standard_normal((d, in_dim)) / np.sqrt(in_dim), np.zeros(d))


def init_representation(widths, d, rng) -> RepresentationParams:
    """``widths`` are the raw category widths in layout order (see ``FeatureSchema.widths``)."""
    blocks = [init_linear_block(w, d, rng) for w in widths]
    return RepresentationParams(d, *blocks)


def average_embeddings(tweet_embeddings):
    """Mean of an account's per-tweet embedding vectors."""
    if len(tweet_embeddings) == 0:
        raise DataError("account has no tweets; filter it out before averaging")
    arr = np.asarray(tweet_embeddings, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError("tweet embeddings must share one length")
    return arr.mean(axis=0)


def project_block(block: LinearBlock, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != block.in_dim:
        raise DimensionError(f"input width {x.shape[-1]} != block in_dim {block.in_dim}")
    return x @ block.weight.T + block.bias


def split_categories(params: RepresentationParams, rows):
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[-1] != sum(params.in_widths):
        raise DimensionError(f"row width {rows.shape[-1]} != schema width {sum(params.in_widths)}")
    bounds = np.cumsum((0,) + params.in_widths)
    return [rows[..., bounds[i] : bounds[i + 1]] for i in range(4)]


def build_representation(params: RepresentationParams, normalized_row):
    """Concatenate the four block projections in fixed category order."""
    parts = split_categories(params, normalized_row)
    return np.concatenate(
        [project_block(b, p) for b, p in zip(params.blocks, parts)], axis=-1
    )


def representation_backward(params: RepresentationParams, rows, grad_out):
    """Gradients of the block weights/biases given ``dL/d(representation)``.

    ``rows`` is ``(n, width)`` and ``grad_out`` is ``(n, 4d)``. Returns a list
    of ``(dW, db)`` pairs in block order.
    """
    parts = split_categories(params, rows)
    d = params.d
    grads = []
    for i, x in enumerate(parts):
        g = grad_out[:, i * d : (i + 1) * d]
        grads.append((g.T @ x, g.sum(axis=0)))
    return grads
