"""Shared builders for tests: small schemas and a planted linear pipeline."""

import itertools

import numpy as np

from botsscl.dataset import NormStats
from botsscl.evaluation import FrozenPipeline, ProbeParams
from botsscl.model import ModelParams
from botsscl.representation import LinearBlock, RepresentationParams
from botsscl.schema import CATEGORIES, FeatureSchema


def tiny_schema(per_category=5):
    w = per_category
    return FeatureSchema(
        [f"u{i}" for i in range(w)], w, [f"t{i}" for i in range(w)], [f"p{i}" for i in range(w)]
    )


def attack_schema():
    """Default feature names with a 4-wide embedding block."""
    return FeatureSchema(embedding_dim=4)


def identity_stats(schema):
    cols = schema.normalized_columns
    return NormStats(np.zeros(len(cols)), np.ones(len(cols)), cols, schema.fingerprint())


def planted_pipeline(schema, coef, theta, big=1e4):
    """Pipeline predicting bot exactly when ``coef . x <= theta``.

    Each block projects its category onto ``coef`` (d = 1), the encoder sums
    the four parts plus ``big`` so the ReLUs stay linear, and the probe is
    ``theta - score``.
    """
    sl = schema.slices()
    blocks = [LinearBlock(np.asarray(coef[sl[c]], dtype=float)[None, :], np.zeros(1)) for c in CATEGORIES]
    params = ModelParams(
        RepresentationParams(1, *blocks),
        np.ones((1, 4)),
        np.array([big]),
        np.ones((1, 1)),
        np.zeros(1),
        np.ones((2, 1)),
        np.zeros(2),
    )
    probe = ProbeParams(np.array([-1.0]), big + theta, (1.0, 1.0))
    return FrozenPipeline(identity_stats(schema), params, probe)


def naive_first_flip(sample, coef, theta, cols, grids):
    """Brute force: raw product index and deduplicated query count of the
    first candidate with ``coef . x > theta``; ``None`` if none exists."""
    orig = tuple(sample[c] for c in cols)
    base = float(np.dot(coef, sample)) - sum(coef[c] * sample[c] for c in cols)
    queries = 0
    for raw, combo in enumerate(itertools.product(*grids)):
        if combo == orig:
            continue
        queries += 1
        if base + sum(coef[c] * v for c, v in zip(cols, combo)) > theta:
            return raw, queries
    return None
