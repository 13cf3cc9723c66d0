"""The compiled kernels must agree with the numpy reference."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from botsscl import _backend, _fallback

kernels = pytest.importorskip("botsscl._kernels")


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2), st.floats(0.05, 5.0), st.integers(0, 2**32 - 1))
def test_loss_kernel_parity(n, mode, tau, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2 * n, 5))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    sim = z @ z.T
    partner = np.r_[np.arange(n, 2 * n), np.arange(n)]
    src = rng.integers(0, 2, n)
    src[:2] = [0, 1]
    labels = np.r_[src, src]
    la, ga = _fallback.contrastive_loss_grad(sim, partner, labels, mode, tau)
    lb, gb = kernels.contrastive_loss_grad(sim, partner, labels, mode, tau)
    assert abs(la - lb) <= 1e-12 * max(1.0, abs(la))
    assert np.max(np.abs(ga - gb)) <= 1e-13


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.integers(1, 30), st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_corrupt_kernel_parity(b, w, seed, rate):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((b, w))
    train = rng.standard_normal((7, w))
    k = max(1, int(np.floor(rate * w + 0.5))) if rate > 0 else 1
    k = min(k, w)
    offsets = rng.integers(0, w - np.arange(k), (b, k))
    donors = rng.integers(0, 7, (b, k))
    oa, ca = _fallback.corrupt_batch(x, train, offsets, donors)
    ob, cb = kernels.corrupt_batch(x, train, offsets, donors)
    assert np.array_equal(oa, ob) and np.array_equal(ca, cb)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=4), st.integers(0, 2**32 - 1), st.integers(0, 50))
def test_grid_kernel_parity(radices, seed, start):
    rng = np.random.default_rng(seed)
    g = len(radices)
    base = rng.standard_normal(10)
    cols = rng.choice(10, g, replace=False)
    values = rng.standard_normal(sum(radices))
    offsets = np.r_[0, np.cumsum(radices)[:-1]]
    total = int(np.prod(radices))
    start = start % total
    count = total - start
    a = _fallback.grid_candidates(base, cols, values, offsets, np.array(radices), start, count)
    b = kernels.grid_candidates(base, cols, values, offsets, np.array(radices), start, count)
    assert np.array_equal(a, b)


def test_kernels_accept_read_only_inputs():
    x = np.zeros((2, 3))
    x.flags.writeable = False
    out, _ = kernels.corrupt_batch(x, x, np.zeros((2, 1), dtype=np.int64), np.zeros((2, 1), dtype=np.int64))
    assert out.flags.writeable


def test_default_backend_is_compiled():
    assert _backend.BACKEND == "cython"


def test_env_forces_fallback():
    env = {**os.environ, "BOTSSCL_BACKEND": "python"}
    code = "from botsscl import _backend; print(_backend.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_training_agrees_across_backends():
    code = (
        "import numpy as np\n"
        "from botsscl.dataset import *\n"
        "from botsscl.model import TrainConfig, train\n"
        "from botsscl.augmentation import AugmentationConfig\n"
        "from botsscl.schema import FeatureSchema\n"
        "ds = generate_synthetic(SyntheticConfig(40, 3.0, 0, FeatureSchema(['a','b'], 2, ['c'], ['d'])))\n"
        "ds = apply_normalizer(fit_normalizer(ds), ds)\n"
        "_, h = train(ds, TrainConfig(batch_size=16, epochs=3, d=4, out_dim=8), AugmentationConfig())\n"
        "print(repr(h.losses))\n"
    )
    res = {}
    for be in ("python", "cython"):
        env = {**os.environ, "BOTSSCL_BACKEND": be}
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        res[be] = np.array(eval(out.stdout))  # noqa: S307 - our own repr output
    assert np.max(np.abs(res["python"] - res["cython"])) < 1e-10
