"""Compiled kernels vs the numpy fallback on training-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Also checks that both backends agree before timing them.
"""

import argparse
import json
import timeit

import numpy as np

from botsscl import _fallback

try:
    from botsscl import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(rng):
    m, w, n_train = 512, 101, 1600
    z = rng.standard_normal((m, 64))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    sim = z @ z.T
    partner = np.r_[np.arange(m // 2, m), np.arange(m // 2)]
    labels = rng.integers(0, 2, m)
    x = rng.standard_normal((256, w))
    train = rng.standard_normal((n_train, w))
    k = 61
    offsets = rng.integers(0, w - np.arange(k), (256, k))
    donors = rng.integers(0, n_train, (256, k))
    base = rng.standard_normal(w)
    cols = np.array([3, 7, 90, 95])
    radices = np.array([21, 21, 21, 21])
    values = np.arange(84, dtype=np.float64)
    offs = np.array([0, 21, 42, 63])
    return {
        "loss_self": ("contrastive_loss_grad", (sim, partner, labels, 0, 1.0)),
        "loss_sup": ("contrastive_loss_grad", (sim, partner, labels, 1, 1.0)),
        "loss_sup_mod": ("contrastive_loss_grad", (sim, partner, labels, 2, 1.0)),
        "corrupt_256x101": ("corrupt_batch", (x, train, offsets, donors)),
        "grid_65536": ("grid_candidates", (base, cols, values, offs, radices, 0, 65536)),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-15)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<18}{'numpy ms':>11}{'cython ms':>11}{'speedup':>9}")
    for name, (fn, a) in cases(rng).items():
        t_py = min(timeit.repeat(lambda: getattr(_fallback, fn)(*a), number=1, repeat=args.repeat))
        row = {"kernel": name, "numpy_ms": t_py * 1e3, "cython_ms": None, "agree": None}
        if _kernels is not None:
            row["agree"] = bool(_same(getattr(_fallback, fn)(*a), getattr(_kernels, fn)(*a)))
            t_c = min(timeit.repeat(lambda: getattr(_kernels, fn)(*a), number=1, repeat=args.repeat))
            row["cython_ms"] = t_c * 1e3
            print(f"{name:<18}{t_py*1e3:>11.3f}{t_c*1e3:>11.3f}{t_py/t_c:>8.1f}x"
                  + ("" if row["agree"] else "  MISMATCH"))
        else:
            print(f"{name:<18}{t_py*1e3:>11.3f}{'n/a':>11}")
        rows.append(row)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
