"""Pure-numpy implementations of the hot kernels.

Signatures mirror ``_kernels.pyx`` exactly; randomness is always drawn by the
caller and passed in, so both backends consume identical streams.
"""

import numpy as np

MODE_SELF = 0
MODE_SUP = 1
MODE_SUP_MOD = 2


def corrupt_batch(x, train, offsets, donors):
    """Partial Fisher-Yates column selection + donor replacement.

    Step ``j`` swaps position ``j`` with ``j + offsets[b, j]``; the first ``k``
    positions of the permutation are the corrupted columns. Column
    ``cols[b, j]`` takes its value from training row ``donors[b, j]``.
    Returns ``(out, cols)``.
    """
    x = np.asarray(x, dtype=np.float64)
    train = np.asarray(train, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.int64)
    donors = np.asarray(donors, dtype=np.int64)
    b, w = x.shape
    k = offsets.shape[1]
    perm = np.tile(np.arange(w, dtype=np.int64), (b, 1))
    r = np.arange(b)
    for j in range(k):
        idx = j + offsets[:, j]
        held = perm[r, j].copy()
        perm[r, j] = perm[r, idx]
        perm[r, idx] = held
    cols = np.ascontiguousarray(perm[:, :k])
    out = x.copy()
    if k:
        out[r[:, None], cols] = train[donors, cols]
    return out, cols


def contrastive_loss_grad(sim, partner, labels, mode, tau):
    """Mean per-anchor contrastive loss and its gradient w.r.t. ``sim``."""
    sim = np.asarray(sim, dtype=np.float64)
    m = sim.shape[0]
    logits = sim / tau
    eye = np.eye(m, dtype=bool)
    if mode == MODE_SELF:
        pos = np.zeros((m, m), dtype=bool)
        pos[np.arange(m), np.asarray(partner)] = True
        denom = ~eye
    else:
        labels = np.asarray(labels)
        same = labels[:, None] == labels[None, :]
        pos = same & ~eye
        denom = ~eye if mode == MODE_SUP else ~same
    masked = np.where(denom, logits, -np.inf)
    top = masked.max(axis=1)
    e = np.where(denom, np.exp(masked - top[:, None]), 0.0)
    z = e.sum(axis=1)
    lse = top + np.log(z)
    npos = pos.sum(axis=1)
    pos_mean = np.where(pos, logits, 0.0).sum(axis=1) / npos
    loss = float(np.mean(lse - pos_mean))
    dlogits = (e / z[:, None] - pos / npos[:, None]) / m
    return loss, dlogits / tau


def grid_candidates(base, cols, values, offsets, radices, start, count):
    """Rows ``start .. start+count-1`` of the lexicographic Cartesian product.

    The last grid varies fastest. ``values`` is the concatenation of every
    grid; grid ``g`` occupies ``values[offsets[g]:offsets[g]+radices[g]]``.
    """
    base = np.asarray(base, dtype=np.float64)
    out = np.tile(base, (count, 1))
    idx = np.arange(start, start + count, dtype=np.int64)
    for g in range(len(cols) - 1, -1, -1):
        digit = idx % radices[g]
        idx = idx // radices[g]
        out[:, cols[g]] = values[offsets[g] + digit]
    return out
