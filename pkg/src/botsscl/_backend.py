"""Select the compiled kernels when available, else the numpy fallback.

Set ``BOTSSCL_BACKEND=python`` to force the fallback.
"""

import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

_forced = os.environ.get("BOTSSCL_BACKEND", "").strip().lower()

if _forced == "python":
    kernels = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        log.debug("compiled kernels unavailable, using numpy fallback")
        kernels = _fallback
        BACKEND = "python"

corrupt_batch = kernels.corrupt_batch
contrastive_loss_grad = kernels.contrastive_loss_grad
grid_candidates = kernels.grid_candidates
MODE_SELF = _fallback.MODE_SELF
MODE_SUP = _fallback.MODE_SUP
MODE_SUP_MOD = _fallback.MODE_SUP_MOD
