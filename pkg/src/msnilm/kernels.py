"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is used. Setting ``MSNILM_PURE_PYTHON=1`` forces the fallback.
Both backends expose ``im2col``, ``col2im`` and ``activation_runs``.
"""

import logging
import os

import numpy as np

from msnilm import _pykernels

logger = logging.getLogger(__name__)

python_backend = _pykernels
compiled_backend = None

if os.environ.get("MSNILM_PURE_PYTHON", "") not in ("", "0"):
    backend = _pykernels
else:
    try:
        from msnilm import _ckernels as compiled_backend
    except ImportError:
        logger.debug("compiled kernels unavailable, using numpy fallback")
        backend = _pykernels
    else:
        backend = compiled_backend

BACKEND_NAME = "compiled" if backend is compiled_backend else "python"


def im2col(x: np.ndarray, k: int, d: int) -> np.ndarray:
    return backend.im2col(np.ascontiguousarray(x), k, d)


def col2im(cols: np.ndarray, d: int) -> np.ndarray:
    return backend.col2im(np.ascontiguousarray(cols), d)


def activation_runs(above, period: float, min_on_duration: float, min_off_duration: float):
    above = np.ascontiguousarray(above, dtype=np.uint8)
    return backend.activation_runs(above, float(period), float(min_on_duration), float(min_off_duration))
