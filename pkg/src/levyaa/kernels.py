"""Backend selection for the hot recurrences.

The compiled ``_scan`` extension is used when it was built; otherwise the
numpy fallback in ``_scan_py`` is used. Setting ``LEVYAA_PURE_PYTHON=1``
forces the fallback, which the benchmark and the backend-equivalence tests
rely on.
"""

import os

import numpy as np

from . import _scan_py

try:
    from . import _scan as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("LEVYAA_PURE_PYTHON"):
    BACKEND = "cython"
    _impl = _compiled
else:
    BACKEND = "python"
    _impl = _scan_py


def exp_scan(decay, forcing, init=None):
    """Run ``out[k+1] = decay * out[k] + forcing[k]`` down the first axis.

    Parameters
    ----------
    decay : array_like, shape (m,)
    forcing : array_like, shape (n, m)
    init : array_like, shape (m,), optional
        Defaults to zeros.

    Returns
    -------
    ndarray, shape (n + 1, m)
    """
    forcing = np.ascontiguousarray(forcing, dtype=np.float64)
    decay = np.ascontiguousarray(decay, dtype=np.float64)
    if init is None:
        init = np.zeros(forcing.shape[1])
    init = np.ascontiguousarray(init, dtype=np.float64)
    return _impl.exp_scan(decay, forcing, init)


def exp_scan_batch(decay, forcing, init=None):
    """Batched :func:`exp_scan`; forcing has shape (paths, n, m)."""
    forcing = np.ascontiguousarray(forcing, dtype=np.float64)
    decay = np.ascontiguousarray(decay, dtype=np.float64)
    if init is None:
        init = np.zeros((forcing.shape[0], forcing.shape[2]))
    init = np.ascontiguousarray(init, dtype=np.float64)
    return _impl.exp_scan_batch(decay, forcing, init)


def compiled_available():
    return _compiled is not None


__all__ = ["BACKEND", "exp_scan", "exp_scan_batch", "compiled_available"]
