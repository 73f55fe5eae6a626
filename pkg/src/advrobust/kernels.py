"""Backend selection for the hot loops.

The Cython extension is used when it was built; otherwise (or when
``ADVROBUST_PURE_PYTHON=1``) the NumPy fallback is imported. Both expose
``estimating_sums`` and ``batch_roots`` with identical semantics.
"""
import os

from . import _pykernels

MEAN, HUBER, GAUSS_SCALE = _pykernels.MEAN, _pykernels.HUBER, _pykernels.GAUSS_SCALE

_impl = _pykernels
BACKEND = "python"
if os.environ.get("ADVROBUST_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

estimating_sums = _impl.estimating_sums
batch_roots = _impl.batch_roots
