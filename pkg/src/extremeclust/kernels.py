"""Backend selection for the hot kernels.

The compiled extension is used when importable; setting the environment
variable ``EXTREMECLUST_PURE_PYTHON=1`` forces the numpy fallback. Traces are
bit-reproducible for a fixed seed within one backend; across backends the
kernels agree to rounding only.
"""
import os

from . import _kernels_py

if os.environ.get("EXTREMECLUST_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

gpd_loglik = _impl.gpd_loglik
dep_loglik = _impl.dep_loglik
assign_labels = _impl.assign_labels
log1p_sum = _impl.log1p_sum

__all__ = ["BACKEND", "gpd_loglik", "dep_loglik", "assign_labels", "log1p_sum"]
