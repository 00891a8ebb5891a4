"""Backend selection for the numerical kernels.

The compiled extension is used when importable. Setting the environment
variable ``QUANTENS_PURE_PYTHON=1`` forces the pure-Python twin.
"""
import os

from quantens import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("QUANTENS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from quantens import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

norm_cdf = _impl.norm_cdf
norm_pdf = _impl.norm_pdf
owens_t = _impl.owens_t
skewnorm_cdf = _impl.skewnorm_cdf
skewnorm_ppf = _impl.skewnorm_ppf
skewnorm_sse_batch = _impl.skewnorm_sse_batch
crps_gaussian = _impl.crps_gaussian
emos_objective_batch = _impl.emos_objective_batch
qra_objective_batch = _impl.qra_objective_batch
pair_abs_sum = _impl.pair_abs_sum
pl_mixture_cdf = _impl.pl_mixture_cdf


def backends():
    """Return ``{name: module}`` for every importable backend."""
    found = {"python": _kernels_py}
    try:
        from quantens import _kernels as compiled
    except ImportError:  # pragma: no cover
        pass
    else:
        found["cython"] = compiled
    return found
