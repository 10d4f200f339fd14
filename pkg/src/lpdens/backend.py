"""Backend selection for the power-sum core.

The compiled extension is preferred; the NumPy fallback is used when the
extension is missing or when ``LPDENS_PURE_PYTHON=1`` is set (useful for
benchmarking and for verifying that both backends agree).
"""

import os

from . import _pysums

KERNEL_IDS = {
    "gaussian": _pysums.KID_GAUSSIAN,
    "uniform": _pysums.KID_UNIFORM_HALF,
    "uniform1": _pysums.KID_UNIFORM_ONE,
    "epanechnikov": _pysums.KID_EPANECHNIKOV,
    "biweight": _pysums.KID_BIWEIGHT,
}

if os.environ.get("LPDENS_PURE_PYTHON", "") == "1":
    weighted_sums = _pysums.weighted_sums
    BACKEND = "python"
else:
    try:
        from ._fastsums import weighted_sums

        BACKEND = "cython"
    except ImportError:  # extension not built
        weighted_sums = _pysums.weighted_sums
        BACKEND = "python"

py_weighted_sums = _pysums.weighted_sums
