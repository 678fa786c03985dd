"""Pick the compiled theta kernels when importable, else the pure-Python ones.

Set ``QBOREL_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _theta_py

BACKEND = "python"
kernels = _theta_py

if os.environ.get("QBOREL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _theta_ext as kernels  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        pass

theta_reduced = kernels.theta_reduced
theta_dual_reduced = kernels.theta_dual_reduced
use_dual = kernels.use_dual
reduce_arg = kernels.reduce_arg
theta_log = kernels.theta_log
theta_log_many = kernels.theta_log_many
