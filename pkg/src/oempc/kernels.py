"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise (or when
``OEMPC_PURE_PYTHON`` is set) the numpy fallback is used. Both produce the
same floats.
"""

from __future__ import annotations

import os

if os.environ.get("OEMPC_PURE_PYTHON"):
    from oempc import _pure as _impl

    BACKEND = "python"
else:
    try:
        from oempc import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        from oempc import _pure as _impl

        BACKEND = "python"

ki_predict = _impl.ki_predict
ki_predict_many = _impl.ki_predict_many
ki_rollout = _impl.ki_rollout
ki_rollout_feedback = _impl.ki_rollout_feedback
cstr_step = _impl.cstr_step
cstr_rollout = _impl.cstr_rollout

__all__ = [
    "BACKEND",
    "ki_predict",
    "ki_predict_many",
    "ki_rollout",
    "ki_rollout_feedback",
    "cstr_step",
    "cstr_rollout",
]
