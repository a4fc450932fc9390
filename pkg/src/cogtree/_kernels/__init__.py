"""Kernel selection: compiled extension when available, numpy fallback otherwise.

Set COGTREE_PURE_PYTHON=1 to force the fallback (used by the benchmark and
by CI environments without a compiler). The active choice is exposed as
BACKEND ("cython" or "numpy").
"""

import os

if os.environ.get("COGTREE_PURE_PYTHON"):
    from . import numpy_impl as impl

    BACKEND = "numpy"
else:
    try:
        from . import _cykern as impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import numpy_impl as impl

        BACKEND = "numpy"

head_forward = impl.head_forward
head_loss_grad = impl.head_loss_grad
cosine_scores = impl.cosine_scores

__all__ = ["BACKEND", "head_forward", "head_loss_grad", "cosine_scores"]
