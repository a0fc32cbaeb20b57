"""Kernel backend selection.

The hot inner loop of every experiment is the MLP forward/backward pass.  Two
interchangeable implementations exist: a compiled Cython extension (_core) and
a pure-numpy fallback (_python).  The compiled one is used when available.

Set FLOCOSIM_KERNEL=python or FLOCOSIM_KERNEL=compiled to force a backend.
"""

from __future__ import annotations

import os

from . import _python

BACKEND = "python"
mlp_forward = _python.mlp_forward
mlp_loss_and_grads = _python.mlp_loss_and_grads

_requested = os.environ.get("FLOCOSIM_KERNEL", "").strip().lower()
if _requested not in ("", "python", "compiled"):
    raise ImportError(f"unknown FLOCOSIM_KERNEL value: {_requested!r}")

if _requested != "python":
    try:
        from . import _core
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "FLOCOSIM_KERNEL=compiled but the extension is not built; "
                "install the package (pip install -e . --no-build-isolation)"
            )
    else:
        BACKEND = "compiled"
        mlp_forward = _core.mlp_forward
        mlp_loss_and_grads = _core.mlp_loss_and_grads

__all__ = ["BACKEND", "mlp_forward", "mlp_loss_and_grads"]
