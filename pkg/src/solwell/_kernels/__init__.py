"""Backend selection for the split-step hot-loop kernels.

The compiled extension is preferred when importable; SOLWELL_KERNELS
overrides the choice ("cy" forces the extension, "py" forces numpy).
"""

import os

from . import pykernels

_requested = os.environ.get("SOLWELL_KERNELS", "auto").lower()

if _requested == "py":
    _impl = pykernels
    BACKEND = "py"
else:
    try:
        from . import _speedups as _impl

        BACKEND = "cy"
    except ImportError:
        if _requested == "cy":
            raise
        _impl = pykernels
        BACKEND = "py"

nonlinear_phase = _impl.nonlinear_phase
multiply_complex = _impl.multiply_complex
multiply_real = _impl.multiply_real

__all__ = ["BACKEND", "nonlinear_phase", "multiply_complex", "multiply_real"]
