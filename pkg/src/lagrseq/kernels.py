"""Picks the compiled MLP kernels when they were built, else the NumPy ones.

Set ``LAGRSEQ_PURE_PYTHON=1`` to force the NumPy path.
"""

import os

from . import _pykernels

python_kernels = _pykernels

try:
    from . import _ckernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("LAGRSEQ_PURE_PYTHON", "") in ("", "0"):
    active = compiled_kernels
else:
    active = python_kernels

BACKEND = active.NAME


def available():
    """Every kernel implementation importable in this interpreter."""
    return [k for k in (python_kernels, compiled_kernels) if k is not None]
