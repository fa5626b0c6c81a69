"""Kernel lane selection.

The compiled extension is preferred when it imported cleanly; the
pure-Python twin is the fallback and can be forced with the
``FLEXSHOP_PURE_PYTHON`` environment variable.  Both lanes produce
bit-for-bit identical results, so the choice only affects speed.
"""

import os

from flexshop._kernels import _pure

if os.environ.get("FLEXSHOP_PURE_PYTHON"):
    _impl = _pure
else:
    try:
        from flexshop._kernels import _core as _impl
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND
energy_of_bits = _impl.energy_of_bits
sa_run = _impl.sa_run
tabu_run = _impl.tabu_run
exact_enum = _impl.exact_enum


def lanes():
    """The available kernel implementations, keyed by lane name."""
    available = {"pure": _pure}
    try:
        from flexshop._kernels import _core
    except ImportError:
        pass
    else:
        available["compiled"] = _core
    return available
