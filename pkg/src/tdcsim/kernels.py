"""Kernel backend selection.

The compiled extension is used when it was built and ``TDCSIM_PURE_PYTHON``
is unset; otherwise the numpy fallback is used.  ``BACKEND`` names the
active one.
"""

import os

from . import _kernels_py

STATUS_OK = _kernels_py.STATUS_OK
STATUS_SATURATED = _kernels_py.STATUS_SATURATED
STATUS_OVERFLOW = _kernels_py.STATUS_OVERFLOW
STATUS_WINDOW = _kernels_py.STATUS_WINDOW

_compiled = None
if not os.environ.get("TDCSIM_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py


def backends():
    """Available backend modules keyed by name."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def window_count(threshold, cum, z, sigma, residue_offset):
    return _impl.window_count(threshold, cum, z, float(sigma), int(residue_offset))


def drop_mask(t_hit, t_end, busy_until):
    return _impl.drop_mask(t_hit, t_end, float(busy_until))
