"""Hot pair kernels with backend selection.

The compiled Cython extension is used when present; otherwise the NumPy
fallback. SPACETRIGGER_PURE_PYTHON=1 forces the fallback regardless.
Both backends expose iou_matrix / overlap_stats / filter_pairs with
identical semantics (see fallback.py for the constraint-table encoding).
"""

import os

from . import fallback

try:
    from . import _ext
except ImportError:
    _ext = None

if _ext is not None and os.environ.get("SPACETRIGGER_PURE_PYTHON", "") not in ("1", "true"):
    _active = _ext
else:
    _active = fallback

iou_matrix = _active.iou_matrix
overlap_stats = _active.overlap_stats
filter_pairs = _active.filter_pairs


def backend_name() -> str:
    return _active.name


def available_backends() -> dict:
    """Importable backends by name; the compiled one is absent if unbuilt."""
    out = {"numpy": fallback}
    if _ext is not None:
        out["compiled"] = _ext
    return out
