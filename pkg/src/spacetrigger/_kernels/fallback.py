"""NumPy implementation of the pair kernels.

Used when the compiled extension is unavailable (or forced via
SPACETRIGGER_PURE_PYTHON=1). Same contract as spacetrigger._kernels._ext;
both backends must agree bit-for-bit on float64 inputs.

Constraint table encoding (shared with the compiled backend):

* comparisons, float64 (K, 6): columns are
  [lhs_role, lhs_coord, rhs_role, rhs_coord, offset, strict]
  with role 0=subject / 1=reference, coord 0..3 = x_min, y_min, x_max, y_max,
  strict 1.0 for "<" and 0.0 for "<=".  Test: lhs + offset REL rhs.
* intervals, float64 (L, 3): columns are [feature_id, lo, hi], testing
  lo <= delta <= hi.  Feature ids 0..3 are the raw offsets
  (s.x_min - r.x_min, s.y_min - r.y_min, r.x_max - s.x_max,
  r.y_max - s.y_max); ids 4..7 are the same divided by the reference
  width (x features) or height (y features).
"""

import numpy as np

name = "numpy"


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (n, 4) and (m, 4) corner-form box arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def overlap_stats(a: np.ndarray, b: np.ndarray) -> tuple[int, int, float]:
    """(pair count, pairs with IoU > 0, IoU sum) over the cross product.

    The sum is accumulated sequentially in row-major order (cumsum, not
    numpy's pairwise sum) so it is bit-identical to the compiled loop.
    """
    m = iou_matrix(a, b)
    total = float(m.ravel().cumsum()[-1]) if m.size else 0.0
    return m.size, int(np.count_nonzero(m > 0.0)), total


def _side(role: int, coord: int, subj: np.ndarray, ref: np.ndarray) -> np.ndarray:
    if role == 0:
        return subj[:, coord][:, None]
    return ref[:, coord][None, :]


def _delta(feature: int, subj: np.ndarray, ref: np.ndarray) -> np.ndarray:
    base = feature % 4
    if base == 0:
        d = subj[:, 0][:, None] - ref[:, 0][None, :]
    elif base == 1:
        d = subj[:, 1][:, None] - ref[:, 1][None, :]
    elif base == 2:
        d = ref[:, 2][None, :] - subj[:, 2][:, None]
    else:
        d = ref[:, 3][None, :] - subj[:, 3][:, None]
    if feature >= 4:
        axis = 0 if base in (0, 2) else 1
        span = ref[:, axis + 2] - ref[:, axis]
        d = d / span[None, :]
    return d


def filter_pairs(
    subj: np.ndarray,
    ref: np.ndarray,
    comparisons: np.ndarray,
    intervals: np.ndarray,
) -> np.ndarray:
    """Indices (i, j) of cross pairs satisfying every constraint.

    Returned as an (k, 2) int64 array in row-major order (i ascending,
    then j ascending).
    """
    subj = np.asarray(subj, dtype=np.float64).reshape(-1, 4)
    ref = np.asarray(ref, dtype=np.float64).reshape(-1, 4)
    mask = np.ones((subj.shape[0], ref.shape[0]), dtype=bool)
    for lhs_role, lhs_coord, rhs_role, rhs_coord, offset, strict in np.asarray(
        comparisons, dtype=np.float64
    ).reshape(-1, 6):
        lhs = _side(int(lhs_role), int(lhs_coord), subj, ref) + offset
        rhs = _side(int(rhs_role), int(rhs_coord), subj, ref)
        mask &= (lhs < rhs) if strict else (lhs <= rhs)
    for feature, lo, hi in np.asarray(intervals, dtype=np.float64).reshape(-1, 3):
        d = _delta(int(feature), subj, ref)
        mask &= (d >= lo) & (d <= hi)
    return np.argwhere(mask).astype(np.int64, copy=False)
