"""Spatial trigger DSL: class pair + conjunction of geometric constraints.

A trigger names an attack class (the subject) and an interaction class (the
reference) and a non-empty conjunction of constraints over the two boxes.
Two constraint forms exist:

* Comparison: ``lhs + offset REL rhs`` where each side is one coordinate of
  one box and REL is "<" or "<=".
* OffsetInterval: ``lo <= delta <= hi`` over a named offset feature of the
  pair (the four edge insets of the subject box relative to the reference
  box, optionally normalized by the reference width/height).

Constraints are evaluated at full float64 precision with no epsilon;
behavior exactly on a strict boundary is deliberately observable.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from . import _kernels
from .annotations import BoundingBox, Dataset
from .errors import TriggerSpecError

_COORDS = ("x_min", "y_min", "x_max", "y_max")
_ROLES = ("subject", "reference")

#: offset feature name -> (kernel feature id). Ids 0..3 are raw pixel
#: offsets, 4..7 the same normalized by reference width (x) / height (y).
DELTA_FEATURES = {
    "dx_min": 0,
    "dy_min": 1,
    "dx_max": 2,
    "dy_max": 3,
    "dx_min_norm": 4,
    "dy_min_norm": 5,
    "dx_max_norm": 6,
    "dy_max_norm": 7,
}


@dataclass(frozen=True, slots=True)
class CoordRef:
    """One coordinate of one box, e.g. subject.y_min."""

    role: str
    coord: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise TriggerSpecError(f"unknown box role {self.role!r}")
        if self.coord not in _COORDS:
            raise TriggerSpecError(f"unknown coordinate atom {self.coord!r}")

    def value(self, subject: BoundingBox, reference: BoundingBox) -> float:
        return getattr(subject if self.role == "subject" else reference, self.coord)

    def __str__(self) -> str:
        return f"{self.role}.{self.coord}"


@dataclass(frozen=True, slots=True)
class Comparison:
    """lhs + offset REL rhs, REL in {"<", "<="}."""

    lhs: CoordRef
    relation: str
    rhs: CoordRef
    offset: float = 0.0

    def __post_init__(self):
        if self.relation not in ("<", "<="):
            raise TriggerSpecError(f"unknown relation {self.relation!r}")
        if not np.isfinite(self.offset):
            raise TriggerSpecError(f"non-finite offset {self.offset}")

    def evaluate(self, subject: BoundingBox, reference: BoundingBox) -> bool:
        lhs = self.lhs.value(subject, reference) + self.offset
        rhs = self.rhs.value(subject, reference)
        return lhs < rhs if self.relation == "<" else lhs <= rhs

    def slack(self, subject: BoundingBox, reference: BoundingBox) -> float:
        return abs(
            self.lhs.value(subject, reference) + self.offset - self.rhs.value(subject, reference)
        )

    def __str__(self) -> str:
        off = f" + {self.offset}" if self.offset else ""
        return f"{self.lhs}{off} {self.relation} {self.rhs}"


@dataclass(frozen=True, slots=True)
class OffsetInterval:
    """lo <= delta <= hi over a named pair-offset feature."""

    delta: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.delta not in DELTA_FEATURES:
            raise TriggerSpecError(f"unknown offset feature {self.delta!r}")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise TriggerSpecError(f"non-finite interval [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise TriggerSpecError(f"empty interval: lo {self.lo} > hi {self.hi}")

    def delta_value(self, subject: BoundingBox, reference: BoundingBox) -> float:
        fid = DELTA_FEATURES[self.delta]
        base = fid % 4
        if base == 0:
            d = subject.x_min - reference.x_min
        elif base == 1:
            d = subject.y_min - reference.y_min
        elif base == 2:
            d = reference.x_max - subject.x_max
        else:
            d = reference.y_max - subject.y_max
        if fid >= 4:
            d = d / (reference.width if base in (0, 2) else reference.height)
        return d

    def evaluate(self, subject: BoundingBox, reference: BoundingBox) -> bool:
        d = self.delta_value(subject, reference)
        return self.lo <= d <= self.hi

    def slack(self, subject: BoundingBox, reference: BoundingBox) -> float:
        d = self.delta_value(subject, reference)
        return min(d - self.lo, self.hi - d)

    def __str__(self) -> str:
        return f"{self.lo} <= {self.delta} <= {self.hi}"


GeometricConstraint = Comparison | OffsetInterval


@dataclass(frozen=True, slots=True)
class TriggerSpec:
    """Class pair plus a conjunction of geometric constraints.

    attack_class / interaction_class may be category names or ids as given
    in the spec file; resolve_classes() maps them onto a dataset.
    """

    name: str
    attack_class: int | str
    interaction_class: int | str
    constraints: tuple[GeometricConstraint, ...]

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if len(self.constraints) == 0:
            raise TriggerSpecError("a trigger needs at least one constraint")
        if self.attack_class == self.interaction_class:
            raise TriggerSpecError(
                f"attack and interaction class must differ (both {self.attack_class!r})"
            )

    def resolve_classes(self, dataset: Dataset) -> tuple[int, int]:
        c_s = dataset.categories.resolve(self.attack_class)
        c_r = dataset.categories.resolve(self.interaction_class)
        if c_s == c_r:
            raise TriggerSpecError("attack and interaction class resolve to the same id")
        return c_s, c_r

    def with_constraints(self, constraints: Iterable[GeometricConstraint]) -> "TriggerSpec":
        return TriggerSpec(self.name, self.attack_class, self.interaction_class, tuple(constraints))

    def to_dict(self) -> dict:
        out = []
        for c in self.constraints:
            if isinstance(c, Comparison):
                out.append(
                    {
                        "type": "cmp",
                        "lhs": str(c.lhs),
                        "rel": c.relation,
                        "rhs": str(c.rhs),
                        "offset": c.offset,
                    }
                )
            else:
                out.append({"type": "interval", "delta": c.delta, "lo": c.lo, "hi": c.hi})
        return {
            "name": self.name,
            "attack_class": self.attack_class,
            "interaction_class": self.interaction_class,
            "constraints": out,
        }


@dataclass(frozen=True, slots=True, order=True)
class TriggerPair:
    """A (subject, reference) annotation pair in one image."""

    image_id: int
    subject_annotation_id: int
    reference_annotation_id: int


@dataclass(frozen=True, slots=True)
class BoundaryDistance:
    """Result of boundary_distance: min slack, or the violated marker.

    slacks carries the per-constraint diagnostics (absolute distance for
    comparisons, signed min(delta - lo, hi - delta) for intervals) even
    when the pair is outside the trigger space.
    """

    satisfied: bool
    distance: float | None
    slacks: tuple[float, ...]


def _parse_coord_ref(text: str, location: str) -> CoordRef:
    parts = str(text).split(".")
    if len(parts) != 2:
        raise TriggerSpecError(f"expected '<role>.<coord>', got {text!r}", location)
    try:
        return CoordRef(parts[0], parts[1])
    except TriggerSpecError as e:
        raise TriggerSpecError(str(e), location) from None


def _parse_constraint(raw: dict, location: str) -> GeometricConstraint:
    kind = raw.get("type")
    try:
        if kind == "cmp":
            return Comparison(
                lhs=_parse_coord_ref(raw["lhs"], f"{location}.lhs"),
                relation=str(raw.get("rel", "<")),
                rhs=_parse_coord_ref(raw["rhs"], f"{location}.rhs"),
                offset=float(raw.get("offset", 0.0)),
            )
        if kind == "interval":
            return OffsetInterval(
                delta=str(raw["delta"]), lo=float(raw["lo"]), hi=float(raw["hi"])
            )
    except TriggerSpecError as e:
        raise TriggerSpecError(str(e), e.location or location) from None
    except (KeyError, TypeError, ValueError) as e:
        raise TriggerSpecError(f"malformed constraint: {e}", location) from None
    raise TriggerSpecError(f"unknown constraint type {kind!r}", location)


def trigger_spec_from_dict(raw: dict, location: str = "trigger spec") -> TriggerSpec:
    if not isinstance(raw, dict):
        raise TriggerSpecError("expected a JSON object", location)
    for key in ("attack_class", "interaction_class", "constraints"):
        if key not in raw:
            raise TriggerSpecError(f"missing key {key!r}", location)
    constraints = [
        _parse_constraint(c, f"{location}.constraints[{i}]")
        for i, c in enumerate(raw["constraints"])
    ]
    try:
        return TriggerSpec(
            name=str(raw.get("name", "unnamed")),
            attack_class=raw["attack_class"],
            interaction_class=raw["interaction_class"],
            constraints=tuple(constraints),
        )
    except TriggerSpecError as e:
        raise TriggerSpecError(str(e), e.location or location) from None


def parse_trigger_spec(path) -> TriggerSpec:
    """Parse a trigger spec file (see trigger_spec_from_dict for the schema)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise TriggerSpecError(f"cannot read file: {e}", str(path)) from e
    except json.JSONDecodeError as e:
        raise TriggerSpecError(f"invalid JSON: {e.msg}", f"{path}:{e.pos}") from e
    return trigger_spec_from_dict(raw, location=str(path))


def bundled_spec_path(name: str = "person_umbrella_overhead") -> Path:
    """Path of a trigger spec shipped with the package."""
    return Path(resources.files("spacetrigger") / "specs" / f"{name}.json")


def eval_trigger(spec: TriggerSpec, subject: BoundingBox, reference: BoundingBox) -> bool:
    """True iff every constraint holds. Geometry only; classes are not checked."""
    return all(c.evaluate(subject, reference) for c in spec.constraints)


def boundary_distance(
    spec: TriggerSpec, subject: BoundingBox, reference: BoundingBox
) -> BoundaryDistance:
    """Minimum slack to the nearest constraint boundary, or the violated marker."""
    slacks = tuple(c.slack(subject, reference) for c in spec.constraints)
    if eval_trigger(spec, subject, reference):
        return BoundaryDistance(True, min(slacks), slacks)
    return BoundaryDistance(False, None, slacks)


def _translation_derivative(constraint: GeometricConstraint, reference: BoundingBox,
                            axis: int) -> float:
    # d(slack)/dt for a unit subject translation along x (axis 0) or y (axis 1),
    # at a point where the constraint is satisfied.
    axis_coords = ("x_min", "x_max") if axis == 0 else ("y_min", "y_max")
    if isinstance(constraint, Comparison):
        # slack = rhs - lhs - offset
        d = 0.0
        if constraint.rhs.role == "subject" and constraint.rhs.coord in axis_coords:
            d += 1.0
        if constraint.lhs.role == "subject" and constraint.lhs.coord in axis_coords:
            d -= 1.0
        return d
    fid = DELTA_FEATURES[constraint.delta]
    base = fid % 4
    if (axis == 0) != (base in (0, 2)):
        return 0.0
    scale = 1.0
    if fid >= 4:
        scale = 1.0 / (reference.width if base in (0, 2) else reference.height)
    return scale if base < 2 else -scale


def tightening_translation(
    constraint: GeometricConstraint, subject: BoundingBox, reference: BoundingBox
) -> tuple[float, float] | None:
    """Unit subject translation that shrinks this constraint's slack.

    None when the slack is invariant under subject translation (both sides
    subject-owned on the same axis, or reference-only constraints).
    """
    for axis in (0, 1):
        d = _translation_derivative(constraint, reference, axis)
        if isinstance(constraint, OffsetInterval) and d != 0.0:
            # Head toward the nearer interval end.
            dv = constraint.delta_value(subject, reference)
            toward_lo = (dv - constraint.lo) <= (constraint.hi - dv)
            want = -1.0 if toward_lo else 1.0
            sign = 1.0 if want * d > 0 else -1.0
            return (sign, 0.0) if axis == 0 else (0.0, sign)
        if d != 0.0:
            sign = -1.0 if d > 0 else 1.0
            return (sign, 0.0) if axis == 0 else (0.0, sign)
    return None


def compile_constraints(spec: TriggerSpec) -> tuple[np.ndarray, np.ndarray]:
    """Constraint tables in the kernel encoding (see _kernels.fallback)."""
    cmps, intervals = [], []
    for c in spec.constraints:
        if isinstance(c, Comparison):
            cmps.append(
                [
                    _ROLES.index(c.lhs.role),
                    _COORDS.index(c.lhs.coord),
                    _ROLES.index(c.rhs.role),
                    _COORDS.index(c.rhs.coord),
                    c.offset,
                    1.0 if c.relation == "<" else 0.0,
                ]
            )
        else:
            intervals.append([DELTA_FEATURES[c.delta], c.lo, c.hi])
    return (
        np.array(cmps, dtype=np.float64).reshape(-1, 6),
        np.array(intervals, dtype=np.float64).reshape(-1, 3),
    )


def _pairs_for_image(
    dataset: Dataset,
    image_id: int,
    c_s: int,
    c_r: int,
    cmps: np.ndarray,
    intervals: np.ndarray,
) -> list[TriggerPair]:
    grouped = dataset.grouped_boxes(image_id)
    subj = grouped.get(c_s)
    ref = grouped.get(c_r)
    if subj is None or ref is None:
        return []
    idx = _kernels.filter_pairs(subj[1], ref[1], cmps, intervals)
    return [
        TriggerPair(image_id, int(subj[0][i]), int(ref[0][j]))
        for i, j in idx
    ]


def enumerate_trigger_pairs(
    dataset: Dataset, spec: TriggerSpec, workers: int = 1
) -> list[TriggerPair]:
    """All (subject, reference) pairs satisfying the spec, sorted by
    (image_id, subject_annotation_id, reference_annotation_id)."""
    c_s, c_r = spec.resolve_classes(dataset)
    cmps, intervals = compile_constraints(spec)
    image_ids = dataset.image_ids()
    if workers <= 1:
        out: list[TriggerPair] = []
        for image_id in image_ids:
            out.extend(_pairs_for_image(dataset, image_id, c_s, c_r, cmps, intervals))
        return out
    out = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for chunk in pool.map(
            lambda iid: _pairs_for_image(dataset, iid, c_s, c_r, cmps, intervals),
            image_ids,
            chunksize=256,
        ):
            out.extend(chunk)
    return out
