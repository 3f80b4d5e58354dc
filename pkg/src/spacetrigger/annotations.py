"""Detection dataset model and COCO-layout file I/O.

Boxes are stored in corner form (x_min, y_min, x_max, y_max), image
coordinate frame with the origin at the top-left and y growing downward.
COCO files carry [x, y, w, h]; conversion happens at the I/O boundary.

Datasets and prediction sets are immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DatasetParseError, DatasetValidationError

log = logging.getLogger(__name__)

_COCO_KEYS = ("images", "annotations", "categories")


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box with strictly positive width and height."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"non-finite coordinate {name}={v}")
            if v < 0:
                raise ValueError(f"negative coordinate {name}={v}")
            object.__setattr__(self, name, float(v))
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union. Boxes sharing only an edge have IoU 0."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True, slots=True)
class ObjectAnnotation:
    annotation_id: int
    image_id: int
    category_id: int
    bbox: BoundingBox


@dataclass(frozen=True, slots=True)
class ImageRecord:
    image_id: int
    file_name: str
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.image_id}: non-positive size {self.width}x{self.height}")


@dataclass(frozen=True, slots=True)
class Prediction:
    image_id: int
    category_id: int
    bbox: BoundingBox
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")


class CategoryMap:
    """Bidirectional category_id <-> name mapping."""

    def __init__(self, id_to_name: Mapping[int, str]):
        self._id_to_name = dict(id_to_name)
        self._name_to_id: dict[str, int] = {}
        for cid, name in self._id_to_name.items():
            if name in self._name_to_id:
                raise DatasetValidationError(f"duplicate category name {name!r}", ids=[cid])
            self._name_to_id[name] = cid

    def __len__(self) -> int:
        return len(self._id_to_name)

    def __contains__(self, category_id: int) -> bool:
        return category_id in self._id_to_name

    def __eq__(self, other) -> bool:
        return isinstance(other, CategoryMap) and self._id_to_name == other._id_to_name

    def ids(self) -> list[int]:
        return sorted(self._id_to_name)

    def items(self) -> list[tuple[int, str]]:
        return sorted(self._id_to_name.items())

    def name(self, category_id: int) -> str:
        return self._id_to_name[category_id]

    def id(self, name: str) -> int:
        return self._name_to_id[name]

    def resolve(self, key: int | str) -> int:
        """Map a category id or name to the id, suggesting near-misses."""
        if isinstance(key, int):
            if key not in self._id_to_name:
                raise DatasetValidationError(f"unknown category id {key}")
            return key
        if key in self._name_to_id:
            return self._name_to_id[key]
        import difflib

        close = difflib.get_close_matches(key, self._name_to_id, n=3)
        hint = f"; did you mean: {', '.join(close)}?" if close else ""
        raise DatasetValidationError(f"unknown category {key!r}{hint}")


class Dataset:
    """Immutable collection of images, annotations and categories.

    Construction enforces referential integrity, id uniqueness, and that
    every bbox lies inside its image (loading clamps first, see
    load_dataset).
    """

    def __init__(
        self,
        images: Iterable[ImageRecord],
        annotations: Iterable[ObjectAnnotation],
        categories: CategoryMap,
        extra: Mapping | None = None,
    ):
        self.images: tuple[ImageRecord, ...] = tuple(images)
        self.annotations: tuple[ObjectAnnotation, ...] = tuple(annotations)
        self.categories = categories
        self.extra = dict(extra or {})

        self._image_by_id: dict[int, ImageRecord] = {}
        for rec in self.images:
            if rec.image_id in self._image_by_id:
                raise DatasetValidationError("duplicate image ids", ids=[rec.image_id])
            self._image_by_id[rec.image_id] = rec

        self._ann_by_id: dict[int, ObjectAnnotation] = {}
        self._anns_by_image: dict[int, list[ObjectAnnotation]] = {}
        bad_refs, out_of_bounds = [], []
        for ann in self.annotations:
            if ann.annotation_id in self._ann_by_id:
                raise DatasetValidationError("duplicate annotation ids", ids=[ann.annotation_id])
            self._ann_by_id[ann.annotation_id] = ann
            img = self._image_by_id.get(ann.image_id)
            if img is None or ann.category_id not in categories:
                bad_refs.append(ann.annotation_id)
                continue
            if ann.bbox.x_max > img.width or ann.bbox.y_max > img.height:
                out_of_bounds.append(ann.annotation_id)
            self._anns_by_image.setdefault(ann.image_id, []).append(ann)
        if bad_refs:
            raise DatasetValidationError(
                "annotations referencing unknown image or category", ids=bad_refs
            )
        if out_of_bounds:
            raise DatasetValidationError("annotations outside image bounds", ids=out_of_bounds)
        self._group_cache: dict[int, dict[int, tuple[np.ndarray, np.ndarray]]] = {}

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dataset)
            and sorted(self.images, key=lambda r: r.image_id)
            == sorted(other.images, key=lambda r: r.image_id)
            and sorted(self.annotations, key=lambda a: a.annotation_id)
            == sorted(other.annotations, key=lambda a: a.annotation_id)
            and self.categories == other.categories
        )

    def image(self, image_id: int) -> ImageRecord:
        return self._image_by_id[image_id]

    def annotation(self, annotation_id: int) -> ObjectAnnotation:
        return self._ann_by_id[annotation_id]

    def has_annotation(self, annotation_id: int) -> bool:
        return annotation_id in self._ann_by_id

    def image_ids(self) -> list[int]:
        return sorted(self._image_by_id)

    def annotations_for(self, image_id: int) -> list[ObjectAnnotation]:
        return list(self._anns_by_image.get(image_id, ()))

    def grouped_boxes(self, image_id: int) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Per-category (annotation_ids, boxes) arrays for one image.

        ids are ascending int64; boxes are the matching (n, 4) float64
        corner rows. Cached; treat the arrays as read-only.
        """
        cached = self._group_cache.get(image_id)
        if cached is not None:
            return cached
        per_cat: dict[int, list[ObjectAnnotation]] = {}
        for ann in self._anns_by_image.get(image_id, ()):
            per_cat.setdefault(ann.category_id, []).append(ann)
        out = {}
        for cid, anns in per_cat.items():
            anns.sort(key=lambda a: a.annotation_id)
            ids = np.array([a.annotation_id for a in anns], dtype=np.int64)
            boxes = np.array([a.bbox.as_tuple() for a in anns], dtype=np.float64)
            out[cid] = (ids, boxes)
        self._group_cache[image_id] = out
        return out

    def with_annotations(self, annotations: Iterable[ObjectAnnotation]) -> "Dataset":
        """New dataset sharing this one's images and categories."""
        return Dataset(self.images, annotations, self.categories, self.extra)


class PredictionSet:
    """Detector outputs grouped by image, with orphans kept separately."""

    def __init__(
        self,
        predictions: Iterable[Prediction],
        dataset: Dataset | None = None,
        provenance: str = "unknown",
    ):
        by_image: dict[int, list[Prediction]] = {}
        orphans: list[Prediction] = []
        for pred in predictions:
            if dataset is not None and pred.image_id not in dataset._image_by_id:
                orphans.append(pred)
            else:
                by_image.setdefault(pred.image_id, []).append(pred)
        self.by_image: dict[int, tuple[Prediction, ...]] = {
            k: tuple(v) for k, v in by_image.items()
        }
        self.orphans: tuple[Prediction, ...] = tuple(orphans)
        self.provenance = provenance
        if orphans:
            log.warning(
                "%d prediction(s) reference image ids absent from the dataset "
                "(kept as orphans)", len(orphans)
            )

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_image.values()) + len(self.orphans)

    def for_image(self, image_id: int) -> tuple[Prediction, ...]:
        return self.by_image.get(image_id, ())

    def all_predictions(self) -> list[Prediction]:
        out = []
        for image_id in sorted(self.by_image):
            out.extend(self.by_image[image_id])
        out.extend(self.orphans)
        return out


def _exact_span(lo: float, hi: float) -> float:
    # Pick w so that lo + w reproduces hi bit-exactly on reload.
    w = hi - lo
    if lo + w == hi:
        return w
    for _ in range(4):
        w = math.nextafter(w, math.inf if lo + w < hi else -math.inf)
        if lo + w == hi:
            return w
    return hi - lo


def _load_json(path) -> object:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DatasetParseError(f"cannot read file: {e}", path=path) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise DatasetParseError(e.msg, path=path, offset=e.pos) from e


def load_dataset(path) -> Dataset:
    """Load a COCO-layout annotation file.

    Boxes are converted from [x, y, w, h] to corner form. Coordinates that
    overflow the image are clamped with a warning; zero-area boxes are
    rejected. Unknown top-level keys round-trip via Dataset.extra; unknown
    per-record keys are dropped with a warning.
    """
    raw = _load_json(path)
    if not isinstance(raw, dict):
        raise DatasetParseError("expected a JSON object at top level", path=path)
    for key in _COCO_KEYS:
        if key not in raw:
            raise DatasetParseError(f"missing top-level key {key!r}", path=path)

    try:
        categories = CategoryMap({int(c["id"]): str(c["name"]) for c in raw["categories"]})
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetParseError(f"malformed category entry: {e}", path=path) from e

    images = []
    for rec in raw["images"]:
        try:
            images.append(
                ImageRecord(
                    image_id=int(rec["id"]),
                    file_name=str(rec.get("file_name", "")),
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetParseError(f"malformed image entry {rec.get('id')}: {e}", path=path) from e
    image_sizes = {rec.image_id: (rec.width, rec.height) for rec in images}

    annotations = []
    degenerate, clamped = [], []
    for rec in raw["annotations"]:
        try:
            ann_id = int(rec["id"])
            image_id = int(rec["image_id"])
            category_id = int(rec["category_id"])
            x, y, w, h = (float(v) for v in rec["bbox"])
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetParseError(
                f"malformed annotation entry {rec.get('id')}: {e}", path=path
            ) from e
        if w <= 0 or h <= 0:
            degenerate.append(ann_id)
            continue
        corners = [x, y, x + w, y + h]
        size = image_sizes.get(image_id)
        if size is not None:
            bounds = [size[0], size[1], size[0], size[1]]
            fixed = [min(max(c, 0.0), bounds[k]) for k, c in enumerate(corners)]
            if fixed != corners:
                clamped.append(ann_id)
                corners = fixed
        if corners[0] >= corners[2] or corners[1] >= corners[3]:
            degenerate.append(ann_id)
            continue
        annotations.append(
            ObjectAnnotation(ann_id, image_id, category_id, BoundingBox(*corners))
        )
    if degenerate:
        raise DatasetValidationError("zero-area boxes (possibly after clamping)", ids=degenerate)
    if clamped:
        log.warning(
            "clamped %d box(es) to image bounds (first ids: %s)",
            len(clamped), clamped[:5],
        )

    dropped = set()
    for section, known in (
        ("images", {"id", "file_name", "width", "height"}),
        ("annotations", {"id", "image_id", "category_id", "bbox"}),
        ("categories", {"id", "name"}),
    ):
        for rec in raw[section]:
            dropped.update(k for k in rec if k not in known)
    if dropped:
        log.warning("dropping unsupported per-record keys: %s", sorted(dropped))

    extra = {k: v for k, v in raw.items() if k not in _COCO_KEYS}
    return Dataset(images, annotations, categories, extra=extra)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a Dataset back to COCO layout; reloading gives an equal Dataset."""
    body = {
        "images": [
            {
                "id": rec.image_id,
                "file_name": rec.file_name,
                "width": rec.width,
                "height": rec.height,
            }
            for rec in dataset.images
        ],
        "annotations": [
            {
                "id": ann.annotation_id,
                "image_id": ann.image_id,
                "category_id": ann.category_id,
                "bbox": [
                    ann.bbox.x_min,
                    ann.bbox.y_min,
                    _exact_span(ann.bbox.x_min, ann.bbox.x_max),
                    _exact_span(ann.bbox.y_min, ann.bbox.y_max),
                ],
            }
            for ann in dataset.annotations
        ],
        "categories": [{"id": cid, "name": name} for cid, name in dataset.categories.items()],
    }
    for key in sorted(dataset.extra):
        body[key] = dataset.extra[key]
    Path(path).write_text(json.dumps(body), encoding="utf-8")


def load_predictions(path, dataset: Dataset, provenance: str | None = None) -> PredictionSet:
    """Load a COCO-results-layout file against a dataset.

    Predictions citing unknown image ids are flagged as orphans, never
    silently dropped. Scores outside [0, 1] are an error.
    """
    raw = _load_json(path)
    if not isinstance(raw, list):
        raise DatasetParseError("expected a JSON array of predictions", path=path)
    preds = []
    for idx, rec in enumerate(raw):
        try:
            image_id = int(rec["image_id"])
            category_id = int(rec["category_id"])
            x, y, w, h = (float(v) for v in rec["bbox"])
            score = float(rec["score"])
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetParseError(f"malformed prediction entry #{idx}: {e}", path=path) from e
        if not (0.0 <= score <= 1.0):
            raise DatasetValidationError(
                f"prediction #{idx}: score {score} outside [0, 1]", ids=[idx]
            )
        if w <= 0 or h <= 0:
            raise DatasetValidationError(f"prediction #{idx}: zero-area box", ids=[idx])
        if category_id not in dataset.categories:
            raise DatasetValidationError(
                f"prediction #{idx}: unknown category {category_id}", ids=[idx]
            )
        preds.append(Prediction(image_id, category_id, BoundingBox(x, y, x + w, y + h), score))
    if provenance is None:
        provenance = Path(path).stem
    return PredictionSet(preds, dataset=dataset, provenance=provenance)


def save_predictions(predictions: PredictionSet | Iterable[Prediction], path) -> None:
    """Write predictions in COCO-results layout."""
    if isinstance(predictions, PredictionSet):
        predictions = predictions.all_predictions()
    body = [
        {
            "image_id": p.image_id,
            "category_id": p.category_id,
            "bbox": [
                p.bbox.x_min,
                p.bbox.y_min,
                _exact_span(p.bbox.x_min, p.bbox.x_max),
                _exact_span(p.bbox.y_min, p.bbox.y_max),
            ],
            "score": p.score,
        }
        for p in predictions
    ]
    Path(path).write_text(json.dumps(body), encoding="utf-8")
