"""Attack and detection metrics over a ground-truth dataset and predictions.

Frames are classified against the trigger: positive (at least one
trigger-valid pair), negative (the class pair co-occurs but no pair passes
the geometry), irrelevant (no co-occurrence). ASR is the fraction of
positive frames where at least one pair is fully attacked; FTR is the
fraction of negative frames where the attack effect wrongly manifests on
any co-occurrence pair. Rates with a zero denominator are carried as None,
never 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .annotations import Dataset, ObjectAnnotation, PredictionSet, iou
from .errors import EvaluationError
from .poisoning import AttackSpec, ObjectAction, Relabel, _resolve_action
from .trigger import TriggerPair, TriggerSpec, compile_constraints

MAP_IOU_THRESHOLDS = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)
_RECALL_POINTS = np.array([i / 100 for i in range(101)])


class FrameStatus(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    IRRELEVANT = "irrelevant"


@dataclass(frozen=True, slots=True)
class MatchPolicy:
    """Localization and confidence thresholds used to match predictions."""

    iou_threshold: float = 0.5
    score_threshold: float = 0.25

    def __post_init__(self):
        for name in ("iou_threshold", "score_threshold"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise EvaluationError(f"{name} {v} outside (0, 1)")


@dataclass(frozen=True, slots=True)
class PairOutcome:
    subject_annotation_id: int
    reference_annotation_id: int
    subject_attacked: bool | None = None
    reference_attacked: bool | None = None

    @property
    def attacked(self) -> bool:
        """True when every attacked member met its goal."""
        return bool(self.subject_attacked) and self.reference_attacked is not False


@dataclass(frozen=True, slots=True)
class FrameVerdict:
    image_id: int
    status: FrameStatus
    pairs: tuple[TriggerPair, ...] = ()
    outcomes: tuple[PairOutcome, ...] = ()

    @property
    def attacked(self) -> bool:
        return any(o.attacked for o in self.outcomes)


@dataclass(frozen=True, slots=True)
class EvalReport:
    attack_name: str
    combination: str
    positive_frames: int
    negative_frames: int
    irrelevant_frames: int
    attack_successes: int
    false_triggers: int
    asr: float | None
    ftr: float | None
    verdicts: tuple[FrameVerdict, ...] = ()
    map50: float | None = None
    map50_95: float | None = None

    def _when(self, combo: str, value: float | None) -> float | None:
        return value if self.combination == combo else None

    @property
    def asr_oma(self) -> float | None:
        return self._when("oma", self.asr)

    @property
    def asr_oda(self) -> float | None:
        return self._when("oda", self.asr)

    @property
    def asr_multi(self) -> float | None:
        return self.asr if "+" in self.combination else None

    @property
    def ftr_oma(self) -> float | None:
        return self._when("oma", self.ftr)

    @property
    def ftr_oda(self) -> float | None:
        return self._when("oda", self.ftr)

    def to_dict(self) -> dict:
        return {
            "attack": self.attack_name,
            "combination": self.combination,
            "frames": {
                "positive": self.positive_frames,
                "negative": self.negative_frames,
                "irrelevant": self.irrelevant_frames,
            },
            "attack_successes": self.attack_successes,
            "false_triggers": self.false_triggers,
            "asr": self.asr,
            "ftr": self.ftr,
            "map50": self.map50,
            "map50_95": self.map50_95,
            "verdicts": [
                {
                    "image_id": v.image_id,
                    "status": v.status.value,
                    "attacked": v.attacked if v.status != FrameStatus.IRRELEVANT else None,
                    "outcomes": [
                        {
                            "subject": o.subject_annotation_id,
                            "reference": o.reference_annotation_id,
                            "subject_attacked": o.subject_attacked,
                            "reference_attacked": o.reference_attacked,
                        }
                        for o in v.outcomes
                    ],
                }
                for v in self.verdicts
            ],
        }


def classify_frames(ground_truth: Dataset, spec: TriggerSpec) -> list[FrameVerdict]:
    """One verdict per image, sorted by image id.

    Positive frames carry their trigger-valid pairs; negative frames carry
    every (subject, reference) co-occurrence pair as false-trigger
    candidates.
    """
    c_s, c_r = spec.resolve_classes(ground_truth)
    cmps, intervals = compile_constraints(spec)
    empty = (np.empty((0, 6)), np.empty((0, 3)))
    verdicts = []
    for image_id in ground_truth.image_ids():
        grouped = ground_truth.grouped_boxes(image_id)
        subj, ref = grouped.get(c_s), grouped.get(c_r)
        if subj is None or ref is None:
            verdicts.append(FrameVerdict(image_id, FrameStatus.IRRELEVANT))
            continue
        idx = _kernels.filter_pairs(subj[1], ref[1], cmps, intervals)
        if len(idx):
            pairs = tuple(
                TriggerPair(image_id, int(subj[0][i]), int(ref[0][j])) for i, j in idx
            )
            verdicts.append(FrameVerdict(image_id, FrameStatus.POSITIVE, pairs))
        else:
            candidates = tuple(
                TriggerPair(image_id, int(si), int(rj))
                for si in subj[0]
                for rj in ref[0]
            )
            verdicts.append(FrameVerdict(image_id, FrameStatus.NEGATIVE, candidates))
    return verdicts


def _object_attacked(
    ann: ObjectAnnotation,
    action: ObjectAction,
    preds,
    policy: MatchPolicy,
) -> bool:
    if isinstance(action, Relabel):
        return any(
            p.category_id == action.target
            and p.score >= policy.score_threshold
            and iou(p.bbox, ann.bbox) >= policy.iou_threshold
            for p in preds
        )
    return not any(
        p.category_id == ann.category_id
        and p.score >= policy.score_threshold
        and iou(p.bbox, ann.bbox) >= policy.iou_threshold
        for p in preds
    )


def evaluate_attack(
    ground_truth: Dataset,
    predictions: PredictionSet,
    spec: TriggerSpec,
    attack: AttackSpec,
    policy: MatchPolicy = MatchPolicy(),
) -> EvalReport:
    """Frame-level attack metrics for one attack spec.

    A positive frame succeeds when all attacked members of at least one of
    its trigger pairs meet their goals; a negative frame false-triggers when
    the same predicate holds on any co-occurrence pair.
    """
    subject_action = _resolve_action(attack.subject_action, ground_truth)
    reference_action = _resolve_action(attack.reference_action, ground_truth)

    counts = {FrameStatus.POSITIVE: 0, FrameStatus.NEGATIVE: 0, FrameStatus.IRRELEVANT: 0}
    successes = false_triggers = 0
    out_verdicts = []
    for verdict in classify_frames(ground_truth, spec):
        counts[verdict.status] += 1
        if verdict.status is FrameStatus.IRRELEVANT:
            out_verdicts.append(verdict)
            continue
        preds = predictions.for_image(verdict.image_id)
        outcomes = []
        for pair in verdict.pairs:
            subject_ok = _object_attacked(
                ground_truth.annotation(pair.subject_annotation_id),
                subject_action, preds, policy,
            )
            reference_ok = None
            if reference_action is not None:
                reference_ok = _object_attacked(
                    ground_truth.annotation(pair.reference_annotation_id),
                    reference_action, preds, policy,
                )
            outcomes.append(
                PairOutcome(
                    pair.subject_annotation_id,
                    pair.reference_annotation_id,
                    subject_ok,
                    reference_ok,
                )
            )
        verdict = FrameVerdict(verdict.image_id, verdict.status, verdict.pairs, tuple(outcomes))
        out_verdicts.append(verdict)
        if verdict.attacked:
            if verdict.status is FrameStatus.POSITIVE:
                successes += 1
            else:
                false_triggers += 1

    n_pos, n_neg = counts[FrameStatus.POSITIVE], counts[FrameStatus.NEGATIVE]
    return EvalReport(
        attack_name=attack.name,
        combination=attack.combination,
        positive_frames=n_pos,
        negative_frames=n_neg,
        irrelevant_frames=counts[FrameStatus.IRRELEVANT],
        attack_successes=successes,
        false_triggers=false_triggers,
        asr=successes / n_pos if n_pos else None,
        ftr=false_triggers / n_neg if n_neg else None,
        verdicts=tuple(out_verdicts),
    )


def _average_precision(tp: np.ndarray, n_gt: int) -> float:
    # 101-point interpolated AP from a TP/FP sequence already in score order.
    if n_gt == 0:
        raise EvaluationError("AP undefined without ground-truth instances")
    if len(tp) == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(tp) + 1)
    recall = cum_tp / n_gt
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    inds = np.searchsorted(recall, _RECALL_POINTS, side="left")
    sampled = np.where(inds < len(precision), precision[np.minimum(inds, len(precision) - 1)], 0.0)
    return float(sampled.mean())


def map_coco(
    ground_truth: Dataset, predictions: PredictionSet
) -> tuple[float | None, float | None]:
    """COCO-protocol (mAP@0.5, mAP@0.5:0.95) over classes present in the
    ground truth. Returns (None, None) on an empty ground truth."""
    gt_boxes: dict[int, dict[int, np.ndarray]] = {}
    gt_counts: dict[int, int] = {}
    for image_id in ground_truth.image_ids():
        for cid, (_, boxes) in ground_truth.grouped_boxes(image_id).items():
            gt_boxes.setdefault(cid, {})[image_id] = boxes
            gt_counts[cid] = gt_counts.get(cid, 0) + len(boxes)
    if not gt_counts:
        return None, None

    preds_by_class: dict[int, list[tuple[float, int, int, object]]] = {}
    for image_id in sorted(predictions.by_image):
        for order, p in enumerate(predictions.for_image(image_id)):
            preds_by_class.setdefault(p.category_id, []).append(
                (p.score, image_id, order, p.bbox)
            )

    ap = np.zeros((len(gt_counts), len(MAP_IOU_THRESHOLDS)))
    for ci, cid in enumerate(sorted(gt_counts)):
        entries = sorted(
            preds_by_class.get(cid, ()), key=lambda e: (-e[0], e[1], e[2])
        )
        # Per-image row index of every entry, plus one IoU matrix per image.
        rows = np.zeros(len(entries), dtype=np.int64)
        boxes_per_image: dict[int, list] = {}
        for k, (_, image_id, _, bbox) in enumerate(entries):
            rows[k] = len(boxes_per_image.get(image_id, ()))
            boxes_per_image.setdefault(image_id, []).append(bbox.as_tuple())
        iou_cache = {
            image_id: _kernels.iou_matrix(
                np.array(blist, dtype=np.float64), gt_boxes[cid][image_id]
            )
            for image_id, blist in boxes_per_image.items()
            if image_id in gt_boxes[cid]
        }

        for ti, thr in enumerate(MAP_IOU_THRESHOLDS):
            matched = {img: np.zeros(len(g), dtype=bool) for img, g in gt_boxes[cid].items()}
            tp = np.zeros(len(entries))
            for k, (_, image_id, _, _) in enumerate(entries):
                mat = iou_cache.get(image_id)
                if mat is None:
                    continue  # no ground truth of this class here: FP
                row = mat[rows[k]]
                taken = matched[image_id]
                best_j, best_iou = -1, 0.0
                for j in range(row.shape[0]):
                    if taken[j]:
                        continue
                    v = row[j]
                    if v >= thr and (best_j < 0 or v > best_iou):
                        best_j, best_iou = j, v
                if best_j >= 0:
                    taken[best_j] = True
                    tp[k] = 1.0
            ap[ci, ti] = _average_precision(tp, gt_counts[cid])

    map50 = float(ap[:, 0].mean())
    map50_95 = float(ap.mean())
    return map50, map50_95


def entropy_flag(prob_vectors, m: float, delta: float) -> tuple[float, bool]:
    """Mean Shannon entropy (natural log) and whether it leaves [m-d, m+d].

    Each vector must be non-negative and sum to 1 within 1e-6.
    """
    if delta < 0:
        raise EvaluationError(f"delta {delta} must be non-negative")
    vectors = list(prob_vectors)
    if not vectors:
        raise EvaluationError("at least one probability vector is required")
    entropies = []
    for i, vec in enumerate(vectors):
        p = np.asarray(vec, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise EvaluationError(f"vector #{i} is not a non-empty 1-d vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise EvaluationError(f"vector #{i} has negative or non-finite entries")
        if abs(float(p.sum()) - 1.0) > 1e-6:
            raise EvaluationError(f"vector #{i} sums to {p.sum():.8f}, not 1")
        pos = p[p > 0]
        entropies.append(float(-(pos * np.log(pos)).sum()))
    h = sum(entropies) / len(entropies)
    flagged = h < m - delta or h > m + delta
    return h, flagged
