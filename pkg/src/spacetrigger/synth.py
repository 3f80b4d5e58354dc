"""Synthetic annotation datasets and a mock detector oracle.

Frames are generated with a requested positive/negative/irrelevant status
mix: positives realize the trigger geometry, negatives co-occur both
classes but violate it by one pixel past a constraint boundary, irrelevant
frames hold a single object. All geometry lives on an integer pixel grid
and every random draw flows from per-frame (or per-image) seeds derived
from the config seed, so outputs are reproducible bit-for-bit and frames
could be generated in any order.

The mock detector closes the loop: in clean mode it echoes annotations
(with optional controlled noise); in backdoored mode annotations belonging
to trigger pairs receive the attack effect instead, each pair reverting to
clean behavior with the attack-drop probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .annotations import (
    BoundingBox,
    CategoryMap,
    Dataset,
    ImageRecord,
    ObjectAnnotation,
    Prediction,
    PredictionSet,
)
from .errors import SynthesisError
from .evaluation import FrameStatus, FrameVerdict
from .poisoning import AttackSpec, Relabel, Remove, _resolve_action
from .trigger import TriggerPair, TriggerSpec, boundary_distance, enumerate_trigger_pairs, eval_trigger

_DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True, slots=True)
class SynthConfig:
    image_count: int
    width: int = 640
    height: int = 480
    classes: tuple[str, ...] = ("person", "umbrella", "stop sign", "boat")
    positive_fraction: float = 0.5
    negative_fraction: float = 0.3
    irrelevant_fraction: float = 0.2
    boundary_epsilon: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if self.image_count < 0:
            raise SynthesisError(f"image_count {self.image_count} must be >= 0")
        if self.width <= 0 or self.height <= 0:
            raise SynthesisError(f"image size {self.width}x{self.height} must be positive")
        fractions = (self.positive_fraction, self.negative_fraction, self.irrelevant_fraction)
        if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
            raise SynthesisError(f"status fractions {fractions} must be >= 0 and sum to 1")
        if self.boundary_epsilon is not None and self.boundary_epsilon < 0:
            raise SynthesisError(f"boundary_epsilon {self.boundary_epsilon} must be >= 0")

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthConfig":
        mix = raw.get("mix", {})
        return cls(
            image_count=int(raw["image_count"]),
            width=int(raw.get("width", 640)),
            height=int(raw.get("height", 480)),
            classes=tuple(raw.get("classes", ("person", "umbrella", "stop sign", "boat"))),
            positive_fraction=float(mix.get("positive", 0.5)),
            negative_fraction=float(mix.get("negative", 0.3)),
            irrelevant_fraction=float(mix.get("irrelevant", 0.2)),
            boundary_epsilon=(
                None if raw.get("boundary_epsilon") is None else float(raw["boundary_epsilon"])
            ),
            rng_seed=int(raw.get("seed", 0)),
        )


@dataclass(frozen=True, slots=True)
class MockNoise:
    box_jitter: float = 0.0
    detection_drop: float = 0.0
    misclassification: float = 0.0
    attack_drop: float = 0.0

    def __post_init__(self):
        if self.box_jitter < 0:
            raise SynthesisError(f"box_jitter {self.box_jitter} must be >= 0")
        for name in ("detection_drop", "misclassification", "attack_drop"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise SynthesisError(f"{name} {v} outside [0, 1]")


@dataclass(frozen=True, slots=True)
class MockDetectorConfig:
    mode: str = "clean"
    noise: MockNoise = field(default_factory=MockNoise)
    rng_seed: int = 0
    spec: TriggerSpec | None = None
    attack: AttackSpec | None = None

    def __post_init__(self):
        if self.mode not in ("clean", "backdoored"):
            raise SynthesisError(f"unknown mock detector mode {self.mode!r}")
        if self.mode == "backdoored" and (self.spec is None or self.attack is None):
            raise SynthesisError("backdoored mode requires a trigger spec and an attack spec")

    @classmethod
    def from_dict(
        cls,
        raw: dict,
        spec: TriggerSpec | None = None,
        attack: AttackSpec | None = None,
    ) -> "MockDetectorConfig":
        noise = raw.get("noise", {})
        return cls(
            mode=str(raw.get("mode", "clean")),
            noise=MockNoise(
                box_jitter=float(noise.get("box_jitter", 0.0)),
                detection_drop=float(noise.get("detection_drop", 0.0)),
                misclassification=float(noise.get("misclassification", 0.0)),
                attack_drop=float(noise.get("attack_drop", 0.0)),
            ),
            rng_seed=int(raw.get("seed", 0)),
            spec=spec,
            attack=attack,
        )


def _allocate_counts(n: int, fractions: tuple[float, float, float]) -> list[int]:
    # Largest-remainder allocation; exact when fraction * n is integral.
    raw = [f * n for f in fractions]
    base = [int(np.floor(r + 1e-9)) for r in raw]
    leftover = n - sum(base)
    order = sorted(range(3), key=lambda i: -(raw[i] - base[i]))
    for i in range(leftover):
        base[order[i % 3]] += 1
    return base


def _frame_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, 0, index)))


def _translation_limit(
    spec: TriggerSpec,
    subject: BoundingBox,
    reference: BoundingBox,
    direction: tuple[int, int],
    width: int,
    height: int,
) -> tuple[int, str]:
    """Largest integer step count keeping the subject in-image and
    trigger-valid, plus what stops it ('bounds' or 'constraint').

    Assumes the untranslated pair is valid; along a fixed direction the
    valid set is an interval, so bisection applies.
    """
    dx, dy = direction
    room = []
    if dx > 0:
        room.append(width - subject.x_max)
    elif dx < 0:
        room.append(subject.x_min)
    if dy > 0:
        room.append(height - subject.y_max)
    elif dy < 0:
        room.append(subject.y_min)
    t_bound = int(min(room))

    def valid(t: int) -> bool:
        return eval_trigger(spec, subject.translate(t * dx, t * dy), reference)

    if valid(t_bound):
        return t_bound, "bounds"
    lo, hi = 0, t_bound  # valid(lo), not valid(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if valid(mid):
            lo = mid
        else:
            hi = mid
    return lo, "constraint"


def _sample_reference(rng: np.random.Generator, width: int, height: int) -> BoundingBox:
    w = int(rng.integers(max(24, width // 8), max(25, width // 3) + 1))
    h = int(rng.integers(max(24, height // 8), max(25, height // 3) + 1))
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    return BoundingBox(x, y, x + w, y + h)


def _propose_subject(
    rng: np.random.Generator, reference: BoundingBox, width: int, height: int
) -> BoundingBox | None:
    # Mix a proposal biased to sit inside the reference's x-range (fast for
    # umbrella-overhead style triggers) with a uniform one (keeps arbitrary
    # specs reachable).
    if rng.random() < 0.8 and reference.width >= 8:
        w = int(rng.integers(4, max(5, int(reference.width) - 2)))
        x_lo = int(reference.x_min) + 1
        x_hi = int(reference.x_max) - w - 1
        if x_hi < x_lo:
            return None
        x = int(rng.integers(x_lo, x_hi + 1))
        y = int(rng.integers(max(0, int(reference.y_min) - 4), min(height - 8, int(reference.y_max)) + 1))
        h = int(rng.integers(8, max(9, height - y) + 1))
        if y + h > height:
            h = height - y
        if h < 1:
            return None
        return BoundingBox(x, y, x + w, y + h)
    w = int(rng.integers(4, max(5, width // 4)))
    h = int(rng.integers(4, max(5, height // 4)))
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    return BoundingBox(x, y, x + w, y + h)


def _sample_valid_pair(
    rng: np.random.Generator, spec: TriggerSpec, width: int, height: int, attempts: int = 400
) -> tuple[BoundingBox, BoundingBox] | None:
    for _ in range(attempts):
        reference = _sample_reference(rng, width, height)
        for _ in range(24):
            subject = _propose_subject(rng, reference, width, height)
            if subject is not None and eval_trigger(spec, subject, reference):
                return subject, reference
    return None


def _push_to_boundary(
    rng: np.random.Generator,
    spec: TriggerSpec,
    subject: BoundingBox,
    reference: BoundingBox,
    width: int,
    height: int,
    epsilon: float,
) -> BoundingBox | None:
    if boundary_distance(spec, subject, reference).distance <= epsilon:
        return subject
    directions = list(_DIRECTIONS)
    rng.shuffle(directions)
    for dx, dy in directions:
        t, kind = _translation_limit(spec, subject, reference, (dx, dy), width, height)
        if kind != "constraint":
            continue
        candidate = subject.translate(t * dx, t * dy)
        bd = boundary_distance(spec, candidate, reference)
        if bd.satisfied and bd.distance <= epsilon:
            return candidate
    return None


def _violate_one_constraint(
    rng: np.random.Generator,
    spec: TriggerSpec,
    subject: BoundingBox,
    reference: BoundingBox,
    width: int,
    height: int,
) -> BoundingBox | None:
    # One pixel past the nearest boundary in a random workable direction.
    directions = list(_DIRECTIONS)
    rng.shuffle(directions)
    for dx, dy in directions:
        t, kind = _translation_limit(spec, subject, reference, (dx, dy), width, height)
        if kind != "constraint":
            continue
        return subject.translate((t + 1) * dx, (t + 1) * dy)
    return None


def generate_dataset(
    config: SynthConfig, spec: TriggerSpec
) -> tuple[Dataset, list[FrameVerdict]]:
    """Dataset realizing the configured status mix, plus the intended
    per-frame verdicts (matching classify_frames on the output)."""
    categories = CategoryMap({i + 1: name for i, name in enumerate(config.classes)})
    c_s = categories.resolve(spec.attack_class)
    c_r = categories.resolve(spec.interaction_class)
    all_ids = [cid for cid, _ in categories.items()]

    n_pos, n_neg, n_irr = _allocate_counts(
        config.image_count,
        (config.positive_fraction, config.negative_fraction, config.irrelevant_fraction),
    )
    statuses = (
        [FrameStatus.POSITIVE] * n_pos
        + [FrameStatus.NEGATIVE] * n_neg
        + [FrameStatus.IRRELEVANT] * n_irr
    )
    plan_rng = np.random.default_rng(np.random.SeedSequence((config.rng_seed, 1)))
    plan_rng.shuffle(statuses)

    images, annotations, verdicts = [], [], []
    next_ann_id = 1
    for i, status in enumerate(statuses):
        rng = _frame_rng(config.rng_seed, i)
        image_id = i + 1
        images.append(
            ImageRecord(image_id, f"synth_{i:06d}.jpg", config.width, config.height)
        )
        if status is FrameStatus.IRRELEVANT:
            cid = int(all_ids[int(rng.integers(0, len(all_ids)))])
            box = _sample_reference(rng, config.width, config.height)
            annotations.append(ObjectAnnotation(next_ann_id, image_id, cid, box))
            next_ann_id += 1
            verdicts.append(FrameVerdict(image_id, status))
            continue

        pair = _sample_valid_pair(rng, spec, config.width, config.height)
        if pair is None:
            raise SynthesisError(
                f"could not realize a trigger-valid pair within {config.width}x"
                f"{config.height}; the constraint region may be empty"
            )
        subject, reference = pair
        if status is FrameStatus.POSITIVE:
            if config.boundary_epsilon is not None:
                for _ in range(50):
                    pushed = _push_to_boundary(
                        rng, spec, subject, reference,
                        config.width, config.height, config.boundary_epsilon,
                    )
                    if pushed is not None:
                        subject = pushed
                        break
                    pair = _sample_valid_pair(rng, spec, config.width, config.height)
                    if pair is None:
                        break
                    subject, reference = pair
                else:
                    pushed = None
                if pushed is None:
                    raise SynthesisError(
                        "could not push a valid pair to within "
                        f"{config.boundary_epsilon} px of a constraint boundary"
                    )
            if not eval_trigger(spec, subject, reference):
                raise SynthesisError("generator self-check failed: positive frame invalid")
        else:
            for _ in range(50):
                violated = _violate_one_constraint(
                    rng, spec, subject, reference, config.width, config.height
                )
                if violated is not None:
                    subject = violated
                    break
                pair = _sample_valid_pair(rng, spec, config.width, config.height)
                if pair is None:
                    break
                subject, reference = pair
            else:
                violated = None
            if violated is None:
                raise SynthesisError("could not construct a near-boundary negative frame")
            if eval_trigger(spec, subject, reference):
                raise SynthesisError("generator self-check failed: negative frame valid")

        subj_id, ref_id = next_ann_id, next_ann_id + 1
        next_ann_id += 2
        annotations.append(ObjectAnnotation(subj_id, image_id, c_s, subject))
        annotations.append(ObjectAnnotation(ref_id, image_id, c_r, reference))
        verdicts.append(
            FrameVerdict(image_id, status, (TriggerPair(image_id, subj_id, ref_id),))
        )

    return Dataset(images, annotations, categories), verdicts


def _sane_box(
    coords: np.ndarray, width: int, height: int
) -> BoundingBox:
    x1 = float(np.clip(coords[0], 0.0, width - 1.0))
    y1 = float(np.clip(coords[1], 0.0, height - 1.0))
    x2 = float(np.clip(coords[2], x1 + 0.5, width))
    y2 = float(np.clip(coords[3], y1 + 0.5, height))
    return BoundingBox(x1, y1, x2, y2)


def mock_detect(dataset: Dataset, config: MockDetectorConfig) -> PredictionSet:
    """Deterministic stand-in for a detector.

    Clean mode: one prediction per annotation (jittered box, original class,
    score in [0.6, 1.0]), optionally dropped or misclassified. Backdoored
    mode additionally applies the attack effect to members of trigger pairs;
    a pair reverts to clean behavior with the attack-drop probability.
    Clean-channel noise (drop/misclassify) never touches attacked objects so
    the attack channel stays exactly calibrated.
    """
    noise = config.noise
    effects_by_image: dict[int, dict[int, object]] = {}
    pairs_by_image: dict[int, list[TriggerPair]] = {}
    if config.mode == "backdoored":
        subject_action = _resolve_action(config.attack.subject_action, dataset)
        reference_action = _resolve_action(config.attack.reference_action, dataset)
        for pair in enumerate_trigger_pairs(dataset, config.spec):
            pairs_by_image.setdefault(pair.image_id, []).append(pair)

    predictions = []
    for image_id in dataset.image_ids():
        rng = np.random.default_rng(np.random.SeedSequence((config.rng_seed, image_id)))
        rec = dataset.image(image_id)
        effects: dict[int, object] = {}
        for pair in pairs_by_image.get(image_id, ()):
            if noise.attack_drop > 0 and rng.random() < noise.attack_drop:
                continue
            effects[pair.subject_annotation_id] = subject_action
            if reference_action is not None:
                effects[pair.reference_annotation_id] = reference_action

        for ann in sorted(dataset.annotations_for(image_id), key=lambda a: a.annotation_id):
            effect = effects.get(ann.annotation_id)
            if isinstance(effect, Remove):
                continue
            if effect is None and noise.detection_drop > 0 and rng.random() < noise.detection_drop:
                continue
            category = ann.category_id
            if isinstance(effect, Relabel):
                category = effect.target
            elif noise.misclassification > 0 and rng.random() < noise.misclassification:
                others = [cid for cid in dataset.categories.ids() if cid != category]
                if others:
                    category = int(others[int(rng.integers(0, len(others)))])
            box = ann.bbox
            if noise.box_jitter > 0:
                jitter = rng.normal(0.0, noise.box_jitter, size=4)
                box = _sane_box(np.array(box.as_tuple()) + jitter, rec.width, rec.height)
            score = float(rng.uniform(0.6, 1.0))
            predictions.append(Prediction(image_id, category, box, score))
    return PredictionSet(predictions, dataset=dataset, provenance=f"mock-{config.mode}")
