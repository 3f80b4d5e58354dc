"""Label poisoning: applying per-object actions to trigger pairs.

Single-object attacks act on the subject only (relabel = misclassification,
remove = disappearance); multi-object attacks additionally act on the
reference, in any combination. Actions use set semantics: the same action
arriving at one annotation through several pairs is applied once;
contradictory actions on one annotation abort.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .annotations import Dataset
from .errors import PoisoningConflictError, PoisoningError
from .trigger import TriggerPair

log = logging.getLogger(__name__)

#: image-level poisoning rate below which the backdoor is not expected to
#: take hold; crossing it downward only warns, it never refuses.
POISONING_RATE_FLOOR = 0.009


@dataclass(frozen=True, slots=True)
class Relabel:
    target: int | str


@dataclass(frozen=True, slots=True)
class Remove:
    pass


ObjectAction = Relabel | Remove


@dataclass(frozen=True, slots=True)
class AttackSpec:
    """Actions for the subject and (optionally) the reference object."""

    name: str
    subject_action: ObjectAction
    reference_action: ObjectAction | None = None

    @property
    def is_multi(self) -> bool:
        return self.reference_action is not None

    @property
    def combination(self) -> str:
        """'oma', 'oda', 'oma+oma', 'oma+oda', 'oda+oda', or 'oda+oma'."""
        def kind(action: ObjectAction) -> str:
            return "oma" if isinstance(action, Relabel) else "oda"

        if self.reference_action is None:
            return kind(self.subject_action)
        return f"{kind(self.subject_action)}+{kind(self.reference_action)}"

    def to_dict(self) -> dict:
        def enc(action: ObjectAction | None):
            if action is None:
                return None
            if isinstance(action, Relabel):
                return {"relabel": action.target}
            return "remove"

        return {
            "name": self.name,
            "subject": enc(self.subject_action),
            "reference": enc(self.reference_action),
        }


def _parse_action(raw, location: str) -> ObjectAction:
    if raw == "remove":
        return Remove()
    if isinstance(raw, dict) and set(raw) == {"relabel"}:
        return Relabel(raw["relabel"])
    raise PoisoningError(f"{location}: expected 'remove' or {{\"relabel\": <class>}}, got {raw!r}")


def attack_spec_from_dict(raw: dict, location: str = "attack spec") -> AttackSpec:
    if not isinstance(raw, dict) or "subject" not in raw:
        raise PoisoningError(f"{location}: expected an object with a 'subject' action")
    reference = raw.get("reference")
    return AttackSpec(
        name=str(raw.get("name", "unnamed")),
        subject_action=_parse_action(raw["subject"], f"{location}.subject"),
        reference_action=None if reference is None else _parse_action(
            reference, f"{location}.reference"
        ),
    )


def parse_attack_spec(path) -> AttackSpec:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise PoisoningError(f"{path}: cannot read file: {e}") from e
    except json.JSONDecodeError as e:
        raise PoisoningError(f"{path}:{e.pos}: invalid JSON: {e.msg}") from e
    return attack_spec_from_dict(raw, location=str(path))


def bundled_attack_path(name: str) -> Path:
    """Path of an attack spec shipped with the package (oma, oda, oma_oma,
    oda_oda, oma_oda)."""
    return Path(resources.files("spacetrigger") / "specs" / "attacks" / f"{name}.json")


@dataclass(frozen=True, slots=True)
class PoisonReport:
    poisoned_image_ids: frozenset[int]
    pair_count: int
    relabeled_annotation_ids: frozenset[int]
    removed_annotation_ids: frozenset[int]
    total_images: int
    poisoning_rate: float
    above_floor: bool

    def to_dict(self) -> dict:
        return {
            "poisoned_images": len(self.poisoned_image_ids),
            "total_images": self.total_images,
            "pair_count": self.pair_count,
            "relabeled_annotations": sorted(self.relabeled_annotation_ids),
            "removed_annotations": sorted(self.removed_annotation_ids),
            "poisoned_image_ids": sorted(self.poisoned_image_ids),
            "poisoning_rate": self.poisoning_rate,
            "above_floor": self.above_floor,
        }


def _resolve_action(action: ObjectAction | None, dataset: Dataset) -> ObjectAction | None:
    if isinstance(action, Relabel):
        return Relabel(dataset.categories.resolve(action.target))
    return action


def apply_attack(
    dataset: Dataset, pairs: Sequence[TriggerPair], attack: AttackSpec
) -> tuple[Dataset, PoisonReport]:
    """Apply the attack to every pair, returning a new dataset and report.

    The input dataset is untouched. Annotations outside the pair members are
    never altered. Duplicate identical actions on one annotation collapse;
    conflicting actions raise PoisoningConflictError.
    """
    subject_action = _resolve_action(attack.subject_action, dataset)
    reference_action = _resolve_action(attack.reference_action, dataset)

    plan: dict[int, ObjectAction] = {}
    for pair in pairs:
        targets = [(pair.subject_annotation_id, subject_action)]
        if reference_action is not None:
            targets.append((pair.reference_annotation_id, reference_action))
        for ann_id, action in targets:
            if not dataset.has_annotation(ann_id):
                raise PoisoningError(f"pair {pair} references missing annotation {ann_id}")
            prior = plan.get(ann_id)
            if prior is None:
                plan[ann_id] = action
            elif prior != action:
                raise PoisoningConflictError(
                    f"conflicting actions on annotation {ann_id}: {prior} vs {action}",
                    annotation_id=ann_id,
                )

    relabeled, removed = set(), set()
    new_annotations = []
    for ann in dataset.annotations:
        action = plan.get(ann.annotation_id)
        if action is None:
            new_annotations.append(ann)
        elif isinstance(action, Remove):
            removed.add(ann.annotation_id)
        else:
            relabeled.add(ann.annotation_id)
            new_annotations.append(replace(ann, category_id=action.target))

    poisoned_images = frozenset(p.image_id for p in pairs)
    total = len(dataset.images)
    rate = len(poisoned_images) / total if total else 0.0
    report = PoisonReport(
        poisoned_image_ids=poisoned_images,
        pair_count=len(pairs),
        relabeled_annotation_ids=frozenset(relabeled),
        removed_annotation_ids=frozenset(removed),
        total_images=total,
        poisoning_rate=rate,
        above_floor=rate > POISONING_RATE_FLOOR,
    )
    if pairs and not report.above_floor:
        log.warning(
            "poisoning rate %.4f%% is at or below the %.1f%% floor; the backdoor "
            "may not embed reliably",
            100 * rate, 100 * POISONING_RATE_FLOOR,
        )
    return dataset.with_annotations(new_annotations), report


def poison_rate_sweep(
    dataset: Dataset,
    pairs: Sequence[TriggerPair],
    attack: AttackSpec,
    target_rates: Sequence[float],
    seed: int,
) -> list[tuple[float, Dataset, PoisonReport]]:
    """Poison at several image-level rates by subsampling poisoned images.

    For each target the largest achievable rate <= target is realized by a
    seeded uniform draw of images; the same seed reproduces the same draw.
    """
    total = len(dataset.images)
    poisonable = sorted({p.image_id for p in pairs})
    max_rate = len(poisonable) / total if total else 0.0
    results = []
    for target in target_rates:
        if target <= 0:
            raise PoisoningError(f"target rate {target} must be positive")
        if target > max_rate + 1e-12:
            raise PoisoningError(
                f"target rate {target:.6f} above achievable maximum {max_rate:.6f}"
            )
        # +1e-9 guards against representation error in target * total.
        k = min(int(np.floor(target * total + 1e-9)), len(poisonable))
        if k == len(poisonable):
            selected = set(poisonable)
        else:
            rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
            selected = set(
                int(i) for i in rng.choice(np.array(poisonable, dtype=np.int64), size=k, replace=False)
            )
        sub_pairs = [p for p in pairs if p.image_id in selected]
        poisoned, report = apply_attack(dataset, sub_pairs, attack)
        results.append((report.poisoning_rate, poisoned, report))
    return results
