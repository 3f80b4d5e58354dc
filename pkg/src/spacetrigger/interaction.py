"""Inter-class interaction scoring and candidate-class ranking.

The score for a class pair is the overlap ratio plus the mean IoU over all
cross-class object pairs that share an image:

    score = n_overlap / n_total + mean_iou

with n_total the number of (subject instance, reference instance) pairs,
n_overlap the pairs with IoU > 0, and mean_iou averaged over all enumerated
pairs, zeros included. Both pair-level and image-level counts are kept so
either unit can be reported.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import _kernels
from .annotations import Dataset


@dataclass(frozen=True, slots=True)
class InteractionScore:
    attack_class: int
    interaction_class: int
    n_total: int
    n_overlap: int
    mean_iou: float
    score_j: float
    n_images: int
    n_images_overlap: int

    @property
    def co_occurs(self) -> bool:
        return self.n_total > 0


def _finalize(c_s: int, c_r: int, acc: tuple[int, int, float, int, int]) -> InteractionScore:
    n_total, n_overlap, iou_sum, n_images, n_images_overlap = acc
    if n_total == 0:
        return InteractionScore(c_s, c_r, 0, 0, 0.0, 0.0, 0, 0)
    mean_iou = iou_sum / n_total
    return InteractionScore(
        c_s, c_r, n_total, n_overlap, mean_iou,
        n_overlap / n_total + mean_iou, n_images, n_images_overlap,
    )


def pair_stats(dataset: Dataset, c_s: int | str, c_r: int | str, workers: int = 1) -> InteractionScore:
    """Interaction statistics for one ordered class pair.

    Enumerates every (subject, reference) pair within each image. A pair
    count of zero yields score 0 with co_occurs False.
    """
    c_s = dataset.categories.resolve(c_s)
    c_r = dataset.categories.resolve(c_r)
    if c_s == c_r:
        raise ValueError(f"attack and interaction class must differ (both {c_s})")

    def per_image(image_id: int) -> tuple[int, int, float, int, int]:
        grouped = dataset.grouped_boxes(image_id)
        subj = grouped.get(c_s)
        ref = grouped.get(c_r)
        if subj is None or ref is None:
            return (0, 0, 0.0, 0, 0)
        n, k, s = _kernels.overlap_stats(subj[1], ref[1])
        return (n, k, s, 1, 1 if k else 0)

    acc = [0, 0, 0.0, 0, 0]
    image_ids = dataset.image_ids()
    if workers <= 1:
        contributions = map(per_image, image_ids)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        contributions = pool.map(per_image, image_ids, chunksize=256)
    for part in contributions:
        for i, v in enumerate(part):
            acc[i] += v
    if workers > 1:
        pool.shutdown()
    return _finalize(c_s, c_r, tuple(acc))


def rank_interaction_classes(
    dataset: Dataset, c_s: int | str, workers: int = 1
) -> list[InteractionScore]:
    """One InteractionScore per category other than the attack class,
    sorted by descending score (ties by ascending category id)."""
    c_s = dataset.categories.resolve(c_s)
    others = [cid for cid in dataset.categories.ids() if cid != c_s]
    acc: dict[int, list] = {cid: [0, 0, 0.0, 0, 0] for cid in others}

    def per_image(image_id: int) -> list[tuple[int, int, int, float]]:
        grouped = dataset.grouped_boxes(image_id)
        subj = grouped.get(c_s)
        if subj is None:
            return []
        out = []
        for cid, (_, boxes) in grouped.items():
            if cid == c_s:
                continue
            n, k, s = _kernels.overlap_stats(subj[1], boxes)
            out.append((cid, n, k, s))
        return out

    image_ids = dataset.image_ids()
    if workers <= 1:
        contributions = map(per_image, image_ids)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        contributions = pool.map(per_image, image_ids, chunksize=256)
    for parts in contributions:
        for cid, n, k, s in parts:
            slot = acc[cid]
            slot[0] += n
            slot[1] += k
            slot[2] += s
            slot[3] += 1
            slot[4] += 1 if k else 0
    if workers > 1:
        pool.shutdown()

    scores = [_finalize(c_s, cid, tuple(acc[cid])) for cid in others]
    scores.sort(key=lambda sc: (-sc.score_j, sc.interaction_class))
    return scores
