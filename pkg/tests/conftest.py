import numpy as np
import pytest

from spacetrigger import (
    BoundingBox,
    CategoryMap,
    Dataset,
    ImageRecord,
    ObjectAnnotation,
    parse_trigger_spec,
    bundled_spec_path,
)

CATS = {1: "person", 2: "umbrella", 3: "stop sign", 4: "boat", 5: "car"}


def build_dataset(entries, categories=CATS, size=(640, 480), n_images=None):
    """entries: (ann_id, image_id, category_id, (x1, y1, x2, y2)) tuples."""
    image_ids = sorted({e[1] for e in entries})
    if n_images is not None:
        image_ids = sorted(set(image_ids) | set(range(1, n_images + 1)))
    images = [
        ImageRecord(i, f"img_{i:04d}.jpg", size[0], size[1]) for i in image_ids
    ]
    annotations = [
        ObjectAnnotation(a, i, c, BoundingBox(*box)) for a, i, c, box in entries
    ]
    return Dataset(images, annotations, CategoryMap(categories))


def random_boxes(rng, count, width=640, height=480, max_side=120):
    out = []
    for _ in range(count):
        w = int(rng.integers(1, max_side))
        h = int(rng.integers(1, max_side))
        x = int(rng.integers(0, width - w))
        y = int(rng.integers(0, height - h))
        out.append((x, y, x + w, y + h))
    return out


def random_dataset(seed, n_images=8, max_objects=12, categories=(1, 2, 3), size=(640, 480)):
    rng = np.random.default_rng(seed)
    entries = []
    ann_id = 1
    for image_id in range(1, n_images + 1):
        for box in random_boxes(rng, int(rng.integers(0, max_objects + 1)),
                                width=size[0], height=size[1]):
            cat = int(rng.choice(categories))
            entries.append((ann_id, image_id, cat, box))
            ann_id += 1
    return build_dataset(entries, size=size, n_images=n_images)


@pytest.fixture
def umbrella_spec():
    return parse_trigger_spec(bundled_spec_path())
