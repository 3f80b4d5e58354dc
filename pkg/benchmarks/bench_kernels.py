#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the two hot paths (trigger-pair filtering and interaction statistics)
end to end on a synthetic dataset, plus the raw kernels on dense arrays.

Usage: python benchmarks/bench_kernels.py [--images N] [--objects M] [--repeats K]
"""

import argparse
import statistics
import time

import numpy as np

from spacetrigger import _kernels
from spacetrigger.annotations import BoundingBox, CategoryMap, Dataset, ImageRecord, ObjectAnnotation
from spacetrigger.interaction import rank_interaction_classes
from spacetrigger.trigger import bundled_spec_path, enumerate_trigger_pairs, parse_trigger_spec


def build_dataset(n_images: int, objects_per_image: int, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    images, annotations = [], []
    ann_id = 1
    for image_id in range(1, n_images + 1):
        images.append(ImageRecord(image_id, f"bench_{image_id}.jpg", 640, 480))
        for _ in range(objects_per_image):
            w = int(rng.integers(8, 160))
            h = int(rng.integers(8, 160))
            x = int(rng.integers(0, 640 - w))
            y = int(rng.integers(0, 480 - h))
            cat = int(rng.integers(1, 4))
            annotations.append(
                ObjectAnnotation(ann_id, image_id, cat, BoundingBox(x, y, x + w, y + h))
            )
            ann_id += 1
    return Dataset(images, annotations, CategoryMap({1: "person", 2: "umbrella", 3: "car"}))


def timed(fn, repeats: int) -> float:
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best.append(time.perf_counter() - t0)
    return statistics.median(best)


def use_backend(backend) -> None:
    _kernels.iou_matrix = backend.iou_matrix
    _kernels.overlap_stats = backend.overlap_stats
    _kernels.filter_pairs = backend.filter_pairs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--images", type=int, default=3000)
    parser.add_argument("--objects", type=int, default=20)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = _kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; benchmarking the fallback only")

    dataset = build_dataset(args.images, args.objects)
    spec = parse_trigger_spec(bundled_spec_path())
    rng = np.random.default_rng(1)
    dense_a = np.column_stack([
        rng.uniform(0, 500, 2000), rng.uniform(0, 500, 2000),
        rng.uniform(500, 1000, 2000), rng.uniform(500, 1000, 2000),
    ])
    dense_b = dense_a[::2] + 7.0

    workloads = {
        "enumerate_trigger_pairs": lambda: enumerate_trigger_pairs(dataset, spec),
        "rank_interaction_classes": lambda: rank_interaction_classes(dataset, 1),
        "iou_matrix 2000x1000": lambda: _kernels.iou_matrix(dense_a, dense_b),
        "overlap_stats 2000x1000": lambda: _kernels.overlap_stats(dense_a, dense_b),
    }

    print(f"dataset: {args.images} images x {args.objects} objects, median of {args.repeats}")
    results: dict[str, dict[str, float]] = {}
    for name in sorted(backends):
        use_backend(backends[name])
        # warm caches so the grouped-box build is not attributed to one backend
        enumerate_trigger_pairs(dataset, spec)
        for label, fn in workloads.items():
            results.setdefault(label, {})[name] = timed(fn, args.repeats)
    use_backend(backends.get("compiled", backends["numpy"]))

    header = f"{'workload':<28} " + " ".join(f"{n:>12}" for n in sorted(backends))
    if len(backends) > 1:
        header += f" {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for label, per in results.items():
        row = f"{label:<28} " + " ".join(f"{per[n] * 1000:>10.2f}ms" for n in sorted(per))
        if "compiled" in per and "numpy" in per:
            row += f" {per['numpy'] / per['compiled']:>8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
