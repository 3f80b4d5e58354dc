"""Command-line entry point.

Subcommands: analyze, poison, evaluate, synth-data, mock-detect,
export-yolo. Every run writes a manifest (command, resolved arguments,
seed, version, timings) sufficient to reproduce it; randomized commands
demand an explicit --seed. Warnings never change the exit code: 0 means no
errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .annotations import Dataset, load_dataset, load_predictions, save_dataset, save_predictions
from .errors import SpaceTriggerError
from .evaluation import MatchPolicy, evaluate_attack, map_coco
from .interaction import rank_interaction_classes
from .poisoning import (
    apply_attack,
    parse_attack_spec,
    poison_rate_sweep,
)
from .synth import MockDetectorConfig, MockNoise, SynthConfig, generate_dataset, mock_detect
from .trigger import TriggerPair, bundled_spec_path, enumerate_trigger_pairs, parse_trigger_spec


@dataclass
class RunManifest:
    command: str
    arguments: dict
    seed: int | None
    version: str = __version__
    started_at: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )
    duration_s: float = 0.0
    outputs: list = field(default_factory=list)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.__dict__, indent=2, default=str), encoding="utf-8")


def _delimited(headers: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue().rstrip("\n")


def _table(headers: list[str], rows: list[list]) -> str:
    cells = [headers] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for r, row in enumerate(cells):
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
        if r == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(headers))))
    return "\n".join(lines)


def _pct(value: float | None) -> str:
    return "n/a" if value is None else f"{100 * value:.2f}"


def _num(value: float | None, digits: int = 4) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _load_pairs_file(path, dataset: Dataset) -> list[TriggerPair]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        TriggerPair(int(p["image_id"]), int(p["subject"]), int(p["reference"]))
        for p in raw
    ]


def cmd_analyze(args) -> list[str]:
    dataset = load_dataset(args.dataset)
    ranking = rank_interaction_classes(dataset, args.attack_class, workers=args.workers)
    if args.format == "machine":
        body = [
            {
                "category_id": sc.interaction_class,
                "category": dataset.categories.name(sc.interaction_class),
                "n_total": sc.n_total,
                "n_overlap": sc.n_overlap,
                "mean_iou": sc.mean_iou,
                "score": sc.score_j,
                "n_images": sc.n_images,
            }
            for sc in ranking
        ]
        _emit(json.dumps(body, indent=2), args.out)
    else:
        rows = [
            [
                sc.interaction_class,
                dataset.categories.name(sc.interaction_class),
                sc.n_total,
                sc.n_overlap,
                f"{sc.mean_iou:.4f}",
                f"{sc.score_j:.4f}",
            ]
            for sc in ranking
        ]
        headers = ["id", "category", "n_total", "n_overlap", "mean_iou", "score"]
        render = _delimited if args.format == "csv" else _table
        _emit(render(headers, rows), args.out)
    return [args.out] if args.out else []


def cmd_poison(args) -> list[str]:
    dataset = load_dataset(args.dataset)
    spec = parse_trigger_spec(args.spec)
    attack = parse_attack_spec(args.attack)
    if args.pairs:
        pairs = _load_pairs_file(args.pairs, dataset)
    else:
        pairs = enumerate_trigger_pairs(dataset, spec, workers=args.workers)
    if args.target_rate is not None:
        if args.seed is None:
            raise SpaceTriggerError("--target-rate subsampling requires --seed")
        _, poisoned, report = poison_rate_sweep(
            dataset, pairs, attack, [args.target_rate], seed=args.seed
        )[0]
    else:
        poisoned, report = apply_attack(dataset, pairs, attack)
    save_dataset(poisoned, args.out)
    report_path = args.report or f"{args.out}.report.json"
    Path(report_path).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    print(
        f"poisoned {len(report.poisoned_image_ids)} of {report.total_images} images "
        f"({100 * report.poisoning_rate:.2f}%), {report.pair_count} trigger pairs"
    )
    if pairs and not report.above_floor:
        print(
            "warning: poisoning rate is at or below the 0.9% floor; the backdoor "
            "may not embed reliably",
            file=sys.stderr,
        )
    return [args.out, report_path]


def cmd_evaluate(args) -> list[str]:
    dataset = load_dataset(args.ground_truth)
    predictions = load_predictions(args.predictions, dataset)
    spec = parse_trigger_spec(args.spec)
    attack = parse_attack_spec(args.attack)
    policy = MatchPolicy(iou_threshold=args.iou_threshold, score_threshold=args.score_threshold)
    report = evaluate_attack(dataset, predictions, spec, attack, policy)
    map50, map50_95 = map_coco(dataset, predictions)
    body = report.to_dict()
    body["map50"], body["map50_95"] = map50, map50_95
    if args.format == "machine":
        _emit(json.dumps(body, indent=2), args.out)
    else:
        headers = ["source", "pos", "neg", f"asr_{report.combination}[%]",
                   f"ftr_{report.combination}[%]", "map50", "map50:95"]
        rows = [[
            predictions.provenance,
            report.positive_frames,
            report.negative_frames,
            _pct(report.asr),
            _pct(report.ftr),
            _num(map50),
            _num(map50_95),
        ]]
        render = _delimited if args.format == "csv" else _table
        _emit(render(headers, rows), args.out)
    return [args.out] if args.out else []


def cmd_synth_data(args) -> list[str]:
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        raw.setdefault("seed", args.seed)
        config = SynthConfig.from_dict(raw)
    else:
        mix = [float(v) for v in args.mix.split(",")]
        if len(mix) != 3:
            raise SpaceTriggerError("--mix needs three comma-separated fractions")
        config = SynthConfig(
            image_count=args.count,
            width=args.width,
            height=args.height,
            classes=tuple(c.strip() for c in args.classes.split(",")),
            positive_fraction=mix[0],
            negative_fraction=mix[1],
            irrelevant_fraction=mix[2],
            boundary_epsilon=args.boundary_epsilon,
            rng_seed=args.seed,
        )
    spec = parse_trigger_spec(args.spec)
    dataset, verdicts = generate_dataset(config, spec)
    save_dataset(dataset, args.out)
    outputs = [args.out]
    if args.verdicts_out:
        Path(args.verdicts_out).write_text(
            json.dumps(
                [{"image_id": v.image_id, "status": v.status.value} for v in verdicts]
            ),
            encoding="utf-8",
        )
        outputs.append(args.verdicts_out)
    counts = {}
    for v in verdicts:
        counts[v.status.value] = counts.get(v.status.value, 0) + 1
    print(f"generated {len(dataset.images)} frames: {counts}")
    return outputs


def cmd_mock_detect(args) -> list[str]:
    dataset = load_dataset(args.dataset)
    spec = parse_trigger_spec(args.spec) if args.spec else None
    attack = parse_attack_spec(args.attack) if args.attack else None
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        raw.setdefault("seed", args.seed)
        config = MockDetectorConfig.from_dict(raw, spec=spec, attack=attack)
    else:
        config = MockDetectorConfig(
            mode=args.mode,
            noise=MockNoise(
                box_jitter=args.box_jitter,
                detection_drop=args.detection_drop,
                misclassification=args.misclassification,
                attack_drop=args.attack_drop,
            ),
            rng_seed=args.seed,
            spec=spec,
            attack=attack,
        )
    predictions = mock_detect(dataset, config)
    save_predictions(predictions, args.out)
    print(f"wrote {len(predictions)} predictions for {len(dataset.images)} images")
    return [args.out]


def cmd_export_yolo(args) -> list[str]:
    dataset = load_dataset(args.dataset)
    out_dir = Path(args.out_dir)
    labels = out_dir / "labels"
    labels.mkdir(parents=True, exist_ok=True)
    index_of = {cid: k for k, (cid, _) in enumerate(dataset.categories.items())}
    for rec in dataset.images:
        stem = Path(rec.file_name).stem or f"image_{rec.image_id}"
        lines = []
        for ann in sorted(dataset.annotations_for(rec.image_id), key=lambda a: a.annotation_id):
            b = ann.bbox
            cx = (b.x_min + b.x_max) / 2 / rec.width
            cy = (b.y_min + b.y_max) / 2 / rec.height
            w = b.width / rec.width
            h = b.height / rec.height
            lines.append(f"{index_of[ann.category_id]} {cx} {cy} {w} {h}")
        (labels / f"{stem}.txt").write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    (out_dir / "classes.txt").write_text(
        "\n".join(name for _, name in dataset.categories.items()) + "\n", encoding="utf-8"
    )
    (out_dir / "categories.json").write_text(
        json.dumps(
            [
                {"index": k, "id": cid, "name": name}
                for k, (cid, name) in enumerate(dataset.categories.items())
            ]
        ),
        encoding="utf-8",
    )
    (out_dir / "images.json").write_text(
        json.dumps(
            [
                {"id": rec.image_id, "file_name": rec.file_name,
                 "width": rec.width, "height": rec.height}
                for rec in dataset.images
            ]
        ),
        encoding="utf-8",
    )
    print(f"exported {len(dataset.images)} label files to {labels}")
    return [str(out_dir)]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spacetrigger",
        description="Spatial-relation backdoor poisoning and evaluation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required=False):
        p.add_argument("--seed", type=int, required=seed_required,
                       help="RNG seed (required for randomized commands)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("table", "csv", "machine"), default="table")
        p.add_argument("--manifest", help="manifest path (default: next to the main output)")

    p = sub.add_parser("analyze", help="rank interaction classes for an attack class")
    p.add_argument("dataset")
    p.add_argument("attack_class")
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("poison", help="filter trigger pairs and poison labels")
    p.add_argument("dataset")
    p.add_argument("--spec", required=True)
    p.add_argument("--attack", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--pairs", help="pre-enumerated pairs file overriding the filter")
    p.add_argument("--target-rate", type=float, dest="target_rate")
    common(p)
    p.set_defaults(func=cmd_poison)

    p = sub.add_parser("evaluate", help="compute ASR/FTR and mAP for predictions")
    p.add_argument("ground_truth")
    p.add_argument("predictions")
    p.add_argument("--spec", required=True)
    p.add_argument("--attack", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.5, dest="iou_threshold")
    p.add_argument("--score-threshold", type=float, default=0.25, dest="score_threshold")
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth-data", help="generate a synthetic annotation dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--spec", default=str(bundled_spec_path()))
    p.add_argument("--config", help="SynthConfig JSON (overrides the flags below)")
    p.add_argument("--count", type=int, default=300)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--classes", default="person,umbrella,stop sign,boat")
    p.add_argument("--mix", default="0.5,0.3,0.2", help="positive,negative,irrelevant fractions")
    p.add_argument("--boundary-epsilon", type=float, default=None, dest="boundary_epsilon")
    p.add_argument("--verdicts-out", dest="verdicts_out")
    common(p, seed_required=True)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("mock-detect", help="run the mock detector over a dataset")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="MockDetectorConfig JSON (overrides the flags below)")
    p.add_argument("--mode", choices=("clean", "backdoored"), default="clean")
    p.add_argument("--spec")
    p.add_argument("--attack")
    p.add_argument("--box-jitter", type=float, default=0.0, dest="box_jitter")
    p.add_argument("--detection-drop", type=float, default=0.0, dest="detection_drop")
    p.add_argument("--misclassification", type=float, default=0.0)
    p.add_argument("--attack-drop", type=float, default=0.0, dest="attack_drop")
    common(p, seed_required=True)
    p.set_defaults(func=cmd_mock_detect)

    p = sub.add_parser("export-yolo", help="export normalized per-image label files")
    p.add_argument("dataset")
    p.add_argument("out_dir")
    common(p)
    p.set_defaults(func=cmd_export_yolo)

    return parser


def _default_manifest_path(args, outputs: list[str]) -> Path:
    if args.manifest:
        return Path(args.manifest)
    if outputs:
        head = Path(outputs[0])
        if head.is_dir():
            return head / "manifest.json"
        return Path(f"{head}.manifest.json")
    return Path(f"spacetrigger-{args.command}.manifest.json")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    manifest = RunManifest(
        command=args.command,
        arguments={
            k: v for k, v in vars(args).items() if k not in ("func",) and v is not None
        },
        seed=getattr(args, "seed", None),
    )
    start = time.perf_counter()
    try:
        outputs = args.func(args)
    except (SpaceTriggerError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    manifest.duration_s = round(time.perf_counter() - start, 6)
    manifest.outputs = outputs
    manifest.write(_default_manifest_path(args, outputs))
    return 0


if __name__ == "__main__":
    sys.exit(main())
