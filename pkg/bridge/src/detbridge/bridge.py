"""Subprocess orchestration: fine-tune a detector, predict, convert.

The bridge never touches loss functions or model internals; it shells out
to a detector toolkit (ultralytics by default, any command template
otherwise), then converts the toolkit's normalized label/confidence output
into a COCO-results prediction file.

Expected dataset layout (as produced by `spacetrigger export-yolo`):

    dataset_dir/
      labels/<stem>.txt      one "class cx cy w h" line per object
      classes.txt            class names, one per line, in index order
      categories.json        [{index, id, name}] mapping back to COCO ids
      images.json            [{id, file_name, width, height}]
      images/                image files; required by real toolkits only
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

from .config import BridgeConfig, BridgeError

_REQUIRED = ("labels", "classes.txt", "categories.json", "images.json")


def _check_layout(dataset_dir: Path) -> None:
    missing = [name for name in _REQUIRED if not (dataset_dir / name).exists()]
    if missing:
        raise BridgeError(
            f"dataset dir {dataset_dir} is not a YOLO export: missing {missing}"
        )


def _write_data_yaml(config: BridgeConfig, work: Path) -> Path:
    names = (config.dataset_dir / "classes.txt").read_text(encoding="utf-8").split("\n")
    names = [n for n in names if n]
    lines = [
        f"path: {config.dataset_dir.resolve()}",
        "train: images",
        "val: images",
        "names:",
    ]
    lines += [f"  {i}: {name}" for i, name in enumerate(names)]
    path = work / "data.yaml"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def build_commands(
    config: BridgeConfig, work: Path, data_yaml: Path
) -> tuple[list[str], list[str], Path, Path]:
    """(train_command, predict_command, weights_path, predicted_labels_dir)."""
    if config.toolkit == "ultralytics":
        weights = work / "train" / "weights" / "best.pt"
        pred_dir = work / "predict" / "labels"
        train = [
            "yolo", "detect", "train",
            f"data={data_yaml}",
            f"model={config.detector}.pt",
            f"epochs={config.epochs}",
            f"batch={config.batch_size}",
            f"project={work}",
            "name=train",
            "exist_ok=True",
        ]
        predict = [
            "yolo", "detect", "predict",
            f"model={weights}",
            f"source={config.dataset_dir / 'images'}",
            "save_txt=True",
            "save_conf=True",
            f"project={work}",
            "name=predict",
            "exist_ok=True",
        ]
        return train, predict, weights, pred_dir

    weights = work / "weights.bin"
    pred_dir = work / "pred_labels"
    if config.toolkit == "mock":
        train = [
            sys.executable, "-m", "detbridge.mock_toolkit", "train",
            "--data", str(data_yaml),
            "--model", config.detector,
            "--epochs", str(config.epochs),
            "--batch", str(config.batch_size),
            "--weights-out", str(weights),
        ]
        predict = [
            sys.executable, "-m", "detbridge.mock_toolkit", "predict",
            "--weights", str(weights),
            "--labels", str(config.dataset_dir / "labels"),
            "--out", str(pred_dir),
        ]
        return train, predict, weights, pred_dir

    fields = {
        "dataset_dir": str(config.dataset_dir),
        "data_yaml": str(data_yaml),
        "detector": config.detector,
        "epochs": str(config.epochs),
        "batch": str(config.batch_size),
        "weights": str(weights),
        "pred_dir": str(pred_dir),
    }
    train = [part.format(**fields) for part in config.train_command]
    predict = [part.format(**fields) for part in config.predict_command]
    return train, predict, weights, pred_dir


def _run(command: list[str], stage: str) -> None:
    try:
        proc = subprocess.run(command, capture_output=True, text=True)
    except OSError as e:
        raise BridgeError(f"{stage} command could not start ({command[0]}): {e}") from e
    if proc.returncode != 0:
        # Surface the toolkit's own words; do not paraphrase.
        raise BridgeError(
            f"{stage} command exited with {proc.returncode}:\n"
            f"{proc.stdout}{proc.stderr}".rstrip()
        )


def convert_predictions(
    pred_labels_dir: Path, dataset_dir: Path, output: Path
) -> int:
    """Normalized 'class cx cy w h conf' label files -> COCO-results JSON."""
    categories = json.loads((dataset_dir / "categories.json").read_text(encoding="utf-8"))
    id_of_index = {int(c["index"]): int(c["id"]) for c in categories}
    images = json.loads((dataset_dir / "images.json").read_text(encoding="utf-8"))

    results = []
    for rec in images:
        stem = Path(rec["file_name"]).stem or f"image_{rec['id']}"
        txt = pred_labels_dir / f"{stem}.txt"
        if not txt.exists():
            continue
        W, H = rec["width"], rec["height"]
        for line in txt.read_text(encoding="utf-8").splitlines():
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise BridgeError(f"{txt}: expected 'class cx cy w h conf', got {line!r}")
            idx, cx, cy, w, h, conf = parts
            if int(idx) not in id_of_index:
                raise BridgeError(f"{txt}: class index {idx} not in categories.json")
            bw, bh = float(w) * W, float(h) * H
            x = max(0.0, float(cx) * W - bw / 2)
            y = max(0.0, float(cy) * H - bh / 2)
            results.append(
                {
                    "image_id": rec["id"],
                    "category_id": id_of_index[int(idx)],
                    "bbox": [x, y, min(bw, W - x), min(bh, H - y)],
                    "score": min(1.0, max(0.0, float(conf))),
                }
            )
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(json.dumps(results), encoding="utf-8")
    return len(results)


def train_and_predict(config: BridgeConfig) -> Path:
    """Run the toolkit's train and predict stages, then write the COCO-results
    prediction file. Returns the prediction file path."""
    _check_layout(config.dataset_dir)
    work = config.work_dir or (config.dataset_dir / "bridge_work")
    work.mkdir(parents=True, exist_ok=True)
    data_yaml = _write_data_yaml(config, work)
    train, predict, weights, pred_dir = build_commands(config, work, data_yaml)

    _run(train, "train")
    if not weights.exists():
        raise BridgeError(f"train stage finished but left no weights at {weights}")
    _run(predict, "predict")
    if not pred_dir.exists():
        raise BridgeError(f"predict stage finished but left no labels at {pred_dir}")

    count = convert_predictions(pred_dir, config.dataset_dir, config.output_predictions)
    if count == 0:
        raise BridgeError("predict stage produced no detections to convert")
    return config.output_predictions
