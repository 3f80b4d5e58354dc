"""Bridge configuration: one file mirroring the fields below."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class BridgeError(Exception):
    pass


def default_epochs(detector: str) -> int:
    # Lightweight fine-tuning defaults per detector family.
    return 10 if "yolov3" in detector.lower().replace("-", "") else 15


@dataclass
class BridgeConfig:
    dataset_dir: Path
    output_predictions: Path
    detector: str = "yolov8n"
    epochs: int | None = None
    batch_size: int = 16
    toolkit: str = "ultralytics"
    work_dir: Path | None = None
    # Used when toolkit == "command": templates with {data_yaml}, {detector},
    # {epochs}, {batch}, {weights}, {dataset_dir}, {pred_dir} placeholders.
    train_command: list[str] = field(default_factory=list)
    predict_command: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.dataset_dir = Path(self.dataset_dir)
        self.output_predictions = Path(self.output_predictions)
        if self.work_dir is not None:
            self.work_dir = Path(self.work_dir)
        if self.epochs is None:
            self.epochs = default_epochs(self.detector)
        if self.epochs <= 0:
            raise BridgeError(f"epochs must be > 0, got {self.epochs}")
        if self.batch_size <= 0:
            raise BridgeError(f"batch_size must be > 0, got {self.batch_size}")
        if self.toolkit not in ("ultralytics", "command", "mock"):
            raise BridgeError(f"unknown toolkit {self.toolkit!r}")
        if self.toolkit == "command" and not (self.train_command and self.predict_command):
            raise BridgeError("toolkit 'command' needs train_command and predict_command")

    @classmethod
    def from_file(cls, path) -> "BridgeConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise BridgeError(f"cannot read config {path}: {e}") from e
        known = {
            "dataset_dir", "output_predictions", "detector", "epochs",
            "batch_size", "toolkit", "work_dir", "train_command", "predict_command",
        }
        unknown = set(raw) - known
        if unknown:
            raise BridgeError(f"unknown config keys: {sorted(unknown)}")
        if "dataset_dir" not in raw or "output_predictions" not in raw:
            raise BridgeError("config needs dataset_dir and output_predictions")
        return cls(**raw)
