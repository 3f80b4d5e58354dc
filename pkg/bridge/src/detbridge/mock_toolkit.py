"""Stand-in detector toolkit for smoke-testing the bridge orchestration.

Behaves like a perfectly backdoored detector: "training" records the run,
"prediction" echoes the (poisoned) training labels with a confidence
column, in the normalized label layout real toolkits emit with
save_txt/save_conf. No learning happens here; this exists so the
subprocess plumbing and the prediction-format contract can be exercised
without GPUs or a real toolkit install.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def cmd_train(args) -> int:
    data = Path(args.data)
    if not data.is_file():
        print(f"mock-toolkit: data file {data} not found", file=sys.stderr)
        return 2
    if args.epochs <= 0:
        print(f"mock-toolkit: epochs must be positive, got {args.epochs}", file=sys.stderr)
        return 2
    weights = Path(args.weights_out)
    weights.parent.mkdir(parents=True, exist_ok=True)
    weights.write_text(
        json.dumps({"model": args.model, "epochs": args.epochs, "batch": args.batch})
    )
    print(f"mock-toolkit: trained {args.model} for {args.epochs} epochs")
    return 0


def cmd_predict(args) -> int:
    weights = Path(args.weights)
    if not weights.is_file():
        print(f"mock-toolkit: weights {weights} not found", file=sys.stderr)
        return 2
    labels = Path(args.labels)
    if not labels.is_dir():
        print(f"mock-toolkit: labels dir {labels} not found", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for txt in sorted(labels.glob("*.txt")):
        lines = []
        for line in txt.read_text().splitlines():
            if line.strip():
                lines.append(f"{line} {args.conf}")
                count += 1
        (out / txt.name).write_text("\n".join(lines) + ("\n" if lines else ""))
    print(f"mock-toolkit: wrote {count} detections")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="detbridge-mock-toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default="yolov8n")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--weights-out", required=True, dest="weights_out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict")
    p.add_argument("--weights", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--conf", type=float, default=0.9)
    p.set_defaults(func=cmd_predict)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
