"""detbridge command line: run a train+predict round from one config file."""

from __future__ import annotations

import argparse
import sys

from .bridge import train_and_predict
from .config import BridgeConfig, BridgeError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="detbridge",
        description="Fine-tune a detector on an exported dataset and emit predictions",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run train + predict per the config file")
    p.add_argument("--config", required=True)
    args = parser.parse_args(argv)

    try:
        config = BridgeConfig.from_file(args.config)
        out = train_and_predict(config)
    except BridgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"predictions written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
