"""Run every reference config through the CLI and collect the outputs.

    python scripts/run_reference.py [--out results] [--only sup_ratio ...]
"""

import argparse
import sys
from pathlib import Path

from ppca_quotient.cli import main

CONFIGS = Path(__file__).resolve().parent / "configs"


def run(out: Path, only=None) -> int:
    status = 0
    for cfg in sorted(CONFIGS.glob("*.json")):
        if only and cfg.stem not in only:
            continue
        command = "simulate" if cfg.stem.startswith("simulate") else "experiment"
        target = out / cfg.stem
        rc = main([command, "--config", str(cfg), "--out", str(target)])
        print(f"{cfg.stem}: exit {rc} -> {target}")
        status = status or rc
    return status


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*")
    args = ap.parse_args()
    sys.exit(run(Path(args.out), args.only))
