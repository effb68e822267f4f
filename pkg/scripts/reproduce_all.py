"""Run every configuration in scripts/configs through the CLI, writing CSVs to an output directory.

    python3 scripts/reproduce_all.py [--out results] [--only scaling_quadratic ...]
"""

import argparse
import pathlib
import sys

from momentum_equiv.cli import load_config, run

HERE = pathlib.Path(__file__).resolve().parent


def kind_of(path):
    for line in path.read_text().splitlines():
        key, _, value = line.partition("=")
        if key.strip() == "kind":
            return value.split("#")[0].strip()
    raise SystemExit(f"{path}: no kind line")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    for cfg_path in sorted((HERE / "configs").glob("*.cfg")):
        name = cfg_path.stem
        if args.only and name not in args.only:
            continue
        cfg = load_config(kind_of(cfg_path), str(cfg_path), seed=args.seed, out=str(out / f"{name}.csv"))
        print(f"== {name}", flush=True)
        status = max(status, run(cfg))
    return status


if __name__ == "__main__":
    sys.exit(main())
