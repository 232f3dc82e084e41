"""Run every config in configs/ (or the ones named) into results/<name>/.

Usage: python3 scripts/run_figures.py [NAME ...] [--threads K]
"""

import argparse
from pathlib import Path

from memassoc import config, runner

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("names", nargs="*", help="config stems, e.g. capacity")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", type=Path, default=Path("results"))
    args = parser.parse_args()
    paths = [CONFIGS / f"{n}.toml" for n in args.names] or sorted(CONFIGS.glob("*.toml"))
    for path in paths:
        cfg = config.validate(path.read_text())
        out = runner.run(cfg, args.out / path.stem, args.threads)
        print(f"{path.stem}: {len(out.files)} files in {out.directory}")
        for row in out.summary:
            print("  " + "  ".join(f"{k}={runner._fmt(v)}" for k, v in row.items()))


if __name__ == "__main__":
    main()
