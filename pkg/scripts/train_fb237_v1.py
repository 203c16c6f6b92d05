"""Desk-scale training on the fb237_v1 inductive split, then budget statistics.

The split is looked up in $PATHKG_FB237_V1, ./data/fb237_v1 and
~/.cache/pathkg/fb237_v1 (train graph directory plus an ``fb237_v1_ind`` sibling).
"""

import argparse
import json
import sys
from pathlib import Path

from pathkg.cli import main as cli_main
from pathkg.datasets import find_fb237_v1, searched_locations

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "fb237_v1.ini"))
    ap.add_argument("--out", default="runs/fb237_v1")
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    base = find_fb237_v1()
    if base is None:
        print("fb237_v1 not found; looked in:\n  " + "\n  ".join(searched_locations()), file=sys.stderr)
        return 2
    argv = ["train", "--config", args.config, "--dataset", str(base), "--out", args.out,
            "--threads", str(args.threads)]
    if args.epochs is not None:
        argv += ["--epochs", str(args.epochs)]
    code = cli_main(argv)
    if code:
        return code
    summary = json.loads((Path(args.out) / "summary.json").read_text())
    print(f"test H@10 {summary['test']['hits@10']:.3f}  training {summary['seconds'] / 60:.1f} min")
    return cli_main(["bench", "--checkpoint", str(Path(args.out) / "best.ckpt"), "--ratios", "0.5,1.0",
                     "--out", args.out, "--threads", str(args.threads)])


if __name__ == "__main__":
    sys.exit(main())
