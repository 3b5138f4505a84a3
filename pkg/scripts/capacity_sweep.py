"""Hidden-width sweep on a scenario; prints the per-group uncertainty table.

    python3 scripts/capacity_sweep.py --scenario sd1 --widths 10,50,100,200
"""

import argparse

from uncfair.audit import run_sweep, sweep_markdown
from uncfair.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="sd1")
    ap.add_argument("--widths", default="10,50,100,200")
    ap.add_argument("--seeds", default="1..5")
    ap.add_argument("--out", default="runs/sweep")
    args = ap.parse_args()
    cfg = load_config(scenario=args.scenario, seeds=args.seeds, widths=args.widths,
                      out_dir=args.out)
    res = run_sweep(cfg)
    print(sweep_markdown(res))


if __name__ == "__main__":
    main()
