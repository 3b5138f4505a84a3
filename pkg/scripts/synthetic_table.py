"""Audit the three built-in synthetic scenarios and print one combined table.

    python3 scripts/synthetic_table.py --seeds 1..5 --out runs/synthetic
"""

import argparse
from pathlib import Path

from uncfair.audit import GROUP_ROWS, run_audit
from uncfair.config import load_config
from uncfair.fairness import RATIO_NAMES


def cell(v, digits=4):
    return "undef" if v is None else f"{v:.{digits}f}"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="1..5")
    ap.add_argument("--out", default="runs/synthetic")
    ap.add_argument("--scenarios", nargs="+", default=["sd1", "sd2", "sd3"])
    args = ap.parse_args()

    results = {}
    for name in args.scenarios:
        cfg = load_config(scenario=name, seeds=args.seeds, out_dir=str(Path(args.out) / name))
        results[name] = run_audit(cfg)

    head = "| measure | " + " | ".join(f"{n} G0 | {n} G1" for n in results) + " |"
    lines = [head, "|" + "---|" * (1 + 2 * len(results))]
    for label, key in GROUP_ROWS:
        cells = [cell(r.median_group(key, g)) for r in results.values() for g in (0, 1)]
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    for name in RATIO_NAMES:
        cells = []
        for r in results.values():
            v = r.median_ratio(name)
            flag = "*" if r.aggregate()["ratios"][name]["unfair"] else ""
            cells += [cell(v, 2) + flag, ""]
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    print(f"medians over seeds {args.seeds}; * marks unfair\n")
    print("\n".join(lines))


if __name__ == "__main__":
    main()
