"""Command-line entry point: ``uncfair {generate,train,audit,sweep,report}``.

Every config key is also a flag of the same name (``--learning_rate 0.01``;
dashes work too). Flags override the ``--config`` file, which overrides the
built-in scenario recipe.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, config_fields, key_of, load_config

log = logging.getLogger("uncfair")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file")
    groups = {}
    for f in config_fields():
        section = f.metadata["section"]
        if section not in groups:
            groups[section] = p.add_argument_group(f"[{section}]")
        key = key_of(f)
        flags = [f"--{key}"]
        if "_" in key:
            flags.append(f"--{key.replace('_', '-')}")
        groups[section].add_argument(*flags, dest=f.name, default=None, metavar="V",
                                     help=f"{f.metadata['help']} (default {f.default!r})")


def _config(args):
    overrides = {f.name: getattr(args, f.name) for f in config_fields()}
    return load_config(args.config, **overrides)


def cmd_generate(args) -> int:
    from .synthgen import generate_scenario, resolve_scenario

    cfg = _config(args)
    if not cfg.scenario:
        raise ConfigError("generate needs --scenario")
    out = Path(cfg.out_dir)
    for seed in cfg.seed_list():
        train, test = generate_scenario(resolve_scenario(cfg.scenario, seed, cfg.test_fraction))
        d = out / f"seed_{seed}"
        d.mkdir(parents=True, exist_ok=True)
        train.to_csv(d / "train.csv")
        test.to_csv(d / "test.csv")
        print(f"seed {seed}: {train.n} train / {test.n} test rows -> {d}")
    return 0


def cmd_train(args) -> int:
    from .audit import fit_and_predict, prepare_data

    cfg = _config(args).validate()
    seed = args.seed if args.seed is not None else cfg.seed_list()[0]
    ckpt = Path(args.checkpoint or Path(cfg.out_dir) / f"model_seed{seed}.ckpt")
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = prepare_data(cfg, seed)
    _, probs = fit_and_predict(cfg, train_ds, test_ds, seed, ckpt)
    acc = float((probs.mean(axis=1).argmax(axis=1) == test_ds.labels).mean())
    print(f"trained {cfg.backend} (seed {seed}) on {train_ds.n} rows; "
          f"test accuracy {acc:.3f}; checkpoint {ckpt}")
    return 0


def cmd_audit(args) -> int:
    from .audit import run_audit

    res = run_audit(_config(args))
    agg = res.aggregate()["ratios"]
    for name, st in agg.items():
        med = "undefined" if st["median"] is None else f"{st['median']:.3f}"
        print(f"{name:7s} median {med:>10s}  {'unfair' if st['unfair'] else 'fair'}")
    print(f"reports in {res.config.out_dir}")
    return 0


def cmd_sweep(args) -> int:
    from .audit import run_sweep

    cfg = _config(args)
    run_sweep(cfg)
    print((Path(cfg.out_dir) / "sweep.md").read_text())
    return 0


def cmd_report(args) -> int:
    from .audit import emit_report

    summary = json.loads(Path(args.summary).read_text())
    for fmt in args.format:
        print(emit_report(summary, fmt, args.out_dir or Path(args.summary).parent))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uncfair", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write scenario train/test CSVs per seed")
    _add_config_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model and save a checkpoint")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, help="seed (default: first of --seeds)")
    p.add_argument("--checkpoint", help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("audit", help="full multi-seed fairness and uncertainty audit")
    _add_config_flags(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="hidden-width capacity sweep")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="re-emit a saved summary.json")
    p.add_argument("summary", help="path to summary.json")
    p.add_argument("--format", nargs="+", default=["markdown"],
                   choices=["json", "csv", "markdown"])
    p.add_argument("--out_dir", "--out-dir", default=None)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - report every failure cleanly
        if args.verbose > 1:
            raise
        print(f"uncfair {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
