"""End-to-end audit: data, model, uncertainty, fairness, consistency, calibration.

Each seed runs an independent pipeline and writes its own bundle under
``<out_dir>/seed_<s>/``. Seed ``s`` drives everything: the scenario draw or
real-data split (stream 0), training (``TrainConfig.seed = s``) and the
evaluation weight draws (stream 2). Two runs of one config are identical.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bayesnet import train
from .config import AuditConfig, ConfigError
from .ensemble import ensemble_predict, train_ensemble
from .fairness import (RATIO_NAMES, ConsistencyScores, FairnessReport, GroupAudit,
                       consistency, group_audit, group_fairness, is_unfair, knn_all)
from .metrics import ReliabilityBins, confidence_and_correct, reliability
from .synthgen import generate_scenario, make_rng, resolve_scenario
from .tabular import (TabularDataset, categories_of, fit_standardizer, load_csv,
                      resolve_schema, select_binary_groups, stratified_split)
from .uncertainty import decompose_batch, group_aggregate, mc_predict

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
INCOMPLETE = "INCOMPLETE"

# measures reported per group, in table order
GROUP_ROWS = (
    ("M_Acc", "acc"), ("M_PPV", "ppv"), ("M_NPV", "npv"), ("M_FPR", "fpr"),
    ("M_FNR", "fnr"), ("U_e", "u_epis"), ("U_a", "u_alea"), ("U_p", "u_pred"),
)
CONSISTENCY_KINDS = ("point-prediction", "epistemic", "aleatoric", "predictive")


class AuditError(RuntimeError):
    """A pipeline failure, tagged with the stage (module) it came from."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class _stage:
    # re-raise anything inside the block as AuditError(stage, ...)
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if exc is None or isinstance(exc, AuditError):
            return False
        raise AuditError(self.name, f"{typ.__name__}: {exc}") from exc


@dataclass
class SeedResult:
    seed: int
    report: FairnessReport
    audits: tuple[GroupAudit, GroupAudit]
    consistency: dict[str, ConsistencyScores]
    reliability: ReliabilityBins
    files: dict[str, str]
    n_train: int
    n_test: int
    seconds: float

    def group_row(self, g: int) -> dict:
        a = self.audits[g]
        p, u = a.performance, a.uncertainty
        return {
            "size": a.size, "acc": p.acc, "ppv": p.ppv, "npv": p.npv, "fpr": p.fpr,
            "fnr": p.fnr, "u_epis": u.epistemic, "u_alea": u.aleatoric,
            "u_pred": u.predictive, "positive_rate": a.positive_rate,
            "tp": p.tp, "fp": p.fp, "tn": p.tn, "fn": p.fn,
        }

    def to_dict(self) -> dict:
        out = {
            "seed": self.seed,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "groups": {str(g): self.group_row(g) for g in (0, 1)},
            "fairness": self.report.to_dict(),
        }
        if self.consistency:
            k = next(iter(self.consistency.values())).k
            out["consistency"] = {"k": k}
            for kind, cs in self.consistency.items():
                out["consistency"][kind] = {
                    "group_means": {str(g): v for g, v in cs.group_means.items()},
                    "by_true_label": {f"G{g}Y{c}": v for (g, c), v in cs.by_true_label.items()},
                    "by_pred_label": {f"G{g}Yhat{c}": v for (g, c), v in cs.by_pred_label.items()},
                }
        rb = self.reliability
        out["calibration"] = {
            "bins": rb.n_bins,
            "ece": rb.ece,
            "table": [dict(zip(("bin", "lower", "upper", "count", "confidence", "accuracy"), r))
                      for r in rb.rows()],
        }
        out["files"] = dict(self.files)
        return out


def summarize(values) -> dict:
    """Median/min/max over the defined values of one quantity across seeds.

    The median is reported only when a majority of seeds define the value;
    otherwise it is ``None`` (undefined), mirroring how a single undefined
    ratio is reported.
    """
    vals = list(values)
    defined = [float(v) for v in vals if v is not None]
    n = len(vals)
    return {
        "median": float(np.median(defined)) if 2 * len(defined) > n else None,
        "min": min(defined) if defined else None,
        "max": max(defined) if defined else None,
        "n_defined": len(defined),
        "n_undefined": n - len(defined),
    }


@dataclass
class AuditResult:
    config: AuditConfig
    seeds: list[SeedResult] = field(default_factory=list)

    def ratio_values(self, name: str) -> list:
        return [s.report.value(name) for s in self.seeds]

    def median_ratio(self, name: str) -> float | None:
        return summarize(self.ratio_values(name))["median"]

    def median_group(self, key: str, g: int) -> float | None:
        return summarize([s.group_row(g)[key] for s in self.seeds])["median"]

    def aggregate(self) -> dict:
        ratios = {}
        for name in RATIO_NAMES:
            agg = summarize(self.ratio_values(name))
            med = agg["median"]
            agg["unfair"] = True if med is None else is_unfair(med, self.config.tau)
            ratios[name] = agg
        keys = ["size"] + [k for _, k in GROUP_ROWS] + ["positive_rate"]
        groups = {str(g): {k: summarize([s.group_row(g)[k] for s in self.seeds]) for k in keys}
                  for g in (0, 1)}
        out = {"ratios": ratios, "groups": groups,
               "ece": summarize([s.reliability.ece for s in self.seeds])}
        if self.config.k > 0:
            out["consistency"] = {
                kind: {str(g): summarize([s.consistency[kind].group_means.get(g)
                                          for s in self.seeds]) for g in (0, 1)}
                for kind in CONSISTENCY_KINDS
            }
        return out

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "schema": "uncfair-audit-summary",
            "schema_version": SCHEMA_VERSION,
            "generator": f"uncfair {__version__}",
            "source": cfg.scenario or cfg.csv,
            "backend": cfg.backend,
            "tau": cfg.tau,
            "config": cfg.to_dict(),
            "seeds": [s.seed for s in self.seeds],
            "aggregate": self.aggregate(),
            "per_seed": [s.to_dict() for s in self.seeds],
        }


# ---------------------------------------------------------------------------
# pipeline


def prepare_data(cfg: AuditConfig, seed: int) -> tuple[TabularDataset, TabularDataset]:
    if cfg.scenario:
        return generate_scenario(resolve_scenario(cfg.scenario, seed, cfg.test_fraction))
    schema = resolve_schema(cfg.schema)
    g0 = [v.strip() for v in cfg.g0_values.split(",") if v.strip()]
    g1 = [v.strip() for v in cfg.g1_values.split(",") if v.strip()]
    full = select_binary_groups(load_csv(cfg.csv, schema, cfg.group_column), g0, g1)
    if cfg.test_csv:
        test = load_csv(cfg.test_csv, schema, cfg.group_column, categories=categories_of(full))
        train_ds, test_ds = full, select_binary_groups(test, g0, g1)
    else:
        train_ds, test_ds = stratified_split(full, cfg.test_fraction, make_rng(seed))
    if cfg.use_standardizer():
        std = fit_standardizer(train_ds)
        train_ds, test_ds = std.apply(train_ds), std.apply(test_ds)
    return train_ds, test_ds


def fit_and_predict(cfg: AuditConfig, train_ds, test_ds, seed: int, ckpt_path=None):
    """Train the configured backend and return its ``(N, M, C)`` predictions."""
    tc = cfg.train_config(seed)
    if cfg.backend == "ensemble":
        model = train_ensemble(train_ds, tc, cfg.ensemble_size)
        probs = ensemble_predict(model, test_ds.features)
    else:
        model = train(train_ds, tc)
        probs = mc_predict(model, test_ds.features, cfg.mc_eval_samples, make_rng(seed, 2))
    if ckpt_path is not None:
        model.save(ckpt_path)
    return model, probs


def audit_predictions(probs, test_ds: TabularDataset, cfg: AuditConfig):
    """Everything downstream of the prediction array, for one seed."""
    with _stage("uncertainty"):
        scalars = decompose_batch(probs)
        gu = group_aggregate(scalars, test_ds.groups)
    mean_probs = probs.mean(axis=1)
    preds = np.argmax(mean_probs, axis=1)
    g, y = test_ds.groups, test_ds.labels
    with _stage("fairness"):
        audits = tuple(group_audit(k, preds[g == k], y[g == k], gu[k]) for k in (0, 1))
        report = group_fairness(audits[0], audits[1], cfg.tau)
        cons = {}
        if cfg.k > 0:
            if cfg.k >= test_ds.n:
                raise ConfigError(f"k={cfg.k} needs more than {test_ds.n} test samples")
            nb = knn_all(test_ds.features, cfg.k)
            values = {"point-prediction": preds, "epistemic": scalars["epistemic"],
                      "aleatoric": scalars["aleatoric"], "predictive": scalars["predictive"]}
            cons = {kind: consistency(values[kind], None, cfg.k, g, y, preds, kind, nb)
                    for kind in CONSISTENCY_KINDS}
    with _stage("metrics"):
        rb = reliability(*confidence_and_correct(mean_probs, y), cfg.bins)
    return scalars, preds, audits, report, cons, rb


def run_seed(cfg: AuditConfig, seed: int, out_dir: Path) -> SeedResult:
    t0 = time.perf_counter()
    out_dir.mkdir(parents=True, exist_ok=True)
    with _stage("synthgen" if cfg.scenario else "tabular"):
        train_ds, test_ds = prepare_data(cfg, seed)
    with _stage("ensemble" if cfg.backend == "ensemble" else "bayesnet"):
        _, probs = fit_and_predict(cfg, train_ds, test_ds, seed, out_dir / "model.ckpt")
    scalars, preds, audits, report, cons, rb = audit_predictions(probs, test_ds, cfg)
    files = {"model": "model.ckpt", "uncertainty": "uncertainty.csv",
             "reliability": "reliability.csv"}
    _write_uncertainty(out_dir / files["uncertainty"], test_ds, preds, scalars)
    _write_reliability(out_dir / files["reliability"], rb)
    if cons:
        files["consistency"] = "consistency.csv"
        _write_consistency(out_dir / files["consistency"], test_ds, cons)
    result = SeedResult(seed, report, audits, cons, rb, files, train_ds.n, test_ds.n,
                        time.perf_counter() - t0)
    files["report"] = "report.json"
    body = {"schema": "uncfair-seed-report", "schema_version": SCHEMA_VERSION,
            **result.to_dict()}
    _write_json(out_dir / "report.json", body)
    return result


def run_audit(cfg: AuditConfig, emit: tuple[str, ...] = ("json", "csv", "markdown")) -> AuditResult:
    """Run every seed and write the per-seed bundles plus summary reports.

    Configuration problems (missing files, bad values) raise before anything
    is written. A failure mid-run leaves an ``INCOMPLETE`` marker in the
    output directory and re-raises.
    """
    with _stage("auditcli"):
        cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / INCOMPLETE
    marker.write_text("audit in progress\n")
    result = AuditResult(cfg)
    try:
        for seed in cfg.seed_list():
            log.info("seed %d", seed)
            result.seeds.append(run_seed(cfg, seed, out / f"seed_{seed}"))
        with _stage("auditcli"):
            for fmt in emit:
                emit_report(result, fmt, out)
    except Exception as exc:
        marker.write_text(f"audit failed: {exc}\ncompleted seeds: "
                          f"{[s.seed for s in result.seeds]}\n")
        raise
    marker.unlink()
    return result


# ---------------------------------------------------------------------------
# capacity sweep


@dataclass
class SweepResult:
    widths: list[int]
    rows: list[dict]
    ordering: dict[str, dict]
    audits: list[AuditResult]

    def to_dict(self) -> dict:
        return {"schema": "uncfair-sweep", "schema_version": SCHEMA_VERSION,
                "widths": self.widths, "rows": self.rows, "ordering": self.ordering}


SWEEP_COLUMNS = ("width", "acc_g0", "acc_g1", "u_epis_g0", "u_epis_g1",
                 "u_alea_g0", "u_alea_g1")


def _ordering(rows, key) -> dict:
    signs = []
    for r in rows:
        a, b = r[f"{key}_g0"], r[f"{key}_g1"]
        signs.append(None if a is None or b is None else
                     "G0>G1" if a > b else "G0<G1" if a < b else "G0=G1")
    ok = None not in signs and len(set(signs)) == 1
    return {"preserved": ok, "per_width": signs}


def run_sweep(cfg: AuditConfig, widths=None) -> SweepResult:
    """One full audit per hidden width, same seeds; tabulate per-group medians."""
    widths = list(cfg.width_list() if widths is None else widths)
    if not widths:
        raise ConfigError("sweep needs at least one width")
    if any(int(w) < 1 for w in widths):
        raise ConfigError(f"sweep widths must be positive, got {widths}")
    cfg.validate()
    out = Path(cfg.out_dir)
    audits, rows = [], []
    for w in widths:
        res = run_audit(replace(cfg, hidden_width=int(w), out_dir=str(out / f"width_{w}")))
        audits.append(res)
        row = {"width": int(w)}
        for key, name in (("acc", "acc"), ("u_epis", "u_epis"), ("u_alea", "u_alea")):
            for g in (0, 1):
                row[f"{name}_g{g}"] = res.median_group(key, g)
        rows.append(row)
    ordering = {k: _ordering(rows, k) for k in ("u_epis", "u_alea")}
    result = SweepResult([int(w) for w in widths], rows, ordering, audits)
    _write_json(out / "sweep.json", result.to_dict())
    with open(out / "sweep.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(SWEEP_COLUMNS)
        for r in rows:
            wr.writerow([_fmt(r[c]) for c in SWEEP_COLUMNS])
    (out / "sweep.md").write_text(sweep_markdown(result))
    return result


def sweep_markdown(res: SweepResult) -> str:
    lines = ["# Capacity sweep", "",
             "| width | acc G0 | acc G1 | U_e G0 | U_e G1 | U_a G0 | U_a G1 |",
             "|---|---|---|---|---|---|---|"]
    for r in res.rows:
        lines.append("| " + " | ".join(_short(r[c]) for c in SWEEP_COLUMNS) + " |")
    lines.append("")
    for key, label in (("u_epis", "U_e"), ("u_alea", "U_a")):
        o = res.ordering[key]
        state = "preserved" if o["preserved"] else "NOT preserved"
        lines.append(f"- {label} group ordering {state}: {', '.join(map(str, o['per_width']))}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# reports


def _fmt(v) -> str:
    # shortest repr that round-trips a float exactly
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _short(v) -> str:
    if v is None:
        return "undef"
    if isinstance(v, (float, np.floating)):
        if float(v).is_integer() and abs(v) >= 2:
            return str(int(v))
        return f"{v:.4g}" if abs(v) < 1e-3 and v != 0 else f"{v:.3f}"
    return str(v)


def _write_json(path: Path, body: dict) -> None:
    path.write_text(json.dumps(body, indent=2, allow_nan=False) + "\n")


def _write_uncertainty(path, ds, preds, scalars) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["sample_id", "group", "label", "pred", "u_epis", "u_alea", "u_pred"])
        for i in range(ds.n):
            wr.writerow([i, int(ds.groups[i]), int(ds.labels[i]), int(preds[i]),
                         _fmt(scalars["epistemic"][i]), _fmt(scalars["aleatoric"][i]),
                         _fmt(scalars["predictive"][i])])


def _write_consistency(path, ds, cons) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["sample_id", "group", "label", "kind", "score"])
        for kind, cs in cons.items():
            for i, s in enumerate(cs.scores):
                wr.writerow([i, int(ds.groups[i]), int(ds.labels[i]), kind, _fmt(s)])


def _write_reliability(path, rb: ReliabilityBins) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["bin", "lower", "upper", "count", "confidence", "accuracy"])
        for row in rb.rows():
            wr.writerow([_fmt(v) for v in row])


def flatten_summary(summary: dict) -> list[tuple]:
    """Long-format rows ``(scope, seed, section, name, group, value)``."""
    rows = []
    agg = summary["aggregate"]
    for name, st in agg["ratios"].items():
        for stat in ("median", "min", "max", "n_defined", "n_undefined", "unfair"):
            rows.append(("aggregate", "", "ratio", f"{name}.{stat}", "", st[stat]))
    for g, metrics in agg["groups"].items():
        for key, st in metrics.items():
            for stat in ("median", "min", "max"):
                rows.append(("aggregate", "", "group", f"{key}.{stat}", g, st[stat]))
    for kind, by_group in agg.get("consistency", {}).items():
        for g, st in by_group.items():
            rows.append(("aggregate", "", "consistency", f"{kind}.median", g, st["median"]))
    for stat in ("median", "min", "max"):
        rows.append(("aggregate", "", "calibration", f"ece.{stat}", "", agg["ece"][stat]))
    for rep in summary["per_seed"]:
        s = rep["seed"]
        for name, r in rep["fairness"]["ratios"].items():
            rows.append(("seed", s, "ratio", name, "", r["value"]))
            rows.append(("seed", s, "ratio", f"{name}.unfair", "", r["unfair"]))
        for y, r in rep["fairness"]["eodd_per_label"].items():
            rows.append(("seed", s, "ratio", f"F_EOdd.y{y}", "", r["value"]))
        for g, metrics in rep["groups"].items():
            for key, v in metrics.items():
                rows.append(("seed", s, "group", key, g, v))
        for kind, c in rep.get("consistency", {}).items():
            if kind == "k":
                continue
            for g, v in c["group_means"].items():
                rows.append(("seed", s, "consistency", kind, g, v))
        rows.append(("seed", s, "calibration", "ece", "", rep["calibration"]["ece"]))
    return rows


CSV_HEADER = ("scope", "seed", "section", "name", "group", "value")


def summary_csv(summary: dict) -> str:
    import io

    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow([f"# schema=uncfair-audit-summary schema_version={summary['schema_version']}"])
    wr.writerow(CSV_HEADER)
    for row in flatten_summary(summary):
        wr.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def summary_markdown(summary: dict) -> str:
    agg = summary["aggregate"]
    seeds = summary["seeds"]
    lines = [
        f"# Audit: {summary['source']}",
        "",
        f"backend {summary['backend']}, seeds {', '.join(map(str, seeds))}, "
        f"tau {summary['tau']}, schema version {summary['schema_version']}",
        "",
        "## Group measures (median over seeds)",
        "",
        "| Measure | G0 | G1 |",
        "|---|---|---|",
    ]
    for label, key in GROUP_ROWS:
        vals = [agg["groups"][g][key]["median"] for g in ("0", "1")]
        lines.append(f"| {label} | {_short(vals[0])} | {_short(vals[1])} |")
    sizes = [agg["groups"][g]["size"]["median"] for g in ("0", "1")]
    lines.append(f"| n | {_short(sizes[0])} | {_short(sizes[1])} |")
    lines += ["", "## Fairness ratios (G0 / G1)", "",
              "| Measure | median | min | max | undefined | verdict |",
              "|---|---|---|---|---|---|"]
    for name, st in agg["ratios"].items():
        verdict = "unfair" if st["unfair"] else "fair"
        lines.append(f"| {name} | {_short(st['median'])} | {_short(st['min'])} | "
                     f"{_short(st['max'])} | {st['n_undefined']}/{len(seeds)} | {verdict} |")
    if "consistency" in agg:
        k = summary["config"]["k"]
        lines += ["", f"## Individual consistency (k={k}, median over seeds)", "",
                  "| Kind | G0 | G1 |", "|---|---|---|"]
        for kind, by_group in agg["consistency"].items():
            lines.append(f"| {kind} | {_short(by_group['0']['median'])} | "
                         f"{_short(by_group['1']['median'])} |")
    lines += ["", "## Per seed", "",
              "| seed | " + " | ".join(RATIO_NAMES) + " | ECE |",
              "|---" * (len(RATIO_NAMES) + 2) + "|"]
    for rep in summary["per_seed"]:
        r = rep["fairness"]["ratios"]
        cells = [_short(r[n]["value"]) + ("*" if r[n]["unfair"] else "") for n in RATIO_NAMES]
        lines.append(f"| {rep['seed']} | " + " | ".join(cells)
                     + f" | {_short(rep['calibration']['ece'])} |")
    lines += ["", "`*` marks a ratio flagged unfair; `undef` marks an undefined ratio.", ""]
    return "\n".join(lines)


FORMATS = {"json": "summary.json", "csv": "summary.csv", "markdown": "summary.md"}


def emit_report(result, fmt: str, out_dir=None) -> Path:
    """Write ``result`` (an AuditResult or a loaded summary dict) as ``fmt``."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {sorted(FORMATS)}")
    summary = result.to_dict() if isinstance(result, AuditResult) else result
    if summary.get("schema") != "uncfair-audit-summary":
        raise ValueError("not an audit summary")
    out = Path(out_dir if out_dir is not None else summary["config"]["out_dir"])
    if out.exists() and not out.is_dir():
        raise NotADirectoryError(f"output path is not a directory: {out}")
    out.mkdir(parents=True, exist_ok=True)
    path = out / FORMATS[fmt]
    if fmt == "json":
        _write_json(path, summary)
    elif fmt == "csv":
        path.write_text(summary_csv(summary))
    else:
        path.write_text(summary_markdown(summary))
    return path


def read_summary_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))

