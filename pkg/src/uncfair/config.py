"""Audit configuration: INI file with sections, one flag per key.

Resolution order, later wins::

    dataclass defaults < scenario recipe < config file < command-line flags

Every key is unique across sections, so ``--<key>`` on the command line
always names exactly one setting. README.md lists every key.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .bayesnet import TrainConfig


class ConfigError(ValueError):
    pass


def _f(section: str, default, help: str):
    return field(default=default, metadata={"section": section, "help": help})


@dataclass(frozen=True)
class AuditConfig:
    # [data]
    scenario: str = _f("data", "", "built-in scenario (sd1, sd2, sd3, sd1_printed) or scenario file")
    csv: str = _f("data", "", "real-data CSV (training file when test_csv is set)")
    test_csv: str = _f("data", "", "optional separate test CSV")
    schema: str = _f("data", "", "column schema: compas, adult or a schema file")
    group_column: str = _f("data", "", "raw column holding the sensitive attribute")
    g0_values: str = _f("data", "", "comma list of values (or <25 style comparisons) forming G0")
    g1_values: str = _f("data", "", "comma list of values forming G1")
    test_fraction: float = _f("data", 0.2, "held-out share, stratified by (G, Y)")
    standardize: str = _f("data", "auto", "auto | yes | no (auto: yes for CSV data, no for scenarios)")
    # [model]
    backend: str = _f("model", "variational", "variational | ensemble")
    hidden_width: int = _f("model", 0, "hidden layer width; 0 means no hidden layer")
    ensemble_size: int = _f("model", 5, "ensemble members T")
    mc_eval_samples: int = _f("model", 10, "MC weight draws per test sample")
    # [train]
    epochs: int = _f("train", 5, "passes over the training split")
    batch_size: int = _f("train", 8, "minibatch size")
    learning_rate: float = _f("train", 0.001, "Adam step size")
    lam: float = _f("train", 2000.0, "weight of the NLL term (config key: lambda)")
    mc_train_samples: int = _f("train", 10, "weight draws per training step")
    rho_init: float = _f("train", -3.0, "initial rho (sigma = softplus(rho))")
    prior_pi: float = _f("train", 0.5, "scale-mixture prior weight")
    prior_neg_log_sigma1: float = _f("train", 0.0, "-log sigma of the wide prior component")
    prior_neg_log_sigma2: float = _f("train", 6.0, "-log sigma of the narrow prior component")
    # [audit]
    seeds: str = _f("audit", "1..5", "seed list: 1..5 or 1,2,7")
    k: int = _f("audit", 10, "neighbours for individual consistency; 0 disables it")
    tau: float = _f("audit", 0.2, "fairness tolerance (four-fifths rule at 0.2)")
    bins: int = _f("audit", 10, "reliability diagram bins")
    # [sweep]
    widths: str = _f("sweep", "10,50,100,200", "hidden widths for the capacity sweep")
    # [output]
    out_dir: str = _f("output", "runs/audit", "output directory")

    def seed_list(self) -> list[int]:
        return parse_int_list(self.seeds)

    def width_list(self) -> list[int]:
        return parse_int_list(self.widths)

    def train_config(self, seed: int, hidden_width: int | None = None) -> TrainConfig:
        hw = self.hidden_width if hidden_width is None else hidden_width
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, lam=self.lam,
            mc_train_samples=self.mc_train_samples, seed=seed,
            hidden_width=hw or None, rho_init=self.rho_init,
            prior_pi=self.prior_pi, prior_neg_log_sigma1=self.prior_neg_log_sigma1,
            prior_neg_log_sigma2=self.prior_neg_log_sigma2,
        )

    def use_standardizer(self) -> bool:
        if self.standardize == "auto":
            return bool(self.csv)
        return self.standardize == "yes"

    def validate(self, check_files: bool = True) -> "AuditConfig":
        if bool(self.scenario) == bool(self.csv):
            raise ConfigError("set exactly one of 'scenario' or 'csv'")
        if self.backend not in ("variational", "ensemble"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.standardize not in ("auto", "yes", "no"):
            raise ConfigError("standardize must be auto, yes or no")
        if self.hidden_width < 0:
            raise ConfigError("hidden_width must be >= 0")
        for name in ("ensemble_size", "mc_eval_samples", "epochs", "batch_size",
                     "mc_train_samples", "bins"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        if self.learning_rate <= 0 or self.lam <= 0:
            raise ConfigError("learning_rate and lambda must be positive")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if not self.seed_list():
            raise ConfigError("seed list is empty")
        if self.csv:
            if not self.schema:
                raise ConfigError("CSV data needs a schema")
            if not (self.group_column and self.g0_values and self.g1_values):
                raise ConfigError("CSV data needs group_column, g0_values and g1_values")
        if check_files:
            for key in ("csv", "test_csv"):
                path = getattr(self, key)
                if path and not Path(path).exists():
                    raise ConfigError(f"{key}: file not found: {path}")
            if self.scenario and self.scenario not in RECIPES and not Path(self.scenario).exists():
                raise ConfigError(f"scenario: unknown name or missing file: {self.scenario}")
            if self.schema and self.schema not in ("compas", "adult") and not Path(self.schema).exists():
                raise ConfigError(f"schema: file not found: {self.schema}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def parse_int_list(text: str) -> list[int]:
    """``"1..5"`` -> [1..5]; ``"1,3,8"`` -> [1,3,8]; ranges and lists mix."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..", 1)
            out += list(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


# built-in scenario recipes: 5 epochs, batch 8, no hidden layer
_SYNTH = {"epochs": 5, "batch_size": 8, "hidden_width": 0, "learning_rate": 0.01,
          "lam": 2000.0, "mc_train_samples": 10, "mc_eval_samples": 10,
          "test_fraction": 0.2}
RECIPES = {name: dict(_SYNTH) for name in ("sd1", "sd2", "sd3", "sd1_printed")}

# config-file key -> dataclass field, where they differ
KEY_ALIASES = {"lambda": "lam"}
FIELD_TO_KEY = {v: k for k, v in KEY_ALIASES.items()}
SECTIONS = ("data", "model", "train", "audit", "sweep", "output")


def config_fields():
    return [f for f in fields(AuditConfig)]


def key_of(f) -> str:
    return FIELD_TO_KEY.get(f.name, f.name)


def _coerce(f, raw):
    if isinstance(raw, str):
        raw = raw.strip()
    typ = f.type if isinstance(f.type, str) else f.type.__name__
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key_of(f)}: expected {typ}, got {raw!r}") from None
    return str(raw)


def read_config_file(path) -> dict[str, str]:
    """Flatten an INI file into ``{field_name: raw string}``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if not cp.read(path, encoding="utf-8"):
        raise ConfigError(f"config file not found: {path}")
    by_key = {key_of(f): f for f in config_fields()}
    out = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, value in cp[section].items():
            if key not in by_key:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            f = by_key[key]
            if f.metadata["section"] != section:
                raise ConfigError(
                    f"{path}: key {key!r} belongs in [{f.metadata['section']}], not [{section}]")
            out[f.name] = value
    return out


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> AuditConfig:
    """Merge defaults, the scenario recipe, file values and overrides."""
    merged: dict = {}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    scenario = str(merged.get("scenario", "") or "").strip()
    base = dict(RECIPES.get(scenario.lower(), {}))
    base.update(merged)
    by_name = {f.name: f for f in config_fields()}
    values = {}
    for name, raw in base.items():
        if name not in by_name:
            raise ConfigError(f"unknown setting {name!r}")
        values[name] = _coerce(by_name[name], raw)
    if "scenario" in values and values["scenario"] in RECIPES:
        values["scenario"] = values["scenario"].lower()
    return replace(AuditConfig(), **values)


def load_config(path=None, **overrides) -> AuditConfig:
    file_values = read_config_file(path) if path else {}
    return build_config(file_values, overrides)


def dump_config(cfg: AuditConfig) -> str:
    """Render a config back into the INI layout (round-trips through load)."""
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for f in config_fields():
            if f.metadata["section"] == section:
                lines.append(f"{key_of(f)} = {getattr(cfg, f.name)}")
        lines.append("")
    return "\n".join(lines)
