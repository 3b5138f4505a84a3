"""Seeded generators for group-conditional mixture datasets.

Every component draws ``count`` rows for one ``(group, label)`` cell from
either a multivariate normal or a per-dimension Beta (optionally negated).
All randomness comes from one ``numpy.random.Generator`` backed by PCG64,
seeded from ``ScenarioSpec.seed``, so a spec reproduces bit-identically.

The three built-in scenarios are:

* ``sd1``: minority group on Beta(0.5, 0.5) in ``[-1, 1]^2``, majority on
  wide Gaussians: point-fair but aleatoric-unfair.
* ``sd2``: minority on broad overlapping Gaussians, majority tight:
  point-fair but epistemic-unfair.
* ``sd3``: similar uncertainty across groups but unequal accuracy.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .tabular import TabularDataset, stratified_split

log = logging.getLogger(__name__)


class ComponentError(ValueError):
    pass


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """The one generator family used across the package (PCG64).

    Extra integers select an independent sub-stream of ``seed``, so one seed
    can drive data, training and evaluation without sharing a stream.
    """
    return np.random.Generator(np.random.PCG64([seed, *stream] if stream else seed))


def check_covariance(cov, name: str = "component") -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ComponentError(f"{name}: covariance must be square, got {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
        raise ComponentError(f"{name}: covariance {cov.tolist()} is not symmetric")
    eig = np.linalg.eigvalsh(cov)
    if eig.min() < -1e-10 * max(1.0, abs(eig).max()):
        raise ComponentError(
            f"{name}: covariance {cov.tolist()} is not positive semidefinite "
            f"(min eigenvalue {eig.min():.4g})"
        )
    return cov


@dataclass(frozen=True)
class GaussianComponentSpec:
    mean: tuple[float, ...]
    covariance: tuple[tuple[float, ...], ...]
    group: int
    label: int
    count: int
    name: str = ""

    def __post_init__(self):
        _check_cell(self.group, self.label, self.count, self.name)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if cov.shape != (len(self.mean),) * 2:
            raise ComponentError(f"{self.name}: mean/covariance shape mismatch")


@dataclass(frozen=True)
class BetaComponentSpec:
    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    group: int
    label: int
    count: int
    negate: bool = False
    name: str = ""

    def __post_init__(self):
        _check_cell(self.group, self.label, self.count, self.name)
        if len(self.alpha) != len(self.beta):
            raise ComponentError(f"{self.name}: alpha and beta lengths differ")
        if min(self.alpha) <= 0 or min(self.beta) <= 0:
            raise ComponentError(f"{self.name}: Beta shape parameters must be > 0")


ComponentSpec = Union[GaussianComponentSpec, BetaComponentSpec]


def _check_cell(group, label, count, name):
    if group not in (0, 1) or label not in (0, 1):
        raise ComponentError(f"{name}: group and label must be 0 or 1")
    if count < 1:
        raise ComponentError(f"{name}: count must be >= 1")


@dataclass(frozen=True)
class ScenarioSpec:
    components: tuple[ComponentSpec, ...]
    test_fraction: float = 0.2
    seed: int = 0
    name: str = "custom"

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return ScenarioSpec(self.components, self.test_fraction, seed, self.name)


def sample_gaussian(spec: GaussianComponentSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw ``spec.count`` rows from N(mean, cov) through an eigen factor.

    The eigen route (rather than Cholesky) accepts singular covariances,
    including the all-zero matrix.
    """
    cov = check_covariance(spec.covariance, spec.name or "gaussian")
    mean = np.asarray(spec.mean, dtype=np.float64)
    w, V = np.linalg.eigh(cov)
    factor = V * np.sqrt(np.clip(w, 0.0, None))
    z = rng.standard_normal((spec.count, len(mean)))
    return mean + z @ factor.T


def sample_beta(spec: BetaComponentSpec, rng: np.random.Generator) -> np.ndarray:
    a = np.asarray(spec.alpha, dtype=np.float64)
    b = np.asarray(spec.beta, dtype=np.float64)
    x = rng.beta(a, b, size=(spec.count, len(a)))
    return -x if spec.negate else x


def sample_component(spec: ComponentSpec, rng) -> np.ndarray:
    if isinstance(spec, GaussianComponentSpec):
        return sample_gaussian(spec, rng)
    return sample_beta(spec, rng)


def generate_scenario(spec: ScenarioSpec) -> tuple[TabularDataset, TabularDataset]:
    """Sample every component, then split stratified by (G, Y)."""
    if not spec.components:
        raise ComponentError("scenario has no components")
    rng = make_rng(spec.seed)
    dims = {len(c.mean) if isinstance(c, GaussianComponentSpec) else len(c.alpha)
            for c in spec.components}
    if len(dims) != 1:
        raise ComponentError(f"components disagree on dimension: {sorted(dims)}")
    X, y, g = [], [], []
    for comp in spec.components:
        rows = sample_component(comp, rng)
        X.append(rows)
        y.append(np.full(comp.count, comp.label))
        g.append(np.full(comp.count, comp.group))
    X = np.vstack(X)
    full = TabularDataset(
        features=X,
        labels=np.concatenate(y),
        groups=np.concatenate(g),
        feature_names=tuple(f"x{j}" for j in range(X.shape[1])),
        provenance=f"scenario:{spec.name} seed={spec.seed}",
    )
    # shuffle before splitting so the stratified split never sees component order
    full = full.subset(rng.permutation(full.n))
    return stratified_split(full, spec.test_fraction, rng)


# ---------------------------------------------------------------------------
# built-in scenarios

# Two printed covariances repeat their first row ([5,1;5,1] and [5,3;5,3]),
# which is not a covariance. Each is read as its Y=1 twin.
PRINTED_COVARIANCE_FIXES = {
    ((5.0, 1.0), (5.0, 1.0)): ((5.0, 1.0), (1.0, 5.0)),
    ((5.0, 3.0), (5.0, 3.0)): ((5.0, 3.0), (3.0, 5.0)),
}


_warned: set = set()


def symmetrize_printed(cov) -> tuple[tuple[float, ...], ...]:
    """Map a known misprinted covariance to its intended symmetric form."""
    key = tuple(tuple(float(v) for v in row) for row in cov)
    if key in PRINTED_COVARIANCE_FIXES:
        fixed = PRINTED_COVARIANCE_FIXES[key]
        if key not in _warned:
            _warned.add(key)
            log.warning("covariance %s is not symmetric; using %s", key, fixed)
        return fixed
    return key


def _gauss(mean, cov, g, y, n=100):
    return GaussianComponentSpec(
        tuple(float(m) for m in mean), symmetrize_printed(cov), g, y, n,
        name=f"G{g}Y{y}",
    )


def _beta(negate, g, y, n=100):
    return BetaComponentSpec((0.5, 0.5), (0.5, 0.5), g, y, n, negate=negate,
                             name=f"G{g}Y{y}")


def sd1_components(n: int = 100, printed: bool = False):
    """SD1 cells. ``printed=True`` keeps the literal minority orientation.

    As printed, the minority group puts Y=0 in the positive quadrant while
    the majority puts Y=0 at (-7, -7); no linear classifier can then be
    accurate on both groups. The default flips the minority labels so both
    groups share one orientation.
    """
    c = ((15, 10), (10, 15))
    return (
        _beta(not printed, 0, 0, n),
        _beta(printed, 0, 1, n),
        _gauss((-7, -7), c, 1, 0, n),
        _gauss((7, 7), c, 1, 1, n),
    )


def sd2_components(n: int = 100):
    wide = ((100, 30), (30, 100))
    return (
        _gauss((-10, -10), wide, 0, 0, n),
        _gauss((10, 10), wide, 0, 1, n),
        _gauss((-7, -7), ((5, 1), (5, 1)), 1, 0, n),
        _gauss((7, 7), ((5, 1), (1, 5)), 1, 1, n),
    )


def sd3_components(n: int = 100):
    c0 = ((7, 3), (3, 7))
    return (
        _gauss((-2, -2), c0, 0, 0, n),
        _gauss((2, 2), c0, 0, 1, n),
        _gauss((-3, -3), ((5, 3), (5, 3)), 1, 0, n),
        _gauss((3, 3), ((5, 3), (3, 5)), 1, 1, n),
    )


SCENARIOS = {
    "sd1": sd1_components,
    "sd1_printed": lambda n=100: sd1_components(n, printed=True),
    "sd2": sd2_components,
    "sd3": sd3_components,
}


def builtin_scenario(name: str, seed: int = 0, test_fraction: float = 0.2) -> ScenarioSpec:
    try:
        comps = SCENARIOS[name.lower()]()
    except KeyError:
        raise ComponentError(
            f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}"
        ) from None
    return ScenarioSpec(comps, test_fraction, seed, name.lower())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def load_scenario_file(path) -> ScenarioSpec:
    """Read a scenario from an INI file.

    ``[scenario]`` holds ``name``, ``test_fraction`` and ``seed``; each
    ``[component <name>]`` section holds ``kind`` (gaussian or beta),
    ``group``, ``label``, ``count`` and either ``mean`` + ``covariance``
    (rows separated by ``;``) or ``alpha`` + ``beta`` + ``negate``.
    """
    cp = configparser.ConfigParser(interpolation=None)
    if not cp.read(path, encoding="utf-8"):
        raise ComponentError(f"scenario file not found: {path}")
    head = cp["scenario"] if cp.has_section("scenario") else {}
    comps = []
    for section in cp.sections():
        if not section.startswith("component"):
            continue
        sec = cp[section]
        name = section[len("component"):].strip() or f"c{len(comps)}"
        try:
            kind = sec.get("kind", "gaussian").strip().lower()
            cell = dict(group=sec.getint("group"), label=sec.getint("label"),
                        count=sec.getint("count"), name=name)
            if kind == "gaussian":
                rows = [_floats(r) for r in sec["covariance"].split(";")]
                comps.append(GaussianComponentSpec(_floats(sec["mean"]), tuple(rows), **cell))
            elif kind == "beta":
                comps.append(BetaComponentSpec(_floats(sec["alpha"]), _floats(sec["beta"]),
                                               negate=sec.getboolean("negate", False), **cell))
            else:
                raise ComponentError(f"{name}: unknown kind {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ComponentError):
                raise
            raise ComponentError(f"{path} [{section}]: {exc}") from exc
    if not comps:
        raise ComponentError(f"{path}: no [component ...] sections")
    return ScenarioSpec(tuple(comps), float(head.get("test_fraction", 0.2)),
                        int(head.get("seed", 0)), head.get("name", Path(path).stem))


def resolve_scenario(name_or_path: str, seed: int = 0, test_fraction: float = 0.2) -> ScenarioSpec:
    if name_or_path.lower() in SCENARIOS:
        return builtin_scenario(name_or_path, seed, test_fraction)
    spec = load_scenario_file(name_or_path)
    return ScenarioSpec(spec.components, test_fraction, seed, spec.name)
