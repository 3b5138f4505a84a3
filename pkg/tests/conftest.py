import csv
import logging
import os
from pathlib import Path

import numpy as np
import pytest

from uncfair.synthgen import make_rng

COMPAS_CSV = os.environ.get("UNCFAIR_COMPAS_CSV", "")
ADULT_CSV = os.environ.get("UNCFAIR_ADULT_CSV", "")


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.WARNING)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)
    return path


@pytest.fixture
def compas_like(tmp_path):
    """A small file shaped like compas-scores-two-years.csv."""
    r = np.random.default_rng(7)
    header = ["id", "age_cat", "race", "sex", "priors_count", "c_charge_degree",
              "two_year_recid", "days_b_screening_arrest", "is_recid", "score_text"]
    rows = []
    for i in range(240):
        race = ["African-American", "Caucasian", "Hispanic"][i % 3]
        priors = int(r.poisson(4 if race == "African-American" else 2))
        recid = int(r.random() < (0.3 + 0.05 * min(priors, 8)))
        rows.append([i, ["Less than 25", "25 - 45", "Greater than 45"][i % 5 % 3], race,
                     ["Male", "Female"][i % 4 == 0], priors, "FM"[i % 2], recid,
                     int(r.integers(-40, 40)), 1 if recid else 0, "Low"])
    return write_csv(tmp_path / "compas.csv", header, rows)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
