import time
from dataclasses import dataclass

import pytest

from emd_expert.expert_db import (apply_constraints, build_database, parse_constraints,
                                  pareto_front)
from emd_expert.mop import train_mop
from emd_expert.sampling import SplitSpec, default_space, generate_dataset
from emd_expert.wrsg import Boundaries, GeometryVars, OracleConstants

# reference conventional design, used throughout as the baseline geometry
BASELINE = GeometryVars(d1=163.40, d2=204.95, l=70.04, pbh=22.12, pbw=22.36, na=7)
CASE_SPEC = "pout>30,w<17,eta>92,d2<205"


@dataclass
class Pipeline:
    dataset: object
    model: object
    db: object
    train_seconds: float
    build_seconds: float


def run_pipeline(n=400, seed=7, db_n=9900, db_seed=11):
    space = default_space()
    ds = generate_dataset(space, n, seed, OracleConstants(), Boundaries())
    t0 = time.perf_counter()
    mop = train_mop(ds, SplitSpec(0.25, seed))
    t1 = time.perf_counter()
    db = build_database(mop, space, db_n, db_seed)
    db = pareto_front(apply_constraints(db, parse_constraints("eta>92")))
    t2 = time.perf_counter()
    return Pipeline(ds, mop, db, t1 - t0, t2 - t1)


@pytest.fixture(scope="session")
def pipeline():
    return run_pipeline()


@pytest.fixture
def baseline():
    return BASELINE


ACCEPTANCE_LINES = []


def report_criterion(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
