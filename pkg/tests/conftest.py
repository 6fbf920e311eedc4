from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from leanopt.model import GE, INTEGER, LE, Constraint, LinearExpr, LinearModel, Variable  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "src" / "leanopt" / "data"
BENCH = DATA / "benchmark"
SBLP_DIR = DATA / "sblp"
DATAGEN_DIR = DATA / "datagen"


@pytest.fixture(scope="session")
def bench_dir() -> Path:
    return BENCH


@pytest.fixture(scope="session")
def instances():
    from leanopt.refdata import load_benchmark

    return {i.id: i for i in load_benchmark(BENCH)}


@pytest.fixture(scope="session")
def pipeline():
    from leanopt.agents import Pipeline
    from leanopt.refdata import load_refdata

    return Pipeline(load_refdata(DATA / "refdata"))


def random_int_model(rng: np.random.Generator, n_vars: int | None = None, n_rows: int | None = None,
                     ub: int = 10, max_points: int = 400_000) -> LinearModel:
    """Small bounded integer model; always has a finite box so brute force can enumerate it.

    Upper bounds are drawn in [1, ub], then the largest is lowered until the box
    holds at most ``max_points`` integer points.
    """
    n = int(n_vars or rng.integers(1, 9))
    m = int(n_rows if n_rows is not None else rng.integers(1, 5))
    names = [f"x{k}" for k in range(n)]
    ubs = [int(rng.integers(1, ub + 1)) for _ in names]
    while math.prod(u + 1 for u in ubs) > max_points:
        ubs[ubs.index(max(ubs))] -= 1
    variables = [Variable(v, 0.0, float(u), INTEGER) for v, u in zip(names, ubs)]
    obj = LinearExpr.from_dict({v: float(rng.integers(-9, 10)) for v in names})
    rows = []
    for r in range(m):
        coefs = {v: float(rng.integers(-5, 6)) for v in names if rng.random() < 0.7}
        if not coefs:
            coefs = {names[0]: 1.0}
        sense = LE if rng.random() < 0.7 else GE
        rhs = float(rng.integers(-5, 30)) if sense == LE else float(rng.integers(-20, 5))
        rows.append(Constraint(f"r{r}", LinearExpr.from_dict(coefs), sense, rhs))
    sense = "maximize" if rng.random() < 0.5 else "minimize"
    return LinearModel(sense, obj, variables, rows)


def close(a: float, b: float, rel: float = 1e-6, abs_: float = 1e-6) -> bool:
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_)


def random_gam_instance(rng: np.random.Generator):
    """Three cities, both directions of every pair with equal departures, two fares per flight.

    Reverse directions carry the same number of flights, so opening everything
    satisfies flow conservation.
    """
    from leanopt.sblp import GamInstance, ProductOption, Segment

    segs, opts, cap = [], [], {}
    for a, b in (("A", "B"), ("A", "C"), ("B", "C")):
        n = int(rng.integers(1, 3))
        for od in ((a, b), (b, a)):
            s = Segment(od, float(rng.uniform(50, 500)), 1.0)
            segs.append(s)
            for k in range(n):
                dep = f"{6 + 4 * k:02d}:00"
                for fare, price, use in (("Eco-flexi", rng.uniform(300, 900), 2.0),
                                         ("Eco-lite", rng.uniform(100, 300), 1.0)):
                    v = float(rng.uniform(0.05, 1.0))
                    w = float(rng.uniform(0, 0.9) * v)
                    opts.append(ProductOption(s.id, dep, fare, float(price), v, w, use))
                cap[(s.id, dep)] = float(rng.uniform(20, 200))
    return GamInstance(segs, opts, cap)
