from pathlib import Path

import numpy as np
import pytest

from frontier_match.data_model import Covariate, CovariateSchema, read_dataset
from frontier_match.sample_builder import MatchingSample

FIXTURES = Path(__file__).parent / "fixtures"

TOY_SCHEMA = CovariateSchema(
    (Covariate("farm_size", "continuous", "ha"), Covariate("literacy", "binary", "1=literate head"))
)


def make_sample(X, treated, outcome=None, years=None, villages=None, names=None) -> MatchingSample:
    """MatchingSample from raw arrays; all covariates continuous."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    names = names or [f"x{j}" for j in range(d)]
    schema = CovariateSchema(tuple(Covariate(nm, "continuous") for nm in names))
    return MatchingSample(
        schema=schema,
        unit_ids=tuple(f"u{i}" for i in range(n)),
        years=np.full(n, 1994) if years is None else years,
        villages=("V",) * n if villages is None else villages,
        treated=np.asarray(treated, dtype=bool),
        outcome=np.zeros(n, dtype=bool) if outcome is None else outcome,
        X=X,
        provenance="test",
    )


def random_sample(rng, n, d, shift=0.5) -> MatchingSample:
    treated = np.zeros(n, dtype=bool)
    treated[rng.choice(n, size=int(rng.integers(1, n)), replace=False)] = True
    X = rng.normal(size=(n, d)) + shift * treated[:, None]
    return make_sample(X, treated, outcome=rng.random(n) < 0.3)


@pytest.fixture
def toy_panel():
    return read_dataset(FIXTURES / "toy_panel.csv", TOY_SCHEMA)


@pytest.fixture
def two_villages():
    return read_dataset(FIXTURES / "two_villages.csv", TOY_SCHEMA)


# one line per acceptance criterion, collected by test_acceptance and echoed at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
