import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TOY_SCHEMA
from frontier_match.data_model import Covariate, CovariateSchema, Observation, PanelDataset
from frontier_match.errors import ConfigError, DegenerateSampleError, RuleViolationError
from frontier_match.sample_builder import (
    PoolingConfig,
    build_full_pooling,
    build_partial_pooling,
    subset_by,
    treated_counts_by_year,
)

COVS = ("farm_size", "literacy")

# hand application of the assignment rules to tests/fixtures/toy_panel.csv:
# H1 treated 1997 (and again 1999), never adopts; H2 never treated, adopts 1999;
# H3 treated and adopts in 1995
TOY_FULL = [
    ("H1", 1994, False, False),
    ("H2", 1994, False, False),
    ("H3", 1994, False, False),
    ("H1", 1995, False, False),
    ("H2", 1995, False, False),
    ("H3", 1995, True, True),
    ("H1", 1996, False, False),
    ("H2", 1996, False, False),
    ("H1", 1997, True, False),
    ("H2", 1997, False, False),
    ("H2", 1998, False, False),
    ("H2", 1999, False, True),
]


def units(sample):
    return [(u, int(y), bool(t), bool(o)) for u, y, t, o in zip(sample.unit_ids, sample.years, sample.treated, sample.outcome)]


def test_toy_full_pooling(toy_panel):
    sample = build_full_pooling(toy_panel, PoolingConfig((1994, 2004), COVS))
    assert units(sample) == TOY_FULL
    assert sample.n_treated == 2
    assert sample.X[5].tolist() == [2.0, 1.0]


def test_treated_household_control_years_then_treated(toy_panel):
    sample = build_full_pooling(toy_panel, PoolingConfig((1994, 2004), COVS))
    h1 = [(y, t) for u, y, t, _ in units(sample) if u == "H1"]
    assert h1 == [(1994, False), (1995, False), (1996, False), (1997, True)]


def test_window_of_one_year(toy_panel):
    sample = build_full_pooling(toy_panel, PoolingConfig((1995, 1995), COVS))
    assert units(sample) == [("H1", 1995, False, False), ("H2", 1995, False, False), ("H3", 1995, True, True)]


def test_treatment_before_window_is_a_rule_violation(toy_panel):
    # H1 was first treated in 1997 and has not adopted, so it cannot enter a 1998 window
    with pytest.raises(RuleViolationError):
        build_full_pooling(toy_panel, PoolingConfig((1998, 2004), COVS))


def test_no_treated_units_is_degenerate(toy_panel):
    with pytest.raises(DegenerateSampleError):
        build_full_pooling(toy_panel, PoolingConfig((1994, 1994), COVS))


def test_partial_pooling(toy_panel):
    sample = build_partial_pooling(toy_panel, PoolingConfig((1994, 2004), COVS, survey_years={1994, 1997}))
    assert units(sample) == [
        ("H1", 1994, False, False),
        ("H2", 1994, False, False),
        ("H3", 1994, False, False),
        ("H1", 1997, True, False),
        ("H2", 1997, False, False),
    ]
    # H3 was treated in 1995, between rounds: control in 1994 only
    assert [y for u, y, _, _ in units(sample) if u == "H3"] == [1994]


def test_partial_pooling_with_all_years_equals_full(toy_panel):
    full = build_full_pooling(toy_panel, PoolingConfig((1994, 2004), COVS))
    part = build_partial_pooling(toy_panel, PoolingConfig((1994, 2004), COVS, survey_years=range(1994, 2005)))
    assert units(part) == units(full)
    np.testing.assert_array_equal(part.X, full.X)


def test_partial_pooling_rejects_unknown_survey_year(toy_panel):
    panel = PanelDataset(toy_panel.schema, toy_panel.rows, frozenset({1994, 1997}))
    with pytest.raises(ConfigError):
        build_partial_pooling(panel, PoolingConfig((1994, 2004), COVS, survey_years={1994, 1995}))


def test_subset_by(toy_panel):
    sample = build_full_pooling(toy_panel, PoolingConfig((1994, 2004), COVS))
    sub = subset_by(sample, year=1995)
    assert units(sub) == [u for u in TOY_FULL if u[1] == 1995]
    assert subset_by(sample, village="V2").unit_ids == ("H3", "H3")
    with pytest.raises(DegenerateSampleError):
        subset_by(sample, village="Nowhere")


def test_year_filter_keeps_all_treated_of_that_year():
    # six households all treated in 1996 after two control years
    rows = tuple(
        Observation(f"H{h}", y, "V1", y == 1996, False, (float(h), h % 2), "A", "O")
        for h in range(6)
        for y in (1994, 1995, 1996)
    ) + tuple(Observation(f"C{h}", y, "V1", False, False, (1.0, 0), "A", "O") for h in range(3) for y in (1994, 1995, 1996))
    sample = build_full_pooling(PanelDataset(TOY_SCHEMA, rows), PoolingConfig((1994, 1996), COVS))
    assert sample.n_treated == 6
    sub = subset_by(sample, year=1996)
    assert sub.n == 9 and sub.n_treated == 6
    assert treated_counts_by_year(sample) == {1996: 6}


def test_categorical_one_hot_and_derived(toy_panel):
    schema = CovariateSchema(TOY_SCHEMA.entries + (Covariate("region", "categorical"),))
    rows = tuple(
        Observation(r.household_id, r.year, r.village, r.treated, r.outcome, r.covariates + (r.village.lower(),), r.ethnicity, r.religion)
        for r in toy_panel.rows
    )
    panel = PanelDataset(schema, rows)
    sample = build_full_pooling(panel, PoolingConfig((1994, 2004), ("region", "ethnic_majority", "ethnic_fractionalization")))
    assert sample.schema.names == ("region=v1", "region=v2", "ethnic_majority", "ethnic_fractionalization")
    h3 = sample.unit_ids.index("H3")
    # V1 holds one Amhara and one Oromo household: tie goes to Amhara, fractionalization 0.5
    h2 = sample.unit_ids.index("H2")
    assert sample.X[h3].tolist() == [0.0, 1.0, 1.0, 0.0]
    assert sample.X[h2].tolist() == [1.0, 0.0, 0.0, 0.5]


def test_unknown_covariate(toy_panel):
    with pytest.raises(ConfigError):
        build_full_pooling(toy_panel, PoolingConfig((1994, 2004), ("plot_size",)))


def test_sample_is_read_only(toy_panel):
    sample = build_full_pooling(toy_panel, PoolingConfig((1994, 2004), COVS))
    with pytest.raises(ValueError):
        sample.X[0, 0] = 9.0


@st.composite
def random_panels(draw):
    years = list(range(1994, 2001))
    rows = []
    for h in range(draw(st.integers(2, 8))):
        start = draw(st.sampled_from(years))
        treat = draw(st.none() | st.sampled_from(years))
        extra_treat = draw(st.none() | st.sampled_from(years))
        adopt = draw(st.none() | st.sampled_from(years))
        for y in years:
            if y < start:
                continue
            rows.append(Observation(f"H{h}", y, "V", y in (treat, extra_treat), y == adopt, (float(h), h % 2), "A", "O"))
    return PanelDataset(TOY_SCHEMA, tuple(rows))


@settings(max_examples=150, deadline=None)
@given(random_panels())
def test_assignment_invariants(panel):
    try:
        sample = build_full_pooling(panel, PoolingConfig((1994, 2000), COVS))
    except DegenerateSampleError:
        return
    by_house = panel.by_household()
    kept_treated = set()
    for hid, rows in by_house.items():
        got = [(int(y), bool(t)) for u, y, t in zip(sample.unit_ids, sample.years, sample.treated) if u == hid]
        first_treat = next((r.year for r in rows if r.treated), None)
        adoption = next((r.year for r in rows if r.outcome), None)
        stop = min(y for y in (first_treat, adoption, 2000) if y is not None)
        expected_years = [r.year for r in rows if r.year <= stop]
        # contiguous prefix up to the first of treatment and adoption
        assert [y for y, _ in got] == expected_years
        assert [y for y, t in got if t] == ([first_treat] if first_treat is not None and got and first_treat in expected_years else [])
        if any(t for _, t in got):
            kept_treated.add(hid)
    assert sum(treated_counts_by_year(sample).values()) == len(kept_treated)
    keys = sample.keys()
    assert len(set(keys)) == len(keys)
