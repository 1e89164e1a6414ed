import numpy as np
import pytest

from frontier_match.data_model import serialize_dataset, validate
from frontier_match.errors import ConfigError
from frontier_match.estimation import estimate_att
from frontier_match.sample_builder import PoolingConfig, build_full_pooling
from frontier_match.simulate import GeneratorConfig, simulate_panel

COVS = ("farm_size", "sex", "literacy", "age", "shock")


def test_same_seed_same_file():
    a = simulate_panel(GeneratorConfig(seed=4, n_villages=2, households_per_village=20))
    b = simulate_panel(GeneratorConfig(seed=4, n_villages=2, households_per_village=20))
    c = simulate_panel(GeneratorConfig(seed=5, n_villages=2, households_per_village=20))
    assert serialize_dataset(a.panel) == serialize_dataset(b.panel)
    assert serialize_dataset(a.panel) != serialize_dataset(c.panel)


def test_panel_shape_and_validity():
    config = GeneratorConfig(seed=1, n_villages=3, households_per_village=10, study_window=(1994, 1997), history_start=1990)
    sim = simulate_panel(config)
    assert len(sim.panel.rows) == 3 * 10 * 8
    assert validate(sim.panel).ok
    assert all(1994 <= r.year for r in sim.panel.rows if r.treated)
    assert sim.panel.survey_years == frozenset(range(1994, 1998))


def test_adoption_happens_once():
    sim = simulate_panel(GeneratorConfig(seed=2, households_per_village=40))
    for rows in sim.panel.by_household().values():
        assert sum(r.outcome for r in rows) <= 1


def test_baseline_zero_before_village_start():
    config = GeneratorConfig(seed=3, n_villages=2, study_window=(1994, 1996), history_start=1990, first_village_start=1993, village_lag=3)
    sim = simulate_panel(config)
    for r in sim.panel.rows:
        base = sim.baseline[(r.household_id, r.year)]
        start = 1993 if r.village == "V01" else 1996
        assert (base == 0.0) == (r.year < start)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"study_window": (2000, 1994)},
        {"tau": 1.5},
        {"treatment_rate": 0.0},
        {"baseline_adoption": 0.5, "max_baseline": 0.4},
        {"survey_years": (1980,)},
        {"n_villages": 0},
    ],
)
def test_invalid_parameters(kwargs):
    with pytest.raises(ConfigError):
        GeneratorConfig(**kwargs)


def test_from_json_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        GeneratorConfig.from_json({"villages": 3})
    assert GeneratorConfig.from_json({"tau": 0.2}, seed=9) == GeneratorConfig(seed=9, tau=0.2)


def naive_atts(seeds, **kwargs):
    out = []
    for seed in seeds:
        config = GeneratorConfig(seed=seed, n_villages=4, households_per_village=100, study_window=(1994, 1994), treatment_rate=0.15, **kwargs)
        sample = build_full_pooling(simulate_panel(config).panel, PoolingConfig((1994, 1994), COVS))
        out.append(estimate_att(sample))
    return out


def test_null_design_centred_at_zero():
    ests = naive_atts(range(40), tau=0.0, treatment_confounding=0.0, outcome_confounding=0.0)
    att = np.array([e.att for e in ests])
    se = np.array([e.std_error for e in ests])
    assert abs(att.mean()) < 3 * np.sqrt((se**2).mean() / len(att))


def test_confounding_biases_naive_difference():
    ests = naive_atts(range(40), tau=0.5, treatment_confounding=1.5, outcome_confounding=1.5)
    att = np.array([e.att for e in ests])
    se = np.array([e.std_error for e in ests])
    assert att.mean() - 0.5 > 3 * np.sqrt((se**2).mean() / len(att))
