"""Synthetic household panels with confounded extension contact and a known effect.

Each household draws time-invariant traits (farm size, sex, literacy) and
yearly ones (age, weather shock). In every window year it is contacted by the
extension service with a probability that rises with farm size, and it adopts
with probability ``p0 + tau * treated`` where the baseline ``p0`` also rises
with farm size. Farm size is therefore a confounder. Villages start adopting
in staggered years; before its start year a village has ``p0 = 0`` and only
contacted households can adopt.

The raw panel keeps rows after adoption and repeated contacts, as survey data
would; the sample builder is responsible for discarding them.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .data_model import Covariate, CovariateSchema, Observation, PanelDataset
from .errors import ConfigError

SCHEMA = CovariateSchema(
    (
        Covariate("farm_size", "continuous", "ha"),
        Covariate("sex", "binary", "1=male head"),
        Covariate("literacy", "binary", "1=literate head"),
        Covariate("age", "continuous", "years"),
        Covariate("shock", "binary", "1=weather shock this year"),
        Covariate("distance", "continuous", "km to market"),
    )
)

ETHNICITIES = ("Amhara", "Oromo", "Tigray", "Gurage", "Sidama")
RELIGIONS = ("Orthodox", "Muslim", "Protestant")


def _logit(p: float) -> float:
    return float(np.log(p / (1 - p)))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    n_villages: int = 4
    households_per_village: int = 75
    study_window: tuple[int, int] = (1994, 2000)
    history_start: int | None = None
    first_village_start: int = 1986
    village_lag: int = 2
    survey_years: tuple[int, ...] = ()
    tau: float = 0.5
    treatment_rate: float = 0.06
    treatment_confounding: float = 1.0
    baseline_adoption: float = 0.08
    outcome_confounding: float = 1.0
    max_baseline: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "study_window", tuple(self.study_window))
        object.__setattr__(self, "survey_years", tuple(self.survey_years))
        lo, hi = self.study_window
        if lo > hi:
            raise ConfigError("study window is empty")
        if self.n_villages < 1 or self.households_per_village < 1:
            raise ConfigError("need at least one village and one household per village")
        if self.history_start is not None and self.history_start > lo:
            raise ConfigError("history_start must not be after the study window start")
        if not -1 <= self.tau <= 1:
            raise ConfigError("tau must lie in [-1, 1]")
        if not 0 < self.treatment_rate < 1:
            raise ConfigError("treatment_rate must lie in (0, 1)")
        floor = max(0.0, -self.tau)
        if not floor < self.max_baseline <= 1 - max(0.0, self.tau):
            raise ConfigError(f"max_baseline must lie in ({floor}, {1 - max(0.0, self.tau)}] for tau={self.tau}")
        if not floor < self.baseline_adoption < self.max_baseline:
            raise ConfigError("baseline_adoption must lie strictly between the floor and max_baseline")
        if any(not lo <= y <= hi for y in self.survey_years):
            raise ConfigError("survey years must fall inside the study window")
        if self.village_lag < 0:
            raise ConfigError("village_lag must be non-negative")

    @classmethod
    def from_json(cls, doc: dict, seed: int | None = None) -> "GeneratorConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown generator parameters {sorted(unknown)}")
        kwargs = dict(doc)
        if seed is not None:
            kwargs["seed"] = seed
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class SimulatedPanel:
    panel: PanelDataset
    config: GeneratorConfig
    # baseline (untreated) adoption probability of every row, keyed by (household, year)
    baseline: dict[tuple[str, int], float] = field(repr=False, default_factory=dict)

    def baseline_for(self, keys) -> np.ndarray:
        return np.array([self.baseline[k] for k in keys])


def simulate_panel(config: GeneratorConfig) -> SimulatedPanel:
    rng = np.random.default_rng(config.seed)
    lo, hi = config.study_window
    start = config.history_start if config.history_start is not None else lo
    years = np.arange(start, hi + 1)
    floor = max(0.0, -config.tau)
    span = config.max_baseline - floor
    a_out = _logit((config.baseline_adoption - floor) / span)
    a_treat = _logit(config.treatment_rate)

    rows: list[Observation] = []
    baseline: dict[tuple[str, int], float] = {}
    for v in range(config.n_villages):
        village = f"V{v + 1:02d}"
        v_start = config.first_village_start + v * config.village_lag
        distance = float(np.round(rng.uniform(2, 20), 1))
        eth_p = rng.dirichlet(np.full(len(ETHNICITIES), 0.6))
        rel_p = rng.dirichlet(np.full(len(RELIGIONS), 0.8))
        H = config.households_per_village
        log_farm = rng.normal(-0.2, 0.6, H)
        farm = np.round(np.exp(log_farm), 3)
        z = (log_farm + 0.2) / 0.6
        sex = (rng.random(H) < _sigmoid(1.0 + 0.5 * z)).astype(int)
        literacy = (rng.random(H) < _sigmoid(-0.8 + 0.4 * z)).astype(int)
        age0 = rng.integers(20, 65, H) - (years[0] - start)
        eth = rng.choice(len(ETHNICITIES), H, p=eth_p)
        rel = rng.choice(len(RELIGIONS), H, p=rel_p)
        shock = (rng.random((H, len(years))) < 0.25).astype(int)
        u_treat = rng.random((H, len(years)))
        u_adopt = rng.random((H, len(years)))

        lin_t = a_treat + config.treatment_confounding * z + 0.3 * literacy
        p0 = floor + span * _sigmoid(a_out + config.outcome_confounding * z + 0.2 * literacy)
        for h in range(H):
            hid = f"{village}-H{h + 1:03d}"
            adopted = False
            for k, year in enumerate(years):
                in_window = lo <= year <= hi
                treated = in_window and u_treat[h, k] < _sigmoid(lin_t[h] + 0.3 * shock[h, k])
                base = float(p0[h]) if year >= v_start else 0.0
                prob = min(1.0, max(0.0, base + (config.tau if treated else 0.0)))
                outcome = (not adopted) and u_adopt[h, k] < prob
                baseline[(hid, int(year))] = base
                rows.append(
                    Observation(
                        household_id=hid,
                        year=int(year),
                        village=village,
                        treated=bool(treated),
                        outcome=bool(outcome),
                        covariates=(
                            float(farm[h]),
                            int(sex[h]),
                            int(literacy[h]),
                            float(age0[h] + k),
                            int(shock[h, k]),
                            distance,
                        ),
                        ethnicity=ETHNICITIES[eth[h]],
                        religion=RELIGIONS[rel[h]],
                    )
                )
                adopted = adopted or outcome
    survey = frozenset(config.survey_years) if config.survey_years else frozenset(int(y) for y in years if y >= lo)
    return SimulatedPanel(PanelDataset(SCHEMA, tuple(rows), survey), config, baseline)
