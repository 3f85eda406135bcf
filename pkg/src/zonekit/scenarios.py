"""Wind scenarios: Monte Carlo synthesis, CSV ingestion, and application.

A scenario is one capacity factor in [0, 1] per wind generator.  Monte
Carlo scenarios draw wind speeds from a Weibull distribution and map
them through a cubic power curve; historical data can replace the model
entirely via CSV files.  Draws use counter-based substreams keyed by
(seed, scenario, generator), so the set is bitwise reproducible no
matter how generation or consumption is parallelized.
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .grid import Generator, Network

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid wind-model parameters."""


class ScenarioFormatError(ValueError):
    """Malformed or out-of-range scenario CSV content."""


class InadequateCapacityError(RuntimeError):
    """Applying a scenario left total capacity below total demand."""


@dataclass(frozen=True)
class WindParams:
    """Weibull wind-speed model plus turbine power curve (speeds in m/s)."""

    shape: float = 2.0
    scale: float = 8.0
    cut_in: float = 3.0
    rated: float = 12.0
    cut_out: float = 25.0
    #: one wind-speed draw per scenario shared by all farms, instead of
    #: independent per-farm draws
    shared_weather: bool = False

    def validate(self) -> None:
        if not (self.shape > 0 and self.scale > 0):
            raise ConfigError(f"Weibull shape/scale must be positive, got {self.shape}/{self.scale}")
        if not 0 <= self.cut_in < self.rated <= self.cut_out:
            raise ConfigError(
                f"power curve requires 0 <= cut_in < rated <= cut_out, got "
                f"{self.cut_in}/{self.rated}/{self.cut_out}"
            )


@dataclass(frozen=True)
class WindScenario:
    id: int
    capacity_factors: tuple[float, ...]  # one per wind generator, in [0, 1]


@dataclass(frozen=True)
class MonteCarloProvenance:
    seed: int
    params: WindParams


@dataclass(frozen=True)
class CsvProvenance:
    path: str


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[WindScenario, ...]
    provenance: MonteCarloProvenance | CsvProvenance

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)


def capacity_factor(v: float, params: WindParams) -> float:
    """Cubic turbine power curve: fraction of rated output at wind speed v."""
    if v < params.cut_in or v > params.cut_out:
        return 0.0
    if v >= params.rated:
        return 1.0
    ci3 = params.cut_in**3
    return (v**3 - ci3) / (params.rated**3 - ci3)


def _wind_speed(seed: int, scenario_id: int, substream: int, params: WindParams) -> float:
    # Philox keyed per (seed, scenario, substream): independent streams with
    # deterministic output regardless of draw order
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, ((scenario_id & 0xFFFFFFFF) << 32) | (substream & 0xFFFFFFFF)],
                   dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return float(params.scale * rng.weibull(params.shape))


_SHARED_SUBSTREAM = 0xFFFFFFFF


def monte_carlo_scenarios(
    network: Network,
    count: int,
    seed: int,
    params: WindParams = WindParams(),
) -> ScenarioSet:
    """Draw ``count`` wind scenarios for the network's wind generators.

    Networks without wind units get ``count`` copies of the empty-factor
    scenario, so downstream code can treat the windless case uniformly.
    """
    if count < 1:
        raise ConfigError(f"scenario count must be >= 1, got {count}")
    params.validate()
    wind = network.wind_generators()
    scenarios = []
    for s in range(count):
        if params.shared_weather:
            v_shared = _wind_speed(seed, s, _SHARED_SUBSTREAM, params)
            factors = tuple(capacity_factor(v_shared, params) for _ in wind)
        else:
            factors = tuple(
                capacity_factor(_wind_speed(seed, s, g, params), params) for g in range(len(wind))
            )
        scenarios.append(WindScenario(id=s, capacity_factors=factors))
    return ScenarioSet(scenarios=tuple(scenarios), provenance=MonteCarloProvenance(seed=seed, params=params))


def apply_scenario(network: Network, scenario: WindScenario) -> Network:
    """Network copy with each wind unit's p_max scaled to the scenario.

    Topology, demands, and non-wind units are untouched.  Scenarios that
    leave total capacity below total demand are rejected outright; load
    is never shed to patch them up.
    """
    wind = network.wind_generators()
    if len(scenario.capacity_factors) != len(wind):
        raise ValueError(
            f"scenario has {len(scenario.capacity_factors)} factors for {len(wind)} wind generators"
        )
    generators = list(network.generators)
    for factor, idx in zip(scenario.capacity_factors, wind):
        g = generators[idx]
        generators[idx] = Generator(
            bus=g.bus,
            marginal_cost=g.marginal_cost,
            p_min=0.0,
            p_max=g.rated_capacity * factor,
            is_wind=True,
            rated_capacity=g.rated_capacity,
            label=g.label,
        )
    applied = Network(
        buses=network.buses,
        branches=network.branches,
        generators=tuple(generators),
        base_mva=network.base_mva,
    )
    cap = sum(g.p_max for g in applied.generators)
    dem = sum(b.demand for b in applied.buses)
    if cap < dem:
        raise InadequateCapacityError(
            f"scenario {scenario.id}: capacity {cap:.3f} MW below demand {dem:.3f} MW"
        )
    return applied


# ---------------------------------------------------------------------------
# CSV scenario files
#
# Format: a header row naming the wind-generator labels, one row per
# scenario of capacity factors.  A leading "scenario" id column is
# accepted (and written) but not required.


def load_scenarios_csv(path, network: Network) -> ScenarioSet:
    """Read and validate a scenario CSV for this network's wind units."""
    wind_labels = [network.generators[i].label for i in network.wind_generators()]
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [row for row in rows if any(cell.strip() for cell in row)]
    if not rows:
        raise ScenarioFormatError(f"{path}: no header row")
    header = [cell.strip() for cell in rows[0]]
    data_rows = rows[1:]

    has_id_column = bool(header) and header[0].lower() == "scenario"
    labels = header[1:] if has_id_column else header
    labels = [lab for lab in labels if lab]

    known = set(wind_labels)
    for lab in labels:
        if lab not in known:
            raise ScenarioFormatError(f"{path}: unknown wind generator label {lab!r}")
    for lab in wind_labels:
        if lab not in labels:
            raise ScenarioFormatError(f"{path}: missing column for wind generator {lab!r}")
    if len(set(labels)) != len(labels):
        raise ScenarioFormatError(f"{path}: duplicate column labels")

    if not data_rows:
        raise ScenarioFormatError(f"{path}: no scenarios")

    column_of = {lab: (i + 1 if has_id_column else i) for i, lab in enumerate(labels)}
    scenarios = []
    for r, row in enumerate(data_rows):
        factors = []
        for lab in wind_labels:
            col = column_of[lab]
            if col >= len(row):
                raise ScenarioFormatError(f"{path}: row {r + 1} is missing column {lab!r}")
            cell = row[col].strip()
            try:
                value = float(cell)
            except ValueError:
                raise ScenarioFormatError(f"{path}: row {r + 1}, column {lab!r}: non-numeric {cell!r}")
            if not 0.0 <= value <= 1.0:
                raise ScenarioFormatError(
                    f"{path}: row {r + 1}, column {lab!r}: factor {value} outside [0, 1]"
                )
            factors.append(value)
        scenarios.append(WindScenario(id=r, capacity_factors=tuple(factors)))
    return ScenarioSet(scenarios=tuple(scenarios), provenance=CsvProvenance(path=str(path)))


def write_scenarios_csv(scenario_set: ScenarioSet, network: Network, path_or_file) -> None:
    """Write a scenario set in the CSV format load_scenarios_csv reads."""
    wind_labels = [network.generators[i].label for i in network.wind_generators()]

    def _write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario", *wind_labels])
        for scen in scenario_set:
            writer.writerow([scen.id, *[f"{f:.12g}" for f in scen.capacity_factors]])

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", encoding="utf-8", newline="") as fh:
            _write(fh)
