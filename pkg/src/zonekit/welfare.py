"""Cost-of-supply evaluation for uniform and zonal market arrangements.

The ranking criterion for a candidate division is the scenario-averaged
total cost of supplying energy.  For a single (uniform) market that is
the value of energy traded at the unconstrained equilibrium plus the
cost of redispatching to a network-feasible schedule.  For a zonal
market, trade clears against inter-zonal limits only (market coupling),
each zone then balances internally against its own network, and the
congestion rent collected on constrained border trades offsets cost.

Traded energy is valued pay-as-bid (every accepted MW at its unit's
marginal cost), and redispatch likewise pays increments and buys back
decrements at bid.  Under this convention the uniform-market total
equals the fully-constrained OPF objective, the k = 1 zonal market
reproduces the uniform market exactly, and congestion-free scenarios
cost the same under every division; those identities double as built-in
correctness oracles.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .clustering import Partition, validate_partition
from .config import DEFAULT_TOLERANCES, Tolerances
from .grid import Branch, Bus, Generator, Network
from .opf import DispatchSolution, dc_opf
from .parallel import parallel_map
from .scenarios import InadequateCapacityError, ScenarioSet, WindScenario, apply_scenario

logger = logging.getLogger(__name__)


class WelfareError(RuntimeError):
    pass


class UnservableScenarioError(WelfareError):
    """The scenario cannot be served even with every limit enforced."""


class PartitionInfeasibleError(WelfareError):
    """A zone sub-problem of this partition has no feasible dispatch."""


@dataclass(frozen=True)
class CostBreakdown:
    """Cost of one market arrangement under one scenario, currency/h.

    Always satisfies total = energy_value + balancing_cost - congestion_rent.
    """

    energy_value: float
    balancing_cost: float
    congestion_rent: float
    total: float
    zonal_prices: tuple[float, ...] = ()  # empty for the uniform market

    def to_dict(self) -> dict:
        return {
            "energy_value": self.energy_value,
            "balancing_cost": self.balancing_cost,
            "congestion_rent": self.congestion_rent,
            "total": self.total,
            "zonal_prices": list(self.zonal_prices),
        }


@dataclass(frozen=True)
class AveragedCost:
    """Scenario-averaged breakdown for one candidate division."""

    energy_value: float
    balancing_cost: float
    congestion_rent: float
    total: float
    infeasible_count: int  # scenarios where a zone sub-problem was infeasible

    def to_dict(self) -> dict:
        return {
            "energy_value": self.energy_value,
            "balancing_cost": self.balancing_cost,
            "congestion_rent": self.congestion_rent,
            "total": self.total,
            "infeasible_count": self.infeasible_count,
        }


@dataclass(frozen=True)
class WelfareReport:
    per_partition: dict  # Partition -> AveragedCost, in candidate order
    best: Partition
    scenarios_used: int
    scenarios_excluded: int  # unservable scenarios dropped for all candidates

    def to_dict(self) -> dict:
        return {
            "candidates": [
                {"partition": p.to_dict(), **cost.to_dict()}
                for p, cost in self.per_partition.items()
            ],
            "best": self.best.to_dict(),
            "scenarios_used": self.scenarios_used,
            "scenarios_excluded": self.scenarios_excluded,
        }


def redispatch_cost(network: Network, base: np.ndarray, adjusted: np.ndarray) -> float:
    """Pay-as-bid balancing charge for moving ``base`` to ``adjusted``.

    Upward adjustments are paid at the unit's marginal cost and downward
    adjustments are bought back at the unit's marginal cost, so the
    charge is the signed bid-value of the change.
    """
    costs = np.array([g.marginal_cost for g in network.generators])
    delta = np.asarray(adjusted) - np.asarray(base)
    return float(np.sum(costs * np.clip(delta, 0, None)) - np.sum(costs * np.clip(-delta, 0, None)))


def _running_price(network: Network, generation: np.ndarray, gen_indices, tol: float):
    prices = [
        network.generators[i].marginal_cost for i in gen_indices if generation[i] > tol
    ]
    return max(prices) if prices else None


# ---------------------------------------------------------------------------
# Uniform market


def _uniform_cost_applied(applied: Network, tolerances: Tolerances) -> CostBreakdown:
    unconstrained = dc_opf(applied, enforce_limits=False, tolerances=tolerances)
    if not unconstrained.feasible:
        raise UnservableScenarioError(f"unconstrained equilibrium: {unconstrained.message}")
    constrained = dc_opf(applied, enforce_limits=True, tolerances=tolerances)
    if not constrained.feasible:
        raise UnservableScenarioError(f"network-feasible redispatch: {constrained.message}")
    energy = unconstrained.objective
    balancing = redispatch_cost(applied, unconstrained.generation, constrained.generation)
    return CostBreakdown(
        energy_value=energy,
        balancing_cost=balancing,
        congestion_rent=0.0,
        total=energy + balancing,
        zonal_prices=(),
    )


def uniform_market_cost(
    network: Network,
    scenario: WindScenario,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CostBreakdown:
    """Cost of serving one scenario on a single uniform market.

    Step 1 finds the unconstrained market equilibrium (all limits
    relaxed); step 2 redispatches against the full network and charges
    the adjustment to the balancing market.
    """
    try:
        applied = apply_scenario(network, scenario)
    except InadequateCapacityError as exc:
        raise UnservableScenarioError(str(exc))
    return _uniform_cost_applied(applied, tolerances)


# ---------------------------------------------------------------------------
# Zonal market


def border_branches(network: Network, partition: Partition) -> list[Branch]:
    return [
        br
        for br in network.branches
        if partition.zone_of[br.from_bus] != partition.zone_of[br.to_bus]
    ]


def _zone_subproblem(applied: Network, partition: Partition, zone: int, flows: np.ndarray):
    """Induced sub-network of one zone plus fixed border-flow injections.

    Returns (sub_network, injections, generator indices into the parent
    network).  The sub-network may legitimately have no generators; its
    feasibility is decided by the OPF.
    """
    members = partition.zones()[zone]
    member_set = set(members)
    local = {bus: i for i, bus in enumerate(members)}

    buses = tuple(
        Bus(id=local[b.id], demand=b.demand, label=b.label)
        for b in applied.buses
        if b.id in member_set
    )
    branches = []
    for br in applied.branches:
        if br.from_bus in member_set and br.to_bus in member_set:
            branches.append(
                Branch(
                    id=len(branches),
                    from_bus=local[br.from_bus],
                    to_bus=local[br.to_bus],
                    reactance=br.reactance,
                    flow_limit=br.flow_limit,
                )
            )
    gen_indices = [i for i, g in enumerate(applied.generators) if g.bus in member_set]
    generators = []
    for i in gen_indices:
        g = applied.generators[i]
        generators.append(
            Generator(
                bus=local[g.bus],
                marginal_cost=g.marginal_cost,
                p_min=g.p_min,
                p_max=g.p_max,
                is_wind=g.is_wind,
                rated_capacity=g.rated_capacity,
                label=g.label,
            )
        )

    injections = np.zeros(len(members))
    for br in applied.branches:
        inside_from = br.from_bus in member_set
        inside_to = br.to_bus in member_set
        if inside_from and not inside_to:
            injections[local[br.from_bus]] -= flows[br.id]
        elif inside_to and not inside_from:
            injections[local[br.to_bus]] += flows[br.id]

    sub = Network(
        buses=buses,
        branches=tuple(branches),
        generators=tuple(generators),
        base_mva=applied.base_mva,
    )
    return sub, injections, gen_indices


def _zonal_cost_applied(
    applied: Network,
    partition: Partition,
    tolerances: Tolerances,
) -> CostBreakdown:
    borders = border_branches(applied, partition)

    # market coupling: clear trade against inter-zonal limits only
    coupling_limits = {br.id: br.flow_limit for br in borders if math.isfinite(br.flow_limit)}
    step1 = dc_opf(applied, enforce_limits=False, extra_constraints=coupling_limits,
                   tolerances=tolerances)
    if not step1.feasible:
        raise PartitionInfeasibleError(f"market coupling: {step1.message}")
    energy = step1.objective

    all_gens = range(applied.n_generators)
    system_price = _running_price(applied, step1.generation, all_gens, tolerances.running)
    if system_price is None:
        raise WelfareError("no generator is running; zonal prices undefined")
    zonal_prices = []
    for members in partition.zones():
        member_set = set(members)
        zone_gens = [i for i, g in enumerate(applied.generators) if g.bus in member_set]
        price = _running_price(applied, step1.generation, zone_gens, tolerances.running)
        # a zone with no running unit trades at the system marginal price
        zonal_prices.append(price if price is not None else system_price)

    rent = 0.0
    for br in borders:
        if br.id not in step1.binding_lines:
            continue
        flow = step1.flows[br.id]
        exporting = partition.zone_of[br.from_bus] if flow >= 0 else partition.zone_of[br.to_bus]
        importing = partition.zone_of[br.to_bus] if flow >= 0 else partition.zone_of[br.from_bus]
        rent += abs(flow) * max(0.0, zonal_prices[importing] - zonal_prices[exporting])

    # per-zone balancing against the zone's own network, border flows fixed
    balancing = 0.0
    for zone in range(partition.k):
        sub, injections, gen_indices = _zone_subproblem(applied, partition, zone, step1.flows)
        zone_solution = dc_opf(sub, enforce_limits=True, injections=injections,
                               tolerances=tolerances)
        if not zone_solution.feasible:
            raise PartitionInfeasibleError(f"zone {zone} balancing: {zone_solution.message}")
        base = np.array([step1.generation[i] for i in gen_indices])
        balancing += redispatch_cost(sub, base, zone_solution.generation)

    energy, balancing, rent = float(energy), float(balancing), float(rent)
    return CostBreakdown(
        energy_value=energy,
        balancing_cost=balancing,
        congestion_rent=rent,
        total=energy + balancing - rent,
        zonal_prices=tuple(float(p) for p in zonal_prices),
    )


def zonal_market_cost(
    network: Network,
    partition: Partition,
    scenario: WindScenario,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CostBreakdown:
    """Cost of serving one scenario under a zonal division.

    Market coupling (step 1) respects only inter-zonal limits and sets
    one price per zone; per-zone balancing (step 2) redispatches each
    zone against its own sub-network with border flows held fixed.
    """
    violations = validate_partition(partition, network)
    if violations:
        raise ValueError("invalid partition: " + "; ".join(violations))
    try:
        applied = apply_scenario(network, scenario)
    except InadequateCapacityError as exc:
        raise UnservableScenarioError(str(exc))
    return _zonal_cost_applied(applied, partition, tolerances)


# ---------------------------------------------------------------------------
# Scenario-averaged ranking


class DivisionEvaluator:
    """Evaluates candidate divisions over a scenario set with caching.

    Per-(partition, scenario) results are cached by partition content, so
    re-evaluating an incumbent during sequential splitting is free.
    Scenarios whose uniform market is unservable are excluded for every
    candidate alike; a partition whose own sub-problems are infeasible is
    charged the configured penalty instead, so divisions that strand load
    cannot win by attrition.
    """

    def __init__(
        self,
        network: Network,
        scenario_set: ScenarioSet,
        tolerances: Tolerances = DEFAULT_TOLERANCES,
        parallelism: int = 1,
    ):
        self.network = network
        self.scenario_set = scenario_set
        self.tolerances = tolerances
        self.parallelism = parallelism
        self._applied: dict = {}
        self._unconstrained: dict = {}
        self._constrained: dict = {}
        self._uniform: dict = {}
        self._zonal: dict = {}

    def applied_network(self, scenario: WindScenario):
        """Scenario-applied network, or None when capacity is inadequate."""
        if scenario.id not in self._applied:
            try:
                self._applied[scenario.id] = apply_scenario(self.network, scenario)
            except InadequateCapacityError as exc:
                logger.warning("%s", exc)
                self._applied[scenario.id] = None
        return self._applied[scenario.id]

    def _solution(self, scenario: WindScenario, cache: dict, enforce: bool):
        if scenario.id not in cache:
            applied = self.applied_network(scenario)
            if applied is None:
                cache[scenario.id] = None
            else:
                solution = dc_opf(applied, enforce_limits=enforce, tolerances=self.tolerances)
                cache[scenario.id] = solution if solution.feasible else None
        return cache[scenario.id]

    def unconstrained_solution(self, scenario: WindScenario):
        """Limit-free equilibrium dispatch, or None when unservable."""
        return self._solution(scenario, self._unconstrained, False)

    def constrained_solution(self, scenario: WindScenario):
        """Fully network-feasible dispatch, or None when unservable."""
        return self._solution(scenario, self._constrained, True)

    def uniform_cost(self, scenario: WindScenario):
        """Uniform-market breakdown, or None when the scenario is unservable."""
        if scenario.id not in self._uniform:
            unconstrained = self.unconstrained_solution(scenario)
            constrained = self.constrained_solution(scenario)
            if unconstrained is None or constrained is None:
                logger.warning("scenario %d unservable; excluded", scenario.id)
                self._uniform[scenario.id] = None
            else:
                applied = self.applied_network(scenario)
                energy = unconstrained.objective
                balancing = redispatch_cost(applied, unconstrained.generation,
                                            constrained.generation)
                self._uniform[scenario.id] = CostBreakdown(
                    energy_value=energy,
                    balancing_cost=balancing,
                    congestion_rent=0.0,
                    total=energy + balancing,
                    zonal_prices=(),
                )
        return self._uniform[scenario.id]

    def zonal_cost(self, partition: Partition, scenario: WindScenario):
        """(breakdown, infeasible_flag), or None when the scenario is excluded."""
        if self.uniform_cost(scenario) is None:
            return None
        key = (partition.zone_of, scenario.id)
        if key not in self._zonal:
            applied = self.applied_network(scenario)
            try:
                self._zonal[key] = (_zonal_cost_applied(applied, partition, self.tolerances), False)
            except PartitionInfeasibleError as exc:
                logger.warning("partition %s scenario %d: %s", partition.zone_of, scenario.id, exc)
                penalty = self.tolerances.infeasibility_penalty
                self._zonal[key] = (
                    CostBreakdown(
                        energy_value=0.0,
                        balancing_cost=penalty,
                        congestion_rent=0.0,
                        total=penalty,
                        zonal_prices=(),
                    ),
                    True,
                )
        return self._zonal[key]

    def average_cost(self, partition: Partition) -> AveragedCost:
        """Unweighted mean breakdown over servable scenarios."""
        cells = parallel_map(
            lambda scen: self.zonal_cost(partition, scen),
            self.scenario_set,
            self.parallelism,
        )
        cells = [c for c in cells if c is not None]
        if not cells:
            raise WelfareError("all scenarios are unservable")
        n = len(cells)
        return AveragedCost(
            energy_value=sum(c[0].energy_value for c in cells) / n,
            balancing_cost=sum(c[0].balancing_cost for c in cells) / n,
            congestion_rent=sum(c[0].congestion_rent for c in cells) / n,
            total=sum(c[0].total for c in cells) / n,
            infeasible_count=sum(1 for c in cells if c[1]),
        )

    def average_total(self, partition: Partition) -> float:
        return self.average_cost(partition).total

    def evaluate(self, candidates) -> WelfareReport:
        """Scenario-averaged report over the candidates plus the single-zone
        baseline, with the lowest-total division marked best."""
        ordered = [Partition.single_zone(self.network.n_buses)]
        for cand in candidates:
            if cand not in ordered:
                ordered.append(cand)

        per_partition = {}
        for cand in ordered:
            violations = validate_partition(cand, self.network)
            if violations:
                raise ValueError(f"invalid candidate {cand.zone_of}: " + "; ".join(violations))
            per_partition[cand] = self.average_cost(cand)

        totals = {cand: cost.total for cand, cost in per_partition.items()}
        min_total = min(totals.values())
        tied = [cand for cand in ordered if totals[cand] <= min_total + self.tolerances.welfare]
        best = min(tied, key=lambda p: (p.k, p.zone_of))

        excluded = sum(1 for scen in self.scenario_set if self.uniform_cost(scen) is None)
        if excluded:
            logger.warning("%d of %d scenarios unservable; excluded from averages",
                           excluded, len(self.scenario_set))
        return WelfareReport(
            per_partition=per_partition,
            best=best,
            scenarios_used=len(self.scenario_set) - excluded,
            scenarios_excluded=excluded,
        )


def evaluate_divisions(
    network: Network,
    scenarios: ScenarioSet,
    candidates,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    parallelism: int = 1,
) -> WelfareReport:
    """Rank candidate divisions by scenario-averaged total cost.

    The single-zone baseline is always evaluated, duplicates collapse,
    and ties (within the welfare tolerance) resolve to the smaller k and
    then the lexicographically smaller zone assignment.
    """
    evaluator = DivisionEvaluator(network, scenarios, tolerances, parallelism)
    return evaluator.evaluate(candidates)
