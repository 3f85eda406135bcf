"""End-to-end orchestration of the two zoning methods and their comparison.

Both pipelines consume the same scenario set and rank their candidate
divisions with the same welfare evaluator, so cost differences between
the methods are attributable to the methods alone.
"""

import logging
from dataclasses import dataclass, field

from .clustering import Partition, consensus_cluster, ward_connectivity_cluster
from .config import DEFAULT_TOLERANCES, Tolerances
from .grid import Network
from .ptdf import DegenerateSplitError, generalized_ptdf, ptdf_matrix, sign_bipartition
from .scenarios import ScenarioSet
from .welfare import DivisionEvaluator, WelfareReport

logger = logging.getLogger(__name__)

LMP_CONSENSUS = "lmp_consensus"
CONGESTION_CONTRIBUTION = "congestion_contribution"


@dataclass(frozen=True)
class Diagnostics:
    #: binding branch ids per scenario (None for unservable scenarios)
    per_scenario_congested: tuple
    #: (branch id, fraction of scenarios congested), most frequent first
    congestion_frequencies: tuple
    #: scenarios that could not be solved and were dropped
    dropped_scenarios: int = 0
    #: average total after the baseline and after each accepted split
    accepted_totals: tuple = ()
    #: (branch id, reason) for lines that could not be processed
    skipped_lines: tuple = ()

    def to_dict(self) -> dict:
        return {
            "per_scenario_congested": [
                sorted(s) if s is not None else None for s in self.per_scenario_congested
            ],
            "congestion_frequencies": [list(entry) for entry in self.congestion_frequencies],
            "dropped_scenarios": self.dropped_scenarios,
            "accepted_totals": list(self.accepted_totals),
            "skipped_lines": [list(entry) for entry in self.skipped_lines],
        }


@dataclass(frozen=True)
class MethodResult:
    method: str  # LMP_CONSENSUS or CONGESTION_CONTRIBUTION
    candidates: tuple  # every division the method put forward
    report: WelfareReport
    diagnostics: Diagnostics

    @property
    def best(self) -> Partition:
        return self.report.best

    @property
    def best_total(self) -> float:
        return self.report.per_partition[self.report.best].total

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "candidates": [p.to_dict() for p in self.candidates],
            "report": self.report.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
        }


def _binding_sets(evaluator: DivisionEvaluator):
    """Per-scenario binding branch-id sets (None where unservable)."""
    sets = []
    for scen in evaluator.scenario_set:
        solution = evaluator.constrained_solution(scen)
        sets.append(frozenset(solution.binding_lines) if solution is not None else None)
    return tuple(sets)


def _frequencies_from_sets(binding_sets, n_scenarios: int):
    counts = {}
    for s in binding_sets:
        if s is None:
            continue
        for line in s:
            counts[line] = counts.get(line, 0) + 1
    entries = [(line, count / n_scenarios) for line, count in counts.items()]
    entries.sort(key=lambda e: (-e[1], e[0]))
    return tuple(entries)


def congestion_frequency(
    network: Network,
    scenarios: ScenarioSet,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    parallelism: int = 1,
    evaluator: DivisionEvaluator | None = None,
):
    """How often each branch's limit binds across the scenario set.

    Returns (branch id, frequency) pairs sorted by descending frequency,
    ties by smaller branch id; branches that never bind are omitted.
    """
    if len(scenarios) == 0:
        raise ValueError("empty scenario set")
    if evaluator is None:
        evaluator = DivisionEvaluator(network, scenarios, tolerances, parallelism)
    return list(_frequencies_from_sets(_binding_sets(evaluator), len(scenarios)))


def lmp_pipeline(
    network: Network,
    scenarios: ScenarioSet,
    max_k: int,
    k_scenario: int | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    parallelism: int = 1,
    evaluator: DivisionEvaluator | None = None,
) -> MethodResult:
    """Zonal design by consensus clustering of nodal prices.

    Each servable scenario is solved with all limits enforced and its
    nodal prices clustered into ``k_scenario`` contiguous zones (default:
    the max_k ceiling).  The per-scenario partitions are aggregated by
    consensus clustering, cut at every k = 1..max_k, and the cuts are
    ranked by average total cost.
    """
    if max_k > network.n_buses:
        raise ValueError(f"max_k {max_k} exceeds bus count {network.n_buses}")
    if evaluator is None:
        evaluator = DivisionEvaluator(network, scenarios, tolerances, parallelism)
    if k_scenario is None:
        k_scenario = max_k

    binding_sets = _binding_sets(evaluator)
    per_scenario = []
    dropped = 0
    for scen in scenarios:
        solution = evaluator.constrained_solution(scen)
        if solution is None:
            dropped += 1
            continue
        per_scenario.append(
            ward_connectivity_cluster(solution.nodal_prices, network, k_scenario)
        )
    if dropped:
        logger.warning("dropped %d unsolvable scenarios before clustering", dropped)
    if not per_scenario:
        raise RuntimeError("no scenario could be solved; nothing to cluster")

    candidates = consensus_cluster(per_scenario, network, max_k)
    report = evaluator.evaluate(candidates)
    diagnostics = Diagnostics(
        per_scenario_congested=binding_sets,
        congestion_frequencies=_frequencies_from_sets(binding_sets, len(scenarios)),
        dropped_scenarios=dropped,
    )
    return MethodResult(
        method=LMP_CONSENSUS,
        candidates=tuple(candidates),
        report=report,
        diagnostics=diagnostics,
    )


def _split_partition(partition: Partition, zone: int, zone_plus: set) -> Partition:
    """New partition with one zone divided into two."""
    labels = []
    next_zone = partition.k
    for bus, z in enumerate(partition.zone_of):
        if z == zone and bus not in zone_plus:
            labels.append(next_zone)
        else:
            labels.append(z)
    return Partition.from_labels(labels)


def sequential_partition(
    network: Network,
    scenarios: ScenarioSet,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    parallelism: int = 1,
    frequency_floor: float = 0.0,
    second_pass: bool = False,
    evaluator: DivisionEvaluator | None = None,
) -> MethodResult:
    """Zonal design by congestion-contribution splitting.

    The reference-independent PTDF operator is computed once.  Lines are
    visited from most to least frequently congested; a line still inside
    a zone proposes splitting that zone by the signs of its operator row,
    and the split is kept only if it lowers the scenario-averaged total
    cost.  Lines already on a zone border are left to the inter-zonal
    market; rejected congestions are left to the balancing market.
    """
    if len(scenarios) == 0:
        raise ValueError("empty scenario set")
    if evaluator is None:
        evaluator = DivisionEvaluator(network, scenarios, tolerances, parallelism)

    operator = generalized_ptdf(ptdf_matrix(network, 0), network)
    binding_sets = _binding_sets(evaluator)
    frequencies = _frequencies_from_sets(binding_sets, len(scenarios))

    incumbent = Partition.single_zone(network.n_buses)
    incumbent_total = evaluator.average_total(incumbent)
    accepted_totals = [incumbent_total]
    tested: list[Partition] = []
    skipped = []

    passes = 2 if second_pass else 1
    for pass_idx in range(passes):
        for line, freq in frequencies:
            if freq < frequency_floor:
                continue
            branch = network.branches[line]
            zone = incumbent.zone_of[branch.from_bus]
            if zone != incumbent.zone_of[branch.to_bus]:
                logger.debug("line %d already inter-zonal; skipping", line)
                continue
            scope = [bus for bus, z in enumerate(incumbent.zone_of) if z == zone]
            try:
                zone_plus, _ = sign_bipartition(operator, line, scope, network, tolerances)
            except DegenerateSplitError as exc:
                logger.warning("line %d: %s", line, exc)
                skipped.append((line, str(exc)))
                continue
            candidate = _split_partition(incumbent, zone, zone_plus)
            tested.append(candidate)
            candidate_total = evaluator.average_total(candidate)
            if candidate_total < incumbent_total - tolerances.welfare:
                logger.info(
                    "pass %d line %d: split accepted (%.6g -> %.6g)",
                    pass_idx, line, incumbent_total, candidate_total,
                )
                incumbent = candidate
                incumbent_total = candidate_total
                accepted_totals.append(incumbent_total)
            else:
                logger.info(
                    "pass %d line %d: split rejected (%.6g vs incumbent %.6g)",
                    pass_idx, line, candidate_total, incumbent_total,
                )

    report = evaluator.evaluate(tested)
    diagnostics = Diagnostics(
        per_scenario_congested=binding_sets,
        congestion_frequencies=frequencies,
        accepted_totals=tuple(accepted_totals),
        skipped_lines=tuple(skipped),
    )
    return MethodResult(
        method=CONGESTION_CONTRIBUTION,
        candidates=tuple(tested),
        report=report,
        diagnostics=diagnostics,
    )


@dataclass(frozen=True)
class MethodComparison:
    lmp: MethodResult
    congestion: MethodResult
    #: LMP_CONSENSUS, CONGESTION_CONTRIBUTION, or "tie"
    winner: str

    def table(self) -> list[dict]:
        rows = []
        for result in (self.lmp, self.congestion):
            rows.append(
                {
                    "method": result.method,
                    "best_k": result.best.k,
                    "best_partition": list(result.best.zone_of),
                    "best_total": result.best_total,
                }
            )
        return rows

    def to_dict(self) -> dict:
        return {
            "winner": self.winner,
            "table": self.table(),
            "lmp": self.lmp.to_dict(),
            "congestion": self.congestion.to_dict(),
        }


def compare_methods(
    network: Network,
    scenarios: ScenarioSet,
    max_k: int,
    k_scenario: int | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    parallelism: int = 1,
) -> MethodComparison:
    """Run both zoning methods on the identical scenario set and declare
    the division with the lower best average total the winner (equal
    totals within the welfare tolerance are a tie)."""
    evaluator = DivisionEvaluator(network, scenarios, tolerances, parallelism)
    lmp = lmp_pipeline(
        network, scenarios, max_k, k_scenario,
        tolerances=tolerances, parallelism=parallelism, evaluator=evaluator,
    )
    congestion = sequential_partition(
        network, scenarios,
        tolerances=tolerances, parallelism=parallelism, evaluator=evaluator,
    )
    gap = lmp.best_total - congestion.best_total
    if abs(gap) <= tolerances.welfare:
        winner = "tie"
    elif gap < 0:
        winner = LMP_CONSENSUS
    else:
        winner = CONGESTION_CONTRIBUTION
    return MethodComparison(lmp=lmp, congestion=congestion, winner=winner)
