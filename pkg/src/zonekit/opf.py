"""DC optimal power flow as a linear program with dual extraction.

The LP minimizes total generation cost over dispatch and bus angles
subject to nodal balance in the B-theta formulation, generator bounds,
and (optionally) branch flow limits.  Locational marginal prices are
read off the duals of the nodal balance constraints; scipy's HiGHS
backend reports them directly as objective sensitivities to demand.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .config import DEFAULT_TOLERANCES, Tolerances
from .grid import Network, branch_susceptances, bus_susceptance_matrix

logger = logging.getLogger(__name__)


class OpfError(RuntimeError):
    pass


@dataclass(frozen=True)
class DispatchSolution:
    """One DC OPF result.

    Flows are in MW, positive in the from_bus -> to_bus direction.
    When ``feasible`` is False only ``message`` is meaningful.
    """

    generation: np.ndarray  # MW per generator
    angles: np.ndarray  # rad per bus, slack (bus 0) fixed to 0
    flows: np.ndarray  # MW per branch
    nodal_prices: np.ndarray  # currency/MWh per bus
    objective: float  # currency/h
    binding_lines: frozenset  # branch ids at their enforced limit
    feasible: bool
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "objective": self.objective if math.isfinite(self.objective) else None,
            "generation": list(map(float, self.generation)),
            "angles": list(map(float, self.angles)),
            "flows": list(map(float, self.flows)),
            "nodal_prices": list(map(float, self.nodal_prices)),
            "binding_lines": sorted(self.binding_lines),
            "message": self.message,
        }


def _infeasible(network: Network, message: str) -> DispatchSolution:
    empty = np.zeros(0)
    return DispatchSolution(
        generation=empty,
        angles=empty,
        flows=empty,
        nodal_prices=empty,
        objective=math.nan,
        binding_lines=frozenset(),
        feasible=False,
        message=message,
    )


def effective_limits(network: Network, enforce_limits: bool, extra_constraints=None) -> dict:
    """Map branch id -> the flow limit the LP will enforce (may be inf).

    With ``enforce_limits`` every limited branch is constrained at its own
    limit; ``extra_constraints`` overrides individual branches either way,
    which is how zonal market coupling constrains only border lines.
    """
    limits = {}
    for br in network.branches:
        limit = br.flow_limit if enforce_limits else math.inf
        if extra_constraints and br.id in extra_constraints:
            limit = extra_constraints[br.id]
        limits[br.id] = limit
    return limits


def dc_opf(
    network: Network,
    enforce_limits: bool = True,
    extra_constraints: dict | None = None,
    injections: np.ndarray | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> DispatchSolution:
    """Solve the DC OPF and return dispatch, flows, and nodal prices.

    Parameters
    ----------
    network:
        Validated grid model; wind availability must already be applied.
    enforce_limits:
        Enforce every branch's flow limit.  With False only branches named
        in ``extra_constraints`` are constrained.
    extra_constraints:
        Per-branch limit overrides {branch_id: limit_mw}; an entry of
        ``math.inf`` relaxes that branch even when limits are enforced.
    injections:
        Optional fixed per-bus injection (MW, positive into the bus) added
        to the balance equations.  Used for zone sub-problems where border
        flows enter as fixed inflows/outflows.

    Infeasible problems return ``feasible=False`` with a diagnostic; load
    is never shed silently.
    """
    n, m, ngen = network.n_buses, network.n_branches, network.n_generators
    demands = network.demands()
    if injections is not None:
        injections = np.asarray(injections, dtype=float)
        if injections.shape != (n,):
            raise ValueError(f"injections must have shape ({n},), got {injections.shape}")
        demands = demands - injections

    bbus = bus_susceptance_matrix(network)
    b = branch_susceptances(network)

    # variables: [p_0..p_{G-1}, theta_0..theta_{N-1}]
    nvar = ngen + n
    cost = np.zeros(nvar)
    for i, g in enumerate(network.generators):
        cost[i] = g.marginal_cost

    a_eq = np.zeros((n, nvar))
    for i, g in enumerate(network.generators):
        a_eq[g.bus, i] = 1.0
    a_eq[:, ngen:] = -bbus
    b_eq = demands

    limits = effective_limits(network, enforce_limits, extra_constraints)
    constrained = [br for br in network.branches if math.isfinite(limits[br.id])]
    a_ub = np.zeros((2 * len(constrained), nvar))
    b_ub = np.zeros(2 * len(constrained))
    for row, br in enumerate(constrained):
        a_ub[2 * row, ngen + br.from_bus] = b[br.id]
        a_ub[2 * row, ngen + br.to_bus] = -b[br.id]
        a_ub[2 * row + 1, ngen + br.from_bus] = -b[br.id]
        a_ub[2 * row + 1, ngen + br.to_bus] = b[br.id]
        b_ub[2 * row] = limits[br.id]
        b_ub[2 * row + 1] = limits[br.id]

    bounds = [(g.p_min, g.p_max) for g in network.generators]
    bounds.append((0.0, 0.0))  # angle reference: bus 0
    bounds.extend([(None, None)] * (n - 1))

    result = linprog(
        cost,
        A_ub=a_ub if len(constrained) else None,
        b_ub=b_ub if len(constrained) else None,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
    )

    if result.status == 2:
        return _infeasible(network, f"LP infeasible: {result.message}")
    if result.status != 0:
        # unbounded is impossible with finite p_max; anything else is a solver fault
        raise OpfError(f"LP solver failure (status {result.status}): {result.message}")

    generation = result.x[:ngen]
    angles = result.x[ngen:]
    theta_diff = np.array([angles[br.from_bus] - angles[br.to_bus] for br in network.branches])
    flows = b * theta_diff
    prices = np.asarray(result.eqlin.marginals, dtype=float)

    binding = frozenset(
        br.id
        for br in constrained
        if abs(flows[br.id]) >= limits[br.id] - tolerances.binding * max(1.0, limits[br.id])
    )

    return DispatchSolution(
        generation=generation,
        angles=angles,
        flows=flows,
        nodal_prices=prices,
        objective=float(result.fun),
        binding_lines=binding,
        feasible=True,
    )


def uniform_price(
    solution: DispatchSolution,
    network: Network,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """Highest marginal cost among running generators (the uniform price)."""
    if not solution.feasible:
        raise OpfError("cannot price an infeasible dispatch")
    running = [
        g.marginal_cost
        for g, p in zip(network.generators, solution.generation)
        if p > tolerances.running
    ]
    if not running:
        raise OpfError("no generator is running; uniform price undefined")
    return max(running)


def congested_lines(solution: DispatchSolution) -> frozenset:
    """Branch ids whose enforced transmission limit was binding."""
    return solution.binding_lines
