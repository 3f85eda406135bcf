"""Power transfer distribution factors and sign-based zone splitting.

A PTDF matrix H maps balanced nodal injections to branch flows, but its
entries depend on which bus absorbs the balancing withdrawal (the
reference bus).  Shifting each row so that the two endpoint coefficients
of its branch become equal in magnitude and opposite in sign removes
that dependence entirely: the shifted operator S is the same no matter
which reference produced H, and still maps balanced injections to the
same flows.  The sign of S's row for a congested branch then separates
the buses that push power onto the branch from those that relieve it,
which is exactly the border a zone split should follow.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .grid import Network, branch_susceptances, bus_susceptance_matrix, connected_components, incidence_matrix

logger = logging.getLogger(__name__)

#: Balanced nodal injections, MW per bus, withdrawals negative.
InjectionVector = np.ndarray


class DegenerateSplitError(RuntimeError):
    """Raised when a sign split cannot produce two usable zones."""


@dataclass(frozen=True)
class PtdfMatrix:
    """Branch-flow sensitivities to injections withdrawn at one reference bus."""

    values: np.ndarray  # M x N
    reference_bus: int


@dataclass(frozen=True)
class GeneralizedPtdf:
    """Reference-independent PTDF operator: endpoint factors of every
    branch are equal in magnitude and opposite in sign."""

    values: np.ndarray  # M x N


def ptdf_matrix(network: Network, reference_bus: int = 0) -> PtdfMatrix:
    """PTDF matrix H for a chosen reference bus.

    Column k gives each branch's flow response to injecting 1 MW at bus k
    and withdrawing it at the reference; the reference column is zero by
    construction.  Built from the reduced nodal susceptance matrix, so
    for any balanced injection vector p, ``values @ p`` equals the flows
    of a direct B-theta solve.
    """
    n = network.n_buses
    if not 0 <= reference_bus < n:
        raise ValueError(f"reference bus {reference_bus} out of range 0..{n - 1}")
    a = incidence_matrix(network)
    b = branch_susceptances(network)
    bbus = bus_susceptance_matrix(network)

    keep = [i for i in range(n) if i != reference_bus]
    b_red = bbus[np.ix_(keep, keep)]
    # flows = diag(b) A theta with theta_red = B_red^{-1} p_red
    rhs = (b[:, None] * a)[:, keep].T
    try:
        h_red = np.linalg.solve(b_red, rhs).T
    except np.linalg.LinAlgError as exc:
        # unreachable on validated (connected) networks
        raise RuntimeError(f"reduced susceptance matrix is singular: {exc}")
    values = np.zeros((network.n_branches, n))
    values[:, keep] = h_red
    return PtdfMatrix(values=values, reference_bus=reference_bus)


def generalized_ptdf(h: PtdfMatrix, network: Network) -> GeneralizedPtdf:
    """Shift every PTDF row by the negative average of its two endpoint
    factors, producing the reference-independent operator S.

    For branch l = (n, m):  S_lk = H_lk - (H_ln + H_lm) / 2.  The shift
    leaves flows of balanced injections unchanged and makes
    S_ln = -S_lm exactly.
    """
    from_idx = np.array([br.from_bus for br in network.branches])
    to_idx = np.array([br.to_bus for br in network.branches])
    rows = np.arange(network.n_branches)
    shift = 0.5 * (h.values[rows, from_idx] + h.values[rows, to_idx])
    return GeneralizedPtdf(values=h.values - shift[:, None])


def flows_from_injections(operator, p: InjectionVector) -> np.ndarray:
    """Branch flows (MW) produced by a nodal injection vector.

    ``operator`` is a PtdfMatrix or GeneralizedPtdf.  For balanced p the
    result is identical across reference choices and identical between H
    and S.
    """
    values = operator.values
    p = np.asarray(p, dtype=float)
    if p.shape != (values.shape[1],):
        raise ValueError(f"injection vector must have shape ({values.shape[1]},), got {p.shape}")
    return values @ p


def is_balanced(p: InjectionVector, tol: float = 1e-9) -> bool:
    p = np.asarray(p, dtype=float)
    return abs(p.sum()) <= tol * max(1.0, np.abs(p).max(initial=0.0))


def injections_from_dispatch(network: Network, generation: np.ndarray) -> InjectionVector:
    """Net nodal injections (generation minus demand) for a dispatch."""
    p = -network.demands()
    for g, out in zip(network.generators, generation):
        p[g.bus] += out
    return p


def _scope_components(network: Network, members: set, scope: set) -> list[list[int]]:
    """Connected components of ``members`` inside the scope-induced subgraph."""
    member_list = sorted(members)
    local = {bus: i for i, bus in enumerate(member_list)}
    edges = [
        (local[br.from_bus], local[br.to_bus])
        for br in network.branches
        if br.from_bus in members and br.to_bus in members
    ]
    comps = connected_components(len(member_list), edges)
    return [[member_list[i] for i in comp] for comp in comps]


def sign_bipartition(
    s: GeneralizedPtdf,
    line: int,
    scope,
    network: Network,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[set, set]:
    """Split the buses in ``scope`` into two zones by the sign of S's row
    for ``line``.

    Buses with positive coefficients (including zeros, by the tie rule)
    go to the plus zone with the branch's from-end; negative coefficients
    go to the minus zone with the to-end.  Raw sign splits can strand
    buses away from their zone's endpoint, so stranded components are
    reassigned to the other zone until both zones are connected.  The two
    endpoints always end up on opposite sides, or the split is reported
    as degenerate.
    """
    scope = set(scope)
    branch = network.branches[line]
    n_end, m_end = branch.from_bus, branch.to_bus
    if n_end not in scope or m_end not in scope:
        raise ValueError(f"branch {line} endpoints ({n_end}, {m_end}) must lie in the scope")
    if len(_scope_components(network, scope, scope)) != 1:
        raise ValueError("scope does not induce a connected subgraph")

    row = s.values[line]
    plus = {k for k in scope if row[k] > tolerances.sign or abs(row[k]) <= tolerances.sign}
    minus = scope - plus

    if n_end in plus and m_end in plus:
        raise DegenerateSplitError(
            f"branch {line}: endpoint coefficients {row[n_end]:.3g}/{row[m_end]:.3g} do not separate"
        )
    if n_end in minus:
        # from-end carries the positive coefficient by construction
        plus, minus = minus, plus

    # connectivity repair: a component that lost contact with its zone's
    # endpoint joins the other zone; components only ever grow, so this
    # reaches a fixpoint in at most |scope| rounds
    for _ in range(len(scope) + 1):
        moved = False
        for members, anchor, other in ((plus, n_end, minus), (minus, m_end, plus)):
            if not members:
                raise DegenerateSplitError(f"branch {line}: repair emptied a zone")
            for comp in _scope_components(network, members, scope):
                if anchor not in comp:
                    members.difference_update(comp)
                    other.update(comp)
                    moved = True
        if not moved:
            break
    else:
        raise DegenerateSplitError(f"branch {line}: connectivity repair did not converge")

    if not plus or not minus:
        raise DegenerateSplitError(f"branch {line}: repair emptied a zone")
    return plus, minus
