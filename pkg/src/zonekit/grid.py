"""Power-network data model, case-file ingestion, and network matrices.

A :class:`Network` is an immutable snapshot of a transmission grid: buses
with fixed demands, branches with reactances and flow limits, and
generators with linear marginal costs.  Two ingestion formats are
supported and auto-detected: MATPOWER case text (the ``mpc.bus`` /
``mpc.gen`` / ``mpc.branch`` / ``mpc.gencost`` tables) and this package's
own JSON schema (see ``schemas/network.schema.json``).

Internally buses are always numbered 0..N-1; the numbering of the source
file is kept in the bus labels.
"""

import json
import logging
import math
import re
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

#: Sentinel for branches without a thermal limit.
UNLIMITED = math.inf


class CaseParseError(ValueError):
    """Malformed case text; carries a 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NetworkValidationError(ValueError):
    """A parsed network violates structural invariants."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class Bus:
    id: int
    demand: float  # MW, >= 0
    label: str = ""


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    reactance: float  # per unit, > 0
    flow_limit: float = UNLIMITED  # MW, > 0; UNLIMITED if unconstrained


@dataclass(frozen=True)
class Generator:
    bus: int
    marginal_cost: float  # currency/MWh
    p_min: float  # MW
    p_max: float  # MW
    is_wind: bool = False
    rated_capacity: float = 0.0  # MW; nameplate for wind units
    label: str = ""


@dataclass(frozen=True)
class Network:
    """Immutable grid model shared by every pipeline stage."""

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    def demands(self) -> np.ndarray:
        """Per-bus demand vector in MW."""
        return np.array([b.demand for b in self.buses], dtype=float)

    def wind_generators(self) -> list[int]:
        """Indices of wind units, in generator order."""
        return [i for i, g in enumerate(self.generators) if g.is_wind]

    def generators_at(self, bus: int) -> list[int]:
        return [i for i, g in enumerate(self.generators) if g.bus == bus]


# ---------------------------------------------------------------------------
# Graph helpers


def connected_components(n_buses: int, edges) -> list[list[int]]:
    """Connected components of the bus graph, as sorted bus-index lists.

    ``edges`` is any iterable of (from_bus, to_bus) pairs.
    """
    adj = [[] for _ in range(n_buses)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = [False] * n_buses
    components = []
    for start in range(n_buses):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        components.append(sorted(comp))
    return components


def is_connected(network: Network) -> bool:
    edges = [(br.from_bus, br.to_bus) for br in network.branches]
    return len(connected_components(network.n_buses, edges)) == 1


# ---------------------------------------------------------------------------
# Matrices


def incidence_matrix(network: Network) -> np.ndarray:
    """Signed line-bus incidence matrix, M x N.

    Row l carries +1 at the from bus and -1 at the to bus of branch l.
    Positive flow on a branch is oriented from_bus -> to_bus everywhere
    in this package.
    """
    a = np.zeros((network.n_branches, network.n_buses))
    for l, br in enumerate(network.branches):
        a[l, br.from_bus] = 1.0
        a[l, br.to_bus] = -1.0
    return a


def branch_susceptances(network: Network) -> np.ndarray:
    """Per-branch susceptance in MW/rad (base_mva / reactance)."""
    x = np.array([br.reactance for br in network.branches], dtype=float)
    return network.base_mva / x


def bus_susceptance_matrix(network: Network) -> np.ndarray:
    """Nodal susceptance matrix B = A^T diag(b) A, N x N, in MW/rad."""
    a = incidence_matrix(network)
    b = branch_susceptances(network)
    return a.T @ (b[:, None] * a)


# ---------------------------------------------------------------------------
# Validation


def validate(network: Network, check_adequacy: bool = True) -> list[str]:
    """Return the list of invariant violations (empty when valid).

    Structural problems (bad indices, nonpositive reactance, a
    disconnected graph) are always reported.  With ``check_adequacy``
    the generation-covers-demand guard and the at-least-one-generator
    rule are reported too; ingestion skips those so that capacity
    shortfalls surface as OPF infeasibility rather than parse failures.
    """
    violations = []
    n = network.n_buses

    ids = [b.id for b in network.buses]
    if ids != list(range(n)):
        violations.append(f"bus ids are not contiguous 0..{n - 1}: {ids}")
    for b in network.buses:
        if not math.isfinite(b.demand) or b.demand < 0:
            violations.append(f"bus {b.id}: demand {b.demand} is not finite and non-negative")

    for br in network.branches:
        if br.from_bus == br.to_bus:
            violations.append(f"branch {br.id}: self-loop at bus {br.from_bus}")
        for end in (br.from_bus, br.to_bus):
            if not 0 <= end < n:
                violations.append(f"branch {br.id}: endpoint {end} is not a bus")
        if not (math.isfinite(br.reactance) and br.reactance > 0):
            violations.append(f"branch {br.id}: reactance {br.reactance} must be > 0")
        if not br.flow_limit > 0:
            violations.append(f"branch {br.id}: flow limit {br.flow_limit} must be > 0")

    for i, g in enumerate(network.generators):
        if not 0 <= g.bus < n:
            violations.append(f"generator {i}: bus {g.bus} does not exist")
        if not math.isfinite(g.marginal_cost) or g.marginal_cost < 0:
            violations.append(f"generator {i}: marginal cost {g.marginal_cost} invalid")
        if not 0 <= g.p_min <= g.p_max:
            violations.append(f"generator {i}: requires 0 <= p_min <= p_max, got [{g.p_min}, {g.p_max}]")
        if g.is_wind:
            if g.p_min != 0:
                violations.append(f"generator {i}: wind unit must have p_min = 0")
            if g.p_max > g.rated_capacity + 1e-9:
                violations.append(
                    f"generator {i}: wind p_max {g.p_max} exceeds rated capacity {g.rated_capacity}"
                )

    wind_labels = [g.label for g in network.generators if g.is_wind]
    if len(set(wind_labels)) != len(wind_labels):
        violations.append(f"wind generator labels are not unique: {wind_labels}")

    if n > 0:
        comps = connected_components(n, [(br.from_bus, br.to_bus) for br in network.branches
                                         if 0 <= br.from_bus < n and 0 <= br.to_bus < n])
        if len(comps) > 1:
            violations.append(f"graph is disconnected; components: {comps}")

    if check_adequacy:
        if network.n_generators == 0:
            violations.append("network has no generators")
        else:
            cap = sum(g.p_max for g in network.generators)
            dem = sum(b.demand for b in network.buses)
            if cap < dem:
                violations.append(f"total generation capacity {cap} MW below total demand {dem} MW")

    return violations


def _raise_structural(network: Network) -> Network:
    violations = validate(network, check_adequacy=False)
    if violations:
        raise NetworkValidationError(violations)
    return network


# ---------------------------------------------------------------------------
# MATPOWER ingestion

_MAT_SCALAR = re.compile(r"mpc\.(\w+)\s*=\s*([0-9eE+\-.]+)\s*;")
_MAT_TABLE = re.compile(r"mpc\.(\w+)\s*=\s*\[")


def _strip_comment(line: str) -> str:
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _parse_matpower_tables(text: str):
    """Extract scalar fields and numeric tables from MATPOWER case text."""
    scalars = {}
    tables = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        raw = _strip_comment(lines[i])
        m = _MAT_SCALAR.search(raw)
        if m:
            scalars[m.group(1)] = float(m.group(2))
            i += 1
            continue
        m = _MAT_TABLE.search(raw)
        if m:
            name = m.group(1)
            rows = []
            # table rows may start on the same line as the opening bracket
            rest = raw[m.end():]
            j = i
            closed = False
            while j < len(lines):
                chunk = rest if j == i else _strip_comment(lines[j])
                if "]" in chunk:
                    chunk = chunk[: chunk.index("]")]
                    closed = True
                for piece in chunk.split(";"):
                    piece = piece.strip()
                    if not piece:
                        continue
                    try:
                        rows.append(([float(tok) for tok in piece.split()], j + 1))
                    except ValueError:
                        raise CaseParseError(f"non-numeric value in table {name!r}: {piece!r}", line=j + 1)
                if closed:
                    break
                j += 1
            if not closed:
                raise CaseParseError(f"table {name!r} is never closed", line=i + 1)
            tables[name] = rows
            i = j + 1
            continue
        i += 1
    return scalars, tables


def _marginal_cost_from_gencost(row, p_max, line, gen_idx):
    """Reduce one gencost row to a scalar marginal cost.

    Linear polynomial rows pass through; quadratic and higher orders,
    and piecewise-linear rows, are reduced to the marginal cost at
    p_max with a logged warning.
    """
    if len(row) < 4:
        raise CaseParseError("gencost row too short", line=line)
    model, ncost = int(row[0]), int(row[3])
    coeffs = row[4:]
    if model == 2:
        if len(coeffs) < ncost:
            raise CaseParseError(f"gencost row declares {ncost} coefficients, found {len(coeffs)}", line=line)
        coeffs = coeffs[:ncost]  # c_{n-1} ... c_0
        if ncost <= 1:
            return 0.0
        if ncost == 2:
            return coeffs[0]
        # d/dp of sum c_k p^k evaluated at p_max
        poly = np.polynomial.Polynomial(coeffs[::-1])
        marginal = float(poly.deriv()(p_max))
        logger.warning(
            "generator %d: order-%d polynomial cost reduced to marginal cost %.6g at p_max=%.6g MW",
            gen_idx, ncost - 1, marginal, p_max,
        )
        return marginal
    if model == 1:
        pts = coeffs[: 2 * ncost]
        if len(pts) < 4:
            raise CaseParseError("piecewise gencost row needs at least two points", line=line)
        x1, y1, x2, y2 = pts[-4], pts[-3], pts[-2], pts[-1]
        if x2 == x1:
            raise CaseParseError("piecewise gencost row has zero-width final segment", line=line)
        marginal = (y2 - y1) / (x2 - x1)
        logger.warning(
            "generator %d: piecewise cost reduced to final-segment slope %.6g", gen_idx, marginal
        )
        return marginal
    raise CaseParseError(f"unknown gencost model {model}", line=line)


def parse_matpower(text: str) -> Network:
    """Parse MATPOWER case text into a validated Network.

    Only the columns this toolkit needs are read: bus number and demand,
    branch endpoints / reactance / rate-A / status, generator bus and
    limits plus the linear cost coefficient from gencost.  Out-of-service
    branches are dropped; if that disconnects the grid, parsing fails.
    """
    scalars, tables = _parse_matpower_tables(text)
    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseParseError(f"missing mpc.{required} table")
    base_mva = scalars.get("baseMVA", 100.0)

    buses = []
    number_to_index = {}
    for row, line in tables["bus"]:
        if len(row) < 3:
            raise CaseParseError("bus row needs at least 3 columns", line=line)
        number = int(row[0])
        if number in number_to_index:
            raise CaseParseError(f"duplicate bus number {number}", line=line)
        idx = len(buses)
        number_to_index[number] = idx
        buses.append(Bus(id=idx, demand=float(row[2]), label=str(number)))

    branches = []
    for row, line in tables["branch"]:
        if len(row) < 6:
            raise CaseParseError("branch row needs at least 6 columns", line=line)
        status = int(row[10]) if len(row) > 10 else 1
        if status == 0:
            continue
        for end in (int(row[0]), int(row[1])):
            if end not in number_to_index:
                raise CaseParseError(f"branch references unknown bus {end}", line=line)
        rate_a = float(row[5])
        branches.append(
            Branch(
                id=len(branches),
                from_bus=number_to_index[int(row[0])],
                to_bus=number_to_index[int(row[1])],
                reactance=float(row[3]),
                flow_limit=rate_a if rate_a > 0 else UNLIMITED,
            )
        )

    gencost = tables.get("gencost", [])
    n_gen_rows = len(tables["gen"])
    if gencost and len(gencost) >= 2 * n_gen_rows:
        gencost = gencost[:n_gen_rows]  # second block holds reactive-power costs

    generators = []
    for k, (row, line) in enumerate(tables["gen"]):
        if len(row) < 10:
            raise CaseParseError("gen row needs at least 10 columns", line=line)
        bus_number = int(row[0])
        if bus_number not in number_to_index:
            raise CaseParseError(f"generator references unknown bus {bus_number}", line=line)
        p_max, p_min = float(row[8]), float(row[9])
        if not gencost:
            raise CaseParseError("mpc.gencost table is required to price generators")
        if k >= len(gencost):
            raise CaseParseError(f"no gencost row for generator {k}")
        cost_row, cost_line = gencost[k]
        cost = _marginal_cost_from_gencost(cost_row, p_max, cost_line, k)
        generators.append(
            Generator(
                bus=number_to_index[bus_number],
                marginal_cost=cost,
                p_min=p_min,
                p_max=p_max,
                is_wind=False,  # the MATPOWER format carries no wind flag
                rated_capacity=p_max,
                label=f"g{k + 1}",
            )
        )

    network = Network(
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        base_mva=base_mva,
    )
    return _raise_structural(network)


# ---------------------------------------------------------------------------
# Native JSON format


def network_to_dict(network: Network) -> dict:
    return {
        "base_mva": network.base_mva,
        "buses": [
            {"id": b.id, "demand": b.demand, "label": b.label} for b in network.buses
        ],
        "branches": [
            {
                "id": br.id,
                "from_bus": br.from_bus,
                "to_bus": br.to_bus,
                "reactance": br.reactance,
                "flow_limit": None if math.isinf(br.flow_limit) else br.flow_limit,
            }
            for br in network.branches
        ],
        "generators": [
            {
                "bus": g.bus,
                "marginal_cost": g.marginal_cost,
                "p_min": g.p_min,
                "p_max": g.p_max,
                "is_wind": g.is_wind,
                "rated_capacity": g.rated_capacity,
                "label": g.label,
            }
            for g in network.generators
        ],
    }


def network_to_json(network: Network, indent: int = 2) -> str:
    return json.dumps(network_to_dict(network), indent=indent)


def network_from_dict(data: dict) -> Network:
    try:
        raw_buses = data["buses"]
        raw_branches = data["branches"]
        raw_generators = data["generators"]
    except KeyError as exc:
        raise CaseParseError(f"missing top-level key {exc.args[0]!r}")
    if not raw_buses:
        raise CaseParseError("bus list is empty")

    # arbitrary unique ids are accepted and remapped to 0..N-1 in id order
    order = sorted(range(len(raw_buses)), key=lambda i: int(raw_buses[i]["id"]))
    id_map = {}
    buses = []
    for new_idx, i in enumerate(order):
        raw = raw_buses[i]
        orig = int(raw["id"])
        if orig in id_map:
            raise CaseParseError(f"duplicate bus id {orig}")
        id_map[orig] = new_idx
        buses.append(Bus(id=new_idx, demand=float(raw["demand"]), label=str(raw.get("label", orig))))

    branches = []
    for k, raw in enumerate(raw_branches):
        for end_key in ("from_bus", "to_bus"):
            if int(raw[end_key]) not in id_map:
                raise CaseParseError(f"branch {k} references unknown bus {raw[end_key]}")
        limit = raw.get("flow_limit")
        branches.append(
            Branch(
                id=k,
                from_bus=id_map[int(raw["from_bus"])],
                to_bus=id_map[int(raw["to_bus"])],
                reactance=float(raw["reactance"]),
                flow_limit=UNLIMITED if limit in (None, "inf") else float(limit),
            )
        )

    generators = []
    n_wind = 0
    for k, raw in enumerate(raw_generators):
        if int(raw["bus"]) not in id_map:
            raise CaseParseError(f"generator {k} references unknown bus {raw['bus']}")
        is_wind = bool(raw.get("is_wind", False))
        p_max = float(raw["p_max"])
        if is_wind:
            n_wind += 1
        default_label = f"w{n_wind}" if is_wind else f"g{k + 1}"
        generators.append(
            Generator(
                bus=id_map[int(raw["bus"])],
                marginal_cost=float(raw["marginal_cost"]),
                p_min=float(raw.get("p_min", 0.0)),
                p_max=p_max,
                is_wind=is_wind,
                rated_capacity=float(raw.get("rated_capacity", p_max)),
                label=str(raw.get("label", default_label)),
            )
        )

    network = Network(
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        base_mva=float(data.get("base_mva", 100.0)),
    )
    return _raise_structural(network)


# ---------------------------------------------------------------------------
# Entry points


def parse_case_file(text: str) -> Network:
    """Parse case text, auto-detecting MATPOWER vs the native JSON schema."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CaseParseError(f"invalid JSON: {exc.msg}", line=exc.lineno)
        return network_from_dict(data)
    return parse_matpower(text)


def load_case(path) -> Network:
    """Read and parse a case file from disk."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_case_file(fh.read())
