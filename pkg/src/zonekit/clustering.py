"""Connectivity-constrained hierarchical clustering and consensus zoning.

Zones must be contiguous: a cluster of buses is only usable as a market
zone if it induces a connected subgraph.  The agglomerative engine here
therefore only ever merges clusters joined by at least one branch, which
keeps every cut of the dendrogram contiguous by construction.  The same
engine runs twice in the toolkit: with Ward's minimal-variance criterion
on per-scenario nodal prices, and with average linkage on the consensus
dissimilarity (one minus the co-association fraction) that aggregates
the per-scenario partitions.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .grid import Network, connected_components

logger = logging.getLogger(__name__)

_PALETTE = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0",
    "#f032e6", "#bcf60c", "#fabebe", "#008080", "#e6beff", "#9a6324",
]


@dataclass(frozen=True)
class Partition:
    """Assignment of every bus to one of k contiguous zones.

    Zone ids run 0..k-1 in order of first appearance by bus index, so two
    partitions with the same grouping compare equal.
    """

    zone_of: tuple[int, ...]
    k: int

    @staticmethod
    def from_labels(labels) -> "Partition":
        remap = {}
        zone_of = []
        for lab in labels:
            if lab not in remap:
                remap[lab] = len(remap)
            zone_of.append(remap[lab])
        return Partition(zone_of=tuple(zone_of), k=len(remap))

    @staticmethod
    def single_zone(n_buses: int) -> "Partition":
        return Partition(zone_of=(0,) * n_buses, k=1)

    def zones(self) -> list[list[int]]:
        """Bus indices per zone, zone order 0..k-1."""
        members = [[] for _ in range(self.k)]
        for bus, z in enumerate(self.zone_of):
            members[z].append(bus)
        return members

    def to_dict(self) -> dict:
        return {"k": self.k, "zone_of": list(self.zone_of)}


def validate_partition(partition: Partition, network: Network) -> list[str]:
    """Invariant violations: zone ids contiguous and non-empty, every zone
    connected in the network graph.  Empty when valid."""
    violations = []
    n = network.n_buses
    if len(partition.zone_of) != n:
        return [f"partition covers {len(partition.zone_of)} buses, network has {n}"]
    used = set(partition.zone_of)
    if used != set(range(partition.k)):
        violations.append(f"zone ids {sorted(used)} are not contiguous 0..{partition.k - 1}")
        return violations
    for z, members in enumerate(partition.zones()):
        member_set = set(members)
        local = {bus: i for i, bus in enumerate(members)}
        edges = [
            (local[br.from_bus], local[br.to_bus])
            for br in network.branches
            if br.from_bus in member_set and br.to_bus in member_set
        ]
        if len(connected_components(len(members), edges)) != 1:
            violations.append(f"zone {z} is not connected: buses {members}")
    return violations


def partition_to_dot(partition: Partition, network: Network, name: str = "zones") -> str:
    """Graphviz DOT rendering of the network with buses colored by zone."""
    lines = [f"graph {name} {{", "  node [style=filled];"]
    for bus in network.buses:
        z = partition.zone_of[bus.id]
        color = _PALETTE[z % len(_PALETTE)]
        lines.append(f'  n{bus.id} [label="{bus.label or bus.id}" fillcolor="{color}" zone={z}];')
    for br in network.branches:
        lines.append(f"  n{br.from_bus} -- n{br.to_bus};")
    lines.append("}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CoAssociationMatrix:
    """Fraction of input partitions in which each bus pair shares a zone."""

    values: np.ndarray  # N x N, symmetric, unit diagonal


def co_association(partitions) -> CoAssociationMatrix:
    partitions = list(partitions)
    if not partitions:
        raise ValueError("co-association of an empty partition list")
    n = len(partitions[0].zone_of)
    for p in partitions:
        if len(p.zone_of) != n:
            raise ValueError(f"partition bus counts differ: {len(p.zone_of)} vs {n}")
    values = np.zeros((n, n))
    for p in partitions:
        labels = np.asarray(p.zone_of)
        values += labels[:, None] == labels[None, :]
    values /= len(partitions)
    return CoAssociationMatrix(values=values)


# ---------------------------------------------------------------------------
# Agglomerative engine
#
# Clusters are identified by their smallest member bus index, and ties in
# the merge objective are broken by the lexicographically smallest
# (cluster index, cluster index) pair, so merge sequences are fully
# deterministic.  Dissimilarities are maintained for all active pairs via
# Lance-Williams updates, but only branch-adjacent pairs may merge.


def _lance_williams_ward(d_ik, d_jk, d_ij, si, sj, sk):
    return ((si + sk) * d_ik + (sj + sk) * d_jk - sk * d_ij) / (si + sj + sk)


def _lance_williams_average(d_ik, d_jk, d_ij, si, sj, sk):
    return (si * d_ik + sj * d_jk) / (si + sj)


_UPDATES = {"ward": _lance_williams_ward, "average": _lance_williams_average}


def _agglomerate(initial_d: np.ndarray, network: Network, ks, linkage: str) -> dict:
    """Merge singletons up the dendrogram, snapshotting labels at each
    requested cluster count.  Returns {k: labels array}."""
    n = network.n_buses
    update = _UPDATES[linkage]
    wanted = set(ks)
    for k in wanted:
        if not 1 <= k <= n:
            raise ValueError(f"cluster count {k} outside 1..{n}")

    active = set(range(n))
    size = {i: 1 for i in range(n)}
    labels = np.arange(n)
    d = {(i, j): float(initial_d[i, j]) for i in range(n) for j in range(i + 1, n)}
    adj = {i: set() for i in range(n)}
    for br in network.branches:
        if br.from_bus != br.to_bus:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)

    snapshots = {}
    if n in wanted:
        snapshots[n] = labels.copy()

    for n_clusters in range(n - 1, 0, -1):
        best = None
        for i in sorted(active):
            for j in sorted(adj[i]):
                if j <= i:
                    continue
                cand = (d[(i, j)], i, j)
                if best is None or cand < best:
                    best = cand
        if best is None:
            # unreachable on connected networks
            raise RuntimeError("no branch-adjacent cluster pair left to merge")
        _, i, j = best
        d_ij = d[(i, j)]
        si, sj = size[i], size[j]
        for k in active:
            if k in (i, j):
                continue
            key_ik = (min(i, k), max(i, k))
            key_jk = (min(j, k), max(j, k))
            d[key_ik] = update(d[key_ik], d[key_jk], d_ij, si, sj, size[k])
            del d[key_jk]
        del d[(i, j)]
        active.remove(j)
        size[i] = si + sj
        del size[j]
        for k in adj[j]:
            adj[k].discard(j)
            if k != i:
                adj[k].add(i)
                adj[i].add(k)
        adj[i].discard(i)
        adj[i].discard(j)
        del adj[j]
        labels[labels == j] = i
        if n_clusters in wanted:
            snapshots[n_clusters] = labels.copy()
    return snapshots


def ward_connectivity_cluster(prices, network: Network, k: int) -> Partition:
    """Cluster nodal prices into k contiguous zones by Ward's criterion.

    Agglomerates from singletons, at each step merging the branch-adjacent
    cluster pair whose merge least increases within-cluster variance.
    """
    prices = np.asarray(prices, dtype=float)
    if prices.shape != (network.n_buses,):
        raise ValueError(f"expected {network.n_buses} prices, got shape {prices.shape}")
    if not np.all(np.isfinite(prices)):
        raise ValueError("prices must be finite")
    diff = prices[:, None] - prices[None, :]
    initial_d = 0.5 * diff**2  # Ward merge cost for singleton pairs
    snapshots = _agglomerate(initial_d, network, [k], "ward")
    return Partition.from_labels(snapshots[k])


def consensus_cluster(partitions, network: Network, max_k: int) -> list[Partition]:
    """Aggregate many partitions into one consensus dendrogram and cut it
    at every k = 1..max_k.

    The co-association fraction of each bus pair becomes a similarity;
    average-linkage agglomeration on 1 - similarity, restricted to
    branch-adjacent merges, keeps every returned partition contiguous.
    """
    coassoc = co_association(partitions)
    if coassoc.values.shape[0] != network.n_buses:
        raise ValueError("partitions do not cover this network's buses")
    ks = range(1, max_k + 1)
    snapshots = _agglomerate(1.0 - coassoc.values, network, ks, "average")
    return [Partition.from_labels(snapshots[k]) for k in ks]
