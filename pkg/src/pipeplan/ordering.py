"""
Linear device ordering by recursive minimum cuts.

Stages and replica groups are mapped onto contiguous slices of a linear GPU
order, so low-bandwidth links should separate the order into halves that are
each split as late as possible: every global min-cut's links are then crossed
by at most one stage boundary or one replica group. rdo() computes that order
by recursively splitting the cluster at its global minimum cut.

The min-cut primitive is the deterministic Stoer-Wagner scheme: repeated
maximum-adjacency phases on a contracted graph. Determinism rules: phases
start from the smallest GPU id present, adjacency ties pick the smallest id,
and the first minimum cut-of-the-phase found is kept. The side of the cut
containing the smallest GPU id becomes the low-rank side of the recursion.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .model import ClusterGraph, ValidationError


@dataclass(frozen=True)
class DeviceOrdering:
    """A permutation v_1..v_V of the cluster's GPUs with its rank map."""
    order: Tuple[int, ...]
    rank: Dict[int, int]


def global_min_cut(cluster: ClusterGraph,
                   vertices: Optional[Sequence[int]] = None,
                   ) -> Tuple[Tuple[int, ...], Tuple[int, ...], float]:
    """Global minimum 2-cut of the subgraph induced by `vertices`.

    Returns (side_a, side_b, cut_weight) with side_a the side containing the
    smallest GPU id, both sides sorted. Pairs without a bandwidth entry count
    as weight 0 (cannot arise for validated clusters, which are complete).
    """
    verts = sorted(vertices) if vertices is not None else sorted(cluster.gpu_ids)
    if len(verts) < 2:
        raise ValidationError("min cut needs at least 2 vertices")

    def w(a: int, b: int) -> float:
        key = (a, b) if a < b else (b, a)
        return cluster.bandwidth.get(key, 0.0)

    # Contracted graph: supernode id = smallest member GPU id.
    members: Dict[int, List[int]] = {v: [v] for v in verts}
    weight: Dict[Tuple[int, int], float] = {}
    for i, a in enumerate(verts):
        for b in verts[i + 1:]:
            weight[(a, b)] = w(a, b)

    def wt(a: int, b: int) -> float:
        return weight.get((a, b) if a < b else (b, a), 0.0)

    best_side: List[int] = []
    best_weight = float("inf")
    while len(members) > 1:
        active = sorted(members)
        start = active[0]
        added = [start]
        adj = {v: wt(start, v) for v in active[1:]}
        while adj:
            # Maximum adjacency next; ties broken by smallest id.
            next_v = min(adj, key=lambda v: (-adj[v], v))
            cut_of_phase = adj.pop(next_v)
            added.append(next_v)
            for u in adj:
                adj[u] += wt(next_v, u)
        t = added[-1]
        s = added[-2]
        if cut_of_phase < best_weight:
            best_weight = cut_of_phase
            best_side = list(members[t])
        # Contract t into s; merged supernode keeps the smaller id.
        merged = min(s, t)
        other = max(s, t)
        for u in sorted(members):
            if u in (s, t):
                continue
            weight[(min(merged, u), max(merged, u))] = wt(s, u) + wt(t, u)
        members[merged] = sorted(members[s] + members[t])
        del members[other]

    low = min(verts)
    side = sorted(best_side)
    rest = sorted(v for v in verts if v not in set(side))
    if low in set(side):
        return tuple(side), tuple(rest), best_weight
    return tuple(rest), tuple(side), best_weight


def rdo(cluster: ClusterGraph) -> DeviceOrdering:
    """Order the cluster's GPUs by recursive min-cut splitting.

    A single vertex takes the lowest free rank; otherwise the min-cut's two
    sides take the contiguous low and high rank intervals respectively and
    recurse.
    """
    rank: Dict[int, int] = {}

    def recurse(verts: Tuple[int, ...], rank_low: int) -> None:
        if len(verts) == 1:
            rank[verts[0]] = rank_low
            return
        side_a, side_b, _ = global_min_cut(cluster, verts)
        recurse(side_a, rank_low)
        recurse(side_b, rank_low + len(side_a))

    recurse(tuple(sorted(cluster.gpu_ids)), 1)
    order = tuple(sorted(cluster.gpu_ids, key=lambda v: rank[v]))
    return DeviceOrdering(order=order, rank=rank)
