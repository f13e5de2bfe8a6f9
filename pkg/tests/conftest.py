"""Shared test instances.

The "tiny" case (two equal layers, two GPUs on one 1 GB/s link, two
microbatches) has fully hand-checkable numbers and is pinned all over the
suite. The generators produce the randomized envelope and the exhaustive
small grid used by the property and acceptance tests.
"""

import itertools
import math
import random
from typing import Iterator, Tuple

import pytest

from pipeplan import (
    ClusterGraph,
    InterLayerEdge,
    LayerProfile,
    ModelProfile,
    Plan,
    Stage,
    make_cluster,
)

TINY_M = 2


def tiny_profile() -> ModelProfile:
    layers = (LayerProfile(id=1, fwd_time=1.0, bwd_time=2.0, param_bytes=1e9),
              LayerProfile(id=2, fwd_time=1.0, bwd_time=2.0, param_bytes=1e9))
    edges = (InterLayerEdge(src=1, dst=2, fwd_bytes=1e9, bwd_bytes=1e9),)
    return ModelProfile(name="tiny", microbatch_size=1, layers=layers, edges=edges)


def tiny_cluster() -> ClusterGraph:
    return make_cluster([1, 2], [(1, 2, 1e9)])


def split_plan(microbatches: int = TINY_M) -> Plan:
    """One layer per GPU, no replication."""
    return Plan(stages=(Stage(index=1, layer_start=1, layer_end=1, devices=(1,)),
                        Stage(index=2, layer_start=2, layer_end=2, devices=(2,))),
                microbatch_count=microbatches)


def replicated_plan(microbatches: int = TINY_M) -> Plan:
    """Both layers in one stage replicated across both GPUs."""
    return Plan(stages=(Stage(index=1, layer_start=1, layer_end=2, devices=(1, 2)),),
                microbatch_count=microbatches)


@pytest.fixture
def tiny():
    return tiny_profile(), tiny_cluster(), TINY_M


def random_instance(rng: random.Random) -> Tuple[ModelProfile, ClusterGraph, int]:
    """One random chain / cluster / microbatch-count triple.

    Envelope: up to 10 layers, 6 GPUs, 16 microbatches; times, byte counts,
    and bandwidths drawn log-uniform over several orders of magnitude.
    """
    L = rng.randint(1, 10)
    V = rng.randint(1, 6)
    M = rng.randint(1, 16)

    def logu(lo: float, hi: float) -> float:
        return math.exp(rng.uniform(math.log(lo), math.log(hi)))

    layers = tuple(LayerProfile(id=i, fwd_time=logu(1e-3, 1.0),
                                bwd_time=logu(1e-3, 2.0),
                                param_bytes=logu(1e6, 1e10))
                   for i in range(1, L + 1))
    edges = tuple(InterLayerEdge(src=i, dst=i + 1, fwd_bytes=logu(1e5, 1e9),
                                 bwd_bytes=logu(1e5, 1e9))
                  for i in range(1, L))
    profile = ModelProfile(name=f"rand{L}x{V}", microbatch_size=1,
                           layers=layers, edges=edges)
    ids = list(range(1, V + 1))
    links = [(a, b, logu(1e8, 1e11)) for i, a in enumerate(ids) for b in ids[i + 1:]]
    return profile, make_cluster(ids, links), M


def grid_instances() -> Iterator[Tuple[ModelProfile, ClusterGraph, int]]:
    """Exhaustive small grid: 1800 (profile, cluster, M) combinations.

    Every chain length 1..4 in a uniform and a skewed flavor, every cluster
    size 1..4 with each link set to one of two bandwidth levels, every
    microbatch count 1..3.
    """
    levels = (1e9, 4e9)
    for L in range(1, 5):
        for pattern in ("uniform", "skewed"):
            if pattern == "uniform":
                layers = tuple(LayerProfile(id=i, fwd_time=1.0, bwd_time=1.0,
                                            param_bytes=2e9)
                               for i in range(1, L + 1))
                edges = tuple(InterLayerEdge(src=i, dst=i + 1, fwd_bytes=1e9,
                                             bwd_bytes=1e9)
                              for i in range(1, L))
            else:
                layers = tuple(LayerProfile(id=i, fwd_time=0.5 * i, bwd_time=1.0 * i,
                                            param_bytes=i * 1e9)
                               for i in range(1, L + 1))
                edges = tuple(InterLayerEdge(src=i, dst=i + 1,
                                             fwd_bytes=(5e8 if i % 2 else 2e9),
                                             bwd_bytes=(2e9 if i % 2 else 5e8))
                              for i in range(1, L))
            profile = ModelProfile(name=f"{pattern}{L}", microbatch_size=1,
                                   layers=layers, edges=edges)
            for V in range(1, 5):
                ids = list(range(1, V + 1))
                pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1:]]
                for combo in itertools.product(levels, repeat=len(pairs)):
                    cluster = make_cluster(
                        ids, [(a, b, bw) for (a, b), bw in zip(pairs, combo)])
                    for M in (1, 2, 3):
                        yield profile, cluster, M


def trend_instance() -> Tuple[ModelProfile, ClusterGraph, int]:
    """24 uniform layers over 8 uniformly linked GPUs, M=32.

    Heavy parameter tensors (8 GB per layer) make wide replication pay for
    its AllReduce, so the best simulated stage count sits strictly between
    1 and the workload optimum.
    """
    layers = tuple(LayerProfile(id=i, fwd_time=1.0, bwd_time=1.0, param_bytes=8e9)
                   for i in range(1, 25))
    edges = tuple(InterLayerEdge(src=i, dst=i + 1, fwd_bytes=1e9, bwd_bytes=1e9)
                  for i in range(1, 24))
    profile = ModelProfile(name="trend24", microbatch_size=1,
                           layers=layers, edges=edges)
    ids = list(range(1, 9))
    cluster = make_cluster(ids, [(a, b, 4e9)
                                 for i, a in enumerate(ids) for b in ids[i + 1:]])
    return profile, cluster, 32


def random_weighted_clique(rng: random.Random) -> ClusterGraph:
    """Complete graph on 2..8 vertices with log-uniform link weights."""
    V = rng.randint(2, 8)
    ids = list(range(1, V + 1))

    def logu(lo: float, hi: float) -> float:
        return math.exp(rng.uniform(math.log(lo), math.log(hi)))

    return make_cluster(ids, [(a, b, logu(1e8, 1e11))
                              for i, a in enumerate(ids) for b in ids[i + 1:]])


def exhaustive_min_cut(cluster: ClusterGraph) -> float:
    """Minimum 2-partition cut weight by enumerating all splits."""
    ids = sorted(cluster.gpu_ids)
    best = math.inf
    # Fixing ids[0] on one side halves the enumeration without losing cuts.
    rest = ids[1:]
    for r in range(len(rest) + 1):
        for side in itertools.combinations(rest, r):
            a = {ids[0], *side}
            b = [v for v in ids if v not in a]
            if not b:
                continue
            w = sum(cluster.bandwidth.get((min(x, y), max(x, y)), 0.0)
                    for x in a for y in b)
            best = min(best, w)
    return best
