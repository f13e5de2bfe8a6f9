"""
Workload-minimizing partition and replication over an ordered device chain.

The planner cuts the layer chain into xi contiguous stages and assigns each
stage a contiguous slice of the device order; a stage on r devices replicates
r ways. The per-plan objective W is the bottleneck workload: the largest of
every stage's compute term (M * stage time / r, plus gradient sync time when
r > 1) and every boundary's channel term (M * boundary bytes over the
slowest link between the adjacent slices, scaled down by r' * r).

W(l, xi, r, i): best bottleneck over plans that place layers 1..l on devices
v_1..v_i using xi stages whose last stage spans r devices. Recurrence over
the previous stage's end layer l' and width r'; infeasible states are +inf.
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from .cost import allreduce_time, min_cross_bandwidth
from .model import ClusterGraph, ModelProfile, Plan, Stage, ValidationError
from .ordering import DeviceOrdering

INF = math.inf

# A stage fragment: (layer_start, layer_end, devices).
Fragment = Tuple[int, int, Tuple[int, ...]]


@dataclass(frozen=True)
class PrmResult:
    """One DP state's value and, when feasible, its stage fragments."""
    workload: float
    stages: Optional[Tuple[Fragment, ...]]

    @property
    def feasible(self) -> bool:
        return self.stages is not None


class PartitionSolver:
    """Memoized solver for W over one profile, cluster and device order.

    With allow_replication=False every stage is forced onto one device, so
    only xi == V states are feasible; that restricted mode is the
    no-replication baseline planner.
    """

    def __init__(self, profile: ModelProfile, cluster: ClusterGraph,
                 ordering: DeviceOrdering, microbatch_count: int,
                 allow_replication: bool = True):
        if microbatch_count < 1:
            raise ValidationError("microbatch count must be positive")
        self.profile = profile
        self.cluster = cluster
        self.devices = ordering.order
        self.microbatches = microbatch_count
        self.allow_replication = allow_replication
        # prefix[l] = sum over layers 1..l of (fwd + bwd) time.
        self._prefix = [0.0]
        for layer in profile.layers:
            self._prefix.append(self._prefix[-1] + layer.fwd_time + layer.bwd_time)
        self._memo: Dict[Tuple[int, int, int, int], PrmResult] = {}
        self._sync_cache: Dict[Tuple[int, int, int, int], float] = {}
        self._cross_cache: Dict[Tuple[int, int, int], float] = {}

    def _compute_span(self, lo: int, hi: int) -> float:
        return self._prefix[hi] - self._prefix[lo - 1]

    def _sync(self, layer_start: int, layer_end: int, dev_lo: int, dev_hi: int) -> float:
        # Gradient sync time for layers layer_start..layer_end on the device
        # slice v_{dev_lo}..v_{dev_hi} (1-based, inclusive); 0 when unreplicated.
        key = (layer_start, layer_end, dev_lo, dev_hi)
        got = self._sync_cache.get(key)
        if got is None:
            devices = self.devices[dev_lo - 1:dev_hi]
            got = allreduce_time(self.profile, layer_start, layer_end,
                                 devices, self.cluster)
            self._sync_cache[key] = got
        return got

    def _cross_bw(self, prev_width: int, width: int, dev_hi: int) -> float:
        # Slowest link between the previous slice (width prev_width) and the
        # last slice (width width) when the last slice ends at v_{dev_hi}.
        key = (prev_width, width, dev_hi)
        got = self._cross_cache.get(key)
        if got is None:
            lo = dev_hi - width + 1
            left = self.devices[lo - 1 - prev_width:lo - 1]
            right = self.devices[lo - 1:dev_hi]
            got = min_cross_bandwidth(self.cluster, left, right)
            self._cross_cache[key] = got
        return got

    def solve(self, num_layers: int, num_stages: int, last_width: int,
              num_devices: int) -> PrmResult:
        """W(l, xi, r, i) with the realizing fragments when finite."""
        l, xi, r, i = num_layers, num_stages, last_width, num_devices
        if min(l, xi, r, i) < 1:
            raise ValidationError("all DP arguments must be positive")
        if l > self.profile.num_layers or i > len(self.devices):
            raise ValidationError("DP arguments exceed the instance size")
        if not self.allow_replication and r != 1:
            return PrmResult(INF, None)
        key = (l, xi, r, i)
        got = self._memo.get(key)
        if got is not None:
            return got
        result = self._solve_uncached(l, xi, r, i)
        self._memo[key] = result
        return result

    def _solve_uncached(self, l: int, xi: int, r: int, i: int) -> PrmResult:
        M = self.microbatches
        if l < xi or i < xi:
            return PrmResult(INF, None)
        if xi == 1 and r == i:
            w = M * self._compute_span(1, l) / i + self._sync(1, l, 1, i)
            return PrmResult(w, ((1, l, self.devices[:i]),))
        if xi == 1 or r == i:
            return PrmResult(INF, None)

        best = INF
        best_stages: Optional[Tuple[Fragment, ...]] = None
        widths = range(1, i - r + 1) if self.allow_replication else (1,)
        for l_prev in range(xi - 1, l):
            stage_w = M * self._compute_span(l_prev + 1, l) / r
            if r > 1:
                stage_w += self._sync(l_prev + 1, l, i - r + 1, i)
            edge = self.profile.edge(l_prev)
            payload = edge.fwd_bytes + edge.bwd_bytes
            for r_prev in widths:
                sub = self.solve(l_prev, xi - 1, r_prev, i - r)
                if sub.stages is None:
                    continue
                bw = self._cross_bw(r_prev, r, i)
                channel_w = M * payload / (r_prev * r * bw)
                w = max(sub.workload, channel_w, stage_w)
                if best > w:
                    best = w
                    best_stages = sub.stages + ((l_prev + 1, l, self.devices[i - r:i]),)
        return PrmResult(best, best_stages)

    def best_partition(self, num_stages: int) -> Tuple[float, Optional[Plan]]:
        """Best W over last-stage widths for a fixed stage count."""
        L = self.profile.num_layers
        V = len(self.devices)
        if not 1 <= num_stages <= V:
            raise ValidationError("stage count must be in 1..V")
        best = INF
        best_stages: Optional[Tuple[Fragment, ...]] = None
        for r in range(1, V + 1):
            got = self.solve(L, num_stages, r, V)
            if got.stages is not None and best > got.workload:
                best = got.workload
                best_stages = got.stages
        if best_stages is None:
            return INF, None
        stages = tuple(Stage(index=n + 1, layer_start=frag[0], layer_end=frag[1],
                             devices=frag[2])
                       for n, frag in enumerate(best_stages))
        return best, Plan(stages=stages, microbatch_count=self.microbatches)


def prm(profile: ModelProfile, cluster: ClusterGraph, ordering: DeviceOrdering,
        microbatch_count: int, num_layers: int, num_stages: int,
        last_width: int, num_devices: int) -> PrmResult:
    """One-shot W(l, xi, r, i) evaluation (fresh memo)."""
    solver = PartitionSolver(profile, cluster, ordering, microbatch_count)
    return solver.solve(num_layers, num_stages, last_width, num_devices)


def best_partition(profile: ModelProfile, cluster: ClusterGraph,
                   ordering: DeviceOrdering, microbatch_count: int,
                   num_stages: int) -> Tuple[float, Optional[Plan]]:
    """Best plan with exactly `num_stages` stages over the full cluster."""
    solver = PartitionSolver(profile, cluster, ordering, microbatch_count)
    return solver.best_partition(num_stages)
