"""
Domain types for pipeline-parallel training plans.

A profiled model is a linear chain of layers with per-microbatch forward and
backward compute times, parameter sizes, and inter-layer activation/gradient
sizes. A cluster is a set of GPUs with pairwise bandwidths. A plan partitions
the layer chain into consecutive stages, replicates each stage over one or
more GPUs, and is executed as a pipeline of M microbatches.

This module holds the types plus the structural validators shared by every
other module. All types are immutable after construction; validators return
the validated object or raise ValidationError naming the first violated
invariant.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple


class ValidationError(ValueError):
    """Structural invariant violation in a profile, cluster, plan, or schedule."""


@dataclass(frozen=True)
class LayerProfile:
    """One model layer: per-microbatch compute times and parameter size."""
    id: int
    fwd_time: float
    bwd_time: float
    param_bytes: float


@dataclass(frozen=True)
class InterLayerEdge:
    """Activation/gradient traffic between consecutive layers l and l+1."""
    src: int
    dst: int
    fwd_bytes: float
    bwd_bytes: float


@dataclass(frozen=True)
class ModelProfile:
    """A profiled layer chain. microbatch_size is carried as metadata only."""
    name: str
    microbatch_size: int
    layers: Tuple[LayerProfile, ...]
    edges: Tuple[InterLayerEdge, ...]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def layer(self, layer_id: int) -> LayerProfile:
        return self.layers[layer_id - 1]

    def edge(self, src: int) -> InterLayerEdge:
        """Edge from layer src to layer src+1."""
        return self.edges[src - 1]


@dataclass(frozen=True)
class ClusterGraph:
    """GPU set with symmetric, complete, strictly positive pairwise bandwidths."""
    gpu_ids: Tuple[int, ...]
    bandwidth: Dict[Tuple[int, int], float] = field(compare=False)

    @property
    def num_gpus(self) -> int:
        return len(self.gpu_ids)

    def bw(self, a: int, b: int) -> float:
        return self.bandwidth[(a, b) if a < b else (b, a)]

    @property
    def b_min(self) -> float:
        return min(self.bandwidth.values()) if self.bandwidth else 0.0

    @property
    def b_max(self) -> float:
        return max(self.bandwidth.values()) if self.bandwidth else 0.0


@dataclass(frozen=True)
class Stage:
    """A consecutive layer interval mapped onto an ordered list of devices."""
    index: int
    layer_start: int
    layer_end: int
    devices: Tuple[int, ...]

    @property
    def replication(self) -> int:
        return len(self.devices)

    @property
    def replicated(self) -> bool:
        return len(self.devices) >= 2


@dataclass(frozen=True)
class Plan:
    """Ordered stages covering layers 1..L plus the microbatch count M."""
    stages: Tuple[Stage, ...]
    microbatch_count: int

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def replicated_stages(self) -> Tuple[Stage, ...]:
        return tuple(s for s in self.stages if s.replicated)

    @property
    def devices_used(self) -> Tuple[int, ...]:
        return tuple(d for s in self.stages for d in s.devices)


# Block kinds. A plan with N stages executes 4N-3 blocks per microbatch in
# dependency order: F_1, X_1, F_2, ..., X_{N-1}, FB_N, Y_{N-1}, B_{N-1},
# ..., Y_1, B_1. The last stage's forward and backward are merged into one
# block (FB). X_n/Y_n share the channel between stages n and n+1.
FWD = "fwd"
BWD = "bwd"
FWDBWD = "fwdbwd"
COMM_FWD = "comm_fwd"
COMM_BWD = "comm_bwd"


@dataclass(frozen=True)
class Block:
    """One schedulable unit: a stage's compute block or a channel transfer.

    position is the 1-based index in the ordered block list J. stage is the
    stage index for compute blocks; channel is the channel index n (between
    stages n and n+1) for communication blocks.
    """
    position: int
    kind: str
    stage: Optional[int] = None
    channel: Optional[int] = None

    @property
    def is_compute(self) -> bool:
        return self.kind in (FWD, BWD, FWDBWD)

    @property
    def resource(self) -> str:
        if self.is_compute:
            return f"stage{self.stage}"
        return f"chan{self.channel}"

    @property
    def label(self) -> str:
        if self.is_compute:
            return f"{self.kind}{self.stage}"
        return f"{self.kind}{self.channel}"


@dataclass(frozen=True)
class ScheduleEvent:
    """One block execution: (resource, microbatch, block label, start, end)."""
    resource: str
    microbatch: int
    block: str
    start: float
    end: float


@dataclass(frozen=True)
class AllReduceWindow:
    """AllReduce of one replicated stage: occupies no schedulable resource."""
    stage: int
    start: float
    end: float


@dataclass(frozen=True)
class Schedule:
    """A complete execution schedule with its makespan.

    makespan = max(latest stage-1 backward completion, latest AllReduce end).
    cycle_count is set only by the cycle scheduler.
    """
    events: Tuple[ScheduleEvent, ...]
    allreduce: Tuple[AllReduceWindow, ...]
    makespan: float
    cycle_count: Optional[int] = None

    @property
    def allreduce_starts(self) -> Dict[int, float]:
        return {w.stage: w.start for w in self.allreduce}


def validate_profile(profile: ModelProfile) -> ModelProfile:
    """Check all layer/edge invariants; return the profile or raise."""
    layers = profile.layers
    if not layers:
        raise ValidationError("profile has no layers")
    ids = [l.id for l in layers]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate layer id in {ids}")
    if ids != list(range(1, len(layers) + 1)):
        raise ValidationError(f"layer ids must be exactly 1..{len(layers)} with no gaps, got {ids}")
    for l in layers:
        if l.fwd_time < 0 or l.bwd_time < 0:
            raise ValidationError(f"negative time on layer {l.id}")
        if l.param_bytes < 0:
            raise ValidationError(f"negative param_bytes on layer {l.id}")
    if not any(l.fwd_time + l.bwd_time > 0 for l in layers):
        raise ValidationError("all layers have zero compute time")
    if len(profile.edges) != len(layers) - 1:
        raise ValidationError(
            f"edge count mismatch: {len(layers)} layers need {len(layers) - 1} edges, got {len(profile.edges)}")
    for pos, e in enumerate(profile.edges, start=1):
        if e.src != pos or e.dst != pos + 1:
            raise ValidationError(f"edge {pos} must connect layers {pos}->{pos + 1}, got {e.src}->{e.dst}")
        if e.fwd_bytes < 0 or e.bwd_bytes < 0:
            raise ValidationError(f"negative byte count on edge {e.src}->{e.dst}")
    if profile.microbatch_size <= 0:
        raise ValidationError("microbatch_size must be positive")
    return profile


def validate_cluster(cluster: ClusterGraph) -> ClusterGraph:
    """Check symmetry, completeness, positivity; return the cluster or raise.

    Completeness is required because every cost formula takes minima over
    pairwise bandwidths between arbitrary device sets.
    """
    ids = cluster.gpu_ids
    if not ids:
        raise ValidationError("cluster has no GPUs")
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate GPU id in {ids}")
    seen = set()
    for (a, b), bw in cluster.bandwidth.items():
        if a not in ids or b not in ids:
            raise ValidationError(f"bandwidth entry ({a},{b}) references unknown GPU")
        if a == b:
            raise ValidationError(f"self-link on GPU {a}")
        key = (a, b) if a < b else (b, a)
        if key in seen and cluster.bandwidth.get(key) != bw:
            raise ValidationError(f"asymmetric bandwidth between {a} and {b}")
        seen.add(key)
        if (b, a) in cluster.bandwidth and cluster.bandwidth[(b, a)] != bw:
            raise ValidationError(f"asymmetric bandwidth between {a} and {b}")
        if bw <= 0:
            raise ValidationError(f"non-positive bandwidth between {a} and {b}")
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if (a, b) not in cluster.bandwidth and (b, a) not in cluster.bandwidth:
                raise ValidationError(f"missing pair ({a},{b}): every GPU pair needs a bandwidth")
    return cluster


def make_cluster(gpu_ids, links) -> ClusterGraph:
    """Build a ClusterGraph from (a, b, bytes_per_s) triples, normalized to
    sorted-pair keys, and validate it."""
    bandwidth: Dict[Tuple[int, int], float] = {}
    for a, b, bw in links:
        key = (a, b) if a < b else (b, a)
        if key in bandwidth and bandwidth[key] != bw:
            raise ValidationError(f"asymmetric bandwidth between {a} and {b}")
        bandwidth[key] = float(bw)
    return validate_cluster(ClusterGraph(gpu_ids=tuple(gpu_ids), bandwidth=bandwidth))


def validate_plan(plan: Plan, profile: ModelProfile, cluster: ClusterGraph) -> Plan:
    """Check interval partition, device disjointness, device existence.

    Plans that leave some cluster GPUs unused are legal inputs (externally
    written plan files); planner-produced plans always use every GPU.
    """
    if plan.microbatch_count < 1:
        raise ValidationError("microbatch_count must be >= 1")
    if not plan.stages:
        raise ValidationError("plan has no stages")
    expected_start = 1
    for pos, s in enumerate(plan.stages, start=1):
        if s.index != pos:
            raise ValidationError(f"stage at position {pos} carries index {s.index}")
        if s.layer_start > s.layer_end:
            raise ValidationError(f"stage {pos} has empty layer interval [{s.layer_start},{s.layer_end}]")
        if s.layer_start != expected_start:
            if s.layer_start < expected_start:
                raise ValidationError(f"layer overlap at stage {pos}")
            raise ValidationError(f"layer gap before stage {pos}")
        expected_start = s.layer_end + 1
        if not s.devices:
            raise ValidationError(f"stage {pos} has no devices")
    if expected_start != profile.num_layers + 1:
        raise ValidationError(
            f"stages cover layers 1..{expected_start - 1}, profile has {profile.num_layers}")
    used: List[int] = []
    for s in plan.stages:
        for d in s.devices:
            if d not in cluster.gpu_ids:
                raise ValidationError(f"unknown device {d} in stage {s.index}")
            if d in used:
                raise ValidationError(f"device reused across stages: {d}")
            used.append(d)
    return plan


def plan_uses_all_gpus(plan: Plan, cluster: ClusterGraph) -> bool:
    """Whether the plan places something on every cluster GPU (the planner
    always does; external plan files may not)."""
    return set(plan.devices_used) == set(cluster.gpu_ids)
