"""
Closed-form cost formulas.

Two families of quantities live here:

- Planning costs, used by the partitioner and the bound formulas: per-stage
  compute time under replication (sum/k), ring AllReduce time, inter-stage
  communication time, cycle time C, workload W, and the bound quantities
  Gamma and Phi.

- Simulated block durations, used by every scheduler: the wall-clock time one
  block execution occupies its resource. For a stage replicated k ways the
  simulator divides by k twice: each microbatch is split k ways across the
  replicas, and the replicas also drain the stream of queued microbatches in
  parallel; folding both speedups into the service time keeps the stage a
  single serial timeline, which is what the event loop schedules. Channel
  transfers and AllReduce are not affected (their formulas already account
  for replica counts).
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .model import (
    BWD,
    COMM_BWD,
    COMM_FWD,
    FWD,
    FWDBWD,
    Block,
    ClusterGraph,
    ModelProfile,
    Plan,
    ValidationError,
)


def _check_interval(profile: ModelProfile, layer_start: int, layer_end: int) -> None:
    if not (1 <= layer_start <= layer_end <= profile.num_layers):
        raise ValidationError(
            f"invalid layer interval [{layer_start},{layer_end}] for L={profile.num_layers}")


def stage_fwd_time(profile: ModelProfile, layer_start: int, layer_end: int, k: int) -> float:
    """Per-microbatch forward time of layers [layer_start, layer_end] on k replicas."""
    _check_interval(profile, layer_start, layer_end)
    return sum(l.fwd_time for l in profile.layers[layer_start - 1:layer_end]) / k


def stage_bwd_time(profile: ModelProfile, layer_start: int, layer_end: int, k: int) -> float:
    """Per-microbatch backward time of layers [layer_start, layer_end] on k replicas."""
    _check_interval(profile, layer_start, layer_end)
    return sum(l.bwd_time for l in profile.layers[layer_start - 1:layer_end]) / k


def stage_compute_time(profile: ModelProfile, layer_start: int, layer_end: int, k: int) -> float:
    """Per-microbatch forward+backward time of a stage on k replicas."""
    if k < 1:
        raise ValidationError("replication factor must be >= 1")
    return (stage_fwd_time(profile, layer_start, layer_end, k)
            + stage_bwd_time(profile, layer_start, layer_end, k))


def min_pairwise_bandwidth(cluster: ClusterGraph, devices: Sequence[int]) -> float:
    """Minimum bandwidth over all pairs within a device set."""
    devs = list(devices)
    best = float("inf")
    for i, a in enumerate(devs):
        for b in devs[i + 1:]:
            best = min(best, cluster.bw(a, b))
    return best


def min_cross_bandwidth(cluster: ClusterGraph, left: Sequence[int], right: Sequence[int]) -> float:
    """Minimum bandwidth over all pairs crossing two device sets."""
    best = float("inf")
    for a in left:
        for b in right:
            best = min(best, cluster.bw(a, b))
    return best


def allreduce_time(profile: ModelProfile, layer_start: int, layer_end: int,
                   devices: Sequence[int], cluster: ClusterGraph) -> float:
    """Ring AllReduce time for the stage's parameters over its replica set.

    2(k-1) * sum(alpha) / (k * min pairwise bandwidth); 0 for k = 1.
    """
    _check_interval(profile, layer_start, layer_end)
    if not devices:
        raise ValidationError("empty device set")
    for d in devices:
        if d not in cluster.gpu_ids:
            raise ValidationError(f"unknown device {d}")
    k = len(devices)
    if k == 1:
        return 0.0
    total_param = sum(l.param_bytes for l in profile.layers[layer_start - 1:layer_end])
    return 2.0 * (k - 1) * total_param / (k * min_pairwise_bandwidth(cluster, devices))


def interstage_comm_time(profile: ModelProfile, boundary_layer: int,
                         devices_left: Sequence[int], devices_right: Sequence[int],
                         cluster: ClusterGraph) -> Tuple[float, float]:
    """(c_fwd, c_bwd) across the channel between the stage ending at
    boundary_layer and the stage starting at boundary_layer+1.

    The transferred microbatch data is spread over all r'*r cross links, so
    each direction takes bytes / (r' * r * min cross-pair bandwidth).
    """
    if not (1 <= boundary_layer <= profile.num_layers - 1):
        raise ValidationError(f"boundary layer {boundary_layer} out of range")
    if not devices_left or not devices_right:
        raise ValidationError("empty device set")
    if set(devices_left) & set(devices_right):
        raise ValidationError("overlapping device sets")
    for d in list(devices_left) + list(devices_right):
        if d not in cluster.gpu_ids:
            raise ValidationError(f"unknown device {d}")
    edge = profile.edge(boundary_layer)
    denom = len(devices_left) * len(devices_right) * min_cross_bandwidth(
        cluster, devices_left, devices_right)
    return edge.fwd_bytes / denom, edge.bwd_bytes / denom


def gamma(profile: ModelProfile, cluster: ClusterGraph) -> float:
    """Ideal per-GPU compute share: sum of all layer times / V."""
    return sum(l.fwd_time + l.bwd_time for l in profile.layers) / cluster.num_gpus


def phi(profile: ModelProfile, cluster: ClusterGraph) -> float:
    """Bandwidth-heterogeneity penalty.

    max(p_max*b_max, d_max) / Gamma * (1/b_min - 1/b_max); 0 on uniform
    clusters. Plan-independent.
    """
    p_max = max(l.fwd_time + l.bwd_time for l in profile.layers)
    d_max = max((e.fwd_bytes + e.bwd_bytes for e in profile.edges), default=0.0)
    b_min, b_max = cluster.b_min, cluster.b_max
    if cluster.num_gpus == 1 or b_min == b_max:
        return 0.0
    return max(p_max * b_max, d_max) / gamma(profile, cluster) * (1.0 / b_min - 1.0 / b_max)


@dataclass(frozen=True)
class CostSummary:
    """Per-plan cost totals plus the plan-independent bound quantities.

    cycle_time C = max per-microbatch time of any stage or channel, AllReduce
    excluded. workload W = max over unreplicated stages of M*compute,
    replicated stages of M*compute + AllReduce, channels of M*(c_fwd+c_bwd).
    """
    per_stage_compute: Dict[int, float]
    per_channel_comm: Dict[int, float]
    allreduce: Dict[int, float]
    cycle_time: float
    workload: float
    gamma: float
    phi: float


def channel_times(plan: Plan, profile: ModelProfile, cluster: ClusterGraph) -> Dict[int, Tuple[float, float]]:
    """(c_fwd, c_bwd) for each channel n between stages n and n+1."""
    out: Dict[int, Tuple[float, float]] = {}
    for n in range(1, plan.num_stages):
        left, right = plan.stages[n - 1], plan.stages[n]
        out[n] = interstage_comm_time(
            profile, left.layer_end, left.devices, right.devices, cluster)
    return out


def cost_summary(plan: Plan, profile: ModelProfile, cluster: ClusterGraph) -> CostSummary:
    """Evaluate every planning-cost quantity for a validated plan."""
    M = plan.microbatch_count
    per_stage: Dict[int, float] = {}
    ar: Dict[int, float] = {}
    for s in plan.stages:
        per_stage[s.index] = stage_compute_time(
            profile, s.layer_start, s.layer_end, s.replication)
        if s.replicated:
            ar[s.index] = allreduce_time(
                profile, s.layer_start, s.layer_end, s.devices, cluster)
    per_chan_pair = channel_times(plan, profile, cluster)
    per_chan = {n: cf + cb for n, (cf, cb) in per_chan_pair.items()}

    cycle = max(list(per_stage.values()) + list(per_chan.values()))
    w_terms: List[float] = []
    for s in plan.stages:
        term = M * per_stage[s.index]
        if s.replicated:
            term += ar[s.index]
        w_terms.append(term)
    w_terms.extend(M * c for c in per_chan.values())
    return CostSummary(
        per_stage_compute=per_stage,
        per_channel_comm=per_chan,
        allreduce=ar,
        cycle_time=cycle,
        workload=max(w_terms),
        gamma=gamma(profile, cluster),
        phi=phi(profile, cluster),
    )


def block_duration(block: Block, plan: Plan, profile: ModelProfile,
                   cluster: ClusterGraph) -> float:
    """Simulated wall-clock duration of one execution of a block.

    Compute blocks on a k-replicated stage run at 1/k^2 of the profiled
    layer-time sum (see the module docstring); channel transfers take the
    inter-stage communication time of their direction.
    """
    if block.is_compute:
        s = plan.stages[block.stage - 1]
        k = s.replication
        if block.kind == FWD:
            return stage_fwd_time(profile, s.layer_start, s.layer_end, k) / k
        if block.kind == BWD:
            return stage_bwd_time(profile, s.layer_start, s.layer_end, k) / k
        return stage_compute_time(profile, s.layer_start, s.layer_end, k) / k
    left, right = plan.stages[block.channel - 1], plan.stages[block.channel]
    c_fwd, c_bwd = interstage_comm_time(
        profile, left.layer_end, left.devices, right.devices, cluster)
    return c_fwd if block.kind == COMM_FWD else c_bwd


def block_durations(blocks: Sequence[Block], plan: Plan, profile: ModelProfile,
                    cluster: ClusterGraph) -> Dict[int, float]:
    """Duration of every block in a block list, keyed by position."""
    return {b.position: block_duration(b, plan, profile, cluster) for b in blocks}
