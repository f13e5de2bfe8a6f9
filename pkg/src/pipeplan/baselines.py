"""
Baseline planners and the flush-style schedule they are compared under.

- gpipe_plan / gpipe_schedule: even layer split onto one device per stage,
  run with a full forward/backward barrier per iteration (all forward work
  for all microbatches finishes before any backward work starts).
- dataparallel_plan: one stage replicated over every GPU.
- noreplication_plan: workload-optimal partition with replication disabled,
  which forces exactly one stage per device.
"""

import math
from typing import Dict, List, Optional, Tuple

from .model import (
    ClusterGraph,
    ModelProfile,
    Plan,
    Schedule,
    Stage,
    ValidationError,
)
from .ordering import DeviceOrdering
from .partition import PartitionSolver
from .scheduler import build_block_list, simulate_with_order


def gpipe_plan(profile: ModelProfile, cluster: ClusterGraph,
               ordering: DeviceOrdering, stage_count: int,
               microbatch_count: int) -> Plan:
    """Even layer split into stage_count stages, one ordered device each.

    Layer counts differ by at most one; longer stages come first. Raises
    ValidationError for stage counts outside 1..min(L, V).
    """
    L = profile.num_layers
    V = cluster.num_gpus
    if not 1 <= stage_count <= min(L, V):
        raise ValidationError(
            f"infeasible stage count {stage_count}: must be in 1..{min(L, V)}")
    base, extra = divmod(L, stage_count)
    stages: List[Stage] = []
    start = 1
    for n in range(stage_count):
        size = base + (1 if n < extra else 0)
        stages.append(Stage(index=n + 1, layer_start=start, layer_end=start + size - 1,
                            devices=(ordering.order[n],)))
        start += size
    return Plan(stages=tuple(stages), microbatch_count=microbatch_count)


def gpipe_schedule(plan: Plan, profile: ModelProfile,
                   cluster: ClusterGraph) -> Schedule:
    """Simulate a plan under the forward/backward barrier discipline.

    Every resource queue runs all forward-side blocks in microbatch order,
    then all backward-side blocks in microbatch order; no backward-side
    block starts until every forward block and forward transfer of the
    iteration has finished. Only unreplicated plans are accepted.
    """
    if any(s.replicated for s in plan.stages):
        raise ValidationError("barrier baseline does not support replicated stages")
    blocks = build_block_list(plan)
    M = plan.microbatch_count
    queues: Dict[str, Tuple[Tuple[int, int], ...]] = {}
    for b in blocks:
        q = queues.setdefault(b.resource, ())
        queues[b.resource] = q + tuple((m, b.position) for m in range(1, M + 1))
    return simulate_with_order(plan, profile, cluster, queues, forward_barrier=True)


def dataparallel_plan(profile: ModelProfile, cluster: ClusterGraph,
                      microbatch_count: int) -> Plan:
    """One stage spanning all layers, replicated over every GPU."""
    stage = Stage(index=1, layer_start=1, layer_end=profile.num_layers,
                  devices=tuple(sorted(cluster.gpu_ids)))
    return Plan(stages=(stage,), microbatch_count=microbatch_count)


def noreplication_plan(profile: ModelProfile, cluster: ClusterGraph,
                       ordering: DeviceOrdering, microbatch_count: int,
                       ) -> Tuple[float, Optional[Plan]]:
    """Best workload plan with every stage on exactly one device.

    One stage per device is forced, so the plan needs L >= V; otherwise
    (inf, None) is returned.
    """
    solver = PartitionSolver(profile, cluster, ordering, microbatch_count,
                             allow_replication=False)
    best_w = math.inf
    best_plan: Optional[Plan] = None
    for xi in range(1, cluster.num_gpus + 1):
        w, plan = solver.best_partition(xi)
        if plan is not None and best_w > w:
            best_w = w
            best_plan = plan
    return best_w, best_plan
