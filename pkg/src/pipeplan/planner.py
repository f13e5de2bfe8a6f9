"""
End-to-end planner: device ordering, stage-count sweep, simulated pick.

For each feasible stage count xi the partitioner proposes the plan with the
lowest bottleneck workload W; the event simulator then scores every proposal
and the plan with the smallest simulated makespan wins. W alone over-rewards
deep pipelines (more devices per bottleneck) while the simulated makespan
also pays the pipeline fill/drain, so the two disagree and the sweep keeps
both columns.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from .cost import phi
from .model import (
    ClusterGraph,
    ModelProfile,
    Plan,
    Schedule,
    validate_cluster,
    validate_profile,
)
from .ordering import rdo
from .partition import PartitionSolver
from .scheduler import lemma1_bound, simulate_pe


@dataclass(frozen=True)
class SweepEntry:
    """One stage count's outcome: workload, simulated makespan, bound."""
    stage_count: int
    feasible: bool
    workload: float
    makespan: Optional[float]
    bound: Optional[float]


@dataclass(frozen=True)
class SppResult:
    """The selected plan with its schedule and the full sweep table."""
    plan: Plan
    schedule: Schedule
    makespan: float
    sweep: Tuple[SweepEntry, ...]
    device_order: Tuple[int, ...]
    theorem_factor: float
    phi: float


def bound_factor(num_gpus: int, microbatch_count: int) -> float:
    """Approximation factor (2 + (4V-4)/M) of the end-to-end guarantee."""
    return 2.0 + (4.0 * num_gpus - 4.0) / microbatch_count


def spp(profile: ModelProfile, cluster: ClusterGraph,
        microbatch_count: int) -> SppResult:
    """Plan, simulate, and select over all stage counts 1..V."""
    validate_profile(profile)
    validate_cluster(cluster)
    ordering = rdo(cluster)
    solver = PartitionSolver(profile, cluster, ordering, microbatch_count)
    entries = []
    best: Optional[Tuple[Plan, Schedule]] = None
    for xi in range(1, cluster.num_gpus + 1):
        w, plan = solver.best_partition(xi)
        if plan is None:
            entries.append(SweepEntry(stage_count=xi, feasible=False,
                                      workload=math.inf, makespan=None, bound=None))
            continue
        sched = simulate_pe(plan, profile, cluster)
        entries.append(SweepEntry(stage_count=xi, feasible=True, workload=w,
                                  makespan=sched.makespan,
                                  bound=lemma1_bound(plan, profile, cluster)))
        if best is None or sched.makespan < best[1].makespan:
            best = (plan, sched)
    assert best is not None  # xi = 1 is always feasible
    p = phi(profile, cluster)
    return SppResult(
        plan=best[0],
        schedule=best[1],
        makespan=best[1].makespan,
        sweep=tuple(entries),
        device_order=ordering.order,
        theorem_factor=bound_factor(cluster.num_gpus, microbatch_count) * (1.0 + p),
        phi=p,
    )


@dataclass(frozen=True)
class BoundReport:
    """Achieved makespan against the guaranteed factor over a reference."""
    factor: float
    phi: float
    makespan: float
    reference: Optional[float]
    ratio: Optional[float]
    within_bound: Optional[bool]


def theorem1_report(profile: ModelProfile, cluster: ClusterGraph,
                    microbatch_count: int, makespan: float,
                    reference: Optional[float] = None) -> BoundReport:
    """Compare a makespan against factor * reference (reference = optimum).

    With no reference only the factor and phi are reported; ratio and
    within_bound are None. A zero reference with zero makespan counts as
    within bound.
    """
    p = phi(profile, cluster)
    factor = bound_factor(cluster.num_gpus, microbatch_count) * (1.0 + p)
    if reference is None:
        return BoundReport(factor=factor, phi=p, makespan=makespan,
                           reference=None, ratio=None, within_bound=None)
    if reference == 0.0:
        return BoundReport(factor=factor, phi=p, makespan=makespan,
                           reference=reference, ratio=None,
                           within_bound=makespan == 0.0)
    ratio = makespan / reference
    within = ratio <= factor * (1.0 + 1e-9)
    return BoundReport(factor=factor, phi=p, makespan=makespan,
                       reference=reference, ratio=ratio, within_bound=within)
