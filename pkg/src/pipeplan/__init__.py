"""
Planner and discrete-event simulator for synchronous pipeline-parallel
training on bandwidth-heterogeneous GPU clusters.

Pipeline: profile + cluster -> device ordering (recursive min cut) ->
workload-minimizing partition/replication per stage count -> event-driven
schedule simulation -> stage-count selection by simulated makespan, with
closed-form bounds and brute-force oracles for small instances.
"""

from .baselines import (
    dataparallel_plan,
    gpipe_plan,
    gpipe_schedule,
    noreplication_plan,
)
from .cost import (
    CostSummary,
    allreduce_time,
    block_duration,
    block_durations,
    channel_times,
    cost_summary,
    gamma,
    interstage_comm_time,
    min_cross_bandwidth,
    min_pairwise_bandwidth,
    phi,
    stage_bwd_time,
    stage_compute_time,
    stage_fwd_time,
)
from .fileio import (
    Trace,
    TraceRow,
    format_number,
    load_cluster,
    load_plan,
    load_profile,
    parse_trace,
    read_trace,
    save_cluster,
    save_plan,
    save_profile,
    trace_to_schedule,
    write_trace,
)
from .gantt import render_trace_svg
from .model import (
    AllReduceWindow,
    Block,
    ClusterGraph,
    InterLayerEdge,
    LayerProfile,
    ModelProfile,
    Plan,
    Schedule,
    ScheduleEvent,
    Stage,
    ValidationError,
    make_cluster,
    plan_uses_all_gpus,
    validate_cluster,
    validate_plan,
    validate_profile,
)
from .oracle import (
    BudgetExceeded,
    OracleError,
    OracleLimits,
    TStarResult,
    WStarResult,
    brute_force_t_star,
    brute_force_w_star,
    enumerate_plans,
    optimal_schedule,
    plan_count,
)
from .ordering import DeviceOrdering, global_min_cut, rdo
from .partition import PartitionSolver, PrmResult, best_partition, prm
from .planner import BoundReport, SppResult, SweepEntry, bound_factor, spp, theorem1_report
from .scheduler import (
    ExecutionOrder,
    SchedulingError,
    build_block_list,
    compute_execution_order,
    lemma1_bound,
    simulate_cycle_schedule,
    simulate_pe,
    simulate_with_order,
    validate_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "AllReduceWindow",
    "Block",
    "BoundReport",
    "BudgetExceeded",
    "ClusterGraph",
    "CostSummary",
    "DeviceOrdering",
    "ExecutionOrder",
    "InterLayerEdge",
    "LayerProfile",
    "ModelProfile",
    "OracleError",
    "OracleLimits",
    "Plan",
    "PartitionSolver",
    "PrmResult",
    "Schedule",
    "ScheduleEvent",
    "SchedulingError",
    "SppResult",
    "Stage",
    "SweepEntry",
    "TStarResult",
    "Trace",
    "TraceRow",
    "ValidationError",
    "WStarResult",
    "allreduce_time",
    "best_partition",
    "block_duration",
    "block_durations",
    "bound_factor",
    "brute_force_t_star",
    "brute_force_w_star",
    "build_block_list",
    "channel_times",
    "compute_execution_order",
    "cost_summary",
    "dataparallel_plan",
    "enumerate_plans",
    "format_number",
    "gamma",
    "global_min_cut",
    "gpipe_plan",
    "gpipe_schedule",
    "interstage_comm_time",
    "lemma1_bound",
    "load_cluster",
    "load_plan",
    "load_profile",
    "make_cluster",
    "min_cross_bandwidth",
    "min_pairwise_bandwidth",
    "noreplication_plan",
    "optimal_schedule",
    "parse_trace",
    "phi",
    "plan_count",
    "plan_uses_all_gpus",
    "prm",
    "rdo",
    "read_trace",
    "render_trace_svg",
    "save_cluster",
    "save_plan",
    "save_profile",
    "simulate_cycle_schedule",
    "simulate_pe",
    "simulate_with_order",
    "spp",
    "theorem1_report",
    "trace_to_schedule",
    "validate_cluster",
    "validate_plan",
    "validate_profile",
    "validate_schedule",
    "write_trace",
]
