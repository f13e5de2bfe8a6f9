"""
Exhaustive reference computations for small instances.

Two oracles over the full plan space (every stage count, every contiguous
layer split, every ordered assignment of all GPUs to stages):

- brute_force_w_star: the minimum bottleneck workload W of any plan, by
  direct evaluation.
- brute_force_t_star: the minimum achievable makespan of any plan under any
  feasible schedule, by branch and bound over active schedules of the
  per-plan job shop. The last stage's forward and backward are separate
  operations here, so the search space contains every schedule the block
  simulators can produce and more.

Both enforce OracleLimits and are meant for cross-checking the planner and
simulators, not for production use.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

from .cost import (
    allreduce_time,
    cost_summary,
    interstage_comm_time,
    stage_bwd_time,
    stage_fwd_time,
)
from .model import (
    AllReduceWindow,
    ClusterGraph,
    ModelProfile,
    Plan,
    Schedule,
    ScheduleEvent,
    Stage,
)
from .scheduler import simulate_pe


@dataclass(frozen=True)
class OracleLimits:
    """Hard caps keeping the exhaustive searches tractable."""
    max_layers: int = 4
    max_gpus: int = 4
    max_microbatches: int = 3
    node_budget: int = 5_000_000


class OracleError(RuntimeError):
    """Instance outside the oracle's limits."""


class BudgetExceeded(OracleError):
    """Branch-and-bound node budget exhausted before the search finished."""


def check_limits(profile: ModelProfile, cluster: ClusterGraph,
                 microbatch_count: int, limits: OracleLimits) -> None:
    if profile.num_layers > limits.max_layers:
        raise OracleError(f"{profile.num_layers} layers exceed oracle limit {limits.max_layers}")
    if cluster.num_gpus > limits.max_gpus:
        raise OracleError(f"{cluster.num_gpus} GPUs exceed oracle limit {limits.max_gpus}")
    if microbatch_count > limits.max_microbatches:
        raise OracleError(f"{microbatch_count} microbatches exceed oracle limit {limits.max_microbatches}")


def interval_partitions(num_layers: int, num_stages: int,
                        ) -> Iterator[Tuple[Tuple[int, int], ...]]:
    """All splits of layers 1..num_layers into num_stages intervals."""
    for cuts in itertools.combinations(range(1, num_layers), num_stages - 1):
        bounds = (0,) + cuts + (num_layers,)
        yield tuple((bounds[i] + 1, bounds[i + 1]) for i in range(num_stages))


def device_assignments(gpu_ids: Tuple[int, ...], num_groups: int,
                       ) -> Iterator[Tuple[Tuple[int, ...], ...]]:
    """All ordered partitions of gpu_ids into num_groups non-empty groups."""
    if num_groups == 1:
        yield (gpu_ids,)
        return
    for size in range(1, len(gpu_ids) - num_groups + 2):
        for combo in itertools.combinations(gpu_ids, size):
            taken = set(combo)
            rest = tuple(g for g in gpu_ids if g not in taken)
            for tail in device_assignments(rest, num_groups - 1):
                yield (combo,) + tail


def ordered_group_count(num_items: int, num_groups: int) -> int:
    """Number of ordered partitions of a set into non-empty groups."""
    if num_groups == 1:
        return 1
    total = 0
    for size in range(1, num_items - num_groups + 2):
        total += math.comb(num_items, size) * ordered_group_count(num_items - size, num_groups - 1)
    return total


def plan_count(num_layers: int, num_gpus: int) -> int:
    """Size of the oracle's plan space (layer splits x device partitions)."""
    return sum(math.comb(num_layers - 1, xi - 1) * ordered_group_count(num_gpus, xi)
               for xi in range(1, min(num_layers, num_gpus) + 1))


def enumerate_plans(profile: ModelProfile, cluster: ClusterGraph,
                    microbatch_count: int) -> Iterator[Plan]:
    """Every plan that uses all GPUs, in a fixed deterministic order."""
    L, V = profile.num_layers, cluster.num_gpus
    ids = tuple(sorted(cluster.gpu_ids))
    for xi in range(1, min(L, V) + 1):
        for parts in interval_partitions(L, xi):
            for groups in device_assignments(ids, xi):
                stages = tuple(Stage(index=n + 1, layer_start=p[0], layer_end=p[1],
                                     devices=groups[n])
                               for n, p in enumerate(parts))
                yield Plan(stages=stages, microbatch_count=microbatch_count)


@dataclass(frozen=True)
class WStarResult:
    value: float
    plan: Plan


def brute_force_w_star(profile: ModelProfile, cluster: ClusterGraph,
                       microbatch_count: int,
                       limits: Optional[OracleLimits] = None) -> WStarResult:
    """Minimum workload W over the full plan space."""
    limits = limits or OracleLimits()
    check_limits(profile, cluster, microbatch_count, limits)
    best = math.inf
    best_plan: Optional[Plan] = None
    for plan in enumerate_plans(profile, cluster, microbatch_count):
        w = cost_summary(plan, profile, cluster).workload
        if best > w:
            best = w
            best_plan = plan
    assert best_plan is not None
    return WStarResult(value=best, plan=best_plan)


class _PlanShop:
    """Job-shop view of one plan: per microbatch, one operation chain
    F_1, X_1, ..., X_{N-1}, F_N, B_N, Y_{N-1}, B_{N-1}, ..., Y_1, B_1 on
    resources stage1..stageN, chan1..chanN-1."""

    def __init__(self, plan: Plan, profile: ModelProfile, cluster: ClusterGraph):
        N = plan.num_stages
        self.plan = plan
        self.num_resources = 2 * N - 1
        dur: List[float] = []
        res_of: List[int] = []
        label: List[str] = []
        res_name: List[str] = []
        bwd_stage: List[int] = []

        def stage_times(s: Stage) -> Tuple[float, float]:
            k = s.replication
            return (stage_fwd_time(profile, s.layer_start, s.layer_end, k) / k,
                    stage_bwd_time(profile, s.layer_start, s.layer_end, k) / k)

        chan: Dict[int, Tuple[float, float]] = {}
        for n in range(1, N):
            left, right = plan.stages[n - 1], plan.stages[n]
            chan[n] = interstage_comm_time(profile, left.layer_end, left.devices,
                                           right.devices, cluster)

        def add(res_idx: int, d: float, lab: str, name: str, bstage: int) -> None:
            dur.append(d)
            res_of.append(res_idx)
            label.append(lab)
            res_name.append(name)
            bwd_stage.append(bstage)

        for n in range(1, N):
            f_t, _ = stage_times(plan.stages[n - 1])
            add(n - 1, f_t, f"fwd{n}", f"stage{n}", 0)
            add(N + n - 1, chan[n][0], f"comm_fwd{n}", f"chan{n}", 0)
        f_t, b_t = stage_times(plan.stages[N - 1])
        add(N - 1, f_t, f"fwd{N}", f"stage{N}", 0)
        add(N - 1, b_t, f"bwd{N}", f"stage{N}", N)
        for n in range(N - 1, 0, -1):
            add(N + n - 1, chan[n][1], f"comm_bwd{n}", f"chan{n}", 0)
            _, b_t = stage_times(plan.stages[n - 1])
            add(n - 1, b_t, f"bwd{n}", f"stage{n}", n)

        self.dur = dur
        self.res_of = res_of
        self.label = label
        self.res_name = res_name
        self.bwd_stage = bwd_stage
        self.num_ops = len(dur)
        self.suffix = [0.0] * (self.num_ops + 1)
        for i in range(self.num_ops - 1, -1, -1):
            self.suffix[i] = self.suffix[i + 1] + dur[i]
        self.ar = {s.index: allreduce_time(profile, s.layer_start, s.layer_end,
                                           s.devices, cluster)
                   for s in plan.replicated_stages}
        self.idx_bwd = {bwd_stage[i]: i for i in range(self.num_ops) if bwd_stage[i]}
        self.res_work = [0.0] * self.num_resources
        for i in range(self.num_ops):
            self.res_work[res_of[i]] += dur[i]

    def signature(self) -> Tuple:
        return (tuple(self.dur), tuple(self.res_of),
                tuple(sorted(self.ar.items())))

    def root_lower_bound(self, microbatches: int) -> float:
        val = max([self.suffix[0]] + [w for w in self.res_work])
        for s, a in self.ar.items():
            i = self.idx_bwd[s]
            val = max(val,
                      self.suffix[0] - self.suffix[i + 1] + a,
                      microbatches * self.dur[i] + a)
        return val


def _search(shop: _PlanShop, microbatches: int, upper_bound: float,
            budget: List[int]) -> Tuple[float, Optional[List[Tuple[int, int, float, float]]]]:
    """Branch and bound over active schedules of the shop.

    Returns (best makespan, dispatch sequence) where the sequence is None if
    no schedule strictly better than upper_bound was found. Dispatching the
    first microbatch's first operation at time 0 is forced. Decrements
    budget[0] per dispatched node; raises BudgetExceeded at 0.
    """
    M = microbatches
    n_ops = shop.num_ops
    dur = shop.dur
    res_of = shop.res_of
    suffix = shop.suffix
    ar = shop.ar
    repl = sorted(ar)
    idx_bwd = shop.idx_bwd

    job_next = [0] * (M + 1)
    job_ready = [0.0] * (M + 1)
    res_free = [0.0] * shop.num_resources
    rem_work = list(shop.res_work)
    for r in range(shop.num_resources):
        rem_work[r] *= M
    rem_bwd_ops = {s: M for s in repl}
    rem_bwd_work = {s: M * dur[idx_bwd[s]] for s in repl}
    last_bwd_end = {s: 0.0 for s in repl}
    seq: List[Tuple[int, int, float, float]] = []

    best = upper_bound
    best_seq: Optional[List[Tuple[int, int, float, float]]] = None
    done_final = [0.0]

    def lower_bound() -> float:
        val = done_final[0]
        for s in repl:
            if rem_bwd_ops[s]:
                val = max(val, res_free[s - 1] + rem_bwd_work[s] + ar[s])
            else:
                val = max(val, last_bwd_end[s] + ar[s])
        for m in range(1, M + 1):
            i = job_next[m]
            if i < n_ops:
                val = max(val, job_ready[m] + suffix[i])
                for s in repl:
                    ib = idx_bwd[s]
                    if ib >= i:
                        val = max(val, job_ready[m] + suffix[i] - suffix[ib + 1] + ar[s])
        for r in range(shop.num_resources):
            val = max(val, res_free[r] + rem_work[r])
        return val

    def recurse() -> None:
        nonlocal best, best_seq
        candidates = []
        for m in range(1, M + 1):
            i = job_next[m]
            if i < n_ops:
                r = res_of[i]
                est = job_ready[m] if job_ready[m] > res_free[r] else res_free[r]
                candidates.append((est + dur[i], r, m, i, est))
        if not candidates:
            val = done_final[0]
            for s in repl:
                end = last_bwd_end[s] + ar[s]
                if end > val:
                    val = end
            if val < best:
                best = val
                best_seq = list(seq)
            return
        if not seq:
            conflict = [c for c in candidates if c[2] == 1]
        else:
            c_star = min(candidates)
            conflict = [c for c in candidates
                        if c[1] == c_star[1] and c[4] <= c_star[0]]
        for _ect, r, m, i, est in sorted(conflict):
            if budget[0] <= 0:
                raise BudgetExceeded("node budget exhausted")
            budget[0] -= 1
            end = est + dur[i]
            prev_ready = job_ready[m]
            prev_free = res_free[r]
            prev_final = done_final[0]
            s = shop.bwd_stage[i]
            prev_bwd = last_bwd_end.get(s)
            job_next[m] = i + 1
            job_ready[m] = end
            res_free[r] = end
            rem_work[r] -= dur[i]
            if s in rem_bwd_ops:
                rem_bwd_ops[s] -= 1
                rem_bwd_work[s] -= dur[i]
                if end > last_bwd_end[s]:
                    last_bwd_end[s] = end
            if i == n_ops - 1 and end > done_final[0]:
                done_final[0] = end
            seq.append((m, i, est, end))
            if lower_bound() < best:
                recurse()
            seq.pop()
            job_next[m] = i
            job_ready[m] = prev_ready
            res_free[r] = prev_free
            rem_work[r] += dur[i]
            if s in rem_bwd_ops:
                rem_bwd_ops[s] += 1
                rem_bwd_work[s] += dur[i]
                last_bwd_end[s] = prev_bwd
            done_final[0] = prev_final

    recurse()
    return best, best_seq


def _schedule_from_seq(shop: _PlanShop, seq: List[Tuple[int, int, float, float]],
                       ) -> Schedule:
    raw = [(st, en, m, i) for m, i, st, en in seq]

    def sort_key(item: Tuple[float, float, int, int]) -> Tuple:
        st, _en, m, i = item
        name = shop.res_name[i]
        if name.startswith("stage"):
            res_key = (0, int(name[5:]))
        else:
            res_key = (1, int(name[4:]))
        return (st, res_key, m)

    events = tuple(ScheduleEvent(resource=shop.res_name[i], microbatch=m,
                                 block=shop.label[i], start=st, end=en)
                   for st, en, m, i in sorted(raw, key=sort_key))
    windows = []
    for s in sorted(shop.ar):
        start = max(en for _st, en, _m, i in raw if shop.bwd_stage[i] == s)
        windows.append(AllReduceWindow(stage=s, start=start, end=start + shop.ar[s]))
    last = shop.num_ops - 1
    finish = max(en for _st, en, _m, i in raw if i == last)
    makespan = max([finish] + [w.end for w in windows])
    return Schedule(events=events, allreduce=tuple(windows), makespan=makespan)


def optimal_schedule(plan: Plan, profile: ModelProfile, cluster: ClusterGraph,
                     node_budget: int = 5_000_000) -> Tuple[float, Schedule]:
    """Exact minimum makespan of one plan, with a schedule achieving it.

    Warm-started from the pipeline-efficient schedule; if that is already
    optimal it is returned unchanged.
    """
    pe = simulate_pe(plan, profile, cluster)
    shop = _PlanShop(plan, profile, cluster)
    budget = [node_budget]
    best, seq = _search(shop, plan.microbatch_count, pe.makespan, budget)
    if seq is None:
        return pe.makespan, pe
    return best, _schedule_from_seq(shop, seq)


@dataclass(frozen=True)
class TStarResult:
    value: float
    plan: Plan
    schedule: Schedule
    nodes_used: int


def brute_force_t_star(profile: ModelProfile, cluster: ClusterGraph,
                       microbatch_count: int,
                       limits: Optional[OracleLimits] = None) -> TStarResult:
    """Minimum makespan over every plan and every feasible schedule.

    Plans are searched in ascending order of their simulated makespan, which
    seeds a strong incumbent: most later plans are discarded by their root
    lower bound alone. Plans with identical operation durations share one
    search. The node budget is shared across the whole call.
    """
    limits = limits or OracleLimits()
    check_limits(profile, cluster, microbatch_count, limits)
    scored = []
    for pos, plan in enumerate(enumerate_plans(profile, cluster, microbatch_count)):
        pe = simulate_pe(plan, profile, cluster)
        scored.append((pe.makespan, pos, plan, pe))
    scored.sort(key=lambda item: (item[0], item[1]))

    best_val, _, best_plan, best_sched = scored[0]
    budget = [limits.node_budget]
    cache: Dict[Tuple, float] = {}
    for pe_val, _pos, plan, pe in scored:
        shop = _PlanShop(plan, profile, cluster)
        sig = shop.signature()
        if sig in cache:
            continue
        if shop.root_lower_bound(microbatch_count) >= best_val:
            continue
        val, seq = _search(shop, microbatch_count, pe_val, budget)
        cache[sig] = val
        if val < best_val:
            best_val = val
            best_plan = plan
            best_sched = pe if seq is None else _schedule_from_seq(shop, seq)
    return TStarResult(value=best_val, plan=best_plan, schedule=best_sched,
                       nodes_used=limits.node_budget - budget[0])
