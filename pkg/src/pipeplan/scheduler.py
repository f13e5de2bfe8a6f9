"""
Discrete-event schedulers for a planned pipeline.

A plan with N stages executes, per microbatch, the dependency chain of
4N-3 blocks J = F_1, X_1, F_2, ..., X_{N-1}, FB_N, Y_{N-1}, B_{N-1}, ...,
Y_1, B_1 (FB merges the last stage's forward and backward; X_n/Y_n share
channel n). Every resource, stage or channel, serves its own queue of
(microbatch, block) executions strictly in order. simulate_pe builds the
pipeline-efficient queue order and plays it out event by event;
simulate_cycle_schedule plays the lockstep cycle schedule whose makespan is
bounded in closed form by lemma1_bound; validate_schedule re-checks any
schedule against every dependency and resource constraint.
"""

import heapq
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .cost import (
    allreduce_time,
    block_durations,
    channel_times,
    cost_summary,
    stage_bwd_time,
    stage_compute_time,
    stage_fwd_time,
)
from .model import (
    BWD,
    COMM_BWD,
    COMM_FWD,
    FWD,
    FWDBWD,
    AllReduceWindow,
    Block,
    ClusterGraph,
    ModelProfile,
    Plan,
    Schedule,
    ScheduleEvent,
)


class SchedulingError(RuntimeError):
    """The simulation stalled with work left (circular waiting)."""


def build_block_list(plan: Plan) -> Tuple[Block, ...]:
    """The ordered block list J for a plan; positions are 1-based."""
    N = plan.num_stages
    if N == 1:
        return (Block(position=1, kind=FWDBWD, stage=1),)
    out: List[Block] = []
    pos = 1
    for n in range(1, N):
        out.append(Block(position=pos, kind=FWD, stage=n))
        out.append(Block(position=pos + 1, kind=COMM_FWD, channel=n))
        pos += 2
    out.append(Block(position=pos, kind=FWDBWD, stage=N))
    pos += 1
    for n in range(N - 1, 0, -1):
        out.append(Block(position=pos, kind=COMM_BWD, channel=n))
        out.append(Block(position=pos + 1, kind=BWD, stage=n))
        pos += 2
    return tuple(out)


@dataclass(frozen=True)
class ExecutionOrder:
    """Per-resource queues of (microbatch, block position), head first."""
    queues: Dict[str, Tuple[Tuple[int, int], ...]]


def compute_execution_order(plan: Plan) -> ExecutionOrder:
    """Queue order that keeps late blocks ahead of early ones.

    Microbatches are pushed through J in passes; each pass advances, from the
    last block down to the first, one microbatch per block that had one
    pending when the pass began. The sequence in which a resource's
    executions are reached becomes its queue: backward work overtakes
    forward work as soon as it exists, which keeps every stage draining the
    pipeline instead of flooding it. Channels get queues the same way, so a
    transfer that becomes ready early cannot cut ahead of one scheduled
    before it.
    """
    blocks = build_block_list(plan)
    M = plan.microbatch_count
    last = len(blocks)
    pending: Dict[int, deque] = {p: deque() for p in range(1, last + 1)}
    pending[1].extend(range(1, M + 1))
    queues: Dict[str, List[Tuple[int, int]]] = {b.resource: [] for b in blocks}
    remaining = M * last
    while remaining:
        # Scanning positions in descending order within one pass advances
        # each block at most once: a microbatch handed to position p+1 was
        # already passed over this pass.
        for pos in range(last, 0, -1):
            if not pending[pos]:
                continue
            m = pending[pos].popleft()
            remaining -= 1
            queues[blocks[pos - 1].resource].append((m, pos))
            if pos < last:
                pending[pos + 1].append(m)
    return ExecutionOrder(queues={r: tuple(q) for r, q in queues.items()})


def _gather_allreduce(plan: Plan, profile: ModelProfile, cluster: ClusterGraph) -> Dict[int, float]:
    return {s.index: allreduce_time(profile, s.layer_start, s.layer_end,
                                    s.devices, cluster)
            for s in plan.replicated_stages}


def _resource_sort_key(resource: str) -> Tuple[int, int]:
    if resource.startswith("stage"):
        return (0, int(resource[5:]))
    return (1, int(resource[4:]))


def simulate_with_order(plan: Plan, profile: ModelProfile, cluster: ClusterGraph,
                        queues: Dict[str, Tuple[Tuple[int, int], ...]],
                        forward_barrier: bool = False) -> Schedule:
    """Play out given per-resource queues under the block dependency rules.

    Every resource serves its queue head as soon as it is idle and the
    head's predecessor block execution has finished; later queue entries
    wait behind a stalled head. Holding a channel to its queue matters: a
    transfer that jumped ahead just because its data arrived early can
    delay the transfer scheduled before it and finish the iteration later.
    With forward_barrier no backward-side block (FB, Y, B) may start until
    every forward-side execution (all F and X, for all microbatches) has
    finished.

    Each replicated stage's AllReduce starts when its last backward finishes.
    Raises SchedulingError if the queues stall before all work is done.
    """
    blocks = build_block_list(plan)
    by_pos = {b.position: b for b in blocks}
    last = len(blocks)
    dur = block_durations(blocks, plan, profile, cluster)
    ar_time = _gather_allreduce(plan, profile, cluster)
    N = plan.num_stages
    M = plan.microbatch_count

    res_queue: Dict[str, deque] = {b.resource: deque() for b in blocks}
    for res, q in queues.items():
        if res not in res_queue:
            raise SchedulingError(f"queue given for unknown resource {res}")
        res_queue[res] = deque(q)
    res_busy: Dict[str, bool] = {r: False for r in res_queue}
    done: Dict[Tuple[int, int], Tuple[float, float]] = {}
    remaining_compute = {s.index: len(res_queue[f"stage{s.index}"])
                         for s in plan.stages}
    ar_start: Dict[int, float] = {}
    raw: List[Tuple[float, float, int, Block]] = []

    fwd_left = M * 2 * (N - 1)
    barrier_open = (not forward_barrier) or fwd_left == 0

    # Heap entries: (time, class, resource, microbatch, position, start).
    # class 0 = channel completion, 1 = stage completion, so simultaneous
    # completions hand transfers over before compute results.
    heap: List[Tuple[float, int, str, int, int, float]] = []

    def try_start(res: str, t: float) -> None:
        if res_busy[res] or not res_queue[res]:
            return
        m, pos = res_queue[res][0]
        blk = by_pos[pos]
        if not barrier_open and blk.kind not in (FWD, COMM_FWD):
            return
        if pos > 1 and (m, pos - 1) not in done:
            return
        res_queue[res].popleft()
        res_busy[res] = True
        cls = 0 if blk.channel is not None else 1
        heapq.heappush(heap, (t + dur[pos], cls, res, m, pos, t))

    for r in sorted(res_queue):
        try_start(r, 0.0)

    while heap:
        t, cls, res, m, pos, started = heapq.heappop(heap)
        blk = by_pos[pos]
        done[(m, pos)] = (started, t)
        raw.append((started, t, m, blk))
        res_busy[res] = False
        newly_open = False
        if forward_barrier and not barrier_open and blk.kind in (FWD, COMM_FWD):
            fwd_left -= 1
            if fwd_left == 0:
                barrier_open = True
                newly_open = True
        if blk.is_compute:
            remaining_compute[blk.stage] -= 1
            if remaining_compute[blk.stage] == 0 and blk.stage in ar_time:
                ar_start[blk.stage] = t
        if newly_open:
            for r in sorted(res_queue):
                try_start(r, t)
        else:
            try_start(res, t)
            if pos < last:
                try_start(by_pos[pos + 1].resource, t)

    if len(done) != M * last:
        waiting = []
        for r in sorted(res_queue):
            if res_queue[r]:
                m, pos = res_queue[r][0]
                waiting.append(f"{r} head ({m},{by_pos[pos].label})")
        raise SchedulingError(
            f"stalled with {M * last - len(done)} executions left; " + "; ".join(waiting))

    finish = max(end for (m2, p), (st, end) in done.items() if p == last)
    windows = tuple(AllReduceWindow(stage=s, start=ar_start[s],
                                    end=ar_start[s] + ar_time[s])
                    for s in sorted(ar_time))
    makespan = max([finish] + [w.end for w in windows])
    events = tuple(ScheduleEvent(resource=b.resource, microbatch=m2, block=b.label,
                                 start=st, end=end)
                   for st, end, m2, b in sorted(
                       raw, key=lambda e: (e[0], _resource_sort_key(e[3].resource), e[2])))
    return Schedule(events=events, allreduce=windows, makespan=makespan)


def simulate_pe(plan: Plan, profile: ModelProfile, cluster: ClusterGraph) -> Schedule:
    """Simulate the pipeline-efficient queue order for a plan."""
    order = compute_execution_order(plan)
    return simulate_with_order(plan, profile, cluster, order.queues)


def lemma1_bound(plan: Plan, profile: ModelProfile, cluster: ClusterGraph) -> float:
    """Closed-form makespan bound (1 + (4N-4)/M) * M * C + max AllReduce."""
    cs = cost_summary(plan, profile, cluster)
    ar_max = max(cs.allreduce.values(), default=0.0)
    return (plan.microbatch_count + 4 * plan.num_stages - 4) * cs.cycle_time + ar_max


def simulate_cycle_schedule(plan: Plan, profile: ModelProfile,
                            cluster: ClusterGraph) -> Schedule:
    """Lockstep cycle schedule: M + 4N - 4 cycles, each at most C + C long.

    In every cycle, block position p runs its next microbatch if position
    p-1 finished that microbatch in an earlier cycle. A resource hosting two
    of its blocks in one cycle (an F with a B, or an X with a Y) runs them
    back to back; the next cycle starts when all of the current cycle's
    executions have finished.
    """
    blocks = build_block_list(plan)
    last = len(blocks)
    dur = block_durations(blocks, plan, profile, cluster)
    ar_time = _gather_allreduce(plan, profile, cluster)
    M = plan.microbatch_count

    completed = {p: 0 for p in range(1, last + 1)}
    remaining_compute = {s.index: M * sum(1 for b in blocks
                                          if b.is_compute and b.stage == s.index)
                         for s in plan.stages}
    ar_start: Dict[int, float] = {}
    raw: List[Tuple[float, float, int, Block]] = []
    t = 0.0
    cycles = 0
    while any(completed[p] < M for p in completed):
        cycles += 1
        chosen = [(p, completed[p] + 1) for p in range(1, last + 1)
                  if completed[p] < M and (p == 1 or completed[p - 1] > completed[p])]
        res_clock: Dict[str, float] = {}
        cycle_end = t
        for pos, m in chosen:
            blk = blocks[pos - 1]
            start = res_clock.get(blk.resource, t)
            end = start + dur[pos]
            res_clock[blk.resource] = end
            cycle_end = max(cycle_end, end)
            raw.append((start, end, m, blk))
            if blk.is_compute:
                remaining_compute[blk.stage] -= 1
                if remaining_compute[blk.stage] == 0 and blk.stage in ar_time:
                    ar_start[blk.stage] = end
        for pos, _m in chosen:
            completed[pos] += 1
        t = cycle_end

    finish = max(end for st, end, m, b in raw if b.position == last)
    windows = tuple(AllReduceWindow(stage=s, start=ar_start[s],
                                    end=ar_start[s] + ar_time[s])
                    for s in sorted(ar_time))
    makespan = max([finish] + [w.end for w in windows])
    events = tuple(ScheduleEvent(resource=b.resource, microbatch=m, block=b.label,
                                 start=st, end=end)
                   for st, end, m, b in sorted(
                       raw, key=lambda e: (e[0], _resource_sort_key(e[3].resource), e[2])))
    return Schedule(events=events, allreduce=windows, makespan=makespan,
                    cycle_count=cycles)


def _tol(*vals: float) -> float:
    return 1e-9 * max([1.0] + [abs(v) for v in vals])


def validate_schedule(schedule: Schedule, plan: Plan, profile: ModelProfile,
                      cluster: ClusterGraph, forward_barrier: bool = False) -> List[str]:
    """Check a schedule against every dependency and resource constraint.

    Returns all violations as strings (empty list = valid). The last stage
    may appear either as merged fwdbwd events or as split fwd/bwd pairs on
    the same stage resource. With forward_barrier the barrier separation is
    checked too. Comparisons use a relative tolerance of 1e-9.
    """
    problems: List[str] = []
    N, M = plan.num_stages, plan.microbatch_count
    chans = channel_times(plan, profile, cluster)
    ar_time = _gather_allreduce(plan, profile, cluster)

    by_key: Dict[Tuple[int, str], ScheduleEvent] = {}
    for ev in schedule.events:
        key = (ev.microbatch, ev.block)
        if key in by_key:
            problems.append(f"duplicate event for microbatch {ev.microbatch} block {ev.block}")
        by_key[key] = ev
        if ev.end < ev.start - _tol(ev.start, ev.end):
            problems.append(f"event {ev.block} of microbatch {ev.microbatch} ends before it starts")

    merged_last = any(ev.block == f"{FWDBWD}{N}" for ev in schedule.events)

    # Expected (label, resource, duration) triples per microbatch.
    expected: List[Tuple[str, str, float]] = []
    for s in plan.stages:
        k = s.replication
        f_t = stage_fwd_time(profile, s.layer_start, s.layer_end, k) / k
        b_t = stage_bwd_time(profile, s.layer_start, s.layer_end, k) / k
        res = f"stage{s.index}"
        if s.index == N and merged_last:
            expected.append((f"{FWDBWD}{N}", res,
                             stage_compute_time(profile, s.layer_start, s.layer_end, k) / k))
        else:
            expected.append((f"{FWD}{s.index}", res, f_t))
            expected.append((f"{BWD}{s.index}", res, b_t))
    for n, (cf, cb) in sorted(chans.items()):
        expected.append((f"{COMM_FWD}{n}", f"chan{n}", cf))
        expected.append((f"{COMM_BWD}{n}", f"chan{n}", cb))

    known = {label for label, _res, _d in expected}
    for ev in schedule.events:
        if ev.block not in known:
            problems.append(f"unexpected block {ev.block}")
        elif not 1 <= ev.microbatch <= M:
            problems.append(f"unknown microbatch {ev.microbatch}")
    for m in range(1, M + 1):
        for label, res, d in expected:
            ev = by_key.get((m, label))
            if ev is None:
                problems.append(f"missing event: microbatch {m} block {label}")
                continue
            if ev.resource != res:
                problems.append(f"block {label} of microbatch {m} on {ev.resource}, expected {res}")
            if abs((ev.end - ev.start) - d) > _tol(d, ev.end, ev.start):
                problems.append(
                    f"block {label} of microbatch {m} runs {ev.end - ev.start:.12g}, expected {d:.12g}")
    if problems:
        # Structural problems make the ordering checks unreliable; report early.
        return problems

    def f_start(m: int, n: int) -> float:
        if n == N and merged_last:
            return by_key[(m, f"{FWDBWD}{N}")].start
        return by_key[(m, f"{FWD}{n}")].start

    def f_end(m: int, n: int) -> float:
        if n == N and merged_last:
            return by_key[(m, f"{FWDBWD}{N}")].end
        return by_key[(m, f"{FWD}{n}")].end

    def b_start(m: int, n: int) -> float:
        if n == N and merged_last:
            return by_key[(m, f"{FWDBWD}{N}")].start
        return by_key[(m, f"{BWD}{n}")].start

    def b_end(m: int, n: int) -> float:
        if n == N and merged_last:
            return by_key[(m, f"{FWDBWD}{N}")].end
        return by_key[(m, f"{BWD}{n}")].end

    if abs(f_start(1, 1)) > _tol(f_start(1, 1)):
        problems.append(f"first microbatch must enter stage 1 at time 0, starts at {f_start(1, 1):.12g}")

    for m in range(1, M + 1):
        for n in range(1, N):
            cf, cb = chans[n]
            if f_start(m, n + 1) < f_end(m, n) + cf - _tol(f_end(m, n), cf):
                problems.append(f"forward dependency violated at stage {n + 1}, microbatch {m}")
            x = by_key[(m, f"{COMM_FWD}{n}")]
            if x.start < f_end(m, n) - _tol(f_end(m, n)):
                problems.append(f"forward transfer on channel {n} starts before stage {n} output, microbatch {m}")
            if f_start(m, n + 1) < x.end - _tol(x.end):
                problems.append(f"stage {n + 1} starts before channel {n} delivers, microbatch {m}")
            y = by_key[(m, f"{COMM_BWD}{n}")]
            if b_start(m, n) < b_end(m, n + 1) + cb - _tol(b_end(m, n + 1), cb):
                problems.append(f"backward dependency violated at stage {n}, microbatch {m}")
            if y.start < b_end(m, n + 1) - _tol(b_end(m, n + 1)):
                problems.append(f"backward transfer on channel {n} starts before stage {n + 1} gradient, microbatch {m}")
            if b_start(m, n) < y.end - _tol(y.end):
                problems.append(f"stage {n} backward starts before channel {n} delivers, microbatch {m}")
        if not merged_last and b_start(m, N) < f_end(m, N) - _tol(f_end(m, N)):
            problems.append(f"last-stage backward starts before its forward, microbatch {m}")

    window_by_stage = {w.stage: w for w in schedule.allreduce}
    for s in plan.stages:
        w = window_by_stage.get(s.index)
        if s.index in ar_time:
            if w is None:
                problems.append(f"missing AllReduce for replicated stage {s.index}")
                continue
            ready = max(b_end(m, s.index) for m in range(1, M + 1))
            if w.start < ready - _tol(ready):
                problems.append(f"AllReduce of stage {s.index} starts before its last backward")
            if abs((w.end - w.start) - ar_time[s.index]) > _tol(ar_time[s.index]):
                problems.append(f"AllReduce of stage {s.index} has wrong duration")
        elif w is not None:
            problems.append(f"AllReduce reported for unreplicated stage {s.index}")

    by_resource: Dict[str, List[ScheduleEvent]] = {}
    for ev in schedule.events:
        by_resource.setdefault(ev.resource, []).append(ev)
    for res in sorted(by_resource):
        evs = sorted(by_resource[res], key=lambda e: (e.start, e.end))
        for prev, nxt in zip(evs, evs[1:]):
            if nxt.start < prev.end - _tol(prev.end):
                problems.append(
                    f"overlap on {res}: ({prev.microbatch},{prev.block}) and ({nxt.microbatch},{nxt.block})")

    if forward_barrier and N > 1:
        fwd_max = max(max(f_end(m, n) for n in range(1, N))
                      for m in range(1, M + 1))
        fwd_max = max(fwd_max, max(by_key[(m, f"{COMM_FWD}{n}")].end
                                   for m in range(1, M + 1) for n in range(1, N)))
        bwd_min = min(min(b_start(m, n) for n in range(1, N + 1))
                      for m in range(1, M + 1))
        bwd_min = min(bwd_min, min(by_key[(m, f"{COMM_BWD}{n}")].start
                                   for m in range(1, M + 1) for n in range(1, N)))
        bwd_min = min(bwd_min, min(f_start(m, N) for m in range(1, M + 1)))
        if bwd_min < fwd_max - _tol(fwd_max):
            problems.append("barrier violated: backward-side work starts before all forward-side work done")

    completion = max(b_end(m, 1) for m in range(1, M + 1))
    expected_makespan = max([completion] + [w.end for w in schedule.allreduce])
    if abs(schedule.makespan - expected_makespan) > _tol(expected_makespan):
        problems.append(
            f"makespan {schedule.makespan:.12g} does not match schedule contents {expected_makespan:.12g}")
    return problems
