"""Event-driven schedulers: block lists, queue orders, pinned timelines."""

import dataclasses

import pytest

from conftest import replicated_plan, split_plan, tiny_cluster, tiny_profile

from pipeplan import (
    AllReduceWindow,
    Plan,
    SchedulingError,
    Stage,
    build_block_list,
    compute_execution_order,
    lemma1_bound,
    simulate_cycle_schedule,
    simulate_pe,
    simulate_with_order,
    validate_schedule,
)


def event_tuples(schedule):
    return tuple((e.resource, e.microbatch, e.block, e.start, e.end)
                 for e in schedule.events)


def with_events(schedule, events, **kwargs):
    return dataclasses.replace(schedule, events=tuple(events), **kwargs)


class TestBlockList:
    def test_two_stages(self):
        got = [(b.position, b.kind, b.resource, b.label)
               for b in build_block_list(split_plan())]
        assert got == [
            (1, "fwd", "stage1", "fwd1"),
            (2, "comm_fwd", "chan1", "comm_fwd1"),
            (3, "fwdbwd", "stage2", "fwdbwd2"),
            (4, "comm_bwd", "chan1", "comm_bwd1"),
            (5, "bwd", "stage1", "bwd1"),
        ]

    def test_single_stage_merges_everything(self):
        blocks = build_block_list(replicated_plan())
        assert [b.label for b in blocks] == ["fwdbwd1"]

    def test_three_stages(self):
        p3 = Plan(stages=(
            Stage(index=1, layer_start=1, layer_end=1, devices=(1,)),
            Stage(index=2, layer_start=2, layer_end=2, devices=(2,)),
            Stage(index=3, layer_start=3, layer_end=3, devices=(3,)),
        ), microbatch_count=2)
        labels = [b.label for b in build_block_list(p3)]
        assert labels == ["fwd1", "comm_fwd1", "fwd2", "comm_fwd2",
                          "fwdbwd3", "comm_bwd2", "bwd2", "comm_bwd1", "bwd1"]
        assert len(labels) == 4 * 3 - 3


class TestExecutionOrder:
    def test_pinned_queues_for_the_split_plan(self):
        order = compute_execution_order(split_plan())
        assert order.queues == {
            "stage1": ((1, 1), (2, 1), (1, 5), (2, 5)),
            "chan1": ((1, 2), (2, 2), (1, 4), (2, 4)),
            "stage2": ((1, 3), (2, 3)),
        }

    def test_single_stage_queue(self):
        order = compute_execution_order(replicated_plan())
        assert order.queues == {"stage1": ((1, 1), (2, 1))}

    def test_every_execution_queued_once(self):
        plan = split_plan(microbatches=5)
        order = compute_execution_order(plan)
        seen = [e for q in order.queues.values() for e in q]
        assert sorted(seen) == [(m, p) for m in range(1, 6) for p in range(1, 6)]


class TestSimulatePe:
    def test_split_plan_timeline(self, tiny):
        profile, cluster, _ = tiny
        got = simulate_pe(split_plan(), profile, cluster)
        assert got.makespan == 11.0
        assert got.allreduce == ()
        assert got.cycle_count is None
        assert event_tuples(got) == (
            ("stage1", 1, "fwd1", 0.0, 1.0),
            ("stage1", 2, "fwd1", 1.0, 2.0),
            ("chan1", 1, "comm_fwd1", 1.0, 2.0),
            ("stage2", 1, "fwdbwd2", 2.0, 5.0),
            ("chan1", 2, "comm_fwd1", 2.0, 3.0),
            ("stage2", 2, "fwdbwd2", 5.0, 8.0),
            ("chan1", 1, "comm_bwd1", 5.0, 6.0),
            ("stage1", 1, "bwd1", 6.0, 8.0),
            ("chan1", 2, "comm_bwd1", 8.0, 9.0),
            ("stage1", 2, "bwd1", 9.0, 11.0),
        )

    def test_replicated_plan_timeline(self, tiny):
        profile, cluster, _ = tiny
        got = simulate_pe(replicated_plan(), profile, cluster)
        assert event_tuples(got) == (
            ("stage1", 1, "fwdbwd1", 0.0, 1.5),
            ("stage1", 2, "fwdbwd1", 1.5, 3.0),
        )
        assert got.allreduce == (AllReduceWindow(stage=1, start=3.0, end=5.0),)
        assert got.makespan == 5.0

    def test_single_microbatch(self, tiny):
        profile, cluster, _ = tiny
        got = simulate_pe(split_plan(microbatches=1), profile, cluster)
        assert got.makespan == 8.0

    def test_schedules_validate(self, tiny):
        profile, cluster, _ = tiny
        for plan in (split_plan(), replicated_plan()):
            got = simulate_pe(plan, profile, cluster)
            assert validate_schedule(got, plan, profile, cluster) == []

    def test_deterministic(self, tiny):
        profile, cluster, _ = tiny
        assert simulate_pe(split_plan(), profile, cluster) == \
            simulate_pe(split_plan(), profile, cluster)


class TestSimulateWithOrder:
    def test_forward_barrier_delays_the_backward_side(self, tiny):
        profile, cluster, _ = tiny
        plan = split_plan()
        queues = compute_execution_order(plan).queues
        got = simulate_with_order(plan, profile, cluster, queues,
                                  forward_barrier=True)
        assert got.makespan == 12.0
        assert validate_schedule(got, plan, profile, cluster,
                                 forward_barrier=True) == []

    def test_unknown_resource_rejected(self, tiny):
        profile, cluster, _ = tiny
        plan = split_plan()
        queues = dict(compute_execution_order(plan).queues)
        queues["stage9"] = ((1, 1),)
        with pytest.raises(SchedulingError, match="unknown resource"):
            simulate_with_order(plan, profile, cluster, queues)

    def test_circular_queue_stalls(self, tiny):
        profile, cluster, _ = tiny
        plan = split_plan()
        queues = dict(compute_execution_order(plan).queues)
        # Heading the stage-1 queue with the backward blocks starves the
        # forward side that must run first.
        queues["stage1"] = ((1, 5), (2, 5), (1, 1), (2, 1))
        with pytest.raises(SchedulingError, match="stalled"):
            simulate_with_order(plan, profile, cluster, queues)


class TestCycleSchedule:
    def test_split_plan(self, tiny):
        profile, cluster, _ = tiny
        plan = split_plan()
        got = simulate_cycle_schedule(plan, profile, cluster)
        assert got.makespan == 12.0
        assert got.cycle_count == plan.microbatch_count + 4 * plan.num_stages - 4
        assert validate_schedule(got, plan, profile, cluster) == []

    def test_replicated_plan(self, tiny):
        profile, cluster, _ = tiny
        plan = replicated_plan()
        got = simulate_cycle_schedule(plan, profile, cluster)
        assert got.makespan == 5.0
        assert got.cycle_count == 2
        assert validate_schedule(got, plan, profile, cluster) == []

    def test_lemma_bound_covers_the_cycle_schedule(self, tiny):
        profile, cluster, _ = tiny
        for plan, bound in ((split_plan(), 18.0), (replicated_plan(), 8.0)):
            assert lemma1_bound(plan, profile, cluster) == bound
            got = simulate_cycle_schedule(plan, profile, cluster)
            assert got.makespan <= bound + 1e-12

    def test_event_order_never_beats_the_cycles(self, tiny):
        profile, cluster, _ = tiny
        for plan in (split_plan(), replicated_plan(),
                     split_plan(microbatches=7)):
            pe = simulate_pe(plan, profile, cluster)
            cyc = simulate_cycle_schedule(plan, profile, cluster)
            assert pe.makespan <= cyc.makespan + 1e-12


class TestValidateSchedule:
    def good(self, tiny):
        profile, cluster, _ = tiny
        plan = split_plan()
        return simulate_pe(plan, profile, cluster), plan, profile, cluster

    def test_clean_schedule_passes(self, tiny):
        sched, plan, profile, cluster = self.good(tiny)
        assert validate_schedule(sched, plan, profile, cluster) == []

    def test_missing_event(self, tiny):
        sched, plan, profile, cluster = self.good(tiny)
        broken = with_events(sched, sched.events[:-1])
        problems = validate_schedule(broken, plan, profile, cluster)
        assert any("missing event" in p for p in problems)

    def test_duplicate_event(self, tiny):
        sched, plan, profile, cluster = self.good(tiny)
        broken = with_events(sched, sched.events + (sched.events[0],))
        problems = validate_schedule(broken, plan, profile, cluster)
        assert any("duplicate" in p for p in problems)

    def test_wrong_duration(self, tiny):
        sched, plan, profile, cluster = self.good(tiny)
        evs = list(sched.events)
        evs[0] = dataclasses.replace(evs[0], end=evs[0].end + 0.5)
        problems = validate_schedule(with_events(sched, evs), plan, profile, cluster)
        assert any("expected" in p for p in problems)

    def test_wrong_resource(self, tiny):
        sched, plan, profile, cluster = self.good(tiny)
        evs = list(sched.events)
        evs[0] = dataclasses.replace(evs[0], resource="stage2")
        problems = validate_schedule(with_events(sched, evs), plan, profile, cluster)
        assert any("expected stage1" in p for p in problems)

    def test_resource_overlap(self, tiny):
        sched, plan, profile, cluster = self.good(tiny)
        evs = list(sched.events)
        # Slide the second stage-1 forward onto the first.
        idx = next(i for i, e in enumerate(evs)
                   if e.block == "fwd1" and e.microbatch == 2)
        evs[idx] = dataclasses.replace(evs[idx], start=0.5, end=1.5)
        problems = validate_schedule(with_events(sched, evs), plan, profile, cluster)
        assert any("overlap on stage1" in p for p in problems)

    def test_transfer_before_producer(self, tiny):
        sched, plan, profile, cluster = self.good(tiny)
        evs = list(sched.events)
        idx = next(i for i, e in enumerate(evs)
                   if e.block == "comm_fwd1" and e.microbatch == 1)
        evs[idx] = dataclasses.replace(evs[idx], start=0.5, end=1.5)
        problems = validate_schedule(with_events(sched, evs), plan, profile, cluster)
        assert any("starts before stage 1 output" in p for p in problems)

    def test_late_pipeline_entry(self, tiny):
        sched, plan, profile, cluster = self.good(tiny)
        evs = [dataclasses.replace(e, start=e.start + 1.0, end=e.end + 1.0)
               for e in sched.events]
        broken = with_events(sched, evs, makespan=sched.makespan + 1.0)
        problems = validate_schedule(broken, plan, profile, cluster)
        assert any("time 0" in p for p in problems)

    def test_wrong_makespan(self, tiny):
        sched, plan, profile, cluster = self.good(tiny)
        broken = dataclasses.replace(sched, makespan=sched.makespan + 1.0)
        problems = validate_schedule(broken, plan, profile, cluster)
        assert any("makespan" in p for p in problems)

    def test_missing_allreduce(self, tiny):
        profile, cluster, _ = tiny
        plan = replicated_plan()
        sched = simulate_pe(plan, profile, cluster)
        broken = dataclasses.replace(sched, allreduce=(), makespan=3.0)
        problems = validate_schedule(broken, plan, profile, cluster)
        assert any("missing AllReduce" in p for p in problems)

    def test_spurious_allreduce(self, tiny):
        sched, plan, profile, cluster = self.good(tiny)
        broken = dataclasses.replace(
            sched, allreduce=(AllReduceWindow(stage=1, start=11.0, end=12.0),),
            makespan=12.0)
        problems = validate_schedule(broken, plan, profile, cluster)
        assert any("unreplicated" in p for p in problems)

    def test_barrier_check_flags_overlap(self, tiny):
        sched, plan, profile, cluster = self.good(tiny)
        problems = validate_schedule(sched, plan, profile, cluster,
                                     forward_barrier=True)
        assert any("barrier" in p for p in problems)
