"""Stage-count sweep, plan selection, and the end-to-end bound report."""

import math

import pytest

from conftest import TINY_M, replicated_plan, tiny_cluster, tiny_profile

from pipeplan import (
    InterLayerEdge,
    LayerProfile,
    ModelProfile,
    SweepEntry,
    ValidationError,
    bound_factor,
    make_cluster,
    phi,
    spp,
    theorem1_report,
)


def one_layer_profile():
    return ModelProfile(name="one", microbatch_size=1,
                        layers=(LayerProfile(id=1, fwd_time=1.0, bwd_time=2.0,
                                             param_bytes=1e9),),
                        edges=())


class TestBoundFactor:
    def test_pinned_values(self):
        assert bound_factor(2, 2) == 4.0
        assert bound_factor(1, 4) == 2.0
        assert bound_factor(8, 32) == 2.875


class TestSpp:
    def test_selects_the_replicated_plan(self, tiny):
        profile, cluster, M = tiny
        got = spp(profile, cluster, M)
        assert got.makespan == 5.0
        assert got.plan == replicated_plan()
        assert got.schedule.makespan == 5.0
        assert got.device_order == (1, 2)
        assert got.phi == 0.0
        assert got.theorem_factor == 4.0

    def test_sweep_table(self, tiny):
        profile, cluster, M = tiny
        got = spp(profile, cluster, M)
        assert got.sweep == (
            SweepEntry(stage_count=1, feasible=True, workload=8.0,
                       makespan=5.0, bound=8.0),
            SweepEntry(stage_count=2, feasible=True, workload=6.0,
                       makespan=11.0, bound=18.0),
        )

    def test_selection_minimizes_the_simulated_makespan(self, tiny):
        profile, cluster, M = tiny
        got = spp(profile, cluster, M)
        feasible = [e.makespan for e in got.sweep if e.feasible]
        assert got.makespan == min(feasible)

    def test_infeasible_stage_counts_are_reported(self):
        profile = one_layer_profile()
        cluster = tiny_cluster()
        got = spp(profile, cluster, TINY_M)
        assert got.sweep[1] == SweepEntry(stage_count=2, feasible=False,
                                          workload=math.inf, makespan=None,
                                          bound=None)
        assert got.plan.num_stages == 1

    def test_validates_inputs_first(self):
        bad = ModelProfile(name="bad", microbatch_size=1,
                           layers=(LayerProfile(id=1, fwd_time=-1.0,
                                                bwd_time=1.0, param_bytes=0.0),),
                           edges=())
        with pytest.raises(ValidationError):
            spp(bad, tiny_cluster(), TINY_M)

    def test_selected_schedule_matches_sweep_entry(self, tiny):
        profile, cluster, M = tiny
        got = spp(profile, cluster, M)
        entry = next(e for e in got.sweep
                     if e.stage_count == got.plan.num_stages)
        assert entry.makespan == got.makespan
        assert entry.makespan <= entry.bound + 1e-12


class TestTheorem1Report:
    def test_no_reference(self, tiny):
        profile, cluster, M = tiny
        got = theorem1_report(profile, cluster, M, makespan=5.0)
        assert got.factor == 4.0
        assert got.phi == 0.0
        assert got.reference is None
        assert got.ratio is None
        assert got.within_bound is None

    def test_within_bound(self, tiny):
        profile, cluster, M = tiny
        got = theorem1_report(profile, cluster, M, makespan=5.0, reference=5.0)
        assert got.ratio == 1.0
        assert got.within_bound is True

    def test_out_of_bound(self, tiny):
        profile, cluster, M = tiny
        got = theorem1_report(profile, cluster, M, makespan=5.0, reference=1.0)
        assert got.ratio == 5.0
        assert got.within_bound is False

    def test_zero_reference(self, tiny):
        profile, cluster, M = tiny
        assert theorem1_report(profile, cluster, M, 0.0,
                               reference=0.0).within_bound is True
        assert theorem1_report(profile, cluster, M, 1.0,
                               reference=0.0).within_bound is False

    def test_factor_includes_bandwidth_spread(self):
        layers = (
            LayerProfile(id=1, fwd_time=1.0, bwd_time=2.0, param_bytes=1e9),
            LayerProfile(id=2, fwd_time=1.0, bwd_time=2.0, param_bytes=1e9),
        )
        edges = (InterLayerEdge(src=1, dst=2, fwd_bytes=1e9, bwd_bytes=1e9),)
        profile = ModelProfile(name="wide", microbatch_size=1,
                               layers=layers, edges=edges)
        cluster = make_cluster([1, 2, 3],
                               [(1, 2, 1e9), (1, 3, 1e9), (2, 3, 4e9)])
        got = theorem1_report(profile, cluster, 4, makespan=1.0)
        p = phi(profile, cluster)
        assert p > 0.0
        assert got.phi == p
        assert got.factor == pytest.approx(bound_factor(3, 4) * (1.0 + p),
                                           rel=1e-12)
