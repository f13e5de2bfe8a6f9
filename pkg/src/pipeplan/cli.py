"""
Command line interface.

Subcommands: plan (sweep or fixed stage count), simulate (replay a plan file
to a trace CSV), compare (planner vs baselines), gantt (trace CSV to SVG),
oracle (brute-force cross-checks on small instances).

Exit codes: 0 success, 2 validation or input error, 3 infeasible stage
count.
"""

import argparse
import math
import sys
from typing import List, Optional

from .baselines import dataparallel_plan, gpipe_plan, gpipe_schedule, noreplication_plan
from .fileio import (
    format_number,
    load_cluster,
    load_plan,
    load_profile,
    plan_to_dict,
    read_trace,
    write_trace,
)
from .gantt import render_trace_svg
from .model import ValidationError, validate_plan
from .oracle import (
    OracleError,
    OracleLimits,
    brute_force_t_star,
    brute_force_w_star,
)
from .ordering import rdo
from .partition import PartitionSolver
from .planner import SweepEntry, spp, theorem1_report
from .scheduler import lemma1_bound, simulate_pe, validate_schedule

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3


class _InfeasibleStageCount(ValidationError):
    """Requested stage count has no feasible plan."""


def _num(x: float):
    if float(x).is_integer() and abs(x) < 2**53:
        return int(x)
    return float("%.9g" % x)


def _dump_json(payload: dict, out: Optional[str]) -> None:
    import json
    text = json.dumps(payload, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _sweep_rows(entries) -> List[dict]:
    rows = []
    for e in entries:
        rows.append({
            "stages": e.stage_count,
            "feasible": e.feasible,
            "workload": _num(e.workload) if math.isfinite(e.workload) else None,
            "makespan": None if e.makespan is None else _num(e.makespan),
            "bound": None if e.bound is None else _num(e.bound),
        })
    return rows


def _cmd_plan(args) -> int:
    profile = load_profile(args.profile)
    cluster = load_cluster(args.cluster)
    if args.microbatches < 1:
        raise ValidationError("--microbatches must be >= 1")
    if args.stages is not None:
        if not 1 <= args.stages <= cluster.num_gpus:
            raise _InfeasibleStageCount(
                f"stage count {args.stages} outside 1..{cluster.num_gpus}")
        ordering = rdo(cluster)
        solver = PartitionSolver(profile, cluster, ordering, args.microbatches)
        w, plan = solver.best_partition(args.stages)
        if plan is None:
            raise _InfeasibleStageCount(
                f"no feasible plan with {args.stages} stages for {profile.num_layers} layers")
        schedule = simulate_pe(plan, profile, cluster)
        entries = (SweepEntry(stage_count=args.stages, feasible=True, workload=w,
                              makespan=schedule.makespan,
                              bound=lemma1_bound(plan, profile, cluster)),)
        report = theorem1_report(profile, cluster, args.microbatches, schedule.makespan)
        payload = {
            "device_order": list(ordering.order),
            "plan": plan_to_dict(plan),
            "makespan": _num(schedule.makespan),
            "bounds": {"theorem_factor": _num(report.factor), "phi": _num(report.phi)},
            "sweep": _sweep_rows(entries),
        }
    else:
        result = spp(profile, cluster, args.microbatches)
        payload = {
            "device_order": list(result.device_order),
            "plan": plan_to_dict(result.plan),
            "makespan": _num(result.makespan),
            "bounds": {"theorem_factor": _num(result.theorem_factor),
                       "phi": _num(result.phi)},
            "sweep": _sweep_rows(result.sweep),
        }
    _dump_json(payload, args.out)
    if args.out is not None:
        sys.stdout.write(f"makespan {format_number(float(payload['makespan']))}\n")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    profile = load_profile(args.profile)
    cluster = load_cluster(args.cluster)
    plan = load_plan(args.plan_file)
    validate_plan(plan, profile, cluster)
    schedule = simulate_pe(plan, profile, cluster)
    problems = validate_schedule(schedule, plan, profile, cluster)
    if problems:
        for p in problems:
            sys.stderr.write(f"schedule check failed: {p}\n")
        return EXIT_INVALID
    text = write_trace(args.out, schedule)
    if args.out is None:
        sys.stdout.write(text)
    else:
        sys.stdout.write(f"makespan {format_number(schedule.makespan)}\n")
    return EXIT_OK


_BASELINES = ("gpipe", "norep", "dp")


def _cmd_compare(args) -> int:
    profile = load_profile(args.profile)
    cluster = load_cluster(args.cluster)
    if args.microbatches < 1:
        raise ValidationError("--microbatches must be >= 1")
    wanted = [b.strip() for b in args.baselines.split(",") if b.strip()]
    for b in wanted:
        if b not in _BASELINES:
            raise ValidationError(f"unknown baseline {b!r}; choose from {', '.join(_BASELINES)}")

    result = spp(profile, cluster, args.microbatches)
    rows = [("spp", result.makespan)]
    ordering = rdo(cluster)
    for b in _BASELINES:
        if b not in wanted:
            continue
        if b == "gpipe":
            stage_count = min(profile.num_layers, cluster.num_gpus)
            plan = gpipe_plan(profile, cluster, ordering, stage_count, args.microbatches)
            rows.append(("gpipe", gpipe_schedule(plan, profile, cluster).makespan))
        elif b == "norep":
            _w, plan = noreplication_plan(profile, cluster, ordering, args.microbatches)
            if plan is None:
                rows.append(("norep", None))
            else:
                rows.append(("norep", simulate_pe(plan, profile, cluster).makespan))
        else:
            plan = dataparallel_plan(profile, cluster, args.microbatches)
            rows.append(("dp", simulate_pe(plan, profile, cluster).makespan))

    def speedup(mk: float) -> Optional[float]:
        # relative gain over spp: (baseline - spp) / spp
        if result.makespan <= 0:
            return None
        return (mk - result.makespan) / result.makespan

    name_w = max(len(name) for name, _ in rows)
    sys.stdout.write(f"{'baseline'.ljust(name_w)}  {'makespan_s'.rjust(12)}  {'speedup'.rjust(8)}\n")
    for name, mk in rows:
        gain = None if mk is None else speedup(mk)
        if mk is None:
            sys.stdout.write(f"{name.ljust(name_w)}  {'infeasible'.rjust(12)}  {'-'.rjust(8)}\n")
        else:
            pct = "-" if gain is None else format_number(100.0 * gain) + "%"
            sys.stdout.write(f"{name.ljust(name_w)}  {format_number(mk).rjust(12)}  "
                             f"{pct.rjust(8)}\n")
    if args.out is not None:
        payload = {"rows": [{"name": name,
                             "makespan": None if mk is None else _num(mk),
                             "speedup": None if mk is None or speedup(mk) is None
                             else _num(speedup(mk))}
                            for name, mk in rows]}
        _dump_json(payload, args.out)
    return EXIT_OK


def _cmd_gantt(args) -> int:
    trace = read_trace(args.trace_file)
    svg = render_trace_svg(trace)
    if args.out is None:
        sys.stdout.write(svg)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(svg)
        sys.stdout.write(f"wrote {args.out}\n")
    return EXIT_OK


def _parse_limits(spec: Optional[str]) -> OracleLimits:
    if not spec:
        return OracleLimits()
    fields = {}
    valid = {"max_layers", "max_gpus", "max_microbatches", "node_budget"}
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ValidationError(f"bad limit {item!r}, expected key=value")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in valid:
            raise ValidationError(f"unknown limit {key!r}; choose from {', '.join(sorted(valid))}")
        try:
            fields[key] = int(value)
        except ValueError as exc:
            raise ValidationError(f"limit {key} needs an integer, got {value!r}") from exc
    return OracleLimits(**fields)


def _cmd_oracle(args) -> int:
    profile = load_profile(args.profile)
    cluster = load_cluster(args.cluster)
    if args.microbatches < 1:
        raise ValidationError("--microbatches must be >= 1")
    limits = _parse_limits(args.limits)
    result = spp(profile, cluster, args.microbatches)
    w_prm = min((e.workload for e in result.sweep if e.feasible), default=math.inf)
    w_star = brute_force_w_star(profile, cluster, args.microbatches, limits)
    t_star = brute_force_t_star(profile, cluster, args.microbatches, limits)
    report = theorem1_report(profile, cluster, args.microbatches,
                             result.makespan, reference=t_star.value)
    lines = [
        f"w_star {format_number(w_star.value)}",
        f"w_prm {format_number(w_prm)}",
        f"t_star {format_number(t_star.value)}",
        f"t_spp {format_number(result.makespan)}",
        f"factor {format_number(report.factor)}",
        f"phi {format_number(report.phi)}",
    ]
    if report.ratio is not None:
        lines.append(f"ratio {format_number(report.ratio)}")
    lines.append(f"within_bound {'true' if report.within_bound else 'false'}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pipeplan",
        description="Plan and simulate synchronous pipeline-parallel training.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="partition, replicate, and pick a stage count")
    p.add_argument("--profile", required=True, help="profile JSON file")
    p.add_argument("--cluster", required=True, help="cluster JSON file")
    p.add_argument("--microbatches", type=int, required=True)
    p.add_argument("--stages", type=int, default=None,
                   help="fix the stage count instead of sweeping")
    p.add_argument("--out", default=None, help="write result JSON here")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("simulate", help="replay a plan file into a trace CSV")
    p.add_argument("plan_file", help="plan JSON (a plan result file works too)")
    p.add_argument("--profile", required=True)
    p.add_argument("--cluster", required=True)
    p.add_argument("--out", default=None, help="write trace CSV here")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare", help="planner vs baseline makespans")
    p.add_argument("--profile", required=True)
    p.add_argument("--cluster", required=True)
    p.add_argument("--microbatches", type=int, required=True)
    p.add_argument("--baselines", default="gpipe,norep,dp",
                   help="comma list from: gpipe, norep, dp")
    p.add_argument("--out", default=None, help="also write rows as JSON here")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("gantt", help="render a trace CSV as SVG")
    p.add_argument("trace_file")
    p.add_argument("--out", default=None, help="write SVG here")
    p.set_defaults(func=_cmd_gantt)

    p = sub.add_parser("oracle", help="brute-force cross-checks (small instances)")
    p.add_argument("--profile", required=True)
    p.add_argument("--cluster", required=True)
    p.add_argument("--microbatches", type=int, required=True)
    p.add_argument("--limits", default=None,
                   help="key=value list: max_layers, max_gpus, max_microbatches, node_budget")
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _InfeasibleStageCount as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INFEASIBLE
    except (ValidationError, OracleError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
