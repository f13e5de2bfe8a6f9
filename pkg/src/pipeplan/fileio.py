"""
File formats: profile/cluster/plan JSON, schedule trace CSV.

All numeric output goes through one formatter (9 significant digits) and all
container orders are fixed by construction, so identical inputs produce
byte-identical files.
"""

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

from .model import (
    AllReduceWindow,
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
    validate_profile,
)

ALLREDUCE_RESOURCE = "allreduce"


def format_number(x: float) -> str:
    """Fixed 9-significant-digit decimal form, integers without a point."""
    if isinstance(x, int):
        return str(x)
    if math.isinf(x) or math.isnan(x):
        raise ValidationError(f"non-finite number in output: {x}")
    return "%.9g" % x


def _json_number(x: float) -> Union[int, float]:
    if isinstance(x, int):
        return x
    if float(x).is_integer() and abs(x) < 2**53:
        return int(x)
    return float("%.9g" % x)


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be an object")
    return data


def _dump_json(path: Optional[str], payload: dict) -> str:
    text = json.dumps(payload, indent=2) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def load_profile(path: str) -> ModelProfile:
    """Read and validate a profile JSON file."""
    data = _load_json(path)
    try:
        layers = tuple(sorted(
            (LayerProfile(id=int(l["id"]), fwd_time=float(l["fwd_s"]),
                          bwd_time=float(l["bwd_s"]),
                          param_bytes=float(l["param_bytes"]))
             for l in data["layers"]),
            key=lambda l: l.id))
        edges = tuple(sorted(
            (InterLayerEdge(src=int(e["from"]), dst=int(e["to"]),
                            fwd_bytes=float(e["fwd_bytes"]),
                            bwd_bytes=float(e["bwd_bytes"]))
             for e in data.get("edges", [])),
            key=lambda e: e.src))
        profile = ModelProfile(name=str(data.get("name", "unnamed")),
                               microbatch_size=int(data.get("microbatch_size", 1)),
                               layers=layers, edges=edges)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed profile file {path}: {exc}") from exc
    return validate_profile(profile)


def profile_to_dict(profile: ModelProfile) -> dict:
    return {
        "name": profile.name,
        "microbatch_size": profile.microbatch_size,
        "layers": [{"id": l.id, "fwd_s": _json_number(l.fwd_time),
                    "bwd_s": _json_number(l.bwd_time),
                    "param_bytes": _json_number(l.param_bytes)}
                   for l in profile.layers],
        "edges": [{"from": e.src, "to": e.dst,
                   "fwd_bytes": _json_number(e.fwd_bytes),
                   "bwd_bytes": _json_number(e.bwd_bytes)}
                  for e in profile.edges],
    }


def save_profile(path: Optional[str], profile: ModelProfile) -> str:
    return _dump_json(path, profile_to_dict(profile))


def load_cluster(path: str) -> ClusterGraph:
    """Read and validate a cluster JSON file."""
    data = _load_json(path)
    try:
        gpus = [int(g) for g in data["gpus"]]
        links = [(int(l["a"]), int(l["b"]), float(l["bytes_per_s"]))
                 for l in data.get("links", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed cluster file {path}: {exc}") from exc
    return make_cluster(gpus, links)


def cluster_to_dict(cluster: ClusterGraph) -> dict:
    ids = sorted(cluster.gpu_ids)
    links = []
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            links.append({"a": a, "b": b, "bytes_per_s": _json_number(cluster.bw(a, b))})
    return {"gpus": ids, "links": links}


def save_cluster(path: Optional[str], cluster: ClusterGraph) -> str:
    return _dump_json(path, cluster_to_dict(cluster))


def plan_to_dict(plan: Plan) -> dict:
    return {
        "microbatches": plan.microbatch_count,
        "stages": [{"index": s.index, "layer_start": s.layer_start,
                    "layer_end": s.layer_end, "devices": list(s.devices)}
                   for s in plan.stages],
    }


def _plan_from_dict(data: dict, origin: str) -> Plan:
    try:
        stages = tuple(Stage(index=int(s["index"]), layer_start=int(s["layer_start"]),
                             layer_end=int(s["layer_end"]),
                             devices=tuple(int(d) for d in s["devices"]))
                       for s in data["stages"])
        return Plan(stages=stages, microbatch_count=int(data["microbatches"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed plan in {origin}: {exc}") from exc


def load_plan(path: str) -> Plan:
    """Read a plan file; planner result files (with a "plan" key) work too."""
    data = _load_json(path)
    if "plan" in data and isinstance(data["plan"], dict):
        data = data["plan"]
    return _plan_from_dict(data, path)


def save_plan(path: Optional[str], plan: Plan) -> str:
    return _dump_json(path, plan_to_dict(plan))


def write_trace(path: Optional[str], schedule: Schedule) -> str:
    """Schedule trace CSV: a makespan comment, a header, one row per event.

    AllReduce windows become rows with resource "allreduce", microbatch 0,
    block "allreduce_stage<n>".
    """
    lines = [f"# makespan {format_number(schedule.makespan)}",
             "resource,microbatch,block,start,end"]
    for ev in schedule.events:
        lines.append(f"{ev.resource},{ev.microbatch},{ev.block},"
                     f"{format_number(ev.start)},{format_number(ev.end)}")
    for w in schedule.allreduce:
        lines.append(f"{ALLREDUCE_RESOURCE},0,allreduce_stage{w.stage},"
                     f"{format_number(w.start)},{format_number(w.end)}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


@dataclass(frozen=True)
class TraceRow:
    resource: str
    microbatch: int
    block: str
    start: float
    end: float


@dataclass(frozen=True)
class Trace:
    makespan: float
    rows: Tuple[TraceRow, ...]


def parse_trace(text: str, origin: str = "trace") -> Trace:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# makespan "):
        raise ValidationError(f"{origin}: missing '# makespan' header line")
    try:
        makespan = float(lines[0][len("# makespan "):])
    except ValueError as exc:
        raise ValidationError(f"{origin}: bad makespan value") from exc
    if len(lines) < 2 or lines[1] != "resource,microbatch,block,start,end":
        raise ValidationError(f"{origin}: missing column header")
    rows: List[TraceRow] = []
    for ln in lines[2:]:
        parts = ln.split(",")
        if len(parts) != 5:
            raise ValidationError(f"{origin}: malformed row {ln!r}")
        try:
            rows.append(TraceRow(resource=parts[0], microbatch=int(parts[1]),
                                 block=parts[2], start=float(parts[3]),
                                 end=float(parts[4])))
        except ValueError as exc:
            raise ValidationError(f"{origin}: malformed row {ln!r}") from exc
    if not rows:
        raise ValidationError(f"{origin}: no event rows")
    return Trace(makespan=makespan, rows=tuple(rows))


def read_trace(path: str) -> Trace:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    return parse_trace(text, origin=path)


def trace_to_schedule(trace: Trace) -> Schedule:
    """Rebuild a Schedule object from a parsed trace (for re-validation)."""
    events = []
    windows = []
    for row in trace.rows:
        if row.resource == ALLREDUCE_RESOURCE:
            try:
                stage = int(row.block.replace("allreduce_stage", ""))
            except ValueError as exc:
                raise ValidationError(f"bad allreduce row block {row.block!r}") from exc
            windows.append(AllReduceWindow(stage=stage, start=row.start, end=row.end))
        else:
            events.append(ScheduleEvent(resource=row.resource, microbatch=row.microbatch,
                                        block=row.block, start=row.start, end=row.end))
    return Schedule(events=tuple(events), allreduce=tuple(windows),
                    makespan=trace.makespan)
