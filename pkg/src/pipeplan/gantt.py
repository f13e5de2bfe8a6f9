"""
SVG Gantt rendering of a schedule trace.

One horizontal lane per resource (stage lanes first, then channel lanes,
then an AllReduce lane when present), one rectangle per trace row, colored
by microbatch. Pure string assembly with fixed number formatting, so
identical traces render to byte-identical SVG.
"""

import math
from typing import Dict, List, Sequence

from .fileio import ALLREDUCE_RESOURCE, Trace, format_number

_PALETTE = ("#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2",
            "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac")

_LEFT = 110
_TOP = 40
_LANE_H = 30
_LANE_GAP = 6
_WIDTH = 1000
_RIGHT_PAD = 20
_BOTTOM = 34


def _fmt(x: float) -> str:
    return format_number(float(x))


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def _lane_order(resources: Sequence[str]) -> List[str]:
    seen = set(resources)
    stages = sorted((r for r in seen if r.startswith("stage") and r[5:].isdigit()),
                    key=lambda r: int(r[5:]))
    chans = sorted((r for r in seen if r.startswith("chan") and r[4:].isdigit()),
                   key=lambda r: int(r[4:]))
    placed = set(stages) | set(chans) | {ALLREDUCE_RESOURCE}
    other = sorted(r for r in seen if r not in placed)
    tail = [ALLREDUCE_RESOURCE] if ALLREDUCE_RESOURCE in seen else []
    return stages + chans + other + tail


def _tick_step(span: float) -> float:
    raw = span / 8.0
    if raw <= 0:
        return 1.0
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0):
        if raw <= mult * mag:
            return mult * mag
    return 10.0 * mag


def render_trace_svg(trace: Trace) -> str:
    """Render a parsed trace as a standalone SVG document string."""
    rows = trace.rows
    lanes = _lane_order([r.resource for r in rows])
    lane_y: Dict[str, float] = {res: _TOP + i * (_LANE_H + _LANE_GAP)
                                for i, res in enumerate(lanes)}
    span = trace.makespan
    if span <= 0:
        span = max([r.end for r in rows] + [1.0])
    plot_w = _WIDTH - _LEFT - _RIGHT_PAD
    scale = plot_w / span
    height = _TOP + len(lanes) * (_LANE_H + _LANE_GAP) + _BOTTOM

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{height}" '
        f'viewBox="0 0 {_WIDTH} {height}">',
        '<style>text{font-family:Menlo,Consolas,monospace;font-size:11px;fill:#222222}</style>',
        f'<rect x="0" y="0" width="{_WIDTH}" height="{height}" fill="#ffffff"/>',
        f'<text x="{_LEFT}" y="22">makespan {format_number(trace.makespan)} s</text>',
    ]
    step = _tick_step(span)
    i = 0
    while step * i <= span * (1 + 1e-9):
        t = step * i
        x = _LEFT + t * scale
        parts.append(f'<line x1="{_fmt(x)}" y1="{_TOP - 6}" x2="{_fmt(x)}" '
                     f'y2="{height - _BOTTOM + 6}" stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(x + 2)}" y="{height - _BOTTOM + 20}">{format_number(t)}</text>')
        i += 1
    for res in lanes:
        y = lane_y[res]
        parts.append(f'<rect x="{_LEFT}" y="{_fmt(y)}" width="{plot_w}" '
                     f'height="{_LANE_H}" fill="#f6f6f6"/>')
        parts.append(f'<text x="8" y="{_fmt(y + _LANE_H / 2 + 4)}">{_escape(res)}</text>')
    for row in rows:
        y = lane_y[row.resource]
        x = _LEFT + row.start * scale
        w = max((row.end - row.start) * scale, 0.0)
        if row.resource == ALLREDUCE_RESOURCE:
            style = 'fill="#888888" fill-opacity="0.55"'
            label = row.block.replace("allreduce_stage", "ar s")
        else:
            color = _PALETTE[(row.microbatch - 1) % len(_PALETTE)] if row.microbatch >= 1 else _PALETTE[0]
            style = f'fill="{color}"'
            label = f"m{row.microbatch}"
        parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y + 3)}" width="{_fmt(w)}" '
                     f'height="{_LANE_H - 6}" {style} stroke="#333333" stroke-width="0.5"/>')
        if w >= 18:
            parts.append(f'<text x="{_fmt(x + w / 2)}" y="{_fmt(y + _LANE_H / 2 + 4)}" '
                         f'text-anchor="middle">{_escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
