"""Function-call chart rendering: schema validation and deterministic SVG.

The tool accepts a structured call (chart type, labels, series), validates it
against the CHART/1 schema, and renders an SVG whose mark coordinates are an
exact linear function of the data, so tests (and downstream consumers) can
invert the axis transform and recover the plotted values.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Optional
from xml.sax.saxutils import escape

CHART_TYPES = ("bar", "line", "pie", "scatter")

DEFAULT_WIDTH = 800
DEFAULT_HEIGHT = 500
DEFAULT_PALETTE = (
    "#4c78a8", "#f58518", "#54a24b", "#e45756",
    "#72b7b2", "#eeca3b", "#b279a2", "#9d755d",
)

_MARGIN_LEFT = 70
_MARGIN_RIGHT = 25
_MARGIN_TOP = 50
_MARGIN_BOTTOM = 60


class SchemaError(ValueError):
    """Invalid chart call; carries the offending field for model feedback."""

    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field = field_name
        self.reason = reason


class RenderError(RuntimeError):
    pass


@dataclass(frozen=True)
class Series:
    name: str
    x: tuple
    y: tuple[float, ...]


@dataclass(frozen=True)
class ChartCall:
    chart_type: str
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    series: tuple[Series, ...] = ()
    legend: bool = True
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    colors: tuple[str, ...] = DEFAULT_PALETTE


@dataclass(frozen=True)
class ChartAsset:
    svg: str
    width: int
    height: int
    data_digest: str


_COERCE_RE = re.compile(
    r"^\s*(?P<pre>[^\d+\-.]{0,3})\s*"
    r"(?P<core>[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][+-]?\d+)?|[+-]?\.\d+)"
    r"\s*(?P<post>[^\d]{0,8})\s*$"
)


def _coerce_number(value: Any, field_name: str) -> float:
    if isinstance(value, bool):
        raise SchemaError(field_name, f"expected a number, got boolean {value}")
    if isinstance(value, (int, float)):
        result = float(value)
    elif isinstance(value, str):
        m = _COERCE_RE.match(value)
        if m is None:
            raise SchemaError(field_name, f"cannot parse number from {value!r}")
        result = float(m.group("core").replace(",", ""))
    else:
        raise SchemaError(field_name, f"expected a number, got {type(value).__name__}")
    if not math.isfinite(result):
        raise SchemaError(field_name, f"number must be finite, got {result}")
    return result


def _require_str(value: Any, field_name: str, default: str = "") -> str:
    if value is None:
        return default
    if not isinstance(value, str):
        raise SchemaError(field_name, f"expected a string, got {type(value).__name__}")
    return value


def _positive_int(value: Any, field_name: str, default: int) -> int:
    if value is None:
        return default
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise SchemaError(field_name, f"expected a positive integer, got {value!r}")
    v = int(value)
    if not 0 < v <= 10_000:
        raise SchemaError(field_name, f"must be in 1..10000, got {v}")
    return v


def validate_call(raw: Any) -> ChartCall:
    """Validate an arbitrary JSON value into a ChartCall (schema CHART/1).

    Fills defaults (legend on, 800x500 canvas) and coerces numeric strings
    with unit adornments. Raises SchemaError on any violation; never any
    other exception, whatever the input.
    """
    if not isinstance(raw, dict):
        raise SchemaError("call", f"expected an object, got {type(raw).__name__}")
    tool = raw.get("tool")
    if tool is not None and tool != "chart_tool":
        raise SchemaError("tool", f"unknown tool {tool!r}")
    chart_type = raw.get("chart_type", raw.get("type"))
    if chart_type not in CHART_TYPES:
        raise SchemaError("chart_type", f"must be one of {CHART_TYPES}, got {chart_type!r}")
    title = _require_str(raw.get("title"), "title")
    x_label = _require_str(raw.get("x_label"), "x_label")
    y_label = _require_str(raw.get("y_label"), "y_label")
    options = raw.get("options") or {}
    if not isinstance(options, dict):
        raise SchemaError("options", f"expected an object, got {type(options).__name__}")
    legend = options.get("legend", True)
    if not isinstance(legend, bool):
        raise SchemaError("options.legend", f"expected a boolean, got {legend!r}")
    width = _positive_int(options.get("width", raw.get("width")), "options.width", DEFAULT_WIDTH)
    height = _positive_int(options.get("height", raw.get("height")), "options.height", DEFAULT_HEIGHT)
    colors_raw = options.get("colors")
    if colors_raw is None:
        colors: tuple[str, ...] = DEFAULT_PALETTE
    else:
        if not isinstance(colors_raw, list) or not colors_raw:
            raise SchemaError("options.colors", "expected a non-empty list of strings")
        for c in colors_raw:
            if not isinstance(c, str):
                raise SchemaError("options.colors", f"expected strings, got {c!r}")
        colors = tuple(colors_raw)
    series_raw = raw.get("series")
    if not isinstance(series_raw, list) or not series_raw:
        raise SchemaError("series", "expected a non-empty list of series")
    series: list[Series] = []
    for i, entry in enumerate(series_raw):
        fname = f"series[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(fname, f"expected an object, got {type(entry).__name__}")
        name = _require_str(entry.get("name"), f"{fname}.name", default=f"series{i + 1}")
        xs = entry.get("x")
        ys = entry.get("y")
        if not isinstance(xs, list) or not isinstance(ys, list):
            raise SchemaError(fname, "x and y must be lists")
        if len(xs) != len(ys):
            raise SchemaError(fname, f"|x|={len(xs)} and |y|={len(ys)} must match")
        if not ys:
            raise SchemaError(fname, "series must contain at least one point")
        y_values = tuple(
            _coerce_number(v, f"{fname}.y[{j}]") for j, v in enumerate(ys)
        )
        x_values = tuple(
            v if isinstance(v, (int, float, str)) and not isinstance(v, bool)
            else _reject(fname, v)
            for v in xs
        )
        series.append(Series(name=name, x=x_values, y=y_values))
    return ChartCall(
        chart_type=chart_type,
        title=title,
        x_label=x_label,
        y_label=y_label,
        series=tuple(series),
        legend=legend,
        width=width,
        height=height,
        colors=colors,
    )


def _reject(field_name: str, value: Any):
    raise SchemaError(field_name, f"x values must be strings or numbers, got {type(value).__name__}")


def nice_ticks(lo: float, hi: float, max_ticks: int = 8) -> list[float]:
    """Loose 'nice numbers' ticks covering [lo, hi] with at most max_ticks."""
    if hi < lo:
        lo, hi = hi, lo
    if hi == lo:
        hi = lo + 1.0
    span = _nicenum(hi - lo, round_result=False)
    step = _nicenum(span / (max_ticks - 1), round_result=True)
    start = math.floor(lo / step) * step
    end = math.ceil(hi / step) * step
    ticks = []
    v = start
    while v <= end + step * 1e-9:
        ticks.append(round(v, 10) + 0.0)
        v += step
    while len(ticks) > max_ticks:
        step *= 2
        start = math.floor(lo / step) * step
        end = math.ceil(hi / step) * step
        ticks = []
        v = start
        while v <= end + step * 1e-9:
            ticks.append(round(v, 10) + 0.0)
            v += step
    return ticks


def _nicenum(value: float, round_result: bool) -> float:
    exp = math.floor(math.log10(value)) if value > 0 else 0
    frac = value / (10 ** exp)
    if round_result:
        if frac < 1.5:
            nice = 1.0
        elif frac < 3.0:
            nice = 2.0
        elif frac < 7.0:
            nice = 5.0
        else:
            nice = 10.0
    else:
        if frac <= 1.0:
            nice = 1.0
        elif frac <= 2.0:
            nice = 2.0
        elif frac <= 5.0:
            nice = 5.0
        else:
            nice = 10.0
    return nice * (10 ** exp)


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _fmt_tick(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return f"{v:g}"


def _digest(series: tuple[Series, ...]) -> str:
    payload = json.dumps(
        [[s.name, list(s.x), list(s.y)] for s in series],
        ensure_ascii=False,
        sort_keys=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class _Canvas:
    def __init__(self, call: ChartCall):
        self.call = call
        self.plot_x = _MARGIN_LEFT
        self.plot_y = _MARGIN_TOP
        self.plot_w = call.width - _MARGIN_LEFT - _MARGIN_RIGHT
        self.plot_h = call.height - _MARGIN_TOP - _MARGIN_BOTTOM
        self.parts: list[str] = []

    def chrome(self) -> None:
        c = self.call
        self.parts.append(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{c.width}" height="{c.height}" '
            f'viewBox="0 0 {c.width} {c.height}" font-family="sans-serif">'
        )
        self.parts.append(f'<rect width="{c.width}" height="{c.height}" fill="#ffffff"/>')
        if c.title:
            self.parts.append(
                f'<text class="title" x="{c.width / 2:.1f}" y="24" text-anchor="middle" '
                f'font-size="16">{escape(c.title)}</text>'
            )
        if c.x_label:
            self.parts.append(
                f'<text class="x-label" x="{self.plot_x + self.plot_w / 2:.1f}" '
                f'y="{c.height - 12}" text-anchor="middle" font-size="12">{escape(c.x_label)}</text>'
            )
        if c.y_label:
            cx, cy = 16, self.plot_y + self.plot_h / 2
            self.parts.append(
                f'<text class="y-label" x="{cx}" y="{cy:.1f}" text-anchor="middle" '
                f'font-size="12" transform="rotate(-90 {cx} {cy:.1f})">{escape(c.y_label)}</text>'
            )

    def y_axis(self, ticks: list[float], py) -> None:
        x0 = self.plot_x
        self.parts.append(
            f'<line class="axis" x1="{x0}" y1="{self.plot_y}" x2="{x0}" '
            f'y2="{self.plot_y + self.plot_h}" stroke="#333333"/>'
        )
        for t in ticks:
            y = py(t)
            self.parts.append(
                f'<line class="ytick" x1="{x0 - 5}" y1="{_fmt(y)}" x2="{x0}" '
                f'y2="{_fmt(y)}" stroke="#333333"/>'
            )
            self.parts.append(
                f'<text class="ytick-label" x="{x0 - 9}" y="{_fmt(y)}" text-anchor="end" '
                f'dominant-baseline="middle" font-size="11">{escape(_fmt_tick(t))}</text>'
            )

    def x_axis_line(self) -> None:
        y0 = self.plot_y + self.plot_h
        self.parts.append(
            f'<line class="axis" x1="{self.plot_x}" y1="{y0}" '
            f'x2="{self.plot_x + self.plot_w}" y2="{y0}" stroke="#333333"/>'
        )

    def x_tick(self, x: float, label: str) -> None:
        y0 = self.plot_y + self.plot_h
        self.parts.append(
            f'<line class="xtick" x1="{_fmt(x)}" y1="{y0}" x2="{_fmt(x)}" '
            f'y2="{y0 + 5}" stroke="#333333"/>'
        )
        self.parts.append(
            f'<text class="xtick-label" x="{_fmt(x)}" y="{y0 + 18}" text-anchor="middle" '
            f'font-size="11">{escape(label)}</text>'
        )

    def legend(self) -> None:
        c = self.call
        if not c.legend or len(c.series) < 2:
            return
        for i, s in enumerate(c.series):
            color = c.colors[i % len(c.colors)]
            y = self.plot_y + 14 * i
            x = c.width - _MARGIN_RIGHT - 130
            self.parts.append(
                f'<rect class="legend-swatch" x="{x}" y="{y}" width="10" height="10" fill="{color}"/>'
            )
            self.parts.append(
                f'<text class="legend-label" x="{x + 14}" y="{y + 9}" font-size="11">{escape(s.name)}</text>'
            )

    def close(self) -> str:
        self.parts.append("</svg>")
        return "\n".join(self.parts)


def _y_scale(call: ChartCall, zero_baseline: bool):
    values = [v for s in call.series for v in s.y]
    lo, hi = min(values), max(values)
    if zero_baseline:
        lo, hi = min(lo, 0.0), max(hi, 0.0)
    ticks = nice_ticks(lo, hi)
    axis_lo, axis_hi = ticks[0], ticks[-1]
    if zero_baseline and axis_lo > 0:
        axis_lo = 0.0
    span = axis_hi - axis_lo or 1.0
    return axis_lo, axis_hi, span, [t for t in ticks if axis_lo <= t <= axis_hi]


def render(call: ChartCall) -> ChartAsset:
    """Render a validated call to deterministic SVG.

    Bar heights are linearly proportional to values with a zero baseline; pie
    arc angles are proportional to value/sum; line and scatter mark positions
    are linear in both axes.
    """
    if call.chart_type == "pie":
        svg = _render_pie(call)
    elif call.chart_type == "bar":
        svg = _render_bar(call)
    else:
        svg = _render_xy(call)
    return ChartAsset(
        svg=svg,
        width=call.width,
        height=call.height,
        data_digest=_digest(call.series),
    )


def _render_bar(call: ChartCall) -> str:
    cv = _Canvas(call)
    cv.chrome()
    axis_lo, axis_hi, span, ticks = _y_scale(call, zero_baseline=True)

    def py(v: float) -> float:
        return cv.plot_y + cv.plot_h * (axis_hi - v) / span

    cv.y_axis(ticks, py)
    cv.x_axis_line()
    n_slots = max(len(s.y) for s in call.series)
    n_series = len(call.series)
    slot_w = cv.plot_w / n_slots
    bar_w = slot_w * 0.8 / n_series
    for j in range(n_slots):
        cx = cv.plot_x + (j + 0.5) * slot_w
        label = ""
        for s in call.series:
            if j < len(s.x):
                label = str(s.x[j])
                break
        cv.x_tick(cx, label)
    zero_y = py(max(axis_lo, 0.0))
    for i, s in enumerate(call.series):
        color = call.colors[i % len(call.colors)]
        for j, v in enumerate(s.y):
            x = cv.plot_x + (j + 0.5) * slot_w - (0.4 * slot_w) + i * bar_w
            top = py(v) if v >= 0 else zero_y
            height = abs(py(v) - zero_y)
            cv.parts.append(
                f'<rect class="mark" data-series="{i}" data-index="{j}" '
                f'x="{_fmt(x)}" y="{_fmt(top)}" width="{_fmt(bar_w)}" '
                f'height="{_fmt(height)}" fill="{color}"/>'
            )
    cv.legend()
    return cv.close()


def _render_xy(call: ChartCall) -> str:
    cv = _Canvas(call)
    cv.chrome()
    axis_lo, axis_hi, span, ticks = _y_scale(call, zero_baseline=False)

    def py(v: float) -> float:
        return cv.plot_y + cv.plot_h * (axis_hi - v) / span

    cv.y_axis(ticks, py)
    cv.x_axis_line()
    numeric_x: Optional[list[list[float]]] = []
    for s in call.series:
        row = []
        for v in s.x:
            if isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(float(v)):
                row.append(float(v))
            else:
                numeric_x = None
                break
        if numeric_x is None:
            break
        numeric_x.append(row)
    if numeric_x is not None:
        all_x = [v for row in numeric_x for v in row]
        x_lo, x_hi = min(all_x), max(all_x)
        if x_hi == x_lo:
            x_hi = x_lo + 1.0
        x_span = x_hi - x_lo

        def px(i_series: int, j: int) -> float:
            return cv.plot_x + cv.plot_w * (numeric_x[i_series][j] - x_lo) / x_span

        for t in nice_ticks(x_lo, x_hi, max_ticks=8):
            if x_lo <= t <= x_hi:
                cv.x_tick(cv.plot_x + cv.plot_w * (t - x_lo) / x_span, _fmt_tick(t))
    else:
        n_slots = max(len(s.y) for s in call.series)
        slot_w = cv.plot_w / n_slots

        def px(i_series: int, j: int) -> float:
            return cv.plot_x + (j + 0.5) * slot_w

        for j in range(n_slots):
            label = ""
            for s in call.series:
                if j < len(s.x):
                    label = str(s.x[j])
                    break
            cv.x_tick(cv.plot_x + (j + 0.5) * slot_w, label)
    for i, s in enumerate(call.series):
        color = call.colors[i % len(call.colors)]
        points = [(px(i, j), py(v)) for j, v in enumerate(s.y)]
        if call.chart_type == "line" and len(points) > 1:
            path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
            cv.parts.append(
                f'<polyline class="series-line" data-series="{i}" points="{path}" '
                f'fill="none" stroke="{color}" stroke-width="2"/>'
            )
        for j, (x, y) in enumerate(points):
            cv.parts.append(
                f'<circle class="mark" data-series="{i}" data-index="{j}" '
                f'cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{color}"/>'
            )
    cv.legend()
    return cv.close()


def _render_pie(call: ChartCall) -> str:
    series = call.series[0]
    if any(v < 0 for v in series.y):
        raise RenderError("pie values must be non-negative")
    total = sum(series.y)
    if total <= 0:
        raise RenderError("pie values sum to zero")
    cv = _Canvas(call)
    cv.chrome()
    cx = call.width / 2.0
    cy = _MARGIN_TOP + cv.plot_h / 2.0
    radius = min(cv.plot_w, cv.plot_h) / 2.0 - 10
    angle = -90.0
    for j, v in enumerate(series.y):
        frac = v / total
        sweep = frac * 360.0
        color = call.colors[j % len(call.colors)]
        label = str(series.x[j]) if j < len(series.x) else ""
        if sweep >= 360.0 - 1e-9:
            cv.parts.append(
                f'<circle class="mark" data-index="{j}" data-sweep="{_fmt(sweep)}" '
                f'cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(radius)}" fill="{color}"/>'
            )
            angle += sweep
            continue
        a0 = math.radians(angle)
        a1 = math.radians(angle + sweep)
        x0, y0 = cx + radius * math.cos(a0), cy + radius * math.sin(a0)
        x1, y1 = cx + radius * math.cos(a1), cy + radius * math.sin(a1)
        large = 1 if sweep > 180.0 else 0
        cv.parts.append(
            f'<path class="mark" data-index="{j}" data-sweep="{_fmt(sweep)}" '
            f'd="M {_fmt(cx)} {_fmt(cy)} L {_fmt(x0)} {_fmt(y0)} '
            f'A {_fmt(radius)} {_fmt(radius)} 0 {large} 1 {_fmt(x1)} {_fmt(y1)} Z" '
            f'fill="{color}"/>'
        )
        mid = math.radians(angle + sweep / 2.0)
        lx, ly = cx + (radius + 14) * math.cos(mid), cy + (radius + 14) * math.sin(mid)
        if label:
            cv.parts.append(
                f'<text class="slice-label" x="{_fmt(lx)}" y="{_fmt(ly)}" '
                f'text-anchor="middle" font-size="11">{escape(label)}</text>'
            )
        angle += sweep
    return cv.close()


def call_to_dict(call: ChartCall) -> dict:
    return {
        "tool": "chart_tool",
        "chart_type": call.chart_type,
        "title": call.title,
        "x_label": call.x_label,
        "y_label": call.y_label,
        "series": [{"name": s.name, "x": list(s.x), "y": list(s.y)} for s in call.series],
        "options": {
            "legend": call.legend,
            "width": call.width,
            "height": call.height,
            "colors": list(call.colors),
        },
    }
