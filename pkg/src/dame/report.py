"""CSV and SVG output.

Every CSV starts with a ``# config: {...}`` line holding the resolved run
configuration, followed by a header and rows. Floats are written with 17
significant digits so :func:`read_csv` recovers them exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from typing import Any, Iterable, Mapping, Sequence

CONFIG_PREFIX = "# config: "

SIM_HEADER = ("algorithm", "param_name", "param_value", "n", "alpha", "trials", "mse", "ci99")
BOUNDS_HEADER = ("family", "param_name", "param_value", "n_alpha_sq", "lower", "lower_a", "upper", "m_tilde")


def dump_config(config: Mapping[str, Any]) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        text = format(v, ".17g")
        # keep floats distinguishable from ints on the way back in
        return text if any(c in text for c in ".ein") else text + ".0"
    if hasattr(v, "dtype"):
        return format_value(v.item())
    return str(v)


def parse_value(text: str) -> Any:
    if text in ("true", "false"):
        return text == "true"
    if text.lstrip("-").isdigit():
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def render_csv(header: Sequence[str], rows: Iterable[Mapping[str, Any]], config: Mapping[str, Any]) -> str:
    buf = io.StringIO()
    buf.write(CONFIG_PREFIX + dump_config(config) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(row[k]) for k in header])
    return buf.getvalue()


def parse_csv(text: str) -> tuple[dict[str, Any] | None, list[str], list[dict[str, Any]]]:
    """Inverse of :func:`render_csv`: (config, header, typed rows)."""
    config = None
    body = []
    for line in text.splitlines():
        if line.startswith(CONFIG_PREFIX):
            config = json.loads(line[len(CONFIG_PREFIX):])
        elif not line.startswith("#"):
            body.append(line)
    reader = csv.reader(body)
    header = next(reader, [])
    rows = [dict(zip(header, map(parse_value, r))) for r in reader if r]
    return config, header, rows


def read_csv(path: str | os.PathLike) -> tuple[dict[str, Any] | None, list[str], list[dict[str, Any]]]:
    with open(path, encoding="utf-8") as fh:
        return parse_csv(fh.read())


def write_text_atomic(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# SVG

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    """Tick positions in plot coordinates; decades when the axis is log10."""
    if log and math.ceil(lo) <= math.floor(hi):
        return [float(k) for k in range(math.ceil(lo), math.floor(hi) + 1)]
    step = (hi - lo) / 5 if hi > lo else 1.0
    return [lo + i * step for i in range(6)]


def render_svg(series: Mapping[str, Sequence[tuple[float, float]]], *, title: str = "", xlabel: str = "",
               ylabel: str = "", logx: bool = True, logy: bool = True, width: int = 640,
               height: int = 420) -> str:
    """Line chart with one polyline per series. Non-positive values are
    dropped on log axes."""
    def tx(v: float) -> float | None:
        if logx:
            return math.log10(v) if v > 0 else None
        return v

    def ty(v: float) -> float | None:
        if logy:
            return math.log10(v) if v > 0 else None
        return v

    pts = {}
    for name, data in series.items():
        keep = [(tx(x), ty(y)) for x, y in data]
        pts[name] = [(x, y) for x, y in keep if x is not None and y is not None and math.isfinite(y)]
    xs = [x for p in pts.values() for x, _ in p]
    ys = [y for p in pts.values() for _, y in p]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml + pw / 2:.1f}" y="20" text-anchor="middle" font-size="13">{_esc(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for t in _ticks(x0, x1, logx):
        if x0 <= t <= x1:
            label = _fmt_tick(10**t if logx else t)
            out.append(f'<line x1="{px(t):.1f}" y1="{mt + ph}" x2="{px(t):.1f}" y2="{mt + ph + 4}" stroke="#444"/>')
            out.append(f'<text x="{px(t):.1f}" y="{mt + ph + 16}" text-anchor="middle">{label}</text>')
    for t in _ticks(y0, y1, logy):
        if y0 <= t <= y1:
            label = _fmt_tick(10**t if logy else t)
            out.append(f'<line x1="{ml - 4}" y1="{py(t):.1f}" x2="{ml}" y2="{py(t):.1f}" stroke="#444"/>')
            out.append(f'<text x="{ml - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for i, (name, p) in enumerate(pts.items()):
        color = _PALETTE[i % len(_PALETTE)]
        if p:
            coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in p)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{coords}"/>')
        ly = mt + 14 + 18 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly + 4}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _fmt_tick(v: float) -> str:
    return format(v, ".3g")


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
