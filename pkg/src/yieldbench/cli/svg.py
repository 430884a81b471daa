"""Deterministic SVG plot emission.

Every coordinate goes through one fixed-precision formatter and all
iteration follows input order, so one spec always yields one byte
sequence. Colors follow the importance-bar convention: red for
positive association, blue for negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

RED = "#d62728"
BLUE = "#1f77b4"
GRAY = "#7f7f7f"

PLOT_KINDS = ("importance_bar", "force", "hexbin", "residual_hist", "loss_curve")


@dataclass
class PlotSpec:
    kind: str
    payload: dict
    width: int = 640
    height: int = 400
    title: str = ""

    def __post_init__(self) -> None:
        if self.kind not in PLOT_KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}")


def fmt(x: float) -> str:
    out = f"{float(x):.3f}"
    return "0.000" if out == "-0.000" else out


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def _doc(width: int, height: int, title: str, body: list[str]) -> str:
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    if title:
        head.append(f'<text x="{width // 2}" y="18" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="14">{_esc(title)}</text>')
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _text(x: float, y: float, s: str, size: int = 11, anchor: str = "start") -> str:
    return (f'<text x="{fmt(x)}" y="{fmt(y)}" text-anchor="{anchor}" '
            f'font-family="sans-serif" font-size="{size}">{_esc(s)}</text>')


def emit_svg(spec: PlotSpec) -> str:
    renderer = {
        "importance_bar": _importance_bar,
        "force": _force,
        "hexbin": _hexbin,
        "residual_hist": _residual_hist,
        "loss_curve": _loss_curve,
    }[spec.kind]
    return renderer(spec)


def _importance_bar(spec: PlotSpec) -> str:
    entries = spec.payload.get("entries", [])
    if not entries:
        raise ValueError("importance_bar needs at least one entry")
    w, h = spec.width, spec.height
    top, left = 30, 170
    row_h = (h - top - 10) / len(entries)
    bar_h = max(4.0, row_h * 0.7)
    vmax = max(e["mean_abs_phi"] for e in entries) or 1.0
    body = []
    for i, e in enumerate(entries):
        y = top + i * row_h
        length = (w - left - 60) * (e["mean_abs_phi"] / vmax)
        color = RED if e["sign"] > 0 else BLUE if e["sign"] < 0 else GRAY
        body.append(_text(left - 6, y + bar_h, e["feature"], anchor="end"))
        body.append(f'<rect x="{left}" y="{fmt(y + bar_h * 0.25)}" '
                    f'width="{fmt(length)}" height="{fmt(bar_h)}" fill="{color}"/>')
        body.append(_text(left + length + 4, y + bar_h, fmt(e["mean_abs_phi"])))
    return _doc(w, h, spec.title, body)


def _force(spec: PlotSpec) -> str:
    payload = spec.payload
    if "base" not in payload or "contributions" not in payload:
        raise ValueError("force plot needs base and contributions")
    base = float(payload["base"])
    contributions = [c for c in payload["contributions"] if c["phi"] != 0.0]
    w, h = spec.width, spec.height
    mid = h / 2
    positions = [base]
    for c in contributions:
        positions.append(positions[-1] + float(c["phi"]))
    lo, hi = min(positions), max(positions)
    span = (hi - lo) or 1.0
    pad = span * 0.15 + 1e-9

    def sx(v: float) -> float:
        return 50 + (w - 100) * (v - lo + pad) / (span + 2 * pad)

    body = [f'<line x1="{fmt(sx(base))}" y1="{fmt(mid - 60)}" '
            f'x2="{fmt(sx(base))}" y2="{fmt(mid + 60)}" stroke="{GRAY}" '
            f'stroke-dasharray="4 3"/>',
            _text(sx(base), mid - 66, f"base {fmt(base)}", anchor="middle")]
    if contributions:
        for i, c in enumerate(contributions):
            x0, x1 = sx(positions[i]), sx(positions[i + 1])
            color = RED if c["phi"] > 0 else BLUE
            body.append(f'<rect x="{fmt(min(x0, x1))}" y="{fmt(mid - 12)}" '
                        f'width="{fmt(abs(x1 - x0))}" height="24" fill="{color}" '
                        f'fill-opacity="0.6"/>')
            label = f'{c["feature"]}={fmt(c["value"])} ({fmt(c["phi"])})'
            ly = mid + 30 + 14 * (i % 3)
            body.append(_text((x0 + x1) / 2, ly, label, size=10, anchor="middle"))
        out = positions[-1]
        body.append(f'<line x1="{fmt(sx(out))}" y1="{fmt(mid - 60)}" '
                    f'x2="{fmt(sx(out))}" y2="{fmt(mid + 60)}" stroke="black"/>')
        body.append(_text(sx(out), mid - 80, f"output {fmt(out)}", anchor="middle"))
    return _doc(w, h, spec.title, body)


def _hex_corners(cx: float, cy: float, r: float) -> str:
    pts = []
    for k in range(6):
        ang = math.pi / 6 + k * math.pi / 3  # pointy-top
        pts.append(f"{fmt(cx + r * math.cos(ang))},{fmt(cy + r * math.sin(ang))}")
    return " ".join(pts)


def _hexbin(spec: PlotSpec) -> str:
    bins = spec.payload.get("bins", [])
    if not bins:
        raise ValueError("hexbin needs at least one bin")
    size = float(spec.payload.get("hex_size", 1.0))
    w, h = spec.width, spec.height
    margin = 50
    xs = [b["center_x"] for b in bins]
    ys = [b["center_y"] for b in bins]
    lo = min(min(xs), min(ys)) - 2 * size
    hi = max(max(xs), max(ys)) + 2 * size
    scale = min(w, h - 30) - 2 * margin
    span = (hi - lo) or 1.0

    def sx(v: float) -> float:
        return margin + scale * (v - lo) / span

    def sy(v: float) -> float:
        return (h - margin) - scale * (v - lo) / span

    cmax = max(b["count"] for b in bins)
    body = [f'<line x1="{fmt(sx(lo))}" y1="{fmt(sy(lo))}" x2="{fmt(sx(hi))}" '
            f'y2="{fmt(sy(hi))}" stroke="{GRAY}" stroke-dasharray="4 3"/>']
    pr = size * scale / span
    for b in bins:
        opacity = 0.15 + 0.85 * (b["count"] / cmax)
        body.append(f'<polygon points="{_hex_corners(sx(b["center_x"]), sy(b["center_y"]), pr)}" '
                    f'fill="{BLUE}" fill-opacity="{fmt(opacity)}" stroke="white" '
                    f'stroke-width="0.5"/>')
    body.append(_text(w / 2, h - 8, "observed", anchor="middle"))
    body.append(_text(14, h / 2, "predicted", anchor="middle"))
    return _doc(w, h, spec.title, body)


def _residual_hist(spec: PlotSpec) -> str:
    edges = spec.payload.get("edges", [])
    counts = spec.payload.get("counts", [])
    if len(edges) != len(counts) + 1 or not counts:
        raise ValueError("residual_hist needs edges (k+1) and counts (k)")
    w, h = spec.width, spec.height
    margin = 45
    cmax = max(counts) or 1
    lo, hi = edges[0], edges[-1]
    span = (hi - lo) or 1.0
    body = []
    for i, c in enumerate(counts):
        x0 = margin + (w - 2 * margin) * (edges[i] - lo) / span
        x1 = margin + (w - 2 * margin) * (edges[i + 1] - lo) / span
        bh = (h - margin - 40) * (c / cmax)
        body.append(f'<rect x="{fmt(x0)}" y="{fmt(h - margin - bh)}" '
                    f'width="{fmt(max(x1 - x0 - 1, 0.5))}" height="{fmt(bh)}" '
                    f'fill="{BLUE}"/>')
    body.append(_text(margin, h - margin + 16, fmt(lo)))
    body.append(_text(w - margin, h - margin + 16, fmt(hi), anchor="end"))
    body.append(_text(w / 2, h - 8, "residual (observed - predicted)", anchor="middle"))
    return _doc(w, h, spec.title, body)


def _loss_curve(spec: PlotSpec) -> str:
    train = spec.payload.get("train", [])
    val = spec.payload.get("val", [])
    if not train:
        raise ValueError("loss_curve needs a nonempty train series")
    w, h = spec.width, spec.height
    margin = 45
    all_vals = list(train) + list(val)
    lo, hi = min(all_vals), max(all_vals)
    span = (hi - lo) or 1.0
    n = max(len(train), len(val))

    def pts(series: list[float]) -> str:
        out = []
        for i, v in enumerate(series):
            x = margin + (w - 2 * margin) * (i / max(n - 1, 1))
            y = (h - margin) - (h - margin - 40) * (v - lo) / span
            out.append(f"{fmt(x)},{fmt(y)}")
        return " ".join(out)

    body = [f'<polyline points="{pts(train)}" fill="none" stroke="{BLUE}" '
            f'stroke-width="1.5"/>']
    if val:
        body.append(f'<polyline points="{pts(val)}" fill="none" stroke="{RED}" '
                    f'stroke-width="1.5"/>')
        body.append(_text(w - margin, 30, "validation", anchor="end"))
    body.append(_text(margin, 30, "train"))
    body.append(_text(w / 2, h - 8, "epoch", anchor="middle"))
    return _doc(w, h, spec.title, body)
