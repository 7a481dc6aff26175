"""Standalone SVG charts for the evaluation reports.

Hand-rolled so the bytes are a pure function of the numbers; no plotting
dependency, no embedded timestamps.
"""

from __future__ import annotations

from .core import HORIZONS

_COLORS = ("#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c")

_W, _H = 640, 360
_ML, _MR, _MT, _MB = 60, 20, 30, 50


def _svg_open(title: str) -> list:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
        f'height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<title>{title}</title>',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]


def _axis(parts, y_min, y_max, y_label):
    x0, x1 = _ML, _W - _MR
    y0, y1 = _H - _MB, _MT
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>'
    )
    for k in range(5):
        v = y_min + (y_max - y_min) * k / 4
        y = y0 - (y0 - y1) * k / 4
        parts.append(
            f'<text x="{x0 - 6}" y="{y + 4}" font-size="11" '
            f'text-anchor="end">{v:.3g}</text>'
        )
        parts.append(
            f'<line x1="{x0 - 3}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/>'
        )
    parts.append(
        f'<text x="14" y="{(_MT + _H - _MB) / 2}" font-size="12" '
        f'transform="rotate(-90 14 {(_MT + _H - _MB) / 2})" '
        f'text-anchor="middle">{y_label}</text>'
    )


def _scale(v, y_min, y_max):
    y0, y1 = _H - _MB, _MT
    if y_max <= y_min:
        return y0
    return y0 - (y0 - y1) * (v - y_min) / (y_max - y_min)


def metric_bars(metrics: dict, algorithms, metric: str, split: str,
                path) -> None:
    """Grouped bars: one cluster per horizon, one bar per algorithm."""
    values = {}
    for algo in algorithms:
        for h in HORIZONS:
            m = metrics[(algo, h, split)]
            values[(algo, h)] = getattr(m, metric)
    finite = [v for v in values.values() if v == v]
    v_max = max(finite + [0.0])
    v_min = min(finite + [0.0])
    pad = 0.05 * (v_max - v_min or 1.0)
    y_min, y_max = min(0.0, v_min - pad), v_max + pad

    parts = _svg_open(f"{metric.upper()} by horizon ({split})")
    _axis(parts, y_min, y_max, metric.upper())
    x0, x1 = _ML, _W - _MR
    group_w = (x1 - x0) / len(HORIZONS)
    bar_w = group_w * 0.8 / max(1, len(algorithms))
    base_y = _scale(0.0, y_min, y_max)
    for gi, h in enumerate(HORIZONS):
        gx = x0 + gi * group_w + group_w * 0.1
        for ai, algo in enumerate(algorithms):
            v = values[(algo, h)]
            if v != v:
                continue
            y = _scale(v, y_min, y_max)
            top, height = min(y, base_y), abs(base_y - y)
            parts.append(
                f'<rect x="{gx + ai * bar_w:.2f}" y="{top:.2f}" '
                f'width="{bar_w:.2f}" height="{height:.2f}" '
                f'fill="{_COLORS[ai % len(_COLORS)]}"/>'
            )
        parts.append(
            f'<text x="{gx + group_w * 0.4:.2f}" y="{_H - _MB + 16}" '
            f'font-size="11" text-anchor="middle">{6 * h} min</text>'
        )
    for ai, algo in enumerate(algorithms):
        lx = x0 + 10 + ai * 110
        parts.append(
            f'<rect x="{lx}" y="{_H - 18}" width="10" height="10" '
            f'fill="{_COLORS[ai % len(_COLORS)]}"/>'
        )
        parts.append(
            f'<text x="{lx + 14}" y="{_H - 9}" font-size="11">{algo}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def error_boxes(distributions: dict, algorithms, path) -> None:
    """Box-and-whisker chart of (actual - predicted) per model/horizon."""
    stats = [distributions[(a, h)] for a in algorithms for h in HORIZONS]
    y_min = min(d.minimum for d in stats)
    y_max = max(d.maximum for d in stats)
    pad = 0.05 * ((y_max - y_min) or 1.0)
    y_min, y_max = y_min - pad, y_max + pad

    parts = _svg_open("Prediction error distributions")
    _axis(parts, y_min, y_max, "actual - predicted")
    x0, x1 = _ML, _W - _MR
    group_w = (x1 - x0) / len(HORIZONS)
    slot_w = group_w * 0.8 / max(1, len(algorithms))
    for gi, h in enumerate(HORIZONS):
        gx = x0 + gi * group_w + group_w * 0.1
        for ai, algo in enumerate(algorithms):
            d = distributions[(algo, h)]
            cx = gx + (ai + 0.5) * slot_w
            half = slot_w * 0.35
            color = _COLORS[ai % len(_COLORS)]
            y_q1 = _scale(d.q1, y_min, y_max)
            y_q3 = _scale(d.q3, y_min, y_max)
            y_med = _scale(d.median, y_min, y_max)
            y_lo = _scale(d.whisker_low, y_min, y_max)
            y_hi = _scale(d.whisker_high, y_min, y_max)
            parts.append(
                f'<line x1="{cx:.2f}" y1="{y_lo:.2f}" x2="{cx:.2f}" '
                f'y2="{y_q1:.2f}" stroke="{color}"/>'
            )
            parts.append(
                f'<line x1="{cx:.2f}" y1="{y_q3:.2f}" x2="{cx:.2f}" '
                f'y2="{y_hi:.2f}" stroke="{color}"/>'
            )
            parts.append(
                f'<rect x="{cx - half:.2f}" y="{min(y_q1, y_q3):.2f}" '
                f'width="{2 * half:.2f}" height="{abs(y_q1 - y_q3):.2f}" '
                f'fill="none" stroke="{color}"/>'
            )
            parts.append(
                f'<line x1="{cx - half:.2f}" y1="{y_med:.2f}" '
                f'x2="{cx + half:.2f}" y2="{y_med:.2f}" stroke="{color}" '
                f'stroke-width="2"/>'
            )
        parts.append(
            f'<text x="{gx + group_w * 0.4:.2f}" y="{_H - _MB + 16}" '
            f'font-size="11" text-anchor="middle">{6 * h} min</text>'
        )
    for ai, algo in enumerate(algorithms):
        lx = x0 + 10 + ai * 110
        parts.append(
            f'<rect x="{lx}" y="{_H - 18}" width="10" height="10" '
            f'fill="{_COLORS[ai % len(_COLORS)]}"/>'
        )
        parts.append(
            f'<text x="{lx + 14}" y="{_H - 9}" font-size="11">{algo}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
