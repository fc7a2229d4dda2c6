"""
Dependency-free SVG line charts of evaluation curves.

Output is deterministic: the same series produce byte-identical files.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

PALETTE = ("#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f")

Series = Sequence[Tuple[float, float]]


def _esc(text: str) -> str:
    return (
        (text or "")
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _empty_svg(title: str, width: int, height: int, message: str) -> str:
    return "\n".join(
        [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" role="img" aria-label="{_esc(title)}">',
            f"<title>{_esc(title)}</title>",
            '<rect width="100%" height="100%" fill="white"/>',
            f'<text x="{width/2:.1f}" y="{height/2:.1f}" text-anchor="middle" font-size="12" fill="#666">{_esc(message)}</text>',
            "</svg>",
        ]
    )


def line_chart_svg(
    title: str,
    series: Dict[str, Series],
    x_label: str = "env steps",
    y_label: str = "return",
    width: int = 720,
    height: int = 400,
) -> str:
    """
    Polyline chart with one line per named series, axes with min/max ticks and a legend

    Args:
        title: chart title
        series: label -> [(x, y), ...]
        x_label: x axis caption
        y_label: y axis caption
        width: SVG width in pixels
        height: SVG height in pixels

    Returns:
        SVG markup
    """
    points = [p for values in series.values() for p in values]
    if not points:
        return _empty_svg(title, width, height, "No data available")
    pad_left, pad_right, pad_top, pad_bottom = 70, 160, 40, 50
    plot_w = width - pad_left - pad_right
    plot_h = height - pad_top - pad_bottom
    min_x, max_x = min(p[0] for p in points), max(p[0] for p in points)
    min_y, max_y = min(p[1] for p in points), max(p[1] for p in points)
    span_x = (max_x - min_x) or 1.0
    span_y = (max_y - min_y) or 1.0

    def to_px(x: float, y: float) -> Tuple[float, float]:
        return pad_left + (x - min_x) / span_x * plot_w, pad_top + plot_h - (y - min_y) / span_y * plot_h

    bottom = pad_top + plot_h
    lines: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" role="img" aria-label="{_esc(title)}">',
        f"<title>{_esc(title)}</title>",
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width/2:.1f}" y="22" text-anchor="middle" font-size="14">{_esc(title)}</text>',
        f'<line x1="{pad_left}" y1="{pad_top}" x2="{pad_left}" y2="{bottom}" stroke="#111"/>',
        f'<line x1="{pad_left}" y1="{bottom}" x2="{pad_left + plot_w}" y2="{bottom}" stroke="#111"/>',
        f'<text x="{pad_left}" y="{bottom + 16}" font-size="10" text-anchor="middle">{min_x:g}</text>',
        f'<text x="{pad_left + plot_w}" y="{bottom + 16}" font-size="10" text-anchor="middle">{max_x:g}</text>',
        f'<text x="{pad_left - 6}" y="{bottom}" font-size="10" text-anchor="end">{min_y:.3g}</text>',
        f'<text x="{pad_left - 6}" y="{pad_top + 4}" font-size="10" text-anchor="end">{max_y:.3g}</text>',
        f'<text x="{pad_left + plot_w/2:.1f}" y="{height - 12}" font-size="12" text-anchor="middle">{_esc(x_label)}</text>',
        f'<text transform="translate(18,{pad_top + plot_h/2:.1f}) rotate(-90)" font-size="12" text-anchor="middle">{_esc(y_label)}</text>',
    ]
    for i, (label, values) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        if values:
            coords = " ".join(f"{px:.1f},{py:.1f}" for px, py in (to_px(x, y) for x, y in sorted(values)))
            lines.append(f'<polyline points="{coords}" stroke="{color}" stroke-width="1.5" fill="none"/>')
        legend_y = pad_top + 14 * i + 6
        lines.append(
            f'<line x1="{pad_left + plot_w + 12}" y1="{legend_y}" x2="{pad_left + plot_w + 30}" y2="{legend_y}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        lines.append(f'<text x="{pad_left + plot_w + 34}" y="{legend_y + 4}" font-size="10">{_esc(label)}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_line_chart(path: Union[str, Path], title: str, series: Dict[str, Series], **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(line_chart_svg(title, series, **kwargs), encoding="utf-8")
    return path
