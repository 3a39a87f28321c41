"""
의존성 없는 SVG 꺾은선 차트

패널마다 시리즈별 꺾은선과 데이터 포인트(<circle>)를 그림.
좌표는 소수 둘째 자리로 고정하여 같은 입력이면 같은 바이트를 출력함.
"""

from dataclasses import dataclass, field
from html import escape
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

PANEL_WIDTH = 420
PANEL_HEIGHT = 300
MARGIN = 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


@dataclass
class ChartPanel:
    title: str
    x_label: str
    y_label: str
    series: Dict[str, List[Tuple[float, float]]] = field(default_factory=dict)


def _ticks(lo: float, hi: float, count: int = 5) -> List[float]:
    if hi == lo:
        return [lo]
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def _panel_svg(panel: ChartPanel, offset_x: int) -> List[str]:
    points = [p for pts in panel.series.values() for p in pts]
    xs = [p[0] for p in points] or [0.0, 1.0]
    ys = [p[1] for p in points] or [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(0.0, min(ys)), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    y_hi *= 1.05

    plot_w = PANEL_WIDTH - 2 * MARGIN
    plot_h = PANEL_HEIGHT - 2 * MARGIN

    def sx(x: float) -> float:
        return offset_x + MARGIN + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return MARGIN + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    out = [
        '<g class="panel">',
        f'<text x="{offset_x + PANEL_WIDTH / 2:.2f}" y="24" text-anchor="middle" font-size="14">{escape(panel.title)}</text>',
        f'<line x1="{sx(x_lo):.2f}" y1="{sy(y_lo):.2f}" x2="{sx(x_hi):.2f}" y2="{sy(y_lo):.2f}" stroke="#333"/>',
        f'<line x1="{sx(x_lo):.2f}" y1="{sy(y_lo):.2f}" x2="{sx(x_lo):.2f}" y2="{sy(y_hi):.2f}" stroke="#333"/>',
        f'<text x="{offset_x + PANEL_WIDTH / 2:.2f}" y="{PANEL_HEIGHT - 10}" text-anchor="middle" font-size="12">{escape(panel.x_label)}</text>',
        f'<text x="{offset_x + 14}" y="{PANEL_HEIGHT / 2:.2f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 {offset_x + 14} {PANEL_HEIGHT / 2:.2f})">{escape(panel.y_label)}</text>',
    ]
    for tick in sorted(set(xs)):
        out.append(
            f'<text x="{sx(tick):.2f}" y="{sy(y_lo) + 16:.2f}" text-anchor="middle" font-size="10">{tick:g}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        out.append(
            f'<text x="{sx(x_lo) - 6:.2f}" y="{sy(tick) + 3:.2f}" text-anchor="end" font-size="10">{tick:.2f}</text>'
        )

    for i, (name, pts) in enumerate(panel.series.items()):
        color = COLORS[i % len(COLORS)]
        ordered = sorted(pts)
        if len(ordered) > 1:
            path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in ordered)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{path}"/>')
        for x, y in ordered:
            out.append(
                f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}">'
                f"<title>{escape(name)} {x:g}: {y:.4f}</title></circle>"
            )
        out.append(
            f'<text x="{offset_x + PANEL_WIDTH - MARGIN:.2f}" y="{MARGIN + 14 * i:.2f}" text-anchor="end" '
            f'font-size="11" fill="{color}">{escape(name)}</text>'
        )
    out.append("</g>")
    return out


def render_line_chart(panels: Sequence[ChartPanel]) -> str:
    width = PANEL_WIDTH * max(len(panels), 1)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_HEIGHT}" '
        f'viewBox="0 0 {width} {PANEL_HEIGHT}">',
        f'<rect width="{width}" height="{PANEL_HEIGHT}" fill="white"/>',
    ]
    for i, panel in enumerate(panels):
        lines.extend(_panel_svg(panel, i * PANEL_WIDTH))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_line_chart(path: Union[str, Path], panels: Sequence[ChartPanel]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_line_chart(panels), encoding="utf-8")
    return path
