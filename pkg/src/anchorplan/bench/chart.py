"""Per-step success-rate chart as a hand-built SVG."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from ..env import MEMORY_STEPS, N_STEPS

WIDTH, HEIGHT = 560, 320
LEFT, RIGHT, TOP, BOTTOM = 56, 140, 24, 44
GOLD = "#f3d98b"
PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def render_svg(report: dict) -> str:
    """SVG text for the report's per-step SR vectors. Same report, same bytes."""
    variants = report.get("variants") or []
    if not variants:
        raise ValueError("report has no variants to chart")
    plot_w = WIDTH - LEFT - RIGHT
    plot_h = HEIGHT - TOP - BOTTOM
    slot = plot_w / N_STEPS

    def x_of(step: int) -> float:
        return LEFT + (step - 0.5) * slot

    def y_of(sr: float) -> float:
        return TOP + (1.0 - sr) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    for step in MEMORY_STEPS:
        parts.append(
            f'<rect class="memory-step" x="{_fmt(LEFT + (step - 1) * slot)}" y="{TOP}" width="{_fmt(slot)}" '
            f'height="{plot_h}" fill="{GOLD}" fill-opacity="0.5"/>'
        )
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = _fmt(y_of(tick))
        parts.append(f'<line x1="{LEFT}" y1="{y}" x2="{LEFT + plot_w}" y2="{y}" stroke="#dddddd"/>')
        parts.append(f'<text x="{LEFT - 6}" y="{y}" font-size="11" text-anchor="end" dominant-baseline="middle">{tick:.2f}</text>')
    for step in range(1, N_STEPS + 1):
        parts.append(
            f'<text x="{_fmt(x_of(step))}" y="{TOP + plot_h + 16}" font-size="11" text-anchor="middle">{step}</text>'
        )
    parts.append(f'<text x="{_fmt(LEFT + plot_w / 2)}" y="{HEIGHT - 8}" font-size="12" text-anchor="middle">step</text>')
    parts.append(
        f'<text x="14" y="{_fmt(TOP + plot_h / 2)}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {_fmt(TOP + plot_h / 2)})">success rate</text>'
    )
    parts.append(f'<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>')

    for i, row in enumerate(variants):
        srs = row["per_step_sr"]
        if len(srs) != N_STEPS:
            raise ValueError(f"variant {row['variant']!r} has {len(srs)} per-step values, expected {N_STEPS}")
        color = PALETTE[i % len(PALETTE)]
        name = escape(str(row["variant"]))
        points = " ".join(f"{_fmt(x_of(s + 1))},{_fmt(y_of(v))}" for s, v in enumerate(srs))
        parts.append(f'<g class="series" data-variant="{name}">')
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>')
        for s, v in enumerate(srs):
            parts.append(
                f'<circle cx="{_fmt(x_of(s + 1))}" cy="{_fmt(y_of(v))}" r="3.5" fill="{color}">'
                f"<title>{name} step {s + 1}: {v:.3f}</title></circle>"
            )
        parts.append("</g>")
        ly = TOP + 14 + 18 * i
        lx = LEFT + plot_w + 14
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 24}" y="{ly}" font-size="11" dominant-baseline="middle">{name}</text>')
    ly = TOP + 14 + 18 * len(variants)
    lx = LEFT + plot_w + 14
    parts.append(f'<rect x="{lx}" y="{ly - 6}" width="18" height="12" fill="{GOLD}"/>')
    parts.append(f'<text x="{lx + 24}" y="{ly}" font-size="11" dominant-baseline="middle">memory step</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_chart(report: dict, path: str | Path) -> None:
    svg = render_svg(report)  # raises before anything touches the filesystem
    Path(path).write_text(svg)
