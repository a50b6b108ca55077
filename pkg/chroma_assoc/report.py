"""Static SVG charts: per-concept distribution bars, grouped correlation bars, scatter plots."""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape, quoteattr

from chroma_assoc.colorlib import ColorLibrary
from chroma_assoc.estimator import AssociationDistribution

FONT = "font-family=\"Helvetica, Arial, sans-serif\""
AXIS_COLOR = "#333333"
GRID_COLOR = "#DDDDDD"
SPLIT_HALF_COLOR = "#008080"
CRITICAL_COLOR = "#999999"
# Bar fills for successive runs in a grouped chart
RUN_FILLS = ("#D0D0D0", "#8C8C8C", "#484848", "#B0C4DE", "#708090")


class SVG:
    """Accumulates SVG elements; get_svg() closes the document."""

    def __init__(self, width: float, height: float) -> None:
        self.width = width
        self.height = height
        self._parts = [
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n',
            f'<svg version="1.1" width="{width:.0f}" height="{height:.0f}" '
            f'viewBox="0 0 {width:.0f} {height:.0f}" xmlns="http://www.w3.org/2000/svg">\n',
        ]

    def group_start(self, id: str | None = None, title: str | None = None) -> None:
        attr = f" id={quoteattr(id)}" if id else ""
        self._parts.append(f"<g{attr}>\n")
        if title:
            self._parts.append(f"<title>{escape(title)}</title>\n")

    def group_end(self) -> None:
        self._parts.append("</g>\n")

    def filled_rectangle(self, x1: float, y1: float, x2: float, y2: float, fill: str, title: str | None = None) -> None:
        x, y = min(x1, x2), min(y1, y2)
        w, h = abs(x2 - x1), abs(y2 - y1)
        head = f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="{fill}"'
        if title:
            self._parts.append(f"{head}><title>{escape(title)}</title></rect>\n")
        else:
            self._parts.append(f"{head}/>\n")

    def line(self, x1: float, y1: float, x2: float, y2: float, stroke: str = AXIS_COLOR, width: float = 1.0, dash: str | None = None) -> None:
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self._parts.append(
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="{stroke}" stroke-width="{width:g}"{extra}/>\n'
        )

    def circle(self, cx: float, cy: float, r: float, fill: str, title: str | None = None) -> None:
        head = f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r:g}" fill="{fill}" stroke="{AXIS_COLOR}" stroke-width="0.5"'
        if title:
            self._parts.append(f"{head}><title>{escape(title)}</title></circle>\n")
        else:
            self._parts.append(f"{head}/>\n")

    def text(self, x: float, y: float, string: str, *, size: int = 11, anchor: str = "start", rotate: float | None = None) -> None:
        transform = f' transform="rotate({rotate:g} {x:.2f} {y:.2f})"' if rotate is not None else ""
        self._parts.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" text-anchor="{anchor}" {FONT}{transform}>{escape(string)}</text>\n'
        )

    def get_svg(self) -> str:
        return "".join(self._parts) + "</svg>\n"


def _y_axis(svg: SVG, left: float, top: float, bottom: float, right: float, lo: float, hi: float, ticks: int = 5) -> None:
    for i in range(ticks + 1):
        v = lo + (hi - lo) * i / ticks
        y = bottom - (bottom - top) * i / ticks
        svg.line(left, y, right, y, stroke=GRID_COLOR, width=0.5)
        svg.text(left - 4, y + 4, f"{v:.1f}", size=9, anchor="end")
    svg.line(left, top, left, bottom)
    svg.line(left, bottom, right, bottom)


def distribution_chart(
    dist: AssociationDistribution,
    library: ColorLibrary,
    *,
    human_means: Sequence[float] | None = None,
    bar_width: float = 10.0,
    height: float = 260.0,
) -> str:
    """
    One bar per library color, filled with that color, height = association.
    Colors appear in sorted-position order. Human means, when given, are dots.
    The only rect elements in the document are the bars.
    """
    left, right, top, bottom_pad = 40.0, 10.0, 30.0, 20.0
    n = len(library)
    width = left + right + n * bar_width
    bottom = height - bottom_pad
    plot_h = bottom - top
    svg = SVG(width, height)
    svg.text(width / 2, 18, dist.concept, size=13, anchor="middle")
    _y_axis(svg, left, top, bottom, width - right, 0.0, 1.0)
    order = sorted(range(n), key=lambda i: (library.colors[i].sorted_position, library.colors[i].index))
    svg.group_start("bars")
    for slot, i in enumerate(order):
        c = library.colors[i]
        v = dist.values[i]
        v = 0.0 if math.isnan(v) else v
        x = left + slot * bar_width
        svg.filled_rectangle(x + 0.5, bottom - v * plot_h, x + bar_width - 0.5, bottom, c.hex, title=f"{c.index} {c.hex}: {v:.3f}")
    svg.group_end()
    if human_means is not None:
        svg.group_start("human")
        for slot, i in enumerate(order):
            x = left + slot * bar_width + bar_width / 2
            svg.circle(x, bottom - float(human_means[i]) * plot_h, 2.0, "#FFFFFF")
        svg.group_end()
    return svg.get_svg()


def correlation_chart(
    concepts: Sequence[str],
    runs: Mapping[str, Mapping[str, float]],
    *,
    split_half: Mapping[str, float] | None = None,
    critical_r: float | None = None,
    group_width: float = 28.0,
    height: float = 320.0,
) -> str:
    """Grouped bars of model-human r per concept, one bar per run, with split-half markers."""
    left, right, top, bottom_pad = 40.0, 120.0, 30.0, 80.0
    width = left + right + max(1, len(concepts)) * group_width
    bottom = height - bottom_pad
    plot_h = bottom - top
    lo = min([0.0] + [v for r in runs.values() for v in r.values()])
    lo = math.floor(lo * 5) / 5
    span = 1.0 - lo

    def y_of(v: float) -> float:
        return bottom - (v - lo) / span * plot_h

    svg = SVG(width, height)
    svg.text(left, 18, "Correlation with mean human ratings", size=13)
    _y_axis(svg, left, top, bottom, left + len(concepts) * group_width, lo, 1.0)
    names = list(runs)
    bar_w = (group_width - 6.0) / max(1, len(names))
    for ci, concept in enumerate(concepts):
        gx = left + ci * group_width + 3.0
        for ri, name in enumerate(names):
            r = runs[name].get(concept)
            if r is None:
                continue
            x = gx + ri * bar_w
            svg.filled_rectangle(x, y_of(max(r, lo)), x + bar_w, y_of(max(0.0, lo)), RUN_FILLS[ri % len(RUN_FILLS)], title=f"{concept} {name}: r = {r:.3f}")
        if split_half and concept in split_half:
            y = y_of(split_half[concept])
            svg.line(gx - 1, y, gx + len(names) * bar_w + 1, y, stroke=SPLIT_HALF_COLOR, width=2.0)
        svg.text(gx + group_width / 2, bottom + 8, concept, size=9, anchor="end", rotate=-60)
    if critical_r is not None:
        y = y_of(critical_r)
        svg.line(left, y, left + len(concepts) * group_width, y, stroke=CRITICAL_COLOR, width=1.0, dash="4 3")
    lx = width - right + 10
    for ri, name in enumerate(names):
        svg.circle(lx + 5, top + 10 + ri * 16, 5, RUN_FILLS[ri % len(RUN_FILLS)])
        svg.text(lx + 14, top + 14 + ri * 16, name, size=10)
    if split_half:
        y = top + 10 + len(names) * 16
        svg.line(lx, y, lx + 10, y, stroke=SPLIT_HALF_COLOR, width=2.0)
        svg.text(lx + 14, y + 4, "split-half", size=10)
    return svg.get_svg()


def scatter_chart(
    xs: Sequence[float],
    ys: Sequence[float],
    labels: Sequence[str],
    *,
    x_label: str,
    y_label: str,
    size: float = 320.0,
) -> str:
    """Labeled scatter plot; axes span the data with 5% padding."""
    pad = 45.0
    svg = SVG(size, size)
    if not xs:
        svg.text(size / 2, size / 2, "no data", anchor="middle")
        return svg.get_svg()

    def _span(vals: Sequence[float]) -> tuple[float, float]:
        lo, hi = min(vals), max(vals)
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        margin = (hi - lo) * 0.05
        return lo - margin, hi + margin

    x0, x1 = _span(xs)
    y0, y1 = _span(ys)
    inner = size - 2 * pad
    svg.line(pad, size - pad, size - pad, size - pad)
    svg.line(pad, pad, pad, size - pad)
    svg.text(size / 2, size - 10, x_label, anchor="middle")
    svg.text(14, size / 2, y_label, anchor="middle", rotate=-90)
    for v, anchor_x in ((x0, pad), (x1, size - pad)):
        svg.text(anchor_x, size - pad + 14, f"{v:.2f}", size=9, anchor="middle")
    for v, anchor_y in ((y0, size - pad), (y1, pad)):
        svg.text(pad - 4, anchor_y + 3, f"{v:.2f}", size=9, anchor="end")
    for x, y, label in zip(xs, ys, labels):
        cx = pad + (x - x0) / (x1 - x0) * inner
        cy = size - pad - (y - y0) / (y1 - y0) * inner
        svg.circle(cx, cy, 3.0, "#4682B4", title=f"{label}: ({x:.3f}, {y:.3f})")
    return svg.get_svg()
