import xml.etree.ElementTree as ET

import numpy as np

from chroma_assoc.estimator import AssociationDistribution
from chroma_assoc.report import SPLIT_HALF_COLOR, correlation_chart, distribution_chart, scatter_chart

SVG_NS = "{http://www.w3.org/2000/svg}"


def _parse(svg: str) -> ET.Element:
    return ET.fromstring(svg.encode("utf-8"))


def test_distribution_chart_has_one_bar_per_color(uw71):
    values = tuple(c.lab.L / 100.0 for c in uw71)
    svg = distribution_chart(AssociationDistribution("night", uw71.name, values, 1), uw71)
    rects = _parse(svg).findall(f".//{SVG_NS}rect")
    assert len(rects) == 71
    assert sorted(r.get("fill") for r in rects) == sorted(uw71.hexes)


def test_bars_follow_sorted_position(uw71):
    values = tuple(0.5 for _ in uw71)
    rects = _parse(distribution_chart(AssociationDistribution("x", uw71.name, values, 1), uw71)).findall(f".//{SVG_NS}rect")
    xs = [float(r.get("x")) for r in rects]
    assert xs == sorted(xs)
    by_position = sorted(uw71, key=lambda c: (c.sorted_position, c.index))
    assert [r.get("fill") for r in rects] == [c.hex for c in by_position]


def test_bar_height_tracks_value(grays):
    svg = distribution_chart(AssociationDistribution("x", grays.name, (0.0, 0.5, 1.0), 1), grays)
    heights = [float(r.get("height")) for r in _parse(svg).findall(f".//{SVG_NS}rect")]
    assert heights[0] == 0.0
    assert heights[2] == 2 * heights[1]


def test_human_means_are_dots_not_bars(grays):
    svg = distribution_chart(
        AssociationDistribution("x", grays.name, (0.2, 0.5, 0.8), 1), grays, human_means=np.array([0.1, 0.4, 0.9])
    )
    root = _parse(svg)
    assert len(root.findall(f".//{SVG_NS}rect")) == 3
    assert len(root.findall(f".//{SVG_NS}circle")) == 3


def test_correlation_chart_marks_split_half():
    runs = {"single": {"apple": 0.9, "sky": 0.6}, "anchored": {"apple": 0.85, "sky": 0.7}}
    svg = correlation_chart(["apple", "sky"], runs, split_half={"apple": 0.95, "sky": 0.93}, critical_r=0.45)
    root = _parse(svg)
    assert len(root.findall(f".//{SVG_NS}rect")) == 4
    split_lines = [ln for ln in root.findall(f".//{SVG_NS}line") if ln.get("stroke") == SPLIT_HALF_COLOR]
    # one per concept plus the legend entry
    assert len(split_lines) == 3
    texts = [t.text for t in root.findall(f".//{SVG_NS}text")]
    assert "apple" in texts and "anchored" in texts


def test_charts_escape_labels():
    svg = scatter_chart([1.0, 2.0], [0.5, 0.7], ["a<b", "c&d"], x_label="x & y", y_label="r")
    root = _parse(svg)
    titles = [t.text for t in root.iter(f"{SVG_NS}title")]
    assert any(t.startswith("a<b") for t in titles)


def test_scatter_handles_empty_and_constant_data():
    assert "no data" in scatter_chart([], [], [], x_label="x", y_label="y")
    root = _parse(scatter_chart([1.0, 1.0], [2.0, 2.0], ["p", "q"], x_label="x", y_label="y"))
    assert len(root.findall(f".//{SVG_NS}circle")) == 2
