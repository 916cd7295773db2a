import xml.etree.ElementTree as ET

from shs_bench.svg_plot import bar_chart, line_chart, write_svg

SVG_NS = "{http://www.w3.org/2000/svg}"


def test_line_chart_is_valid_and_deterministic():
    series = {"hsj/dt": [(0, 80.0), (1, 60.0), (2, 20.0)], "zoo/rf": [(0, 40.0), (2, 10.0)]}
    svg = line_chart(series, "Device reduction", "devices removed", "success")
    assert svg == line_chart(series, "Device reduction", "devices removed", "success")
    root = ET.fromstring(svg)
    assert len(root.findall(f"{SVG_NS}polyline")) == 2
    assert len(root.findall(f"{SVG_NS}circle")) == 5


def test_bar_chart_has_one_bar_per_value():
    svg = bar_chart(["dt", "rf", "lr"], {"10%": [1.0, 2.0, 3.0], "30%": [4.0, 5.0, 6.0]}, "Drop", "pp")
    root = ET.fromstring(svg)
    # background, bars and two legend swatches
    assert len(root.findall(f"{SVG_NS}rect")) == 1 + 6 + 2


def test_titles_are_escaped_and_nan_is_tolerated():
    svg = bar_chart(["a<b"], {"x&y": [float("nan")]}, "A & B", "y")
    ET.fromstring(svg)
    assert "A &amp; B" in svg


def test_empty_series():
    ET.fromstring(line_chart({}, "empty", "x", "y"))


def test_write_svg(tmp_path):
    path = write_svg(line_chart({"s": [(0.1, 1.0)]}, "t", "x", "y"), tmp_path / "plots" / "p.svg")
    assert path.read_text(encoding="utf-8").startswith("<svg")
