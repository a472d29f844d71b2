import json
import re

import numpy as np
import pytest

from effnoise.reporting import (
    SCHEMA_VERSION,
    HistogramTable,
    dumps,
    emit_histogram,
    emit_results,
    histogram_table,
    read_histogram_csv,
    render_svg,
    size_power_table,
)


def test_one_series_two_bins_gives_two_bars(tmp_path):
    table = HistogramTable([0.0, 0.5, 1.0], {"ours": [3, 1]})
    svg_path, csv_path = emit_histogram(table, tmp_path / "h.svg")
    svg = svg_path.read_text()
    assert svg.startswith("<?xml") and "<svg" in svg and svg.rstrip().endswith("</svg>")
    group = re.search(r'<g data-series="ours".*?</g>', svg, re.S).group(0)
    assert group.count('<rect class="bar"') == 2
    assert csv_path.suffix == ".csv" and csv_path.exists()


def test_marker_is_vertical_line():
    table = HistogramTable([0.0, 1.0, 2.0], {"lambda_hat": [4, 6]}, markers={"lambda_star": 1.25})
    svg = render_svg(table)
    m = re.search(r'<line class="marker" data-label="lambda_star" x1="([\d.]+)" y1="[\d.]+" x2="([\d.]+)"[^>]*stroke="red"', svg)
    assert m and m.group(1) == m.group(2)


def test_svg_has_no_timestamp_and_is_deterministic():
    table = histogram_table({"a": [0.1, 0.2, 0.9], "b": [0.5]}, bins=4)
    assert render_svg(table) == render_svg(table)
    assert "date" not in render_svg(table).lower()


def test_histogram_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    table = histogram_table(
        {"ours": rng.random(50), "oracle": rng.random(50), "cv": rng.random(50) * 1.3},
        bins=7, markers={"lambda_star": 0.4}, title="l1 loss",
    )
    _, csv_path = emit_histogram(table, tmp_path / "t.svg")
    assert read_histogram_csv(csv_path) == table


def test_counts_sum_to_series_size_even_out_of_range():
    vals = [-1.0, 0.2, 0.5, 3.0, 10.0]
    table = histogram_table({"x": vals}, bins=3, x_range=(0.0, 2.0))
    assert table.counts["x"].sum() == len(vals)
    assert table.bin_edges[0] == 0.0 and table.bin_edges[-1] == 2.0


def test_empty_table_is_an_error(tmp_path):
    with pytest.raises(ValueError):
        histogram_table({})
    with pytest.raises(ValueError):
        emit_histogram(HistogramTable([0.0, 1.0], {}), tmp_path / "x.svg")
    with pytest.raises(ValueError):
        HistogramTable([0.0, 1.0], {"a": [1, 2]})


def test_json_floats_and_order(tmp_path):
    x = 0.1 + 0.2
    path = emit_results({"b": x, "a": [1, 2.5], "nested": {"z": None, "y": True}}, tmp_path / "r.json")
    text = path.read_text()
    assert text.splitlines()[1].strip() == f'"schema_version": "{SCHEMA_VERSION}",'
    assert "0.30000000000000004" in text
    back = json.loads(text)
    assert back["b"] == x
    assert list(back) == ["schema_version", "b", "a", "nested"]
    assert dumps({"v": float("nan")}).strip().endswith('"v": null\n}'.strip())


@pytest.mark.parametrize("x", [1e-300, 5e-324, 1.7976931348623157e308, -0.0, 2.0 / 3.0, 123456789.123456789])
def test_json_float_round_trip(x):
    assert json.loads(dumps([x]))[0] == x


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_results({"a": 1}, tmp_path / "missing" / "r.json")


def test_size_power_table_layout():
    rows = []
    for snr in (0.0, 0.1):
        for alpha in (0.01, 0.05):
            for method in ("feasible", "oracle"):
                for n, p in ((500, 250), (500, 500)):
                    rows.append({"n": n, "p": p, "snr": snr, "alpha": alpha, "method": method,
                                 "rate": 0.5 if method == "oracle" else 0.25})
    text = size_power_table(rows)
    panels = [blk for blk in text.split("\n\n") if blk.strip()]
    assert len(panels) == 2
    assert panels[0].startswith("SNR = 0 ") and panels[1].startswith("SNR = 0.1 ")
    lines = panels[0].splitlines()
    assert lines[2].count("a=0.01") == 2 and lines[2].count("a=0.05") == 2
    body = lines[3:]
    assert [b.split("|")[0].strip() for b in body] == ["(500, 250)", "(500, 500)"]
    assert body[0].split("|")[1].split() == ["0.250", "0.250"]
    assert body[0].split("|")[2].split() == ["0.500", "0.500"]
