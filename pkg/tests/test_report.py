import math
import os
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dame.report import (
    SIM_HEADER,
    format_value,
    parse_csv,
    parse_value,
    read_csv,
    render_csv,
    render_svg,
    write_text_atomic,
)


@given(st.floats(allow_nan=False))
def test_float_round_trip_is_exact(x):
    text = format_value(x)
    back = parse_value(text)
    assert isinstance(back, float)
    assert back == x and math.copysign(1, back) == math.copysign(1, x)


@given(st.integers(-(2**63), 2**63))
def test_int_round_trip(k):
    assert parse_value(format_value(k)) == k


def test_value_formats():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(5.0) == "5.0"
    assert format_value(True) == "true"
    assert parse_value("dame") == "dame"
    assert math.isnan(parse_value(format_value(float("nan"))))


def test_csv_round_trip():
    rows = [
        {"algorithm": "dame", "param_name": "rho", "param_value": 1 / 3, "n": 10, "alpha": 22 / 35,
         "trials": 4, "mse": 1e-300, "ci99": math.inf},
        {"algorithm": "duchi_item", "param_name": "rho", "param_value": 0.0, "n": 10, "alpha": 0.6,
         "trials": 4, "mse": 0.25, "ci99": 0.125},
    ]
    config = {"command": "simulate", "params": {"x": [1, 2]}, "seed": 9}
    text = render_csv(SIM_HEADER, rows, config)
    assert text.startswith('# config: {"command":"simulate"')
    cfg, header, back = parse_csv(text)
    assert cfg == config
    assert header == list(SIM_HEADER)
    assert back == rows


def test_atomic_write(tmp_path):
    target = tmp_path / "out.csv"
    write_text_atomic(target, "a\n")
    write_text_atomic(target, "b\n")
    assert target.read_text() == "b\n"
    assert os.listdir(tmp_path) == ["out.csv"]
    cfg, header, rows = read_csv(target)
    assert cfg is None and header == ["b"] and rows == []


def test_atomic_write_missing_directory(tmp_path):
    with pytest.raises(OSError):
        write_text_atomic(tmp_path / "nope" / "out.csv", "x")


def test_svg_is_well_formed():
    svg = render_svg({"upper": [(5, 1.0), (50, 0.1), (500, 0.01)], "lower <a>": [(5, 1e-8), (500, 1e-10)]},
                     title="bounds & more", xlabel="lambda", ylabel="risk")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 2


def test_svg_handles_nonpositive_on_log_axes():
    svg = render_svg({"a": [(0.0, 1.0), (1.0, 0.0), (2.0, 3.0)]}, logx=False, logy=True)
    ET.fromstring(svg)
