import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lrising import reports

grids = arrays(np.int8, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=st.sampled_from([-1, 1]))


@given(g=grids, lo=st.tuples(st.integers(-50, 50), st.integers(-50, 50)))
@settings(max_examples=50, deadline=None)
def test_grid_text_round_trip(g, lo):
    lo2, g2 = reports.parse_grid_text(reports.grid_text(lo, g))
    assert lo2 == lo and np.array_equal(g2, g)


@given(g=grids)
@settings(max_examples=50, deadline=None)
def test_pgm_round_trip(g):
    assert np.array_equal(reports.read_pgm(reports.pgm_bytes(g)), g)


def test_grid_text_orientation():
    g = np.array([[1, -1], [1, 1]], dtype=np.int8)  # x = 0 column: (+ at y=0, - at y=1)
    assert reports.grid_text((0, 0), g) == "# lo 0 0 shape 2 2\n-+\n++\n"
    data = reports.pgm_bytes(g)
    assert data.startswith(b"P5\n2 2\n255\n")
    assert data[-4:] == bytes([0, 255, 255, 255])
    with pytest.raises(ValueError):
        reports.read_pgm(b"P2\n1 1\n255\n\x00")
    with pytest.raises(ValueError):
        reports.grid_text((0, 0, 0), np.ones((2, 2, 2)))


def test_csv_crlf_and_cells(tmp_path):
    p = tmp_path / "t.csv"
    reports.write_csv(p, ["a", "b", "c"], [[1, 0.1, True], ["x,y", 2.5, False]])
    assert p.read_bytes() == b'a,b,c\r\n1,0.1,true\r\n"x,y",2.5,false\r\n'


def test_json_plain_types(tmp_path):
    obj = {"f": Fraction(7, 2), "n": np.int64(3), "x": np.float64(0.5), "a": np.arange(3), "s": {2, 1}}
    text = reports.json_text(obj)
    assert json.loads(text) == {"f": "7/2", "n": 3, "x": 0.5, "a": [0, 1, 2], "s": [1, 2]}
    assert text.endswith("\n")
    with pytest.raises(TypeError):
        reports.json_text({"bad": object()})
