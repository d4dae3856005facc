import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from csmark import io
from csmark.censoring import Observation
from csmark.errors import DataValidationError, ParseError
from csmark.grid import BinWeights, make_grid


def test_observations_round_trip(tmp_path):
    data = [Observation(0.1, 0.0), Observation(1 / 3, 1.2345678901234567), Observation(1.0, 2.0)]
    path = tmp_path / "d.csv"
    io.write_observations(path, data)
    assert path.read_text().splitlines()[0] == "t,z"
    assert io.read_observations(path) == data


def test_observation_parse_errors(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("t,z\n0.1,0\n0.2\n")
    with pytest.raises(ParseError, match="line 3"):
        io.read_observations(path)
    path.write_text("t,z\n0.1,abc\n")
    with pytest.raises(ParseError, match="line 2"):
        io.read_observations(path)
    path.write_text("time,mark\n")
    with pytest.raises(ParseError, match="line 1"):
        io.read_observations(path)
    path.write_text("t,z\n0.1,0\n-0.5,1\n")
    with pytest.raises(DataValidationError, match="line 3"):
        io.read_observations(path)


@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_weights_round_trip(j, k, data):
    raw = data.draw(arrays(float, j * k, elements=st.floats(0.001, 1.0)))
    w = BinWeights.normalized(raw)
    g = make_grid(1, 2, j, k)
    import tempfile
    with tempfile.TemporaryDirectory() as d:
        path = f"{d}/w.csv"
        io.write_weights(path, w, g)
        back, g2 = io.read_weights(path)
    assert g2 == g
    assert np.array_equal(back.theta, w.theta)


def test_weights_layout(tmp_path):
    g = make_grid(1, 2, 3, 2)
    w = BinWeights.normalized(np.arange(1, 7))
    io.write_weights(tmp_path / "w.csv", w, g)
    lines = (tmp_path / "w.csv").read_text().splitlines()
    # line k holds mark row k, columns are time bins
    assert len(lines) == 2 and len(lines[0].split(",")) == 3
    assert float(lines[1].split(",")[0]) == pytest.approx(4 / 21)


def test_weight_parse_errors(tmp_path):
    path = tmp_path / "w.csv"
    path.write_text("0.5,0.5\n0.1\n")
    with pytest.raises(ParseError, match="line 2"):
        io.read_weight_table(path)
    path.write_text("0.5,x\n")
    with pytest.raises(ParseError, match="line 1"):
        io.read_weight_table(path)
    path.write_text("0.5,0.6\n")
    with pytest.raises(DataValidationError):
        io.read_weights(path)


def test_trace_and_json(tmp_path):
    vals = np.random.default_rng(0).random(20)
    io.write_trace(tmp_path / "t.csv", vals)
    assert np.array_equal(io.read_trace(tmp_path / "t.csv"), vals)
    io.write_json(tmp_path / "m.json", {"b": np.float64(1.5), "a": float("nan"), "c": (1, 2)})
    text = (tmp_path / "m.json").read_text()
    assert text.index('"a"') < text.index('"b"')
    assert io.read_json(tmp_path / "m.json") == {"a": None, "b": 1.5, "c": [1, 2]}


def test_pgm_round_trip(tmp_path):
    table = np.array([[0.0, 0.1], [0.2, 0.4], [0.4, 0.0]])
    img, vmax = io.heatmap_pixels(table, block=3)
    assert vmax == 0.4 and img.shape == (9, 6)
    # the top image row is the highest mark row
    assert img[0, 0] == 255 and img[-1, -1] == 64
    io.write_pgm(tmp_path / "h.pgm", img)
    assert np.array_equal(io.read_pgm(tmp_path / "h.pgm"), img)


def test_pgm_pixels_that_look_like_whitespace(tmp_path):
    img = np.array([[9, 10, 32], [13, 0, 255]], dtype=np.uint8)
    io.write_pgm(tmp_path / "w.pgm", img)
    assert np.array_equal(io.read_pgm(tmp_path / "w.pgm"), img)
