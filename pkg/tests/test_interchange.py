import json
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rounduq import errors, interchange

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_matrix_round_trips(A):
    with tempfile.TemporaryDirectory() as d:
        for name in ("m.bin", "m.csv"):
            p = os.path.join(d, name)
            interchange.write_matrix(p, A)
            assert np.array_equal(interchange.read_matrix(p), A)


def test_binary_layout(tmp_path):
    p = tmp_path / "m.bin"
    interchange.write_matrix_bin(p, np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
    data = p.read_bytes()
    assert data[:8] == b"RUQMAT01"
    assert int.from_bytes(data[8:16], "little") == 3
    assert int.from_bytes(data[16:24], "little") == 2
    assert np.array_equal(np.frombuffer(data[24:], "<f8"), [1, 3, 5, 2, 4, 6])


def test_bad_matrix_files(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOTMAGIC" + bytes(16))
    with pytest.raises(errors.ValidationError):
        interchange.read_matrix(p)
    p.write_bytes(b"RUQMAT01" + (2).to_bytes(8, "little") + (2).to_bytes(8, "little") + bytes(8))
    with pytest.raises(errors.ValidationError):
        interchange.read_matrix(p)
    c = tmp_path / "ragged.csv"
    c.write_text("1,2\n3\n")
    with pytest.raises(errors.ShapeMismatch):
        interchange.read_matrix(c)
    c.write_text("1,x\n")
    with pytest.raises(errors.ValidationError):
        interchange.read_matrix(c)
    c.write_text("1,2\n3,4\n")
    with pytest.raises(errors.ShapeMismatch):
        interchange.read_vector(c)


def test_real_formatting():
    assert interchange.real(0.1) == "0.1"
    assert float(interchange.real(1 / 3)) == 1 / 3
    assert interchange.real(float("inf")) == "inf"
    assert interchange.real(None) == ""
    assert interchange.real(True) == "true"
    assert interchange.real(np.int64(7)) == "7"


def test_csv_and_json_headers(tmp_path):
    text = interchange.render_csv("demo", {"b": 1, "a": [1, 2]}, ["x", "y"], [[1, 0.5], ["s", None]])
    lines = text.splitlines()
    assert lines[0] == "# rounduq demo"
    assert lines[1] == "# schema: rounduq.demo.v1"
    assert lines[2] == '# config: {"a":[1,2],"b":1}'
    p = tmp_path / "o.csv"
    p.write_text(text)
    cols, rows = interchange.read_csv_rows(p)
    assert cols == ["x", "y"] and rows == [["1", "0.5"], ["s", ""]]
    doc = json.loads(interchange.render_json("demo", {"a": 1}, {"v": float("inf"), "w": np.float64(2)}))
    assert list(doc)[0] == "header"
    assert doc["header"]["schema"] == "rounduq.demo.v1"
    assert doc["v"] == "inf" and doc["w"] == 2.0


def test_key_value_parsing():
    cfg = interchange.parse_kv("# comment\nM = 16\nN-Samples = 10  # trailing\n\nfmt=fp16\n")
    assert cfg == {"m": "16", "n_samples": "10", "fmt": "fp16"}
    for bad in ("M 16", "M = 1\nm = 2", "= 3"):
        with pytest.raises(errors.ValidationError):
            interchange.parse_kv(bad)
