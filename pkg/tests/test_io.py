import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rwgauss import io as rio
from rwgauss.errors import InputError

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=finite))
@settings(max_examples=60, deadline=None)
def test_csv_and_binary_roundtrip_bit_exact(tmp_path_factory, M):
    d = tmp_path_factory.mktemp("rt")
    rio.write_csv_matrix(d / "m.csv", M)
    rio.write_binary_matrix(d / "m.bin", M)
    a = rio.read_matrix(d / "m.csv")
    b = rio.read_matrix(d / "m.bin")
    np.testing.assert_array_equal(a.view(np.int64), M.view(np.int64))
    np.testing.assert_array_equal(b, M)
    # csv -> binary -> csv reproduces the same text
    rio.write_binary_matrix(d / "again.bin", a)
    rio.write_csv_matrix(d / "again.csv", rio.read_matrix(d / "again.bin"))
    assert (d / "again.csv").read_text() == (d / "m.csv").read_text()


def test_csv_header_is_skipped(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x,y\n1,2\n3,4\n")
    np.testing.assert_array_equal(rio.read_matrix(p), [[1.0, 2.0], [3.0, 4.0]])


@pytest.mark.parametrize("text", ["", "x,y\n", "1,2\n3\n", "1,nan\n", "1,2\n3,abc\n"])
def test_csv_errors(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InputError):
        rio.read_matrix(p)


def test_binary_errors(tmp_path):
    p = tmp_path / "b.bin"
    p.write_bytes(rio.MAGIC + b"\x02\x00\x00\x00\x02\x00\x00\x00" + b"\x00" * 8)
    with pytest.raises(InputError):
        rio.read_matrix(p)
    p.write_bytes(rio.MAGIC[:3])
    # too short for the magic: falls back to CSV parsing, which rejects it
    with pytest.raises(InputError):
        rio.read_matrix(p)
    with pytest.raises(InputError):
        rio.read_matrix(tmp_path / "missing.csv")


def test_binary_layout(tmp_path):
    p = tmp_path / "m.bin"
    rio.write_binary_matrix(p, [[1.0, 2.0, 3.0]])
    raw = p.read_bytes()
    assert raw[:4] == b"RW2M"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == 3
    assert np.frombuffer(raw[12:], "<f8").tolist() == [1.0, 2.0, 3.0]


def test_dumps_is_valid_json_and_exact():
    x = 0.1 + 0.2
    obj = {"a": x, "b": [np.float64(1.5), np.int64(3), True, None], "c": np.array([[1.0, 2.0]]),
           "nan": float("nan"), "inf": -math.inf, "s": "text"}
    back = json.loads(rio.dumps(obj))
    assert back["a"] == x
    assert back["b"] == [1.5, 3, True, None]
    assert back["c"] == [[1.0, 2.0]]
    assert back["nan"] is None and back["inf"] is None
    assert json.loads(rio.dumps({}, indent=0)) == {}
    with pytest.raises(TypeError):
        rio.dumps({"x": object()})


def test_envelope_fields():
    env = rio.envelope("cmd", {"k": 1}, 7, {"r": 2}, {"t": 0.1}, "9.9")
    assert set(env) == {"command", "version", "config", "seed", "results", "timings"}
    assert env["version"] == {"schema": rio.SCHEMA_VERSION, "package": "9.9"}


SCHEMA = {"n": int, "xs": rio.float_list, "ks": rio.int_list}


def test_parse_config():
    text = "# comment\nn = 5\n\nxs = 1.5, 2  # trailing\nks=1,2,3\n"
    assert rio.parse_config(text, SCHEMA) == {"n": 5, "xs": [1.5, 2.0], "ks": [1, 2, 3]}


@pytest.mark.parametrize("text", ["n 5", "m = 1", "n = 1\nn = 2", "n = x"])
def test_parse_config_errors(text):
    with pytest.raises(InputError):
        rio.parse_config(text, SCHEMA)


def test_read_config_missing_file(tmp_path):
    with pytest.raises(InputError):
        rio.read_config(tmp_path / "none.cfg", SCHEMA)
