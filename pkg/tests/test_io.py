import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracanderson import io


@settings(max_examples=60, deadline=None)
@given(st.floats(allow_nan=False))
def test_float_roundtrip(x):
    assert float(io.format_float(x)) == x


def test_meta_roundtrip():
    meta = {"d": 2, "alpha": 0.3, "method": "bochner_bessel", "ok": True}
    assert io.parse_meta(io.format_meta(meta)) == meta


def test_meta_rejects_bad_lines():
    with pytest.raises(ValueError):
        io.parse_meta("d=1")
    with pytest.raises(ValueError):
        io.parse_meta("# d")


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.floats(-1e6, 1e6, allow_nan=False)), min_size=1, max_size=20))
def test_csv_roundtrip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    io.write_csv(path, {"n": len(rows)}, ["x", "v"], rows)
    meta, cols, back = io.read_csv(path)
    assert meta == {"n": len(rows)} and cols == ["x", "v"]
    assert [tuple(r) for r in back] == [(a, float(b)) for a, b in rows]


def test_json_handles_numpy_and_namedtuples(tmp_path):
    from collections import namedtuple

    P = namedtuple("P", "a b")
    payload = {"arr": np.arange(3), "nt": P(np.float64(1.5), math.inf), "z": complex(1, -2)}
    io.write_json(tmp_path / "x.json", payload)
    back = io.read_json(tmp_path / "x.json")
    assert back == {"arr": [0, 1, 2], "nt": {"a": 1.5, "b": "inf"}, "z": {"re": 1.0, "im": -2.0}}
