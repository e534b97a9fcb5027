import json
import math

import numpy as np

from parabolica.outputs import canonical_json, csv_text, fmt, manifest_hash
from parabolica.parallel import parallel_map, resolve_jobs


def test_canonical_json_is_order_independent():
    a = canonical_json({"b": 1, "a": np.float64(0.1), "c": np.arange(2)})
    b = canonical_json({"c": [0, 1], "a": 0.1, "b": 1})
    assert a == b
    assert manifest_hash({"x": 1, "y": 2}) == manifest_hash({"y": 2, "x": 1})
    assert json.loads(canonical_json({"v": math.nan}))["v"] is None


def test_float_format_roundtrips():
    for v in (0.1, 1 / 3, 1e-300, 123456789.123):
        assert float(fmt(v)) == v
    assert fmt(7) == "7" and fmt("tag") == "tag"


def test_csv_text_layout():
    text = csv_text(["a", "b"], [[1, 0.5]], "abc", ["note"])
    assert text.splitlines() == ["# manifest_sha256 abc", "# note", "a,b", "1,0.5"]


def _square(x):
    return x * x


def test_parallel_map_order(monkeypatch):
    assert parallel_map(_square, range(6), jobs=2) == [0, 1, 4, 9, 16, 25]
    monkeypatch.setenv("PARABOLICA_JOBS", "3")
    assert resolve_jobs(None) == 3
    assert resolve_jobs(1) == 1
