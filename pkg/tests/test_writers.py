import json
import math

import numpy as np

from lsfield import writers


def test_fmt_nine_digits():
    assert writers.fmt(1 / 3) == "0.333333333"
    assert writers.fmt(np.int64(7)) == "7"
    assert writers.fmt(True) == "1"
    assert writers.fmt(float("nan")) == "nan"


def test_clean_json():
    doc = writers.clean_json({"a": np.float64(1 / 3), "b": [float("inf"), np.int32(2)], "c": np.array([1.0, 2.0])})
    assert doc == {"a": 0.333333333, "b": [None, 2], "c": [1.0, 2.0]}
    json.dumps(doc, allow_nan=False)


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "c.csv"
    rows = [{"E33": 0.01 * k, "sigma33_recovered": k, "sigma33_ref": 2.0 * k, "sigma33_qc": math.pi} for k in range(3)]
    writers.write_curve_csv(path, rows)
    back = writers.read_csv_columns(path)
    np.testing.assert_allclose(back["sigma33_ref"], [0, 2, 4])
    assert back["sigma33_qc"][0] == float("%.9g" % math.pi)
