import csv
import json
import os

import numpy as np
import pytest

from lz_setkit.io import atomic_write_text, dumps_json, fmt_float, write_csv, write_json


@pytest.mark.parametrize("x, s", [(0.1, "0.10000000000000001"), (1.0, "1"), (-2.5, "-2.5"), (0.0, "0"),
                                  (float("inf"), "inf"), (float("-inf"), "-inf"), (float("nan"), "nan"),
                                  (1e-300, "1e-300"), (2.0 / 3.0, "0.66666666666666663")])
def test_fmt_float(x, s):
    assert fmt_float(x) == s


def test_fmt_float_round_trips():
    rng = np.random.default_rng(0)
    for x in rng.normal(size=200) * 10.0 ** rng.integers(-20, 20, 200):
        assert float(fmt_float(x)) == x


def test_csv_cells_and_header(tmp_path):
    p = tmp_path / "a" / "t.csv"
    write_csv(p, ["i", "x", "flag", "name"], [(np.int64(1), np.float64(0.5), np.bool_(True), "lz")])
    text = p.read_text()
    assert text == "i,x,flag,name\n1,0.5,true,lz\n"
    assert list(csv.reader(text.splitlines()))[1] == ["1", "0.5", "true", "lz"]


def test_csv_row_width_checked(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "t.csv", ["a", "b"], [(1,)])
    assert not (tmp_path / "t.csv").exists()


def test_json_numbers_and_nonfinite(tmp_path):
    obj = {"u": np.array([0.1, 2.0]), "k": {(0, 1): float("inf")}, "n": 3, "ok": True, "e": []}
    text = dumps_json(obj)
    back = json.loads(text)
    assert back["u"] == [0.1, 2.0] and back["k"] == {"(0, 1)": "inf"} and back["n"] == 3
    assert back["ok"] is True and back["e"] == []
    assert "0.10000000000000001" in text
    write_json(tmp_path / "o.json", obj)
    assert (tmp_path / "o.json").read_text() == text


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write_text(tmp_path / "f.txt", "one")
    atomic_write_text(tmp_path / "f.txt", "two")
    assert (tmp_path / "f.txt").read_text() == "two"
    assert os.listdir(tmp_path) == ["f.txt"]
