import json

import numpy as np

from abpsim.io import CSV_SCHEMA, JSON_SCHEMA, csv_text, read_csv, write_csv, write_json


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [[0.1, 2], [1 / 3, -4]], config_echo='{"x": 1}', seed=5)
    meta, cols, data = read_csv(path)
    assert meta[0].startswith(f"# {CSV_SCHEMA}")
    assert cols == ["a", "b"]
    np.testing.assert_array_equal(data, [[0.1, 2], [1 / 3, -4]])


def test_floats_written_exactly():
    text = csv_text(["v"], [[np.float64(0.1) + 0.2]])
    assert "0.30000000000000004" in text


def test_json_summary(tmp_path):
    path = tmp_path / "s.json"
    write_json(path, {"value": np.float64(1.5), "arr": np.arange(3), "bad": np.nan},
               config={"k": 1}, seed=7)
    doc = json.loads(path.read_text())
    assert doc["schema"] == JSON_SCHEMA and doc["seed"] == 7 and doc["config"] == {"k": 1}
    assert doc["arr"] == [0, 1, 2] and doc["bad"] == "nan"
