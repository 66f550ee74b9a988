import json

import numpy as np
import pandas as pd
import pytest

from data_storage import (MANIFEST_NAME, DataStorage, check_schema, file_sha256, read_field,
                          read_json, read_manifest)
from exceptions import DataFileError, SchemaError, UsageError
from fields import RealField2D, SpectralGrid
from tests.conftest import band_limited


@pytest.fixture
def storage(tmp_path):
    return DataStorage(str(tmp_path / "run"))


def test_schema_tags():
    check_schema("solve-report/1.3", "solve-report/1.0")
    with pytest.raises(SchemaError):
        check_schema("solve-report/2.0", "solve-report/1.0")
    with pytest.raises(SchemaError):
        check_schema("decomposition/1.0", "solve-report/1.0")
    with pytest.raises(SchemaError):
        check_schema(None, "solve-report/1.0")


def test_json_document_round_trip(storage):
    path = storage.write_json("report.json", {"value": np.float64(1.5), "shape": (2, 3)},
                              "solve-report/1.0")
    data = read_json(path, "solve-report/1.0")
    assert data == {"schema": "solve-report/1.0", "value": 1.5, "shape": [2, 3]}
    with pytest.raises(SchemaError):
        read_json(path, "reconstruction/1.0")


def test_foreign_or_broken_json(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(SchemaError):
        read_json(broken, "solve-report/1.0")
    with pytest.raises(DataFileError):
        read_json(tmp_path / "missing.json", "solve-report/1.0")


def test_writes_stay_inside_the_run_directory(storage):
    with pytest.raises(UsageError):
        storage.path("../escape.json")
    assert storage.path("nested/ok.csv").parent.is_dir()


@pytest.mark.parametrize("name", ["field.csv", "field.bin"])
def test_real_field_files(storage, small_grid, name):
    field = band_limited(small_grid, seed=61)
    path = storage.write_field(name, field)
    back = read_field(path)
    assert isinstance(back, RealField2D)
    assert back.grid == small_grid
    assert np.allclose(back.values, field.values, rtol=0, atol=1e-15 if name.endswith(".bin") else 1e-12)


@pytest.mark.parametrize("name", ["zeta.csv", "zeta.bin"])
def test_complex_field_files(storage, small_grid, name):
    field = band_limited(small_grid, seed=62, real=False)
    back = read_field(storage.write_field(name, field))
    assert np.allclose(back.values, field.values, atol=1e-12)


def test_unknown_field_format(storage, small_grid):
    with pytest.raises(ValueError):
        storage.write_field("field.npy", band_limited(small_grid, seed=63))


def test_corrupt_binary_header(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(SchemaError):
        read_field(bad)


def test_csv_field_needs_header(tmp_path, small_grid):
    path = tmp_path / "plain.csv"
    pd.DataFrame({"x": [0.0], "z": [0.0], "value": [1.0]}).to_csv(path, index=False)
    with pytest.raises(SchemaError):
        read_field(path)


def test_manifest_lists_outputs_with_hashes(storage):
    storage.write_table("trace.csv", pd.DataFrame({"iteration": [0, 1], "T0": [2.0, 1.0]}))
    storage.write_json("report.json", {"ok": True}, "solve-report/1.0")
    path = storage.write_manifest("solve-lump", {"nx": 64}, "1.0.0", 0.25)
    assert path.name == MANIFEST_NAME
    manifest = read_manifest(path)
    assert manifest["command"] == "solve-lump"
    assert [o["path"] for o in manifest["outputs"]] == ["trace.csv", "report.json"]
    for item in manifest["outputs"]:
        assert item["sha256"] == file_sha256(storage.path(item["path"]))
    raw = json.loads(path.read_text())
    assert raw["config"] == {"nx": 64}
