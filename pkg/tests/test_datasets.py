import json

import numpy as np
import pytest

from stiminv.datasets import Dataset, load_dataset, sample_dataset, save_dataset
from stiminv.errors import DataFormatError
from stiminv.forward_models import get_model


def test_row_count_mismatch_rejected():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 1)), np.zeros((2, 1)), "cos", 0)


def test_csv_roundtrip_is_bit_exact(tmp_path):
    model = get_model("surrogate")
    ds = sample_dataset(model, 17, seed=3)
    path = save_dataset(ds, tmp_path / "surr.csv", model)
    loaded = load_dataset(path)
    np.testing.assert_array_equal(loaded.thetas, ds.thetas)
    np.testing.assert_array_equal(loaded.responses, ds.responses)
    assert loaded.model_name == "surrogate"
    assert loaded.seed == 3


def test_header_layout(tmp_path):
    ds = sample_dataset(get_model("surrogate"), 2, seed=0)
    path = save_dataset(ds, tmp_path / "d.csv")
    header = path.read_text().splitlines()[0].split(",")
    assert len(header) == 52
    assert header[0] == "theta_0" and header[49] == "theta_49"
    assert header[50] == "r_0" and header[51] == "r_1"


def test_sidecar_records_provenance(tmp_path):
    model = get_model("bump")
    ds = sample_dataset(model, 5, seed=9)
    save_dataset(ds, tmp_path / "b.csv", model)
    sidecar = json.loads((tmp_path / "b.json").read_text())
    assert sidecar["model_name"] == "bump"
    assert sidecar["seed"] == 9
    assert sidecar["noise_sigma"] == pytest.approx(0.1)
    assert sidecar["domain"] == {"kind": "box", "lows": [-3.0], "highs": [3.0]}


def test_rewrite_is_byte_identical(tmp_path):
    model = get_model("cos")
    ds = sample_dataset(model, 20, seed=7)
    p1 = save_dataset(ds, tmp_path / "a.csv", model)
    blob1 = p1.read_bytes()
    p2 = save_dataset(sample_dataset(model, 20, seed=7), tmp_path / "b.csv", model)
    assert blob1 == p2.read_bytes()


class TestMalformedFiles:
    def test_wrong_field_count_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("theta_0,r_0\n1.0,2.0\n3.0\n")
        with pytest.raises(DataFormatError, match="line 3"):
            load_dataset(path)

    def test_non_numeric_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("theta_0,r_0\n1.0,narf\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_dataset(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1.0,2.0\n")
        with pytest.raises(DataFormatError, match="line 1"):
            load_dataset(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("")
        with pytest.raises(DataFormatError, match="empty"):
            load_dataset(path)

    def test_no_rows(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("theta_0,r_0\n")
        with pytest.raises(DataFormatError, match="no data rows"):
            load_dataset(path)
