import json

import numpy as np
import pytest

from bscaling import io
from bscaling.core import FusionInput, fit_bscaling, predict_bmean
from bscaling.errors import DataError

from conftest import noisy_world


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestReadTable:
    def test_basic(self, tmp_path):
        h, d = io.read_table(write(tmp_path / "a.csv", 'x,"y"\n1.5,-2e3\n0,3\n\n'))
        assert h == ["x", "y"]
        np.testing.assert_array_equal(d, [[1.5, -2000.0], [0.0, 3.0]])

    @pytest.mark.parametrize("cell,what", [("", "not a number"), ("abc", "not a number"),
                                           ("1,5", "cells"), ("nan", "non-finite"), ("inf", "non-finite")])
    def test_bad_cells(self, tmp_path, cell, what):
        p = write(tmp_path / "b.csv", f"x,y\n1,2\n3,{cell}\n")
        with pytest.raises(DataError, match=what) as err:
            io.read_table(p)
        assert "row 3" in str(err.value)
        if what != "cells":
            assert "column 'y'" in str(err.value)

    def test_missing_file_and_header(self, tmp_path):
        with pytest.raises(DataError):
            io.read_table(tmp_path / "none.csv")
        with pytest.raises(DataError, match="header"):
            io.read_table(write(tmp_path / "e.csv", ""))
        with pytest.raises(DataError, match="no data"):
            io.read_table(write(tmp_path / "h.csv", "x,y\n"))

    def test_select_columns(self):
        data = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(io.select_columns(["a", "b", "c"], data, ["c", "a"]), [[2, 0], [5, 3]])
        with pytest.raises(DataError, match="zz"):
            io.select_columns(["a"], data[:, :1], ["zz"])

    def test_write_round_trip(self, tmp_path):
        vals = np.random.default_rng(0).normal(size=(5, 2))
        io.write_table(tmp_path / "o.csv", ["p", "q"], vals.tolist())
        h, d = io.read_table(tmp_path / "o.csv")
        np.testing.assert_array_equal(d, vals)


class TestModelFile:
    @pytest.fixture
    def fitted(self):
        _, W = noisy_world(n=400, K=3)
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return fit_bscaling(FusionInput(W, ("a", "b", "c")), 6), W

    def test_round_trip_bit_identical(self, fitted, tmp_path):
        model, W = fitted
        io.save_model(model, tmp_path / "m.json")
        back = io.load_model(tmp_path / "m.json")
        np.testing.assert_array_equal(predict_bmean(back, W), predict_bmean(model, W))
        np.testing.assert_array_equal(back.a_hat, model.a_hat)
        assert back.column_names == ("a", "b", "c")
        assert back.knots == model.knots

    def test_fields(self, fitted, tmp_path):
        model, _ = fitted
        io.save_model(model, tmp_path / "m.json", {"k0_grid": [6]}, timestamp=False)
        d = json.loads((tmp_path / "m.json").read_text())
        assert d["format_version"] == io.FORMAT_VERSION
        assert d["sign_convention"] == io.SIGN_CONVENTION
        assert d["block_offsets"][-1] == len(d["a_hat"])
        assert "created" not in d["meta"]
        assert d["meta"]["k0_grid"] == [6]
        io.save_model(model, tmp_path / "t.json")
        assert "created" in json.loads((tmp_path / "t.json").read_text())["meta"]

    def test_deterministic_without_timestamp(self, fitted, tmp_path):
        model, _ = fitted
        io.save_model(model, tmp_path / "1.json", timestamp=False)
        io.save_model(model, tmp_path / "2.json", timestamp=False)
        assert (tmp_path / "1.json").read_bytes() == (tmp_path / "2.json").read_bytes()

    def test_bad_files(self, fitted, tmp_path):
        model, _ = fitted
        with pytest.raises(DataError):
            io.load_model(write(tmp_path / "x.json", "{not json"))
        d = io.model_to_dict(model, timestamp=False)
        d["format_version"] = 99
        with pytest.raises(DataError, match="format_version"):
            io.model_from_dict(d)
        d = io.model_to_dict(model, timestamp=False)
        d["a_hat"] = d["a_hat"][:-1]
        with pytest.raises(DataError):
            io.model_from_dict(d)
        d = io.model_to_dict(model, timestamp=False)
        del d["knots"]
        with pytest.raises(DataError):
            io.model_from_dict(d)
