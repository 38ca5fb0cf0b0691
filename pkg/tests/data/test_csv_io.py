# data/test_csv_io.py

import numpy as np
import pytest

from viforge.data.csv_io import load_csv, write_csv
from viforge.data.generators import gen_gas_turbine_like
from viforge.errors import ParseError
from viforge.numerics.rng import RngStream


def _write(tmp_path, text):
    path = tmp_path / "data.csv"
    path.write_text(text, encoding="utf-8")
    return path


def test_load_picks_target(tmp_path):
    path = _write(tmp_path, "a,NOX,b\n1,2,3\n4,5,6\n")
    data = load_csv(path, "NOX")
    assert data.names == ("a", "b")
    np.testing.assert_array_equal(data.x, [[1.0, 3.0], [4.0, 6.0]])
    np.testing.assert_array_equal(data.y, [2.0, 5.0])


def test_blank_lines_skipped(tmp_path):
    data = load_csv(_write(tmp_path, "a,y\n1,2\n\n3,4\n"), "y")
    assert data.n_samples == 2


def test_non_numeric_cell_location(tmp_path):
    path = _write(tmp_path, "a,b,y\n1,2,3\n4,oops,6\n")
    with pytest.raises(ParseError) as excinfo:
        load_csv(path, "y")
    assert excinfo.value.row == 3
    assert excinfo.value.column == 2
    assert "row 3, column 2" in str(excinfo.value)


def test_ragged_row(tmp_path):
    with pytest.raises(ParseError) as excinfo:
        load_csv(_write(tmp_path, "a,y\n1,2\n3\n"), "y")
    assert excinfo.value.row == 3


def test_extra_field_row(tmp_path):
    with pytest.raises(ParseError) as excinfo:
        load_csv(_write(tmp_path, "a,y\n1,2\n3,4,5\n"), "y")
    assert excinfo.value.row == 3


def test_rows_counted_across_blank_lines(tmp_path):
    with pytest.raises(ParseError) as excinfo:
        load_csv(_write(tmp_path, "a,y\n1,2\n\n3,x\n"), "y")
    assert (excinfo.value.row, excinfo.value.column) == (4, 2)


def test_empty_cell_rejected(tmp_path):
    with pytest.raises(ParseError) as excinfo:
        load_csv(_write(tmp_path, "a,b,y\n1,,3\n"), "y")
    assert (excinfo.value.row, excinfo.value.column) == (2, 2)


def test_missing_target_and_file(tmp_path):
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path, "a,b\n1,2\n"), "NOX")
    with pytest.raises(ParseError):
        load_csv(tmp_path / "absent.csv", "y")
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path, "a,y\n"), "y")


def test_non_finite_rejected(tmp_path):
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path, "a,y\nnan,1\n"), "y")
    with pytest.raises(ParseError, match="Non-finite") as excinfo:
        load_csv(_write(tmp_path, "a,y\n1, 2\n3,inf\n"), "y")
    assert (excinfo.value.row, excinfo.value.column) == (3, 2)


def test_write_then_load_is_exact(tmp_path):
    data = gen_gas_turbine_like(500, RngStream(seed=2015))
    path = write_csv(data, tmp_path / "fixtures" / "gas.csv", target_column="NOX")
    loaded = load_csv(path, "NOX")
    assert loaded.names == data.names
    np.testing.assert_array_equal(loaded.x, data.x)
    np.testing.assert_array_equal(loaded.y, data.y)
