import pytest
import numpy as np
import pandas as pd
import json
import os
from fractions import Fraction

from gluskabi.conversions import (_ndarray_to_npy, _ndarray_from_npy, _ndarray_to_csv, _ndarray_from_csv,
	_dataframe_to_feather, _dataframe_from_feather, _dataframe_to_csv, _dataframe_from_csv,
	get_shape_and_dtype, poly_to_json, poly_from_json, polymatrix_to_json, polymatrix_from_json,
	format_rational, json_dump_atomic, write_atomic)
from gluskabi.polyops import Polynomial, PolyMatrix
from gluskabi.exceptions import SchemaError

xi = Polynomial.xi()


test_arrays = [ (np.zeros(10), "np.zeros(10)"),
				(np.ones(10),  "np.ones(10)"),
				(np.array([[0, 1, 2, 3], [4, 5, 6, 7]]), "2D np.array"),
				(np.random.default_rng(0).integers(0, 100, size=(30, 10, 2)), "3D np.array") ]

@pytest.mark.parametrize("x,y", test_arrays)
def test_conversion_array_to_npy_to_array_with_shape(x, y, tmp_path):
	assert isinstance(y, str)
	test_fn = str(tmp_path / "fntest.npy")
	_ndarray_to_npy(fn=test_fn, arr=x)
	assert os.path.isfile(test_fn)
	rec_arr = _ndarray_from_npy(fn=test_fn)
	assert np.array_equal(x, rec_arr)
	assert get_shape_and_dtype(test_fn)[0] == x.shape


def test_conversion_array_to_csv(tmp_path):
	arr = np.array([[0.1, 2.0], [1 / 3, -4e-9]])
	fn = str(tmp_path / "arr.csv")
	_ndarray_to_csv(arr, fn)
	assert np.allclose(_ndarray_from_csv(fn), arr, rtol=1e-11)
	with pytest.raises(SchemaError):
		_ndarray_to_csv(arr, str(tmp_path / "arr.txt"))
	with pytest.raises(SchemaError):
		_ndarray_to_npy(arr, str(tmp_path / "arr.csv"))


def test_conversion_df_to_feather(tmp_path):
	test_df = pd.DataFrame({"t": [0.0, 0.5, 1.0], "w": [0.0, 0.25, 1.0]})
	test_fn = str(tmp_path / "trajectory.feather")
	_dataframe_to_feather(df=test_df, fn=test_fn)
	assert os.path.isfile(test_fn)
	rec_df = _dataframe_from_feather(fn=test_fn)
	assert isinstance(rec_df, pd.DataFrame)
	assert test_df.equals(rec_df)


def test_conversion_df_to_csv_format(tmp_path):
	df = pd.DataFrame({"t": [0.0, 1.0], "w": [1 / 3, 2.0]})
	fn = str(tmp_path / "trajectory.csv")
	_dataframe_to_csv(df, fn)
	with open(fn) as fh:
		lines = fh.read().split("\n")
	assert lines[0] == "t,w"
	assert lines[1] == "0,0.333333333333"
	assert list(_dataframe_from_csv(fn).columns) == ["t", "w"]


polys = [ (xi ** 4 - 2 * xi ** 2, ["0", "0", "-2", "0", "1"]),
		(Polynomial([Fraction(1, 2), -1]), ["1/2", "-1"]),
		(Polynomial(), []) ]

@pytest.mark.parametrize("p,expected", polys)
def test_poly_json(p, expected):
	assert poly_to_json(p) == expected
	assert poly_from_json(expected) == p


def test_poly_from_json_forms():
	assert poly_from_json(3) == Polynomial(3)
	assert poly_from_json(["1/3", 0.5]) == Polynomial([Fraction(1, 3), Fraction(1, 2)])
	assert format_rational(Fraction(-6, 4)) == "-3/2"
	with pytest.raises(SchemaError):
		poly_from_json(["x"])


def test_polymatrix_json():
	M = PolyMatrix([[1, -(xi + 1)], [0, 1]])
	obj = polymatrix_to_json(M)
	assert obj == [[["1"], ["-1", "-1"]], [[], ["1"]]]
	assert polymatrix_from_json(obj) == M
	assert polymatrix_from_json([1, 1]) == PolyMatrix([[xi + 1]])
	assert polymatrix_from_json(2) == PolyMatrix([[2]])


def test_json_dump_atomic_is_deterministic(tmp_path):
	fn = str(tmp_path / "meta.json")
	doc = {"b": Fraction(1, 3), "a": np.float64(0.5), "c": np.arange(3), "p": xi + 1}
	json_dump_atomic(doc, fn)
	with open(fn, encoding="utf-8") as fh:
		text = fh.read()
	assert text.endswith("}\n")
	assert json.loads(text) == {"a": 0.5, "b": "1/3", "c": [0, 1, 2], "p": "ξ + 1"}
	json_dump_atomic(dict(reversed(list(doc.items()))), fn)
	with open(fn, encoding="utf-8") as fh:
		assert fh.read() == text
	assert [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")] == []


def test_write_atomic_leaves_no_partial_file(tmp_path):
	fn = str(tmp_path / "out.csv")

	def failing(tmp):
		with open(tmp, "w") as fh:
			fh.write("partial")
		raise OSError("disk full")

	with pytest.raises(OSError):
		write_atomic(fn, failing)
	assert os.listdir(tmp_path) == []
