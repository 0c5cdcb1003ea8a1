import json
import os
import tempfile
from fractions import Fraction

import feather
import numpy as np
import pandas as pd

from .exceptions import SchemaError
from .polyops import PolyMatrix, Polynomial, as_rational

FLOAT_FORMAT = "%.12g"

""" Tables """
def _dataframe_to_csv(df, fn):
	"""Header row, no index, floats with 12 significant digits."""
	df.to_csv(fn, sep=",", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

def _dataframe_from_csv(fn):
	return pd.read_csv(fn, sep=",")

def _dataframe_to_feather(df, fn, **kwargs):
	"""Write out the binary feather-format for DataFrames."""
	feather.write_dataframe(df.reset_index(drop=True), fn, **kwargs)

def _dataframe_from_feather(fn, **kwargs):
	return pd.read_feather(fn, **kwargs)

""" Arrays """
def _ndarray_to_csv(arr, fn):
	if not fn.endswith(".csv"):
		raise SchemaError(f"expected a .csv filename, got {fn}")
	np.savetxt(fn, np.atleast_1d(arr), delimiter=",", fmt=FLOAT_FORMAT)

def _ndarray_from_csv(fn):
	return np.genfromtxt(fn, delimiter=',')

def _ndarray_to_npy(arr, fn):
	if not fn.endswith(".npy"):
		raise SchemaError(f"expected a .npy filename, got {fn}")
	np.save(fn, arr)

def _ndarray_from_npy(fn):
	return np.load(fn)

def npy_header(fh):
	"""Shape and dtype from an open .npy stream, leaving it at the start of the data."""
	version = np.lib.format.read_magic(fh)
	if version == (1, 0):
		shape, fortran, dtype = np.lib.format.read_array_header_1_0(fh)
	else:
		shape, fortran, dtype = np.lib.format.read_array_header_2_0(fh)
	return shape, fortran, dtype

def get_shape_and_dtype(fn):
	with open(fn, 'rb') as npybinary:
		shape, _, dtype = npy_header(npybinary)
		return (shape, dtype)

""" Exact polynomials """
def format_rational(x):
	"""``"3"`` or ``"-1/2"``."""
	x = Fraction(x)
	return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"

def poly_to_json(p):
	"""Ascending coefficients as exact ``"num/den"`` strings."""
	return [format_rational(c) for c in Polynomial(p).coeffs]

def poly_from_json(obj):
	"""A coefficient list (numbers or rational strings) or a single number."""
	if isinstance(obj, (list, tuple)):
		return Polynomial([as_rational(c) for c in obj])
	return Polynomial([as_rational(obj)])

def polymatrix_to_json(M):
	return [[poly_to_json(e) for e in row] for row in M.entries()]

def polymatrix_from_json(obj):
	"""
	A nested ``rows x cols`` list of coefficient lists, or a single coefficient
	list read as a 1 x 1 matrix.
	"""
	if not isinstance(obj, (list, tuple)) or not obj:
		return PolyMatrix([[poly_from_json(obj)]])
	if all(isinstance(r, (list, tuple)) and r and all(isinstance(e, (list, tuple)) for e in r) for r in obj):
		return PolyMatrix([[poly_from_json(e) for e in row] for row in obj])
	return PolyMatrix([[poly_from_json(obj)]])

""" Atomic writes """
def write_atomic(fn, writer):
	"""Run ``writer(tmp_path)`` next to ``fn`` and move the result into place."""
	folder = os.path.dirname(os.path.abspath(fn))
	fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.splitext(fn)[1])
	os.close(fd)
	try:
		writer(tmp)
		os.replace(tmp, fn)
	finally:
		if os.path.exists(tmp):
			os.remove(tmp)

def json_dump_atomic(obj, fn):
	"""Deterministic JSON: sorted keys, two-space indent, trailing newline."""
	def writer(tmp):
		with open(tmp, 'w', encoding='utf-8') as fp:
			json.dump(obj, fp, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default)
			fp.write("\n")
	write_atomic(fn, writer)

def _json_default(x):
	if isinstance(x, Fraction):
		return format_rational(x)
	if isinstance(x, (np.integer,)):
		return int(x)
	if isinstance(x, (np.floating,)):
		return float(x)
	if isinstance(x, np.ndarray):
		return x.tolist()
	if isinstance(x, (Polynomial, PolyMatrix)):
		return str(x)
	return None
