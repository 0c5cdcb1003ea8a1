import json
import os
import shutil
import sys
import tarfile

import numpy as np
import pandas as pd

from . import conversions
from . import extraction
from .exceptions import SchemaError


class RunRecord():
	"""Attribute bag for one solved problem: tables, arrays and plain metadata."""
	def __init__(self, **attributes):
		self.__dict__.update(attributes)


class RunArchive():
	"""
	Save a solved run (a RunRecord or any object with numpy and pandas
	attributes) to a folder and a .tar.gz file, and rebuild it.

	Attributes
	----------
	target : object
		object whose attributes are saved or restored
	name : str
		default base name of the folder and the tarball
	_complex_attributes : dict
		attribute -> {"filename", "filetype", "fileformat"} for arrays and tables
	_simple_attributes : dict
		attributes that serialize as json

	Example
	-------
	RunArchive(RunRecord(trajectory=df, coeffs=arr, meta={...}), name="fig1").save()
	record = RunArchive(RunRecord(), name="fig1").load()
	"""
	def __init__(self, target, name="run"):
		self.target = target
		self.name = name

	def _attributes(self):
		return dict(vars(self.target))

	def save(self, dest=None, dest_tar=None, verbose=False, use_csv=True, use_binary=True):
		"""
		Write every attribute into ``dest`` and bundle the folder as ``dest_tar``.

		Parameters
		----------
		dest : str
			folder for the component files, defaults to ``name``
		dest_tar : str
			tarball path, must be ``<dest>.tar.gz``
		verbose : bool
			write status updates to sys.stdout if True
		use_csv, use_binary : bool
			write .csv and/or .npy/.feather copies of arrays and tables

		Returns
		-------
		str, the tarball path
		"""
		if dest is None:
			dest = str(self.name)
		if dest_tar is None:
			dest_tar = f"{dest}.tar.gz"
		if dest_tar.replace(".tar.gz", "") != str(dest):
			raise SchemaError("dest and dest_tar must share a common base name", dest=dest, dest_tar=dest_tar)

		self._complex_attributes = dict()
		self._simple_attributes = dict()
		if not os.path.isdir(dest):
			if verbose: sys.stdout.write(f"\tMaking directory {dest}/.\n")
			os.makedirs(dest)
		for k, v in self._attributes().items():
			if isinstance(v, np.ndarray):
				self._save_array(k, v, dest, verbose, use_csv, use_binary)
			elif isinstance(v, pd.DataFrame):
				self._save_frame(k, v, dest, verbose, use_csv, use_binary)
			else:
				self._simple_attributes[k] = v
		self._dump_json(self._complex_attributes, os.path.join(dest, 'complex_attributes.json'), verbose)
		self._dump_json(self._simple_attributes, os.path.join(dest, 'simple_attributes.json'), verbose)
		with tarfile.open(dest_tar, "w:gz") as tar:
			if verbose: sys.stdout.write(f"\tCombining saved files in : [{dest_tar}].\n")
			tar.add(dest, arcname=os.path.basename(dest))
		return dest_tar

	def _save_array(self, k, arr, dest, verbose, use_csv, use_binary):
		if use_csv and arr.ndim <= 2:
			f = os.path.join(dest, f"{k}.csv")
			if verbose: sys.stdout.write(f"\tSaving {k} to .csv : {f}\n")
			conversions._ndarray_to_csv(arr, f)
			self._complex_attributes[k] = {"filename": os.path.basename(f), "filetype": "np.ndarray", "fileformat": "csv"}
		elif use_csv and verbose:
			sys.stdout.write(f"\t{k} has {arr.ndim} dimensions, skipping .csv\n")
		if use_binary:
			f = os.path.join(dest, f"{k}.npy")
			if verbose: sys.stdout.write(f"\tSaving {k} to .npy : {f}\n")
			conversions._ndarray_to_npy(arr, f)
			self._complex_attributes[k] = {"filename": os.path.basename(f), "filetype": "np.ndarray", "fileformat": "npy"}

	def _save_frame(self, k, df, dest, verbose, use_csv, use_binary):
		if use_csv:
			f = os.path.join(dest, f"{k}.csv")
			if verbose: sys.stdout.write(f"\tSaving {k} to .csv : {f}\n")
			conversions._dataframe_to_csv(df, f)
			self._complex_attributes[k] = {"filename": os.path.basename(f), "filetype": "pd.DataFrame", "fileformat": "csv"}
		if use_binary:
			f = os.path.join(dest, f"{k}.feather")
			if verbose: sys.stdout.write(f"\tSaving {k} to .feather : {f}\n")
			conversions._dataframe_to_feather(df, f)
			self._complex_attributes[k] = {"filename": os.path.basename(f), "filetype": "pd.DataFrame", "fileformat": "feather"}

	@staticmethod
	def _dump_json(obj, f, verbose):
		with open(f, 'w') as fp:
			# values json cannot hold are stored as null
			json.dump(obj, fp, sort_keys=True, default=lambda x: None)
		if verbose: sys.stdout.write(f"\tSaving JSON : {f}\n")

	def load(self, dest_tar=None, verbose=False):
		"""
		Restore the saved attributes onto ``target`` from the tarball, reading
		members in place.

		Returns
		-------
		dict of the restored attributes
		"""
		if dest_tar is None:
			dest_tar = f"{self.name}.tar.gz"
		self.reader = extraction.ArchiveReader(dest_tar=dest_tar)
		self._complex_attributes = self.reader.component('complex_attributes.json', "json")
		self._simple_attributes = self.reader.component('simple_attributes.json', "json")
		restored = dict()
		for k, v in self._simple_attributes.items():
			if v is None:
				continue
			setattr(self.target, k, v)
			restored[k] = v
			if verbose: sys.stdout.write(f"\tSetting simple attribute {k}\n")
		for k, v in self._complex_attributes.items():
			x = self.reader.component(filename=v['filename'], filetype=v['filetype'])
			setattr(self.target, k, x)
			restored[k] = x
			if verbose: sys.stdout.write(f"\tSetting [{v['fileformat']}] to [{v['filetype']}] for attribute {k} from: {v['filename']}\n")
		return restored

	def extract(self, dest_tar=None, path=".", verbose=False):
		"""Unpack the whole tarball under ``path``, refusing members that escape it."""
		if dest_tar is None:
			dest_tar = f"{self.name}.tar.gz"
		root = os.path.abspath(path)
		with tarfile.open(dest_tar, "r:gz") as tar:
			for member in tar.getmembers():
				target = os.path.abspath(os.path.join(path, member.name))
				if os.path.commonpath([root, target]) != root:
					raise SchemaError("attempted path traversal in tar file", member=member.name)
			tar.extractall(path)
			if verbose:
				contents = '\n\t\t'.join(tar.getnames())
				sys.stdout.write(f"\tContents of {dest_tar} :\n\t\t{contents}\n")
		return os.path.join(path, os.path.basename(dest_tar).replace(".tar.gz", ""))

	def cleanup(self, dest=None):
		"""Remove the component folder once the tarball exists."""
		dest = dest or str(self.name)
		if os.path.isdir(dest):
			shutil.rmtree(dest)
