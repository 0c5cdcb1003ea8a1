import json
import os
import tarfile

import numpy as np
import pandas as pd

from .conversions import npy_header
from .exceptions import SchemaError

FILETYPES = ('np.ndarray', 'pd.DataFrame', 'json')
EXTENSIONS = ('.csv', '.feather', '.npy', '.json')


class ArchiveReader():
	"""
	Read single components of a run archive (.tar.gz) without unpacking it.

	Example
	-------
	reader = ArchiveReader(dest_tar="fig1.tar.gz")
	reader.component(filename='trajectory.feather', filetype="pd.DataFrame")

	Notes
	-----
	.npy members cannot go through np.load (tar members have no fileno), so
	the header is parsed and the data read with np.frombuffer.
	"""
	def __init__(self, dest_tar):
		self.dest_tar = dest_tar
		self.dest = os.path.basename(dest_tar).replace(".tar.gz", "")

	def members(self):
		with tarfile.open(self.dest_tar, "r:gz") as tar:
			return tar.getnames()

	def component(self, filename, filetype):
		"""
		filename : str
			member name inside the archive folder, e.g. 'trajectory.csv'
		filetype : str
			'np.ndarray', 'pd.DataFrame' or 'json'
		"""
		if filetype not in FILETYPES:
			raise SchemaError(f"filetype must be one of {FILETYPES}, got {filetype!r}")
		if not filename.endswith(EXTENSIONS):
			raise SchemaError(f"filenames must end in one of {EXTENSIONS}, got {filename!r}")
		if not os.path.isfile(self.dest_tar):
			raise FileNotFoundError(f"{self.dest_tar} file does not exist")

		member = f"{self.dest}/{filename}"
		with tarfile.open(self.dest_tar, "r:gz") as tar:
			try:
				fh = tar.extractfile(member)
			except KeyError:
				raise SchemaError(f"{filename} is not in {self.dest_tar}")
			with fh:
				if filetype == "json":
					return json.load(fh)
				if filetype == 'pd.DataFrame':
					if filename.endswith(".feather"):
						return pd.read_feather(fh)
					if filename.endswith(".csv"):
						return pd.read_csv(fh)
				if filetype == 'np.ndarray':
					if filename.endswith(".npy"):
						shape, fortran, dtype = npy_header(fh)
						arr = np.frombuffer(fh.read(), dtype=np.lib.format.dtype_to_descr(dtype))
						return arr.reshape(shape, order='F' if fortran else 'C')
					if filename.endswith(".csv"):
						return np.genfromtxt(fh, delimiter=',')
		raise SchemaError(f"cannot read {filename} as {filetype}")
