import pytest
import numpy as np
import pandas as pd
import io
import os
import tarfile

from gluskabi.archive import RunArchive, RunRecord
from gluskabi.extraction import ArchiveReader
from gluskabi.exceptions import SchemaError


def make_record():
	t = np.linspace(0, 1, 5)
	return RunRecord(meta={"cost": 1.0, "el": {"poly": "ξ²"}},
		trajectory=pd.DataFrame({"t": t, "w": t}),
		coeffs=np.array([[0.0], [1.0]]),
		jets=np.zeros((2, 3, 2)))


def make_tar_gz(tmp_path):
	record = make_record()
	dest = str(tmp_path / "fig1")
	archive = RunArchive(record, name=dest)
	tar = archive.save()
	archive.cleanup()
	return record, tar


def test_run_archive_round_trip(tmp_path):
	record, tar = make_tar_gz(tmp_path)
	assert tar == str(tmp_path / "fig1.tar.gz")
	assert os.path.isfile(tar)
	assert not os.path.isdir(tmp_path / "fig1")
	new = RunRecord()
	restored = RunArchive(new, name=str(tmp_path / "fig1")).load()
	assert set(restored) == {"meta", "trajectory", "coeffs", "jets"}
	assert new.meta == record.meta
	assert new.trajectory.equals(record.trajectory)
	assert np.array_equal(new.coeffs, record.coeffs)
	assert new.jets.shape == (2, 3, 2)


def test_save_rejects_mismatched_names(tmp_path):
	with pytest.raises(SchemaError):
		RunArchive(make_record()).save(dest=str(tmp_path / "a"), dest_tar=str(tmp_path / "b.tar.gz"))


reads = [ ("trajectory.csv", "pd.DataFrame", pd.DataFrame),
		("trajectory.feather", "pd.DataFrame", pd.DataFrame),
		("coeffs.csv", "np.ndarray", np.ndarray),
		("coeffs.npy", "np.ndarray", np.ndarray),
		("simple_attributes.json", "json", dict) ]

@pytest.mark.parametrize("filename,filetype,cls", reads)
def test_reader_components(filename, filetype, cls, tmp_path):
	_, tar = make_tar_gz(tmp_path)
	r = ArchiveReader(dest_tar=tar).component(filename=filename, filetype=filetype)
	assert isinstance(r, cls)
	if cls is pd.DataFrame:
		assert list(r.columns) == ["t", "w"]


def test_reader_arrays_match(tmp_path):
	record, tar = make_tar_gz(tmp_path)
	reader = ArchiveReader(dest_tar=tar)
	assert np.array_equal(reader.component("jets.npy", "np.ndarray"), record.jets)
	assert np.allclose(reader.component("coeffs.csv", "np.ndarray"), record.coeffs[:, 0])
	assert "fig1/complex_attributes.json" in reader.members()


def test_reader_errors(tmp_path):
	_, tar = make_tar_gz(tmp_path)
	reader = ArchiveReader(dest_tar=tar)
	with pytest.raises(SchemaError):
		reader.component("coeffs.npy", "list")
	with pytest.raises(SchemaError):
		reader.component("coeffs.txt", "np.ndarray")
	with pytest.raises(SchemaError):
		reader.component("missing.csv", "pd.DataFrame")
	with pytest.raises(FileNotFoundError):
		ArchiveReader(dest_tar=str(tmp_path / "none.tar.gz")).component("coeffs.npy", "np.ndarray")


def test_extract(tmp_path):
	_, tar = make_tar_gz(tmp_path)
	out = tmp_path / "unpacked"
	folder = RunArchive(RunRecord(), name=str(tmp_path / "fig1")).extract(path=str(out))
	assert os.path.isfile(os.path.join(folder, "trajectory.feather"))


def test_extract_refuses_path_traversal(tmp_path):
	tar = str(tmp_path / "evil.tar.gz")
	payload = b"x"
	with tarfile.open(tar, "w:gz") as fh:
		info = tarfile.TarInfo("../escaped.csv")
		info.size = len(payload)
		fh.addfile(info, io.BytesIO(payload))
	with pytest.raises(SchemaError):
		RunArchive(RunRecord()).extract(dest_tar=tar, path=str(tmp_path / "unpacked"))
	assert not os.path.exists(tmp_path / "escaped.csv")
