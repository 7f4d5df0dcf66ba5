"""Dataset and series file formats, atomic writes."""
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from breathmodel import formats as F
from breathmodel.dataset import LabeledDataset
from breathmodel.errors import CorruptPayloadError, SchemaError, VersionError

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def _dataset(n=5, n_t=4, seed=0, labels=True):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, n) if labels else None
    return LabeledDataset(rng.normal(size=(n, n_t, 6)), y, [f"src-{i}" for i in range(n)],
                          {"class_names": ["down", "regular", "up"]})


class TestDatasetFiles:
    @pytest.mark.parametrize("suffix", [".csv", ".bin"])
    def test_round_trip_exact(self, tmp_path, suffix):
        ds = _dataset()
        back = F.read_dataset(F.write_dataset(ds, tmp_path / f"d{suffix}"))
        np.testing.assert_array_equal(back.x, ds.x)
        np.testing.assert_array_equal(back.labels, ds.labels)
        np.testing.assert_array_equal(back.source_ids, ds.source_ids)
        assert back.meta["class_names"] == ["down", "regular", "up"]
        assert back.digest() == ds.digest()

    @settings(max_examples=25, deadline=None)
    @given(arrays(np.float64, (3, 2, 6), elements=finite))
    def test_csv_floats_bit_exact(self, x):
        import tempfile
        from pathlib import Path

        ds = LabeledDataset(x, [0, 1, -1], None, {"class_names": ["a", "b"]})
        with tempfile.TemporaryDirectory() as d:
            back = F.read_dataset(F.write_dataset(ds, Path(d) / "d.csv"))
        np.testing.assert_array_equal(back.x, x)

    def test_unlabeled_rows(self, tmp_path):
        ds = _dataset(labels=False)
        back = F.read_dataset(F.write_dataset(ds, tmp_path / "d.csv"))
        np.testing.assert_array_equal(back.labels, -1)

    def test_csv_missing_schema_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("source_id,label\n")
        with pytest.raises(SchemaError):
            F.read_dataset(p)

    def test_csv_newer_schema(self, tmp_path):
        p = F.write_dataset(_dataset(), tmp_path / "d.csv")
        p.write_text(p.read_text().replace("schema=1", "schema=9", 1))
        with pytest.raises(VersionError):
            F.read_dataset(p)

    def test_csv_ragged_row(self, tmp_path):
        p = F.write_dataset(_dataset(), tmp_path / "d.csv")
        lines = p.read_text().splitlines()
        lines[3] = lines[3].rsplit(",", 1)[0]
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError):
            F.read_dataset(p)

    def test_csv_label_out_of_range(self, tmp_path):
        p = F.write_dataset(_dataset(), tmp_path / "d.csv")
        lines = p.read_text().splitlines()
        parts = lines[2].split(",")
        parts[1] = "7"
        lines[2] = ",".join(parts)
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError):
            F.read_dataset(p)

    def test_binary_truncated(self, tmp_path):
        p = F.write_dataset(_dataset(), tmp_path / "d.bin")
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(CorruptPayloadError):
            F.read_dataset(p)

    def test_binary_newer_schema(self, tmp_path):
        p = F.write_dataset(_dataset(), tmp_path / "d.bin")
        raw = p.read_bytes()
        (hlen,) = struct.unpack("<I", raw[8:12])
        header = raw[12 : 12 + hlen].replace(b'"schema": 1', b'"schema": 5')
        p.write_bytes(raw[:8] + struct.pack("<I", len(header)) + header + raw[12 + hlen :])
        with pytest.raises(VersionError):
            F.read_dataset(p)

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            F.read_dataset(tmp_path / "none.csv")

    def test_schema_rejects_bad_shape(self):
        with pytest.raises(SchemaError):
            LabeledDataset(np.zeros((2, 3, 5)), None, None)


class TestSeriesFiles:
    def test_series_round_trip(self, tmp_path):
        t, v = np.arange(10) / 26.0, np.sin(np.arange(10.0))
        t2, v2 = F.read_series_csv(F.write_series_csv(t, v, tmp_path / "s.csv"))
        np.testing.assert_array_equal(t2, t)
        np.testing.assert_array_equal(v2, v)

    def test_marker_round_trip(self, tmp_path):
        t, p = np.arange(4.0), np.random.default_rng(0).normal(size=(4, 3))
        t2, p2 = F.read_marker_csv(F.write_marker_csv(t, p, tmp_path / "m.csv"))
        np.testing.assert_array_equal(p2, p)

    def test_wrong_columns(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("t,x,y\n0,1,2\n")
        with pytest.raises(SchemaError):
            F.read_marker_csv(p)

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("t,position\n0,abc\n")
        with pytest.raises(SchemaError):
            F.read_series_csv(p)

    def test_rows_csv_union_header(self, tmp_path):
        p = F.write_rows_csv([{"a": 1}, {"a": 2, "b": 3}], tmp_path / "r.csv")
        assert p.read_text().splitlines() == ["a,b", "1,", "2,3"]


class TestAtomicWrite:
    def test_no_temp_left(self, tmp_path):
        F.atomic_write(tmp_path / "x.txt", "hello")
        assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]

    def test_failure_keeps_old_file(self, tmp_path, monkeypatch):
        target = tmp_path / "x.txt"
        target.write_text("old")

        def boom(*a):
            raise OSError("disk full")

        monkeypatch.setattr(F.os, "replace", boom)
        with pytest.raises(OSError):
            F.atomic_write(target, "new")
        assert target.read_text() == "old"
        assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]
