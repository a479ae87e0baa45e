"""CSV streaming, stratified splits, and the binary row cache."""

import struct
import time

import numpy as np
import pytest

from bcpnn.ingestion import (
    CacheError,
    FormatError,
    RawDataset,
    SplitSpec,
    cache_read,
    cache_write,
    load_csv,
    split,
)


def write_csv(path, features, labels):
    rows = np.column_stack([labels.astype(np.float64), features])
    with open(path, "w") as fh:
        np.savetxt(fh, rows, fmt="%.7g", delimiter=",")


def random_dataset(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 28)).astype(np.float32), rng.integers(0, 2, n).astype(np.uint8)


class TestLoadCsv:
    def test_three_row_fixture(self, tmp_path):
        feats, labels = random_dataset(3)
        path = tmp_path / "tiny.csv"
        write_csv(path, feats, labels)
        ds = load_csv(path)
        assert len(ds) == 3
        assert ds.features.shape == (3, 28)
        np.testing.assert_array_equal(ds.labels, labels)
        assert ds.rejected == 0

    def test_malformed_row_dropped_and_tallied(self, tmp_path):
        feats, labels = random_dataset(102)
        path = tmp_path / "bad.csv"
        write_csv(path, feats, labels)
        lines = path.read_text().splitlines()
        lines[1] = ",".join(lines[1].split(",")[:28])  # 28 fields instead of 29
        path.write_text("\n".join(lines) + "\n")
        ds = load_csv(path)
        assert len(ds) == 101
        assert ds.rejected == 1

    def test_label_outside_01_is_malformed(self, tmp_path):
        feats, labels = random_dataset(150)
        path = tmp_path / "lab.csv"
        write_csv(path, feats, labels)
        lines = path.read_text().splitlines()
        lines[3] = "0.5," + lines[3].split(",", 1)[1]
        path.write_text("\n".join(lines) + "\n")
        ds = load_csv(path)
        assert len(ds) == 149
        assert ds.rejected == 1

    def test_limit_takes_file_order_prefix(self, tmp_path):
        feats, labels = random_dataset(1000)
        path = tmp_path / "big.csv"
        write_csv(path, feats, labels)
        ds = load_csv(path, limit=100)
        assert len(ds) == 100
        np.testing.assert_allclose(ds.features, feats[:100], rtol=1e-6)
        np.testing.assert_array_equal(ds.labels, labels[:100])

    def test_mostly_malformed_file_raises(self, tmp_path):
        path = tmp_path / "wrong.csv"
        path.write_text("a,b,c\n" * 50)
        with pytest.raises(FormatError):
            load_csv(path)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_path / "nope.csv")


class TestSplit:
    def _dataset(self, n=10000, p=0.5, seed=1):
        rng = np.random.default_rng(seed)
        feats = rng.normal(size=(n, 28)).astype(np.float32)
        labels = (rng.random(n) < p).astype(np.uint8)
        return RawDataset(features=feats, labels=labels, source="mem")

    def test_deterministic_under_seed(self):
        ds = self._dataset()
        spec = SplitSpec(test_count=1000, seed=42)
        a_train, a_test = split(ds, spec)
        b_train, b_test = split(ds, spec)
        np.testing.assert_array_equal(a_train.features, b_train.features)
        np.testing.assert_array_equal(a_test.features, b_test.features)

    def test_partition_is_disjoint_and_exhaustive(self):
        ds = self._dataset(n=5000)
        # tag rows by unique values to track identity
        ds.features[:, 0] = np.arange(5000, dtype=np.float32)
        train, test = split(ds, SplitSpec(test_count=777, seed=9))
        ids_train = set(train.features[:, 0].astype(int).tolist())
        ids_test = set(test.features[:, 0].astype(int).tolist())
        assert len(ids_train & ids_test) == 0
        assert len(ids_train | ids_test) == 5000
        assert len(test) == 777

    def test_stratification_bound(self):
        # 10k rows, ~50/50 labels, 1000-row test: each class within 500 +/- 20
        ds = self._dataset(n=10000, p=0.5, seed=3)
        _train, test = split(ds, SplitSpec(test_count=1000, seed=4))
        n1 = int(test.labels.sum())
        full_ratio = ds.labels.mean()
        assert abs(n1 - 1000 * full_ratio) <= 20
        assert abs(test.labels.mean() - full_ratio) <= 0.02

    def test_fraction_fallback_and_errors(self):
        ds = self._dataset(n=100)
        train, test = split(ds, SplitSpec(train_fraction=0.8, seed=0))
        assert len(test) == 20 and len(train) == 80
        with pytest.raises(FormatError):
            split(ds, SplitSpec(test_count=100, seed=0))


class TestCache:
    def test_round_trip_bit_identical(self, tmp_path):
        feats, labels = random_dataset(257, seed=5)
        ds = RawDataset(features=feats, labels=labels, source="mem")
        path = tmp_path / "data.cache"
        cache_write(ds, path)
        back = cache_read(path)
        assert back.features.dtype == np.float32
        np.testing.assert_array_equal(
            back.features.view(np.uint32), ds.features.view(np.uint32)
        )
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_truncation_detected(self, tmp_path):
        feats, labels = random_dataset(100)
        path = tmp_path / "data.cache"
        cache_write(RawDataset(features=feats, labels=labels), path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 57])
        with pytest.raises(CacheError):
            cache_read(path)

    def test_corruption_detected_by_checksum(self, tmp_path):
        feats, labels = random_dataset(100)
        path = tmp_path / "data.cache"
        cache_write(RawDataset(features=feats, labels=labels), path)
        blob = bytearray(path.read_bytes())
        blob[200] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CacheError, match="checksum"):
            cache_read(path)

    def test_version_mismatch_detected(self, tmp_path):
        feats, labels = random_dataset(10)
        path = tmp_path / "data.cache"
        cache_write(RawDataset(features=feats, labels=labels), path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", 999)
        path.write_bytes(bytes(blob))
        with pytest.raises(CacheError, match="version"):
            cache_read(path)

    def test_wrong_magic_detected(self, tmp_path):
        path = tmp_path / "data.cache"
        path.write_bytes(b"JUNKJUNKJUNKJUNKJUNK")
        with pytest.raises(CacheError, match="magic"):
            cache_read(path)

    def test_cache_read_much_faster_than_csv_parse(self, tmp_path):
        # smoke check, not a contract: binary cache >= 5x faster than text
        feats, labels = random_dataset(150_000, seed=6)
        csv_path = tmp_path / "big.csv"
        write_csv(csv_path, feats, labels)
        t0 = time.perf_counter()
        ds = load_csv(csv_path)
        t_csv = time.perf_counter() - t0

        cache_path = tmp_path / "big.cache"
        cache_write(ds, cache_path)
        t0 = time.perf_counter()
        cache_read(cache_path)
        t_cache = time.perf_counter() - t0
        assert t_cache * 5 < t_csv, f"cache {t_cache:.3f}s vs csv {t_csv:.3f}s"
