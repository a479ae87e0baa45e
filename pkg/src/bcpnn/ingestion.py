"""Streaming ingestion of the collision-event CSV and a binary row cache.

The source format is the published HIGGS layout: one line per sample,
29 comma-separated numeric fields, class label (0 or 1) first, then 28
real features, no header.  Parsing is chunked so the 2 GB file is never
held in memory, and a little-endian binary cache (float32 rows, crc32
trailer) avoids paying the text-parse cost more than once.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CACHE_MAGIC = b"BCPN"
CACHE_VERSION = 1
_CHUNK_LINES = 65536
_HEADER = struct.Struct("<4sIQI")  # magic, version, n_rows, n_features


class FormatError(ValueError):
    """The file does not look like the expected CSV layout."""


class CacheError(ValueError):
    """The binary cache is missing, corrupt, or from another format version."""


@dataclass
class RawDataset:
    """Real-valued samples as parsed from disk.

    ``features`` is (N, F) float32 (F = 28 for the collision data),
    ``labels`` is (N,) uint8 with values in {0, 1}, ``source`` records
    where the rows came from and ``rejected`` how many malformed rows
    were dropped on the way.
    """

    features: np.ndarray
    labels: np.ndarray
    source: str = ""
    rejected: int = 0

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise FormatError(f"features must be 2-D, got shape {self.features.shape}")
        if len(self.labels) != len(self.features):
            raise FormatError(f"{len(self.labels)} labels for {len(self.features)} rows")

    def __len__(self) -> int:
        return len(self.features)


@dataclass
class SplitSpec:
    """How to carve a dataset into train and test.

    ``test_count`` wins when positive; otherwise the test size is derived
    from ``train_fraction``.  The split is stratified by label and fully
    determined by ``seed``.
    """

    train_fraction: float = 0.8
    test_count: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise FormatError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        if self.test_count < 0:
            raise FormatError(f"test_count must be >= 0, got {self.test_count}")


def _parse_chunk(lines: list[str], n_fields: int):
    """Parse one chunk of CSV lines; returns (rows, n_malformed)."""
    try:
        rows = np.loadtxt(
            io.StringIO("".join(lines)), delimiter=",", dtype=np.float64, ndmin=2
        )
        if rows.shape[1] != n_fields:
            raise ValueError
        bad = 0
    except ValueError:
        # Slow path: salvage the well-formed lines one by one.
        good: list[list[float]] = []
        bad = 0
        for line in lines:
            parts = line.split(",")
            if len(parts) != n_fields:
                bad += 1
                continue
            try:
                good.append([float(p) for p in parts])
            except ValueError:
                bad += 1
        rows = np.asarray(good, dtype=np.float64).reshape(-1, n_fields)

    if rows.shape[0]:
        label_ok = (rows[:, 0] == 0.0) | (rows[:, 0] == 1.0)
        bad += int((~label_ok).sum())
        rows = rows[label_ok]
    return rows, bad


def load_csv(path, limit: int | None = None, n_features: int = 28) -> RawDataset:
    """Stream-parse the CSV into a RawDataset of the first ``limit`` valid rows.

    Malformed rows (wrong field count, non-numeric fields, label outside
    {0, 1}) are dropped and tallied; more than 1% malformed raises
    :class:`FormatError` since that usually means the wrong file.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    n_fields = n_features + 1

    parts: list[np.ndarray] = []
    n_valid = 0
    n_bad = 0
    n_lines = 0
    with open(path, "r", buffering=1 << 20) as fh:
        while True:
            lines = fh.readlines(_CHUNK_LINES * 64)
            if not lines:
                break
            lines = [ln for ln in lines if ln.strip()]
            n_lines += len(lines)
            rows, bad = _parse_chunk(lines, n_fields)
            n_bad += bad
            parts.append(rows)
            n_valid += rows.shape[0]
            if limit is not None and n_valid >= limit:
                break

    if n_lines and n_bad / n_lines > 0.01:
        raise FormatError(
            f"{n_bad} of {n_lines} rows malformed in {path}; "
            f"expected {n_fields} numeric fields per line (label first)"
        )

    data = (
        np.concatenate(parts, axis=0)
        if parts
        else np.empty((0, n_fields), dtype=np.float64)
    )
    if limit is not None:
        data = data[:limit]
    return RawDataset(
        features=data[:, 1:].astype(np.float32),
        labels=data[:, 0].astype(np.uint8),
        source=f"{path}[:{len(data)}]",
        rejected=n_bad,
    )


def split(dataset: RawDataset, spec: SplitSpec) -> tuple[RawDataset, RawDataset]:
    """Deterministic stratified split into disjoint, exhaustive train/test."""
    n = len(dataset)
    test_count = spec.test_count or int(round((1.0 - spec.train_fraction) * n))
    if not 0 < test_count < n:
        raise FormatError(f"test_count {test_count} incompatible with {n} rows")

    # Proportional per-class allocation, largest remainder first.
    classes = np.unique(dataset.labels)
    exact = {c: test_count * (dataset.labels == c).sum() / n for c in classes}
    counts = {c: int(np.floor(exact[c])) for c in classes}
    leftovers = sorted(classes, key=lambda c: exact[c] - counts[c], reverse=True)
    for c in leftovers[: test_count - sum(counts.values())]:
        counts[c] += 1

    rng = np.random.default_rng(spec.seed)
    test_parts = []
    for c in sorted(classes):
        ix = np.flatnonzero(dataset.labels == c)
        test_parts.append(rng.permutation(ix)[: counts[c]])
    test_idx = np.sort(np.concatenate(test_parts))
    mask = np.zeros(n, dtype=bool)
    mask[test_idx] = True

    def _subset(sel: np.ndarray, tag: str) -> RawDataset:
        return RawDataset(
            features=dataset.features[sel],
            labels=dataset.labels[sel],
            source=f"{dataset.source}/{tag}",
        )

    return _subset(~mask, "train"), _subset(mask, "test")


def cache_write(dataset: RawDataset, path) -> None:
    """Write the dataset as a little-endian binary cache with crc32 trailer.

    Layout: magic, format version, row count, feature count, then
    contiguous float32 rows (label first, mirroring the CSV), then the
    crc32 of everything before it.
    """
    n, f = dataset.features.shape
    rows = np.empty((n, f + 1), dtype="<f4")
    rows[:, 0] = dataset.labels
    rows[:, 1:] = dataset.features
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, n, f)
    payload = rows.tobytes()
    crc = zlib.crc32(payload, zlib.crc32(header))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def cache_read(path) -> RawDataset:
    """Read a cache written by :func:`cache_write`; verifies version and crc."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise CacheError(f"no cache at {path}") from None

    if len(blob) < _HEADER.size + 4:
        raise CacheError(f"cache {path} is truncated")
    magic, version, n, f = _HEADER.unpack_from(blob)
    if magic != CACHE_MAGIC:
        raise CacheError(f"{path} is not a dataset cache (bad magic)")
    if version != CACHE_VERSION:
        raise CacheError(f"cache {path} has version {version}, expected {CACHE_VERSION}")

    body_end = _HEADER.size + n * (f + 1) * 4
    if len(blob) != body_end + 4:
        raise CacheError(f"cache {path} has wrong length for {n} rows")
    (stored_crc,) = struct.unpack_from("<I", blob, body_end)
    if zlib.crc32(blob[:body_end]) != stored_crc:
        raise CacheError(f"cache {path} failed checksum; re-ingest the CSV")

    rows = np.frombuffer(blob, dtype="<f4", count=n * (f + 1), offset=_HEADER.size)
    rows = rows.reshape(n, f + 1)
    labels = rows[:, 0].astype(np.uint8)
    if not np.all((rows[:, 0] == 0.0) | (rows[:, 0] == 1.0)):
        raise CacheError(f"cache {path} contains non-binary labels")
    return RawDataset(
        features=rows[:, 1:].copy(), labels=labels, source=str(path)
    )
