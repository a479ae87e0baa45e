"""Per-feature quantile one-hot encoding and balanced subset extraction.

Each real-valued feature is discretised into ``n_bins`` groups of roughly
equal occupancy (boundaries at the k/n_bins empirical quantiles of the
training split, linear-interpolation convention) and emitted as a one-hot
block, so a sample with F features becomes a binary vector of F * n_bins
components with exactly F ones.  Values outside the fitted range clamp to
the edge bins; duplicated boundaries (tied data) collapse bins; samples
containing NaN are rejected rather than imputed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1


class FitError(ValueError):
    """Quantile fitting failed (empty or all-NaN column, bad bin count)."""


class EncodingError(ValueError):
    """A value cannot be encoded (NaN input or shape mismatch)."""


class BalanceError(ValueError):
    """A class has fewer samples than the requested balanced subset size."""


@dataclass
class QuantileTable:
    """Per-feature quantile boundaries fitted on training data.

    ``boundaries[f]`` holds the n_bins - 1 non-decreasing cut points of
    feature ``f``; ``encode_value`` maps a value to the smallest bin whose
    boundary is >= the value, clamping above the last cut point.
    """

    boundaries: np.ndarray  # (n_features, n_bins - 1) float64
    n_bins: int

    def __post_init__(self) -> None:
        self.boundaries = np.asarray(self.boundaries, dtype=np.float64)
        if self.boundaries.ndim != 2:
            raise FitError(f"boundaries must be 2-D, got shape {self.boundaries.shape}")
        if self.n_bins < 2:
            raise FitError(f"n_bins must be >= 2, got {self.n_bins}")
        if self.boundaries.shape[1] != self.n_bins - 1:
            raise FitError(
                f"expected {self.n_bins - 1} cut points per feature, "
                f"got {self.boundaries.shape[1]}"
            )
        if np.any(np.diff(self.boundaries, axis=1) < 0):
            raise FitError("boundaries must be non-decreasing within each feature")

    @property
    def n_features(self) -> int:
        return self.boundaries.shape[0]

    @property
    def n_components(self) -> int:
        """Width of the encoded vector: n_features * n_bins."""
        return self.n_features * self.n_bins

    def table_hash(self) -> str:
        """Stable hex digest of the fitted boundaries, for provenance checks."""
        payload = json.dumps(
            {"n_bins": self.n_bins, "boundaries": self.boundaries.tolist()},
            sort_keys=True,
        ).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "n_bins": self.n_bins,
            "n_features": self.n_features,
            "boundaries": {str(f): self.boundaries[f].tolist() for f in range(self.n_features)},
        }
        return json.dumps(doc, indent=2)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "QuantileTable":
        doc = json.loads(text)
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise FitError(f"unsupported quantile table version {version!r}")
        n_features = int(doc["n_features"])
        rows = [doc["boundaries"][str(f)] for f in range(n_features)]
        return cls(boundaries=np.asarray(rows, dtype=np.float64), n_bins=int(doc["n_bins"]))

    @classmethod
    def load(cls, path) -> "QuantileTable":
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass
class EncodedDataset:
    """One-hot encoded samples: (N, F * n_bins) binary matrix plus labels."""

    samples: np.ndarray  # (N, n_components) uint8
    labels: np.ndarray  # (N,) uint8
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.samples.ndim != 2:
            raise EncodingError(f"samples must be 2-D, got shape {self.samples.shape}")
        if len(self.labels) != len(self.samples):
            raise EncodingError(
                f"{len(self.labels)} labels for {len(self.samples)} samples"
            )
        if len(self.samples) == 0:
            raise EncodingError("encoded dataset is empty")

    def __len__(self) -> int:
        return len(self.samples)

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            format_version=FORMAT_VERSION,
            samples=self.samples,
            labels=self.labels,
            provenance=json.dumps(self.provenance),
        )

    @classmethod
    def load(cls, path) -> "EncodedDataset":
        with np.load(path, allow_pickle=False) as doc:
            if int(doc["format_version"]) != FORMAT_VERSION:
                raise EncodingError(f"unsupported encoded dataset version at {path}")
            return cls(
                samples=doc["samples"],
                labels=doc["labels"],
                provenance=json.loads(str(doc["provenance"])),
            )


def fit_quantiles(values, n_bins: int = 10) -> QuantileTable:
    """Fit per-feature quantile boundaries on the training split.

    ``values`` is an (N, F) matrix (a single column may be passed 1-D).
    Boundaries are the k/n_bins empirical quantiles for k = 1..n_bins-1
    under linear interpolation between order statistics.  NaN cells are
    ignored during fitting; a column with no finite values is an error.
    """
    if n_bins < 2:
        raise FitError(f"n_bins must be >= 2, got {n_bins}")
    cols = np.asarray(values, dtype=np.float64)
    if cols.ndim == 1:
        cols = cols[:, None]
    if cols.ndim != 2 or cols.shape[0] == 0:
        raise FitError(f"need a non-empty (N, F) matrix, got shape {cols.shape}")

    qs = np.arange(1, n_bins) / n_bins
    boundaries = np.empty((cols.shape[1], n_bins - 1), dtype=np.float64)
    for f in range(cols.shape[1]):
        col = cols[:, f]
        col = col[~np.isnan(col)]
        if col.size == 0:
            raise FitError(f"feature {f} has no finite values to fit")
        boundaries[f] = np.quantile(col, qs, method="linear")
    return QuantileTable(boundaries=boundaries, n_bins=n_bins)


def encode_value(value: float, feature_index: int, table: QuantileTable) -> int:
    """Bin index in [0, n_bins) for one value of one feature.

    Returns the smallest k with value <= boundaries[k], else n_bins - 1;
    out-of-range values clamp to the edge bins.
    """
    if not 0 <= feature_index < table.n_features:
        raise EncodingError(f"feature index {feature_index} out of range")
    if np.isnan(value):
        raise EncodingError(f"cannot encode NaN (feature {feature_index})")
    k = int(np.searchsorted(table.boundaries[feature_index], value, side="left"))
    return min(k, table.n_bins - 1)


def _bin_indices(raw: np.ndarray, table: QuantileTable) -> np.ndarray:
    """Vectorised encode_value over an (N, F) matrix without NaNs."""
    out = np.empty(raw.shape, dtype=np.int64)
    for f in range(table.n_features):
        out[:, f] = np.searchsorted(table.boundaries[f], raw[:, f], side="left")
    np.minimum(out, table.n_bins - 1, out=out)
    return out


def encode_dataset(raw, labels, table: QuantileTable, source: str = "") -> EncodedDataset:
    """One-hot encode an (N, F) real matrix; NaN rows are dropped and tallied.

    Row i, feature block f carries a single 1 at the bin chosen by
    ``encode_value(raw[i, f], f, table)``.  Labels are preserved in order;
    provenance records the source split and the fitted table's hash.
    """
    raw = np.asarray(raw, dtype=np.float64)
    labels = np.asarray(labels)
    if raw.ndim != 2 or raw.shape[1] != table.n_features:
        raise EncodingError(
            f"expected (N, {table.n_features}) matrix, got shape {raw.shape}"
        )
    if len(labels) != len(raw):
        raise EncodingError(f"{len(labels)} labels for {len(raw)} rows")

    keep = ~np.isnan(raw).any(axis=1)
    rejected = int(len(raw) - keep.sum())
    raw = raw[keep]
    if raw.shape[0] == 0:
        raise EncodingError("all samples rejected (NaN cells)")

    bins = _bin_indices(raw, table)
    n, n_feat = raw.shape
    bits = np.zeros((n, table.n_components), dtype=np.uint8)
    cols = bins + np.arange(n_feat, dtype=np.int64) * table.n_bins
    bits[np.arange(n)[:, None], cols] = 1

    return EncodedDataset(
        samples=bits,
        labels=labels[keep].astype(np.uint8),
        provenance={
            "source": source,
            "table_hash": table.table_hash(),
            "n_bins": table.n_bins,
            "n_features": table.n_features,
            "rejected": rejected,
        },
    )


def balance_subset(features, labels, n_per_class: int, seed: int):
    """Draw a class-balanced subset without replacement, shuffled under seed.

    Returns ``(features, labels)`` with exactly ``n_per_class`` samples of
    each class in {0, 1}.  Raises :class:`BalanceError` with the per-class
    availability when either class is short.
    """
    features = np.asarray(features)
    labels = np.asarray(labels)
    if len(features) != len(labels):
        raise EncodingError(f"{len(labels)} labels for {len(features)} rows")
    if n_per_class < 0:
        raise BalanceError(f"n_per_class must be >= 0, got {n_per_class}")

    idx_by_class = [np.flatnonzero(labels == c) for c in (0, 1)]
    shortage = {c: len(ix) for c, ix in enumerate(idx_by_class) if len(ix) < n_per_class}
    if shortage:
        raise BalanceError(
            f"need {n_per_class} per class, available: "
            + ", ".join(f"class {c}: {n}" for c, n in sorted(shortage.items()))
        )

    rng = np.random.default_rng(seed)
    chosen = [rng.choice(ix, size=n_per_class, replace=False) for ix in idx_by_class]
    order = rng.permutation(2 * n_per_class)
    idx = np.concatenate(chosen)[order] if n_per_class > 0 else np.empty(0, dtype=np.int64)
    return features[idx], labels[idx]
