"""Training orchestration: unsupervised hidden layer plus supervised readout.

The hidden layer never sees labels: per epoch it shuffles the encoded
samples (seeded), and for every batch runs forward with a small seeded
exploration noise, takes one trace EMA step toward the batch mean, and
refreshes the weights; after the batches one structural-plasticity step
may rewire the mask.  All randomness is keyed by (seed, epoch, stream),
so an interrupted run resumed from a saved layer is bit-identical to an
uninterrupted one.

The readout maps hidden activations to the two classes either with a
teacher-forced layer of the same kind (the readout activation clamped to
the label one-hot while traces accumulate exact empirical co-activation
probabilities) or with a softmax regression trained by minibatch SGD on
cross-entropy.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from bcpnn.network import BcpnnLayer, LayerGeometry, ShapeError, init_layer

_STREAM_SHUFFLE = 1
_STREAM_NOISE = 2
_STREAM_SGD = 3

READOUT_KINDS = ("bcpnn", "sgd")


class ConfigError(ValueError):
    """Invalid training configuration."""


class DegenerateDataError(ValueError):
    """Supervised training needs both classes present."""


@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    epochs: int = 30
    batch_size: int = 128
    alpha: float = 1e-3
    plasticity_swaps: int | None = None  # None: 1% of the active budget, >= 1
    noise_amplitude: float = 1e-4
    seed: int = 0
    readout: str = "sgd"
    sgd_lr: float = 0.01
    sgd_epochs: int = 30
    per_sample_traces: bool = False
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.readout not in READOUT_KINDS:
            raise ConfigError(f"readout must be one of {READOUT_KINDS}, got {self.readout!r}")
        if self.sgd_lr <= 0 or self.sgd_epochs < 1:
            raise ConfigError("sgd_lr must be > 0 and sgd_epochs >= 1")
        np.dtype(self.dtype)  # raises on nonsense


@dataclass
class EpochEntry:
    epoch: int
    seconds: float
    swaps: int
    train_acc: float | None = None
    heldout_acc: float | None = None


@dataclass
class EpochLog:
    """Per-epoch training record, written alongside the model as CSV."""

    entries: list[EpochEntry] = field(default_factory=list)

    def append(self, entry: EpochEntry) -> None:
        if self.entries and entry.epoch <= self.entries[-1].epoch:
            raise ConfigError("epoch numbering must be monotone")
        self.entries.append(entry)

    def to_csv(self, path, header_comment: str = "") -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["epoch", "seconds", "swaps", "train_acc", "heldout_acc"])
            for e in self.entries:
                writer.writerow(
                    [
                        e.epoch,
                        f"{e.seconds:.6f}",
                        e.swaps,
                        "" if e.train_acc is None else f"{e.train_acc:.6f}",
                        "" if e.heldout_acc is None else f"{e.heldout_acc:.6f}",
                    ]
                )

    @classmethod
    def from_csv(cls, path) -> "EpochLog":
        log = cls()
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        for row in rows[1:]:
            log.append(
                EpochEntry(
                    epoch=int(row[0]),
                    seconds=float(row[1]),
                    swaps=int(row[2]),
                    train_acc=float(row[3]) if row[3] else None,
                    heldout_acc=float(row[4]) if row[4] else None,
                )
            )
        return log


def _samples_of(data) -> np.ndarray:
    return data.samples if hasattr(data, "samples") else np.asarray(data)


def _batch_slices(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield slice(start, min(start + batch_size, n))


def train_hidden(
    layer: BcpnnLayer,
    data,
    config: TrainConfig,
    start_epoch: int = 0,
    on_epoch=None,
) -> tuple[BcpnnLayer, EpochLog]:
    """Unsupervised training of one layer; labels are never read.

    ``data`` is an encoded dataset (only ``.samples`` is touched) or a
    plain binary matrix.  ``on_epoch(layer, entry)`` runs after each epoch
    (mask snapshots hook in here).  Resuming from ``start_epoch`` with the
    same seed reproduces an uninterrupted run bit for bit.
    """
    x_all = _samples_of(data).astype(layer.dtype)
    if x_all.ndim != 2 or x_all.shape[1] != layer.n_inputs:
        raise ShapeError(
            f"data width {x_all.shape} does not match layer inputs {layer.n_inputs}"
        )
    if layer.geometry.active_per_hcu == 0:
        warnings.warn(
            "density is 0: the network is blind and its outputs stay uniform",
            stacklevel=2,
        )
    layer.traces.alpha = config.alpha

    log = EpochLog()
    n = x_all.shape[0]
    for epoch in range(start_epoch, config.epochs):
        t0 = time.perf_counter()
        shuffle_rng = np.random.default_rng([config.seed, epoch, _STREAM_SHUFFLE])
        noise_rng = np.random.default_rng([config.seed, epoch, _STREAM_NOISE])
        perm = shuffle_rng.permutation(n)
        for sl in _batch_slices(n, config.batch_size):
            xb = x_all[perm[sl]]
            acts = layer.forward(xb, noise_rng=noise_rng, noise_amplitude=config.noise_amplitude)
            if config.per_sample_traces:
                for i in range(xb.shape[0]):
                    layer.update_traces(xb[i], acts[i])
            else:
                layer.update_traces(xb, acts)
            layer.recompute_weights(masked_only=True)
        report = layer.plasticity_step(config.plasticity_swaps)
        entry = EpochEntry(
            epoch=epoch, seconds=time.perf_counter() - t0, swaps=report.total
        )
        log.append(entry)
        if on_epoch is not None:
            on_epoch(layer, entry)
    layer.recompute_weights()
    return layer, log


# ----------------------------------------------------------------------
# Softmax cross-entropy readout (pure functions, float64-checkable)
# ----------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def softmax_xent_loss(w: np.ndarray, b: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy of softmax(x @ w + b) against integer labels."""
    p = softmax(x @ w + b)
    return float(-np.mean(np.log(p[np.arange(len(y)), y])))

def softmax_xent_grad(
    w: np.ndarray, b: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`softmax_xent_loss` w.r.t. ``w`` and ``b``."""
    p = softmax(x @ w + b)
    p[np.arange(len(y)), y] -= 1.0
    p /= len(y)
    return x.T @ p, p.sum(axis=0)


class ReadoutModel:
    """Two-class readout: teacher-forced trace layer or SGD softmax."""

    def __init__(self, kind: str, layer: BcpnnLayer | None = None, w=None, b=None):
        if kind not in READOUT_KINDS:
            raise ConfigError(f"unknown readout kind {kind!r}")
        self.kind = kind
        self.layer = layer
        self.w = None if w is None else np.asarray(w, dtype=np.float64)
        self.b = None if b is None else np.asarray(b, dtype=np.float64)

    def predict_proba(self, activations: np.ndarray) -> np.ndarray:
        """(N, 2) class probabilities; rows sum to 1."""
        acts = np.atleast_2d(activations)
        if self.kind == "bcpnn":
            return self.layer.forward(acts).astype(np.float64)
        return softmax(acts.astype(np.float64) @ self.w + self.b)

    def save(self, path, meta: dict | None = None) -> None:
        if self.kind == "bcpnn":
            self.layer.save(path, meta={**(meta or {}), "readout_kind": "bcpnn"})
        else:
            import json

            np.savez_compressed(
                path,
                format_version=1,
                kind="sgd",
                w=self.w,
                b=self.b,
                meta=json.dumps(meta or {}),
            )

    @classmethod
    def load(cls, path) -> "ReadoutModel":
        import json

        with np.load(path, allow_pickle=False) as doc:
            if "kind" in doc and str(doc["kind"]) == "sgd":
                return cls(kind="sgd", w=doc["w"], b=doc["b"])
        layer, _meta = BcpnnLayer.load(path)
        return cls(kind="bcpnn", layer=layer)


def train_readout(hidden_acts: np.ndarray, labels, config: TrainConfig) -> ReadoutModel:
    """Supervised readout on top of (noise-free) hidden activations.

    ``bcpnn`` mode clamps the readout activation to the label one-hot and
    runs trace updates with a running-average rate (n_batch / n_seen), so
    after one pass the traces are the exact empirical probabilities and a
    single weight recomputation finishes the fit.  ``sgd`` mode runs
    minibatch gradient descent on softmax cross-entropy for
    ``sgd_epochs`` at ``sgd_lr``.
    """
    acts = np.atleast_2d(np.asarray(hidden_acts))
    y = np.asarray(labels).astype(np.int64)
    if len(acts) != len(y):
        raise ShapeError(f"{len(y)} labels for {len(acts)} activation rows")
    classes = np.unique(y)
    if not np.array_equal(classes, [0, 1]):
        raise DegenerateDataError(f"need labels {{0, 1}} with both present, got {classes}")

    n, dim = acts.shape
    if config.readout == "bcpnn":
        geometry = LayerGeometry(n_inputs=dim, n_hcus=1, n_mcus=2, density=1.0)
        rate = float(np.clip(acts.mean(), 1e-6, 1.0 - 1e-6))
        layer = init_layer(
            geometry, seed=config.seed, input_rate=rate, alpha=config.alpha, dtype=np.float64
        )
        onehot = np.eye(2, dtype=np.float64)[y]
        seen = 0
        for sl in _batch_slices(n, config.batch_size):
            nb = sl.stop - sl.start
            layer.update_traces(acts[sl], onehot[sl], alpha=nb / (seen + nb))
            seen += nb
        layer.recompute_weights()
        return ReadoutModel(kind="bcpnn", layer=layer)

    w = np.zeros((dim, 2), dtype=np.float64)
    b = np.zeros(2, dtype=np.float64)
    for epoch in range(config.sgd_epochs):
        rng = np.random.default_rng([config.seed, epoch, _STREAM_SGD])
        perm = rng.permutation(n)
        for sl in _batch_slices(n, config.batch_size):
            idx = perm[sl]
            gw, gb = softmax_xent_grad(w, b, acts[idx].astype(np.float64), y[idx])
            w -= config.sgd_lr * gw
            b -= config.sgd_lr * gb
    return ReadoutModel(kind="sgd", w=w, b=b)


def hidden_activations(
    layer: BcpnnLayer, data, chunk_size: int = 8192
) -> np.ndarray:
    """Noise-free forward pass over a whole dataset, chunked for memory."""
    x = _samples_of(data)
    out = np.empty((x.shape[0], layer.n_units), dtype=layer.dtype)
    for sl in _batch_slices(x.shape[0], chunk_size):
        out[sl] = layer.forward(x[sl])
    return out


def predict(hidden_layer: BcpnnLayer, readout: ReadoutModel, samples):
    """Signal scores in [0, 1] plus hard labels for a dataset.

    Scores are the readout probability of the signal class on noise-free
    activations; hard labels are the argmax with ties resolved toward
    background (0).  Never mutates model state.
    """
    acts = hidden_activations(hidden_layer, samples)
    scores = np.empty(acts.shape[0], dtype=np.float64)
    for sl in _batch_slices(acts.shape[0], 8192):
        scores[sl] = readout.predict_proba(acts[sl])[:, 1]
    return scores, (scores > 0.5).astype(np.uint8)
