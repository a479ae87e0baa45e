"""Experiment configs, the prepare/train/eval pipeline, and sweep harness.

An experiment is described by one declarative JSON document (see
:class:`ExperimentConfig`); command-line flags override single fields.
Every artifact directory receives a copy of the exact resolved config, and
every CSV/JSON artifact carries the config hash and seed, so any reported
number can be regenerated from its directory alone.

Sweeps are embarrassingly parallel at the (configuration, repetition)
level: each cell trains in its own output directory with its own seed,
optionally across worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from bcpnn import maskio
from bcpnn.encoding import EncodedDataset, QuantileTable, balance_subset, encode_dataset, fit_quantiles
from bcpnn.ingestion import RawDataset, SplitSpec, cache_read, cache_write, load_csv, split
from bcpnn.metrics import accuracy, roc_auc
from bcpnn.network import BcpnnLayer, LayerGeometry, init_layer
from bcpnn.training import (
    ConfigError,
    EpochLog,
    ReadoutModel,
    TrainConfig,
    hidden_activations,
    predict,
    train_hidden,
    train_readout,
)

_DEFAULT_DENSITIES = [round(0.05 * i, 2) for i in range(21)]


@dataclass
class GeometryConfig:
    """Declarative layer shape; materialised once the input width is known."""

    n_hcus: int = 1
    n_mcus: int = 300
    density: float = 0.3
    block_mask: bool = False

    def to_geometry(self, n_inputs: int, n_bins: int) -> LayerGeometry:
        return LayerGeometry(
            n_inputs=n_inputs,
            n_hcus=self.n_hcus,
            n_mcus=self.n_mcus,
            density=self.density,
            block_size=n_bins if self.block_mask else None,
        )


@dataclass
class ExperimentConfig:
    """Everything one experiment needs, resolvable to a canonical JSON doc."""

    csv_path: str | None = None
    row_limit: int | None = None
    split_seed: int = 1234
    test_count: int = 0
    train_fraction: float = 0.8
    train_per_class: int = 50000
    test_per_class: int = 25000
    n_bins: int = 10
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    repetitions: int = 10
    m_list: list[int] = field(default_factory=lambda: [30, 300, 3000])
    h_list: list[int] = field(default_factory=lambda: [1, 2, 4, 8])
    density_list: list[float] = field(default_factory=lambda: list(_DEFAULT_DENSITIES))
    rf_n_mcus: int = 3000
    workers: int = 1
    out_dir: str = "runs/experiment"

    def __post_init__(self) -> None:
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ConfigError("train_per_class and test_per_class must be >= 1")
        if self.n_bins < 2:
            raise ConfigError(f"n_bins must be >= 2, got {self.n_bins}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")

    # -- serialisation ---------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "geometry" in doc:
            doc["geometry"] = GeometryConfig(**doc["geometry"])
        if "train" in doc:
            doc["train"] = TrainConfig(**doc["train"])
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def resolved_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.resolved_json().encode()).hexdigest()[:12]

    def prepare_hash(self) -> str:
        """Hash over only the fields that determine the prepared data."""
        keys = {
            "csv_path": self.csv_path,
            "row_limit": self.row_limit,
            "split_seed": self.split_seed,
            "test_count": self.test_count,
            "train_fraction": self.train_fraction,
            "train_per_class": self.train_per_class,
            "test_per_class": self.test_per_class,
            "n_bins": self.n_bins,
        }
        return hashlib.sha256(json.dumps(keys, sort_keys=True).encode()).hexdigest()[:12]


# ----------------------------------------------------------------------
# Prepare: CSV -> raw cache -> balanced splits -> quantiles -> encoded
# ----------------------------------------------------------------------


@dataclass
class PreparedData:
    train: EncodedDataset
    test: EncodedDataset
    table: QuantileTable
    data_dir: Path
    reused: bool


def prepare(cfg: ExperimentConfig) -> PreparedData:
    """Run (or reuse) the data pipeline and leave encoded caches on disk."""
    if not cfg.csv_path:
        raise ConfigError("prepare needs csv_path in the config")
    data_dir = Path(cfg.out_dir) / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = data_dir / "manifest.json"
    want = cfg.prepare_hash()

    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("prepare_hash") == want:
            return PreparedData(
                train=EncodedDataset.load(data_dir / "train_encoded.npz"),
                test=EncodedDataset.load(data_dir / "test_encoded.npz"),
                table=QuantileTable.load(data_dir / "quantiles.json"),
                data_dir=data_dir,
                reused=True,
            )

    raw = _load_raw(cfg, data_dir)
    train_raw, test_raw = split(
        raw,
        SplitSpec(
            train_fraction=cfg.train_fraction,
            test_count=cfg.test_count,
            seed=cfg.split_seed,
        ),
    )
    train_x, train_y = balance_subset(
        train_raw.features, train_raw.labels, cfg.train_per_class, seed=cfg.split_seed + 1
    )
    test_x, test_y = balance_subset(
        test_raw.features, test_raw.labels, cfg.test_per_class, seed=cfg.split_seed + 2
    )

    table = fit_quantiles(train_x, n_bins=cfg.n_bins)
    table.save(data_dir / "quantiles.json")
    train_enc = encode_dataset(train_x, train_y, table, source="train")
    test_enc = encode_dataset(test_x, test_y, table, source="test")
    train_enc.save(data_dir / "train_encoded.npz")
    test_enc.save(data_dir / "test_encoded.npz")

    manifest = {
        "prepare_hash": want,
        "config_hash": cfg.config_hash(),
        "table_hash": table.table_hash(),
        "train_rows": len(train_enc),
        "test_rows": len(test_enc),
        "rejected": {
            "load": raw.rejected,
            "encode_train": train_enc.provenance["rejected"],
            "encode_test": test_enc.provenance["rejected"],
        },
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (Path(cfg.out_dir) / "resolved_config.json").write_text(cfg.resolved_json())
    return PreparedData(train=train_enc, test=test_enc, table=table, data_dir=data_dir, reused=False)


def _load_raw(cfg: ExperimentConfig, data_dir: Path) -> RawDataset:
    """Parse the CSV, or reuse the binary cache when it matches."""
    cache_path = data_dir / "raw.cache"
    key = f"{cfg.csv_path}|{cfg.row_limit}"
    key_path = data_dir / "raw.cache.key"
    if cache_path.exists() and key_path.exists() and key_path.read_text() == key:
        return cache_read(cache_path)
    raw = load_csv(cfg.csv_path, limit=cfg.row_limit)
    cache_write(raw, cache_path)
    key_path.write_text(key)
    return raw


# ----------------------------------------------------------------------
# One training run
# ----------------------------------------------------------------------


@dataclass
class RunResult:
    seed: int
    accuracy: float
    auc: float
    train_seconds: float
    hidden_seconds: float
    train_accuracy: float
    run_dir: str
    swaps_total: int


def run_one(
    cfg: ExperimentConfig,
    prepared: PreparedData,
    seed: int,
    run_dir,
    geometry: LayerGeometry | None = None,
    snapshots: bool = True,
    resume_from=None,
) -> RunResult:
    """Train hidden layer + readout on the prepared data and evaluate.

    Writes model, readout, per-epoch log, per-epoch mask snapshots, ROC
    CSV and a metrics report into ``run_dir``.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    tcfg = replace(cfg.train, seed=seed)
    if geometry is None:
        geometry = cfg.geometry.to_geometry(prepared.train.samples.shape[1], cfg.n_bins)

    tag = f"config={chash} seed={seed}"
    start_epoch = 0
    prior_log = EpochLog()
    if resume_from is not None:
        layer, meta = BcpnnLayer.load(resume_from)
        if meta.get("config_hash") not in (None, chash):
            raise ConfigError(
                f"resume model was trained under config {meta.get('config_hash')}, "
                f"current config is {chash}"
            )
        start_epoch = int(meta.get("epochs_done", 0))
        log_path = run_dir / "epochs.csv"
        if log_path.exists():
            prior_log = EpochLog.from_csv(log_path)
            prior_log.entries = [e for e in prior_log.entries if e.epoch < start_epoch]
    else:
        layer = init_layer(
            geometry,
            seed=seed,
            input_rate=1.0 / cfg.n_bins,
            alpha=tcfg.alpha,
            dtype=np.dtype(tcfg.dtype),
        )

    def on_epoch(ly, entry):
        if snapshots:
            maskio.snapshot_mask(ly, run_dir / "masks", entry.epoch, comment=tag)

    t0 = time.perf_counter()
    layer, log = train_hidden(layer, prepared.train, tcfg, start_epoch=start_epoch, on_epoch=on_epoch)
    log.entries = prior_log.entries + log.entries
    hidden_seconds = sum(e.seconds for e in log.entries)

    acts = hidden_activations(layer, prepared.train)
    readout = train_readout(acts, prepared.train.labels, tcfg)
    train_seconds = time.perf_counter() - t0

    train_scores, train_pred = predict(layer, readout, prepared.train)
    test_scores, test_pred = predict(layer, readout, prepared.test)
    train_acc = accuracy(train_pred, prepared.train.labels)
    test_acc = accuracy(test_pred, prepared.test.labels)
    curve = roc_auc(test_scores, prepared.test.labels)
    if log.entries:
        log.entries[-1].train_acc = train_acc
        log.entries[-1].heldout_acc = test_acc

    meta = {
        "config_hash": chash,
        "seed": seed,
        "epochs_done": tcfg.epochs,
        "table_hash": prepared.table.table_hash(),
        "readout": tcfg.readout,
    }
    layer.save(run_dir / "model.npz", meta=meta)
    readout.save(run_dir / "readout.npz", meta=meta)
    log.to_csv(run_dir / "epochs.csv", header_comment=tag)
    curve.to_csv(run_dir / "roc.csv")
    (run_dir / "resolved_config.json").write_text(cfg.resolved_json())

    result = RunResult(
        seed=seed,
        accuracy=test_acc,
        auc=curve.auc,
        train_seconds=train_seconds,
        hidden_seconds=hidden_seconds,
        train_accuracy=train_acc,
        run_dir=str(run_dir),
        swaps_total=sum(e.swaps for e in log.entries),
    )
    report = {
        "config_hash": chash,
        "seed": seed,
        "test_accuracy": test_acc,
        "test_auc": curve.auc,
        "train_accuracy": train_acc,
        "train_seconds": train_seconds,
        "confusion": _confusion(test_pred, prepared.test.labels),
    }
    (run_dir / "metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return result


def _confusion(pred, labels) -> dict:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    return {
        "tp": int(np.sum((pred == 1) & (labels == 1))),
        "fp": int(np.sum((pred == 1) & (labels == 0))),
        "fn": int(np.sum((pred == 0) & (labels == 1))),
        "tn": int(np.sum((pred == 0) & (labels == 0))),
    }


def evaluate(run_dir, data: EncodedDataset, out_name: str = "eval.json") -> dict:
    """Re-evaluate a persisted run on an encoded dataset; deterministic.

    Refuses to run when the dataset was encoded under a different quantile
    table than the model was trained with.
    """
    run_dir = Path(run_dir)
    layer, meta = BcpnnLayer.load(run_dir / "model.npz")
    readout = ReadoutModel.load(run_dir / "readout.npz")
    expected = meta.get("table_hash")
    got = data.provenance.get("table_hash")
    if expected and got and expected != got:
        raise ConfigError(
            f"encoding mismatch: model trained on table {expected}, data encoded with {got}"
        )
    scores, pred = predict(layer, readout, data)
    curve = roc_auc(scores, data.labels)
    report = {
        "config_hash": meta.get("config_hash"),
        "seed": meta.get("seed"),
        "accuracy": accuracy(pred, data.labels),
        "auc": curve.auc,
        "confusion": _confusion(pred, data.labels),
        "n_samples": int(len(data)),
    }
    (run_dir / out_name).write_text(json.dumps(report, indent=2, sort_keys=True))
    curve.to_csv(run_dir / out_name.replace(".json", "_roc.csv"))
    return report


# ----------------------------------------------------------------------
# Sweeps
# ----------------------------------------------------------------------


@dataclass
class SweepResult:
    """Per-cell rows plus recomputable aggregate statistics."""

    rows: list[dict] = field(default_factory=list)

    def summary(self) -> list[dict]:
        groups: dict[tuple, list[dict]] = {}
        for row in self.rows:
            groups.setdefault((row["n_hcus"], row["n_mcus"], row["density"]), []).append(row)
        out = []
        for (h, m, d), rows in sorted(groups.items()):
            ok = [r for r in rows if not r.get("error")]
            accs = np.asarray([r["accuracy"] for r in ok], dtype=np.float64)
            aucs = np.asarray([r["auc"] for r in ok], dtype=np.float64)
            secs = np.asarray([r["train_seconds"] for r in ok], dtype=np.float64)
            out.append(
                {
                    "n_hcus": h,
                    "n_mcus": m,
                    "density": d,
                    "repetitions": len(rows),
                    "failures": len(rows) - len(ok),
                    "accuracy_mean": float(accs.mean()) if len(ok) else None,
                    "accuracy_std": float(accs.std(ddof=0)) if len(ok) else None,
                    "auc_mean": float(aucs.mean()) if len(ok) else None,
                    "auc_std": float(aucs.std(ddof=0)) if len(ok) else None,
                    "seconds_mean": float(secs.mean()) if len(ok) else None,
                }
            )
        return out

    _ROW_FIELDS = [
        "n_hcus", "n_mcus", "density", "repetition", "seed",
        "accuracy", "auc", "train_seconds", "run_dir", "error",
    ]

    def write_csv(self, path, header_comment: str = "") -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.DictWriter(fh, fieldnames=self._ROW_FIELDS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: row.get(k, "") for k in self._ROW_FIELDS})

    def write_summary_csv(self, path, header_comment: str = "") -> None:
        summary = self.summary()
        if not summary:
            return
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.DictWriter(fh, fieldnames=list(summary[0]))
            writer.writeheader()
            writer.writerows(summary)


def _run_cell(args: tuple) -> dict:
    """Worker entry for one (configuration, repetition) sweep cell."""
    cfg_doc, geo_doc, seed, rep, data_dir, run_dir = args
    cfg = ExperimentConfig.from_dict(cfg_doc)
    prepared = PreparedData(
        train=EncodedDataset.load(Path(data_dir) / "train_encoded.npz"),
        test=EncodedDataset.load(Path(data_dir) / "test_encoded.npz"),
        table=QuantileTable.load(Path(data_dir) / "quantiles.json"),
        data_dir=Path(data_dir),
        reused=True,
    )
    geo = GeometryConfig(**geo_doc)
    geometry = geo.to_geometry(prepared.train.samples.shape[1], cfg.n_bins)
    row = {
        "n_hcus": geo.n_hcus,
        "n_mcus": geo.n_mcus,
        "density": geo.density,
        "repetition": rep,
        "seed": seed,
        "error": "",
    }
    try:
        res = run_one(cfg, prepared, seed, run_dir, geometry=geometry, snapshots=True)
        row.update(
            accuracy=res.accuracy,
            auc=res.auc,
            train_seconds=res.train_seconds,
            run_dir=res.run_dir,
        )
    except Exception as exc:  # per-cell failures must not kill the sweep
        row.update(accuracy=None, auc=None, train_seconds=None, run_dir=str(run_dir), error=repr(exc))
    return row


def _run_sweep(cfg: ExperimentConfig, prepared: PreparedData, cells: list[GeometryConfig], name: str) -> SweepResult:
    out = Path(cfg.out_dir) / name
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for geo in cells:
        for rep in range(cfg.repetitions):
            seed = cfg.train.seed + rep
            run_dir = out / f"h{geo.n_hcus}_m{geo.n_mcus}_d{geo.density:g}" / f"rep{rep}"
            jobs.append((cfg.to_dict(), dataclasses.asdict(geo), seed, rep, str(prepared.data_dir), str(run_dir)))

    result = SweepResult()
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            result.rows = list(pool.map(_run_cell, jobs))
    else:
        result.rows = [_run_cell(job) for job in jobs]

    tag = f"config={cfg.config_hash()} base_seed={cfg.train.seed}"
    result.write_csv(out / "sweep.csv", header_comment=tag)
    result.write_summary_csv(out / "summary.csv", header_comment=tag)
    return result


def sweep_capacity(cfg: ExperimentConfig, prepared: PreparedData) -> SweepResult:
    """Grid over minicolumn and hypercolumn counts at fixed density."""
    cells = [
        GeometryConfig(n_hcus=h, n_mcus=m, density=cfg.geometry.density, block_mask=cfg.geometry.block_mask)
        for m in cfg.m_list
        for h in cfg.h_list
    ]
    return _run_sweep(cfg, prepared, cells, "sweep_capacity")


def sweep_receptive_field(cfg: ExperimentConfig, prepared: PreparedData) -> SweepResult:
    """Fixed capacity (single HCU by default) swept over mask density."""
    cells = [
        GeometryConfig(n_hcus=1, n_mcus=cfg.rf_n_mcus, density=d, block_mask=cfg.geometry.block_mask)
        for d in cfg.density_list
    ]
    return _run_sweep(cfg, prepared, cells, "sweep_rf")
