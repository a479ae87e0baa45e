"""Rate-based BCPNN learning with structural plasticity.

The package has three layers of functionality:

* data plumbing: streaming CSV ingestion with a binary cache
  (:mod:`bcpnn.ingestion`) and per-feature quantile one-hot encoding
  (:mod:`bcpnn.encoding`);
* the model itself: hypercolumns of softmax-competing minicolumns with
  probability-trace learning and connection rewiring
  (:mod:`bcpnn.network`), trained unsupervised with a supervised readout
  on top (:mod:`bcpnn.training`);
* experiment tooling: accuracy/ROC metrics (:mod:`bcpnn.metrics`),
  experiment configs and sweep harness (:mod:`bcpnn.experiment`) and the
  command line front end (:mod:`bcpnn.cli`).
"""

from bcpnn.encoding import (
    EncodedDataset,
    QuantileTable,
    balance_subset,
    encode_dataset,
    encode_value,
    fit_quantiles,
)
from bcpnn.ingestion import RawDataset, SplitSpec, cache_read, cache_write, load_csv, split
from bcpnn.metrics import RocCurve, accuracy, auc_oracle, roc_auc
from bcpnn.network import BcpnnLayer, LayerGeometry, TraceState, init_layer
from bcpnn.training import EpochLog, ReadoutModel, TrainConfig, predict, train_hidden, train_readout

__version__ = "0.1.0"

__all__ = [
    "BcpnnLayer",
    "EncodedDataset",
    "EpochLog",
    "LayerGeometry",
    "QuantileTable",
    "RawDataset",
    "ReadoutModel",
    "RocCurve",
    "SplitSpec",
    "TraceState",
    "TrainConfig",
    "accuracy",
    "auc_oracle",
    "balance_subset",
    "cache_read",
    "cache_write",
    "encode_dataset",
    "encode_value",
    "fit_quantiles",
    "init_layer",
    "load_csv",
    "predict",
    "roc_auc",
    "split",
    "train_hidden",
    "train_readout",
    "__version__",
]
