"""Command line front end: prepare, train, eval, sweeps, mask export.

All verbs read one declarative JSON config (see
:class:`bcpnn.experiment.ExperimentConfig`); ``--seed`` and ``--out``
override single fields, ``--threads`` caps both BLAS threads and sweep
worker processes.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bcpnn",
        description="Hypercolumn network training pipeline for two-class tabular data.",
    )
    parser.add_argument("--config", help="experiment config JSON", default=None)
    parser.add_argument("--seed", type=int, default=None, help="override train.seed")
    parser.add_argument("--out", default=None, help="override out_dir")
    parser.add_argument("--threads", type=int, default=None, help="cap BLAS/sweep parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("prepare", help="ingest, balance, fit quantiles, encode, cache")

    p_train = sub.add_parser("train", help="train hidden layer and readout")
    p_train.add_argument("--resume", default=None, help="model.npz to continue from")
    p_train.add_argument("--no-snapshots", action="store_true", help="skip per-epoch mask PGMs")

    p_eval = sub.add_parser("eval", help="evaluate a finished run")
    p_eval.add_argument("--run", required=True, help="run directory with model.npz/readout.npz")
    p_eval.add_argument("--data", default=None, help="encoded .npz (default: prepared test split)")

    sub.add_parser("sweep-capacity", help="grid over minicolumn/hypercolumn counts")
    sub.add_parser("sweep-rf", help="sweep the receptive-field density grid")

    p_masks = sub.add_parser("export-masks", help="write a model's mask as PGM files")
    p_masks.add_argument("--model", required=True, help="model.npz")
    p_masks.add_argument("--dest", required=True, help="output directory")

    p_synth = sub.add_parser("synth", help="generate a synthetic label+28-feature CSV")
    p_synth.add_argument("--kind", choices=["collisions", "planted"], default="collisions")
    p_synth.add_argument("--rows", type=int, default=200000)
    p_synth.add_argument("--dest", required=True, help="output CSV path")
    p_synth.add_argument("--groups", type=int, default=32)
    p_synth.add_argument("--delta", type=float, default=0.22)
    p_synth.add_argument("--sigma", type=float, default=1.5)
    return parser


def _load_config(args):
    from bcpnn.experiment import ExperimentConfig

    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, seed=args.seed))
    if args.threads is not None:
        cfg = dataclasses.replace(cfg, workers=max(1, args.threads))
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.threads is not None:
        try:
            from threadpoolctl import threadpool_limits

            threadpool_limits(limits=max(1, args.threads))
        except ImportError:
            pass

    from bcpnn import experiment, maskio, synthetic
    from bcpnn.encoding import EncodedDataset
    from bcpnn.network import BcpnnLayer

    if args.command == "synth":
        import numpy as np

        rows = args.rows
        seed = args.seed if args.seed is not None else 0
        if args.kind == "collisions":
            x, y, _info = synthetic.make_surrogate_collisions(
                rows, n_groups=args.groups, delta=args.delta, sigma=args.sigma, seed=seed
            )
        else:
            x, y = synthetic.make_planted_dataset(rows, seed=seed)
        synthetic.write_collision_csv(args.dest, x, y)
        print(f"wrote {rows} rows ({args.kind}, seed {seed}) to {args.dest}")
        return 0

    if args.command == "export-masks":
        layer, meta = BcpnnLayer.load(args.model)
        epoch = int(meta.get("epochs_done", 0))
        names = maskio.snapshot_mask(
            layer, args.dest, epoch, comment=f"config={meta.get('config_hash', '')}"
        )
        print(f"wrote {len(names)} mask images to {args.dest}")
        return 0

    cfg = _load_config(args)

    if args.command == "prepare":
        prep = experiment.prepare(cfg)
        verb = "reused existing" if prep.reused else "built"
        print(f"{verb} encoded caches in {prep.data_dir}")
        print(f"train: {len(prep.train)} rows, test: {len(prep.test)} rows, "
              f"width {prep.train.samples.shape[1]}")
        return 0

    if args.command == "train":
        prep = experiment.prepare(cfg)
        run_dir = Path(cfg.out_dir) / "train" / f"seed{cfg.train.seed}"
        res = experiment.run_one(
            cfg,
            prep,
            seed=cfg.train.seed,
            run_dir=run_dir,
            snapshots=not args.no_snapshots,
            resume_from=args.resume,
        )
        print(f"run dir: {res.run_dir}")
        print(f"test accuracy {res.accuracy:.4f}, AUC {res.auc:.4f}, "
              f"train took {res.train_seconds:.1f}s ({res.swaps_total} swaps)")
        return 0

    if args.command == "eval":
        if args.data:
            data = EncodedDataset.load(args.data)
        else:
            prep = experiment.prepare(cfg)
            data = prep.test
        report = experiment.evaluate(args.run, data)
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0

    if args.command in ("sweep-capacity", "sweep-rf"):
        prep = experiment.prepare(cfg)
        if args.command == "sweep-capacity":
            result = experiment.sweep_capacity(cfg, prep)
            name = "sweep_capacity"
        else:
            result = experiment.sweep_receptive_field(cfg, prep)
            name = "sweep_rf"
        print(f"wrote {len(result.rows)} rows to {Path(cfg.out_dir) / name / 'sweep.csv'}")
        for line in result.summary():
            print(
                f"H={line['n_hcus']} M={line['n_mcus']} d={line['density']:g}: "
                f"acc {line['accuracy_mean']} +/- {line['accuracy_std']} "
                f"({line['failures']} failures)"
            )
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
