"""Command-line entry points.

    gladmamba train    --dataset AIDS --out runs/aids
    gladmamba eval     --checkpoint runs/aids/checkpoint.pt --out scores
    gladmamba spectral --dataset AIDS --out spectral
    gladmamba bench    --datasets AIDS,BZR --seeds 0..4 --out bench
    gladmamba fetch    --dataset AIDS

Dataset directories are looked up under --data-root or the
GLADMAMBA_DATA_ROOT environment variable.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import trainer
from .config import DATA_ROOT_ENV, RunConfig, load_config
from .dataset_io import assign_anomaly_labels, fetch_tu_dataset, parse_tu_dataset
from .spectral import LAPLACIAN_KINDS, UNNORMALIZED, dataset_energy_curves


def _parse_seeds(text: str) -> tuple[int, ...]:
    """Accept '0..4' ranges (inclusive) or comma lists like '0,2,5'."""
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        lo_i, hi_i = int(lo), int(hi)
        if hi_i < lo_i:
            raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
        return tuple(range(lo_i, hi_i + 1))
    return tuple(int(p) for p in text.split(",") if p.strip())


def _base_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    updates: dict = {}
    if getattr(args, "dataset", None):
        updates["dataset"] = args.dataset
    if getattr(args, "data_root", None):
        updates["data_root"] = args.data_root
    if getattr(args, "epochs", None) is not None:
        updates["epochs"] = args.epochs
    if getattr(args, "ablate", None):
        updates["ablation"] = args.ablate
    if getattr(args, "anomaly_class", None) is not None:
        updates["anomaly_class"] = args.anomaly_class
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    return cfg


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _base_config(args)
    artifacts = trainer.train(cfg, seed=args.seed, out_dir=args.out, log=not args.quiet)
    print(json.dumps(trainer.deterministic_view(artifacts.metrics), indent=2, sort_keys=True))
    if args.out:
        print(f"artifacts written to {args.out}", file=sys.stderr)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    model, cfg, normalizer, split = trainer.load_checkpoint(args.checkpoint)
    if args.data_root:
        cfg = dataclasses.replace(cfg, data_root=args.data_root)
    ds = trainer.load_dataset(cfg)
    prepared = trainer.prepare_graphs(ds, cfg.aug)
    report = trainer.evaluate(
        model,
        normalizer,
        prepared,
        ds.anomaly_flags(),
        split.test_ids,
        cfg.loss,
        cfg.eval.batch_size,
    )
    print(json.dumps({"dataset": ds.name, "auc": report.auc, "n_test": int(report.graph_ids.size)}))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "scores.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["graph_id", "is_anomaly", "node_loss", "graph_loss", "score"])
            for i in range(report.graph_ids.size):
                writer.writerow(
                    [
                        int(report.graph_ids[i]),
                        int(report.labels[i]),
                        repr(float(report.node_losses[i])),
                        repr(float(report.graph_losses[i])),
                        repr(float(report.scores[i])),
                    ]
                )
        print(f"scores written to {path}", file=sys.stderr)
    return 0


def _cmd_spectral(args: argparse.Namespace) -> int:
    cfg = _base_config(args)
    ds = assign_anomaly_labels(
        parse_tu_dataset(cfg.resolve_data_root(), cfg.dataset), cfg.anomaly_class
    )
    curves = dataset_energy_curves(ds, cfg.aug, kind=args.laplacian)
    summary = {
        "dataset": ds.name,
        "laplacian": args.laplacian,
        "graphs_used_normal": curves.graphs_used_normal,
        "graphs_used_anomaly": curves.graphs_used_anomaly,
        "top_quartile_share_normal": curves.top_quartile_share_normal,
        "top_quartile_share_anomaly": curves.top_quartile_share_anomaly,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        csv_path = os.path.join(args.out, "energy_curves.csv")
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eigenvalue_rank_fraction", "cum_energy_normal", "cum_energy_anomaly"])
            for q, cn, ca in zip(curves.grid, curves.mean_curve_normal, curves.mean_curve_anomaly):
                writer.writerow([repr(float(q)), repr(float(cn)), repr(float(ca))])
        with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _plot_curves(curves, ds.name, os.path.join(args.out, "energy_curves.png"))
        print(f"spectral report written to {args.out}", file=sys.stderr)
    return 0


def _plot_curves(curves, name: str, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curves.grid, curves.mean_curve_normal, label="normal", color="tab:blue")
    ax.plot(curves.grid, curves.mean_curve_anomaly, label="anomaly", color="tab:red")
    ax.set_xlabel("eigenvalue rank fraction (low to high frequency)")
    ax.set_ylabel("mean cumulative spectral energy")
    ax.set_title(f"{name}: spectral energy by class")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _cmd_bench(args: argparse.Namespace) -> int:
    cfg = _base_config(args)
    datasets = [d.strip() for d in args.datasets.split(",") if d.strip()]
    seeds = _parse_seeds(args.seeds) if args.seeds else cfg.seeds
    rows = []
    summary = {}
    for name in datasets:
        aucs = []
        for seed in seeds:
            run_cfg = dataclasses.replace(cfg, dataset=name)
            artifacts = trainer.train(run_cfg, seed=seed)
            rows.append(
                {
                    "dataset": name,
                    "seed": seed,
                    "auc": artifacts.metrics["auc"],
                    "final_train_loss": artifacts.metrics["final_train_loss"],
                    "wall_clock_sec": artifacts.metrics["wall_clock_sec"],
                }
            )
            aucs.append(artifacts.metrics["auc"])
            print(f"{name} seed {seed}: auc {aucs[-1]:.4f}", file=sys.stderr)
        summary[name] = {
            "auc_mean": float(np.mean(aucs)),
            "auc_std": float(np.std(aucs)),
            "seeds": [int(s) for s in seeds],
        }
    trainer.validate_bench_summary(summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "runs.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["dataset", "seed", "auc", "final_train_loss", "wall_clock_sec"]
            )
            writer.writeheader()
            writer.writerows(rows)
        with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"bench results written to {args.out}", file=sys.stderr)
    return 0


def _cmd_fetch(args: argparse.Namespace) -> int:
    root = args.data_root or os.environ.get(DATA_ROOT_ENV)
    if not root:
        print(f"error: pass --data-root or set {DATA_ROOT_ENV}", file=sys.stderr)
        return 2
    for name in args.dataset.split(","):
        name = name.strip()
        path = fetch_tu_dataset(name, root)
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gladmamba", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, dataset_required: bool = False) -> None:
        p.add_argument("--dataset", required=dataset_required, help="dataset directory name")
        p.add_argument("--data-root", default=None, help=f"dataset root (default: ${DATA_ROOT_ENV})")
        p.add_argument("--config", default=None, help="JSON config file with flat dotted keys")
        p.add_argument("--anomaly-class", type=int, default=None, help="label to treat as anomalous")

    p_train = sub.add_parser("train", help="train one run and score its test split")
    add_common(p_train)
    p_train.add_argument("--seed", type=int, default=None, help="run seed (default: first configured)")
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--ablate", default=None, help="ablation variant, e.g. no-vfm")
    p_train.add_argument("--out", default=None, help="directory for run artifacts")
    p_train.add_argument("--quiet", action="store_true", help="suppress per-epoch loss lines")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="re-score a saved checkpoint on its test split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data-root", default=None)
    p_eval.add_argument("--out", default=None, help="directory for scores.csv")
    p_eval.set_defaults(func=_cmd_eval)

    p_spec = sub.add_parser("spectral", help="per-class spectral energy report")
    add_common(p_spec, dataset_required=True)
    p_spec.add_argument("--laplacian", choices=LAPLACIAN_KINDS, default=UNNORMALIZED)
    p_spec.add_argument("--out", default=None, help="directory for curves/summary/plot")
    p_spec.set_defaults(func=_cmd_spectral)

    p_bench = sub.add_parser("bench", help="multi-seed AUC benchmark over datasets")
    add_common(p_bench)
    p_bench.add_argument("--datasets", required=True, help="comma-separated dataset names")
    p_bench.add_argument("--seeds", default=None, help="'0..4' or comma list")
    p_bench.add_argument("--epochs", type=int, default=None)
    p_bench.add_argument("--ablate", default=None)
    p_bench.add_argument("--out", default=None)
    p_bench.set_defaults(func=_cmd_bench)

    p_fetch = sub.add_parser("fetch", help="download datasets from the TU collection")
    p_fetch.add_argument("--dataset", required=True, help="comma-separated dataset names")
    p_fetch.add_argument("--data-root", default=None)
    p_fetch.set_defaults(func=_cmd_fetch)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
