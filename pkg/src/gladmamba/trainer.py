"""Training, scoring and artifact management.

Only normal graphs are trained on; anomalies are never seen by the
optimizer.  At the end of training the model's per-graph losses on the
training set calibrate a z-score normalizer, and test graphs are ranked by
their normalized loss sum.  All randomness flows from one integer seed
through named substreams (split / init / shuffle), so a rerun with the same
seed reproduces the run exactly (wall-clock timing aside).
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, replace

import jsonschema
import numpy as np
import torch

from .augmentation import AugConfig, build_view_pair
from .config import RunConfig, to_flat, from_flat
from .dataset_io import (
    Graph,
    GraphBatch,
    GraphDataset,
    SplitSpec,
    assign_anomaly_labels,
    make_split,
    parse_tu_dataset,
    permute_nodes,
)
from .model import (
    DEFAULT_DTYPE,
    GladMamba,
    ModelDims,
    TorchGraphBatch,
    build_model,
    collate_batch,
)
from .objective_scoring import (
    LossConfig,
    ScoreNormalizer,
    adaptive_total_loss,
    anomaly_score,
    auc,
    fit_normalizer,
    graph_infonce,
    node_infonce,
)
from .spectral import UNNORMALIZED, rayleigh_quotient_diag

_SUBSTREAMS = {"split": 0, "init": 1, "shuffle": 2}


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


def substream_seed(seed: int, name: str) -> int:
    """Derive a named, independent child seed from the run seed."""
    try:
        idx = _SUBSTREAMS[name]
    except KeyError:
        raise ValueError(f"unknown substream {name!r}; expected one of {sorted(_SUBSTREAMS)}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(idx,))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class PreparedGraph:
    """A graph with both views and both Rayleigh profiles precomputed."""

    graph: Graph
    x_o: np.ndarray
    x_a: np.ndarray
    rq_o: np.ndarray
    rq_a: np.ndarray


def prepare_graphs(
    ds: GraphDataset, aug: AugConfig | None = None, lap_kind: str = UNNORMALIZED
) -> list[PreparedGraph]:
    """Precompute view features and Rayleigh profiles for every graph.

    The profiles come from the edge-difference form, so this stays
    eigendecomposition-free no matter the graph sizes.
    """
    aug = aug or AugConfig()
    out = []
    for g in ds.graphs:
        pair = build_view_pair(g, aug)
        out.append(
            PreparedGraph(
                graph=g,
                x_o=pair.features_o,
                x_a=pair.features_a,
                rq_o=rayleigh_quotient_diag(g, pair.features_o, kind=lap_kind),
                rq_a=rayleigh_quotient_diag(g, pair.features_a, kind=lap_kind),
            )
        )
    return out


def model_dims(prepared: list[PreparedGraph]) -> ModelDims:
    first = prepared[0]
    return ModelDims(
        input_dim_o=first.x_o.shape[1],
        input_dim_a=first.x_a.shape[1],
        rq_dim_o=first.rq_o.shape[0],
        rq_dim_a=first.rq_a.shape[0],
    )


def make_torch_batch(
    prepared: list[PreparedGraph], ids: np.ndarray, dtype: torch.dtype = DEFAULT_DTYPE
) -> TorchGraphBatch:
    chosen = [prepared[int(i)] for i in ids]
    batch = GraphBatch.from_graphs([p.graph for p in chosen])
    return collate_batch(
        batch,
        x_o=np.concatenate([p.x_o for p in chosen], axis=0),
        x_a=np.concatenate([p.x_a for p in chosen], axis=0),
        rq_o=np.stack([p.rq_o for p in chosen], axis=0),
        rq_a=np.stack([p.rq_a for p in chosen], axis=0),
        dtype=dtype,
    )


def batch_id_chunks(ids: np.ndarray, batch_size: int) -> list[np.ndarray]:
    """Split ids into consecutive chunks, folding a trailing singleton into
    its neighbor so the graph-level loss always has a negative."""
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    ids = np.asarray(ids)
    chunks = [ids[i : i + batch_size] for i in range(0, len(ids), batch_size)]
    if len(chunks) >= 2 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def compute_graph_losses(
    model: GladMamba,
    prepared: list[PreparedGraph],
    ids: np.ndarray,
    loss_cfg: LossConfig,
    eval_batch_size: int = 128,
    dtype: torch.dtype = DEFAULT_DTYPE,
    collect_embeddings: bool = False,
):
    """Per-graph (node, graph) losses over `ids`, in the order given.

    Uses fixed-size chunks in the given id order, so results are a pure
    function of (model weights, ids).  Needs at least two graphs.
    """
    ids = np.asarray(ids)
    if ids.size < 2:
        raise ValueError("scoring needs at least two graphs")
    model.eval()
    node_parts, graph_parts = [], []
    emb: dict[str, list[np.ndarray]] = {k: [] for k in ("z_graph_o", "z_graph_a", "h_graph_o", "h_graph_a")}
    with torch.no_grad():
        for chunk in batch_id_chunks(ids, eval_batch_size):
            tb = make_torch_batch(prepared, chunk, dtype=dtype)
            out = model(tb)
            nl = node_infonce(out.z_node_o, out.z_node_a, tb.membership, tb.graph_count, loss_cfg)
            gl = graph_infonce(out.z_graph_o, out.z_graph_a, loss_cfg)
            node_parts.append(nl.numpy())
            graph_parts.append(gl.numpy())
            if collect_embeddings:
                for key in emb:
                    emb[key].append(getattr(out, key).numpy())
    node_losses = np.concatenate(node_parts)
    graph_losses = np.concatenate(graph_parts)
    if collect_embeddings:
        return node_losses, graph_losses, {k: np.concatenate(v, axis=0) for k, v in emb.items()}
    return node_losses, graph_losses


@dataclass(frozen=True)
class ScoreReport:
    """Scored evaluation set with its AUC."""

    graph_ids: np.ndarray
    node_losses: np.ndarray
    graph_losses: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    auc: float
    embeddings: dict | None = None


def evaluate(
    model: GladMamba,
    normalizer: ScoreNormalizer,
    prepared: list[PreparedGraph],
    flags: np.ndarray,
    ids: np.ndarray,
    loss_cfg: LossConfig | None = None,
    eval_batch_size: int = 128,
    dtype: torch.dtype = DEFAULT_DTYPE,
    collect_embeddings: bool = False,
) -> ScoreReport:
    loss_cfg = loss_cfg or LossConfig()
    ids = np.asarray(ids)
    result = compute_graph_losses(
        model, prepared, ids, loss_cfg, eval_batch_size, dtype, collect_embeddings
    )
    node_losses, graph_losses = result[0], result[1]
    embeddings = result[2] if collect_embeddings else None
    scores = anomaly_score(node_losses, graph_losses, normalizer)
    labels = np.asarray(flags)[ids].astype(np.int64)
    return ScoreReport(
        graph_ids=ids,
        node_losses=node_losses,
        graph_losses=graph_losses,
        scores=scores,
        labels=labels,
        auc=auc(scores, labels),
        embeddings=embeddings,
    )


def eval_order_sensitivity(
    model: GladMamba,
    normalizer: ScoreNormalizer,
    prepared: list[PreparedGraph],
    flags: np.ndarray,
    ids: np.ndarray,
    loss_cfg: LossConfig | None = None,
    eval_batch_size: int = 128,
    n_shuffles: int = 10,
    seed: int = 0,
    dtype: torch.dtype = DEFAULT_DTYPE,
) -> dict:
    """AUC spread across shuffled evaluation orders.

    A test graph's graph-level negatives are the other graphs in its
    evaluation batch, so scores can move with batch composition; this
    diagnostic quantifies by how much.
    """
    rng = np.random.default_rng(seed)
    ids = np.asarray(ids)
    aucs = []
    for _ in range(n_shuffles):
        order = rng.permutation(ids)
        report = evaluate(model, normalizer, prepared, flags, order, loss_cfg, eval_batch_size, dtype)
        aucs.append(float(report.auc))
    return {"aucs": aucs, "auc_mean": float(np.mean(aucs)), "auc_std": float(np.std(aucs))}


def node_order_sensitivity(
    model: GladMamba,
    normalizer: ScoreNormalizer,
    ds: GraphDataset,
    ids: np.ndarray,
    loss_cfg: LossConfig | None = None,
    aug: AugConfig | None = None,
    eval_batch_size: int = 128,
    seed: int = 0,
    dtype: torch.dtype = DEFAULT_DTYPE,
) -> dict:
    """Score drift when every graph's nodes are randomly relabeled.

    The scan blocks read nodes in storage order, so their outputs are
    order-sensitive by construction; encoders alone are permutation
    equivariant.  Reports the AUC before/after and the largest per-graph
    score movement.
    """
    rng = np.random.default_rng(seed)
    flags = ds.anomaly_flags()
    base = evaluate(
        model, normalizer, prepare_graphs(ds, aug), flags, ids, loss_cfg, eval_batch_size, dtype
    )
    relabeled = GraphDataset(
        name=ds.name,
        graphs=tuple(permute_nodes(g, rng.permutation(g.node_count)) for g in ds.graphs),
        anomaly_class=ds.anomaly_class,
    )
    moved = evaluate(
        model, normalizer, prepare_graphs(relabeled, aug), flags, ids, loss_cfg, eval_batch_size, dtype
    )
    return {
        "auc_base": float(base.auc),
        "auc_permuted": float(moved.auc),
        "max_abs_score_delta": float(np.max(np.abs(moved.scores - base.scores))),
    }


METRICS_SCHEMA = {
    "type": "object",
    "properties": {
        "dataset": {"type": "string"},
        "seed": {"type": "integer"},
        "ablation": {"type": "string"},
        "encoder_kind": {"type": "string"},
        "epochs": {"type": "integer"},
        "n_train": {"type": "integer"},
        "n_test": {"type": "integer"},
        "n_test_anomalies": {"type": "integer"},
        "final_train_loss": {"type": ["number", "null"]},
        "auc": {"type": "number"},
        "wall_clock_sec": {"type": "number"},
    },
    "required": [
        "dataset",
        "seed",
        "ablation",
        "encoder_kind",
        "epochs",
        "n_train",
        "n_test",
        "n_test_anomalies",
        "final_train_loss",
        "auc",
        "wall_clock_sec",
    ],
    "additionalProperties": False,
}


BENCH_SUMMARY_SCHEMA = {
    "type": "object",
    "additionalProperties": {
        "type": "object",
        "properties": {
            "auc_mean": {"type": "number"},
            "auc_std": {"type": "number"},
            "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        },
        "required": ["auc_mean", "auc_std", "seeds"],
        "additionalProperties": False,
    },
}


def validate_metrics(record: dict) -> None:
    jsonschema.validate(record, METRICS_SCHEMA)


def validate_bench_summary(summary: dict) -> None:
    jsonschema.validate(summary, BENCH_SUMMARY_SCHEMA)


def deterministic_view(record: dict) -> dict:
    """The portion of a metrics record that must reproduce across reruns
    (everything but timing)."""
    return {k: v for k, v in record.items() if k != "wall_clock_sec"}


@dataclass(frozen=True)
class RunArtifacts:
    """Everything a finished run produced."""

    model: GladMamba
    config: RunConfig
    dims: ModelDims
    seed: int
    split: SplitSpec
    normalizer: ScoreNormalizer
    metrics: dict
    report: ScoreReport
    out_dir: str | None = None
    checkpoint_path: str | None = None


def load_dataset(cfg: RunConfig) -> GraphDataset:
    ds = parse_tu_dataset(cfg.resolve_data_root(), cfg.dataset)
    return assign_anomaly_labels(ds, cfg.anomaly_class)


def train(
    cfg: RunConfig,
    seed: int | None = None,
    dataset: GraphDataset | None = None,
    split: SplitSpec | None = None,
    out_dir: str | None = None,
    dtype: torch.dtype = DEFAULT_DTYPE,
    log: bool = False,
) -> RunArtifacts:
    """Train on the normal graphs of one split and score the test side.

    Returns in-memory artifacts; when `out_dir` is given, also writes
    checkpoint / metrics / scores / embeddings files there atomically.
    """
    t0 = time.perf_counter()
    seed = int(cfg.seeds[0] if seed is None else seed)
    ds = dataset if dataset is not None else load_dataset(cfg)
    flags = ds.anomaly_flags()
    if split is None:
        split = make_split(ds, substream_seed(seed, "split"), cfg.train_frac)
    prepared = prepare_graphs(ds, cfg.aug)
    dims = model_dims(prepared)

    torch.manual_seed(substream_seed(seed, "init"))
    model = build_model(cfg, dims, dtype=dtype)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    shuffle_rng = np.random.default_rng(substream_seed(seed, "shuffle"))

    final_train_loss: float | None = None
    for epoch in range(cfg.epochs):
        model.train()
        order = shuffle_rng.permutation(split.train_ids)
        epoch_losses = []
        for batch_ids in batch_id_chunks(order, cfg.batch_size):
            tb = make_torch_batch(prepared, batch_ids, dtype=dtype)
            out = model(tb)
            nl = node_infonce(out.z_node_o, out.z_node_a, tb.membership, tb.graph_count, cfg.loss)
            gl = graph_infonce(out.z_graph_o, out.z_graph_a, cfg.loss)
            loss = adaptive_total_loss(nl, gl, cfg.loss)
            if not bool(torch.isfinite(loss)):
                raise TrainingDivergedError(
                    f"non-finite loss {loss.item()!r} at epoch {epoch}, "
                    f"batch of {tb.graph_count} graphs (seed {seed})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
        final_train_loss = float(np.mean(epoch_losses))
        if log:
            print(f"epoch {epoch + 1}/{cfg.epochs}: loss {final_train_loss:.6f}")

    train_node, train_graph = compute_graph_losses(
        model, prepared, split.train_ids, cfg.loss, cfg.eval.batch_size, dtype
    )
    normalizer = fit_normalizer(train_node, train_graph)
    report = evaluate(
        model,
        normalizer,
        prepared,
        flags,
        split.test_ids,
        cfg.loss,
        cfg.eval.batch_size,
        dtype,
        collect_embeddings=out_dir is not None,
    )
    metrics = {
        "dataset": ds.name,
        "seed": seed,
        "ablation": cfg.ablation,
        "encoder_kind": model.encoder_o.kind,
        "epochs": cfg.epochs,
        "n_train": int(split.train_ids.size),
        "n_test": int(split.test_ids.size),
        "n_test_anomalies": int(report.labels.sum()),
        "final_train_loss": final_train_loss,
        "auc": report.auc,
        "wall_clock_sec": time.perf_counter() - t0,
    }
    validate_metrics(metrics)
    artifacts = RunArtifacts(
        model=model,
        config=cfg,
        dims=dims,
        seed=seed,
        split=split,
        normalizer=normalizer,
        metrics=metrics,
        report=report,
        out_dir=out_dir,
    )
    if out_dir is not None:
        artifacts = save_artifacts(artifacts, out_dir)
    return artifacts


def ablate(cfg: RunConfig, variant: str, **kwargs) -> RunArtifacts:
    """Train an ablation variant of the configured model."""
    return train(replace(cfg, ablation=variant), **kwargs)


def _atomic_bytes(path: str, writer) -> None:
    tmp = path + ".tmp"
    writer(tmp)
    os.replace(tmp, path)


def _write_json(path: str, payload: dict) -> None:
    def _w(tmp: str) -> None:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    _atomic_bytes(path, _w)


def save_checkpoint(path: str, artifacts: RunArtifacts) -> None:
    """Serialize weights plus everything needed to rebuild and re-score."""
    payload = {
        "state_dict": artifacts.model.state_dict(),
        "flat_config": to_flat(artifacts.config),
        "dims": asdict(artifacts.dims),
        "normalizer": asdict(artifacts.normalizer),
        "seed": artifacts.seed,
        "train_ids": artifacts.split.train_ids,
        "test_ids": artifacts.split.test_ids,
        "split_seed": artifacts.split.seed,
        "train_frac": artifacts.split.train_frac,
    }
    _atomic_bytes(path, lambda tmp: torch.save(payload, tmp))


def load_checkpoint(path: str, dtype: torch.dtype = DEFAULT_DTYPE):
    """Rebuild (model, config, normalizer, split) from a checkpoint file."""
    payload = torch.load(path, weights_only=False)
    cfg = from_flat(payload["flat_config"])
    dims = ModelDims(**payload["dims"])
    model = build_model(cfg, dims, dtype=dtype)
    model.load_state_dict(payload["state_dict"])
    normalizer = ScoreNormalizer(**payload["normalizer"])
    split = SplitSpec(
        train_ids=np.asarray(payload["train_ids"]),
        test_ids=np.asarray(payload["test_ids"]),
        seed=int(payload["split_seed"]),
        train_frac=float(payload["train_frac"]),
    )
    return model, cfg, normalizer, split


def save_artifacts(artifacts: RunArtifacts, out_dir: str) -> RunArtifacts:
    os.makedirs(out_dir, exist_ok=True)
    checkpoint_path = os.path.join(out_dir, "checkpoint.pt")
    save_checkpoint(checkpoint_path, artifacts)
    _write_json(os.path.join(out_dir, "config.json"), to_flat(artifacts.config))
    _write_json(os.path.join(out_dir, "metrics.json"), artifacts.metrics)

    report = artifacts.report
    scores_path = os.path.join(out_dir, "scores.csv")

    def _write_scores(tmp: str) -> None:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
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

    _atomic_bytes(scores_path, _write_scores)

    if report.embeddings is not None:
        emb_path = os.path.join(out_dir, "embeddings.npz")
        tmp = emb_path + ".tmp.npz"  # savez appends .npz to other suffixes
        np.savez(
            tmp,
            graph_ids=report.graph_ids,
            labels=report.labels,
            scores=report.scores,
            **report.embeddings,
        )
        os.replace(tmp, emb_path)
    return replace(artifacts, out_dir=out_dir, checkpoint_path=checkpoint_path)
