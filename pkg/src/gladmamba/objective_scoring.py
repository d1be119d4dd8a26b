"""Contrastive objectives, uncertainty-weighted loss, and anomaly scoring.

Both InfoNCE terms use cross-view cosine similarities with a temperature.
Node-level negatives never leave their own graph; graph-level negatives are
the other graphs of the batch.  In both cases the denominator ranges over
negatives only (the positive pair is excluded), so individual losses can go
negative -- that is intentional and harmless for ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.metrics import roc_auc_score

NEG_FILL = -1e30  # effectively -inf for logsumexp, but finite for autograd


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.2
    alpha: float = 1.0


def _cross_view_logits(z_a: torch.Tensor, z_b: torch.Tensor, tau: float) -> torch.Tensor:
    za = F.normalize(z_a, dim=1)
    zb = F.normalize(z_b, dim=1)
    return (za @ zb.t()) / tau


def node_infonce(
    z_o: torch.Tensor,
    z_a: torch.Tensor,
    membership: torch.Tensor,
    graph_count: int,
    cfg: LossConfig | None = None,
) -> torch.Tensor:
    """Per-graph node-level contrastive loss, shape (graph_count,).

    For node i, the positive is its own alter-ego in the other view and the
    negatives are the *other-view* embeddings of the other nodes of the same
    graph.  Both directions are averaged with weight 1/(2 n_G).  Graphs with
    a single node contribute 0 (they have no negatives).
    """
    cfg = cfg or LossConfig()
    if z_o.shape != z_a.shape:
        raise ValueError("view embeddings must have identical shapes")
    logits = _cross_view_logits(z_o, z_a, cfg.tau)  # [i, k] = cos(z_o_i, z_a_k)/tau
    pos = logits.diagonal()
    same = membership.unsqueeze(0) == membership.unsqueeze(1)
    neg_mask = same & ~torch.eye(len(membership), dtype=torch.bool, device=z_o.device)
    denom_oa = logits.masked_fill(~neg_mask, NEG_FILL).logsumexp(dim=1)
    denom_ao = logits.t().masked_fill(~neg_mask, NEG_FILL).logsumexp(dim=1)
    per_node = (pos - denom_oa) + (pos - denom_ao)  # -(l_oa + l_ao), negated below
    counts = torch.bincount(membership, minlength=graph_count).to(z_o.dtype)
    per_graph = z_o.new_zeros(graph_count).index_add_(0, membership, per_node)
    loss = -per_graph / (2.0 * counts)
    # Single-node graphs have an empty negative set; define their loss as 0.
    return torch.where(counts > 1, loss, torch.zeros_like(loss))


def graph_infonce(
    zg_o: torch.Tensor, zg_a: torch.Tensor, cfg: LossConfig | None = None
) -> torch.Tensor:
    """Per-graph graph-level contrastive loss, shape (B,).

    Negatives for graph G are the other-view embeddings of the other graphs
    in the batch; a single-graph batch has no negatives and is an error.
    """
    cfg = cfg or LossConfig()
    if zg_o.shape != zg_a.shape:
        raise ValueError("view embeddings must have identical shapes")
    b = zg_o.shape[0]
    if b < 2:
        raise ValueError(f"graph-level loss needs at least 2 graphs per batch, got {b}")
    logits = _cross_view_logits(zg_o, zg_a, cfg.tau)
    pos = logits.diagonal()
    off_diag = ~torch.eye(b, dtype=torch.bool, device=zg_o.device)
    denom_oa = logits.masked_fill(~off_diag, NEG_FILL).logsumexp(dim=1)
    denom_ao = logits.t().masked_fill(~off_diag, NEG_FILL).logsumexp(dim=1)
    return 0.5 * ((denom_oa - pos) + (denom_ao - pos))


def _population_std(values: torch.Tensor) -> torch.Tensor:
    return values.std(unbiased=False) if values.numel() > 1 else values.new_zeros(())


def adaptive_total_loss(
    node_losses: torch.Tensor,
    graph_losses: torch.Tensor,
    cfg: LossConfig | None = None,
    sigma_node: float | None = None,
    sigma_graph: float | None = None,
) -> torch.Tensor:
    """Weight the two loss families by their batch dispersion:

        L = sigma_node^alpha * mean(node) + sigma_graph^alpha * mean(graph)

    The sigmas are detached batch statistics (population std), so they scale
    the two terms without being differentiated through; `sigma_node` /
    `sigma_graph` override them with fixed values when callers need the loss
    to be a plain deterministic function of the embeddings.
    """
    cfg = cfg or LossConfig()
    s_node = (
        _population_std(node_losses).detach() if sigma_node is None
        else node_losses.new_tensor(float(sigma_node))
    )
    s_graph = (
        _population_std(graph_losses).detach() if sigma_graph is None
        else graph_losses.new_tensor(float(sigma_graph))
    )
    return (s_node ** cfg.alpha) * node_losses.mean() + (s_graph ** cfg.alpha) * graph_losses.mean()


SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class ScoreNormalizer:
    """Training-set moments used to z-score test losses."""

    mu_node: float
    sigma_node: float
    mu_graph: float
    sigma_graph: float


def fit_normalizer(node_losses: np.ndarray, graph_losses: np.ndarray) -> ScoreNormalizer:
    """Fit per-family mean/std (population) over training-set graph losses.

    Stds are floored at 1e-12 so constant losses cannot divide by zero.
    """
    node_losses = np.asarray(node_losses, dtype=np.float64)
    graph_losses = np.asarray(graph_losses, dtype=np.float64)
    if node_losses.size == 0 or graph_losses.size == 0:
        raise ValueError("cannot fit a normalizer on empty loss arrays")
    return ScoreNormalizer(
        mu_node=float(node_losses.mean()),
        sigma_node=float(max(node_losses.std(), SIGMA_FLOOR)),
        mu_graph=float(graph_losses.mean()),
        sigma_graph=float(max(graph_losses.std(), SIGMA_FLOOR)),
    )


def anomaly_score(
    node_loss: np.ndarray | float,
    graph_loss: np.ndarray | float,
    norm: ScoreNormalizer,
) -> np.ndarray | float:
    """Sum of the two z-scored losses; higher means more anomalous."""
    node_z = (np.asarray(node_loss, dtype=np.float64) - norm.mu_node) / norm.sigma_node
    graph_z = (np.asarray(graph_loss, dtype=np.float64) - norm.mu_graph) / norm.sigma_graph
    out = node_z + graph_z
    return float(out) if out.ndim == 0 else out


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve of `scores` against binary anomaly labels.

    Rank-based (ties get midranks), so any strictly increasing rescoring
    leaves the value unchanged.
    """
    labels = np.asarray(labels).astype(np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.min() == labels.max():
        raise ValueError("AUC needs both classes present in the evaluation set")
    return float(roc_auc_score(labels, scores))
