"""Message-passing encoders producing node and graph embeddings.

Both encoder kinds run on a batched block-diagonal adjacency; the node
embedding is the concatenation of every layer's output and the graph
embedding is its per-graph mean, so downstream consumers see a single
d_model = layers * hidden_dim representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .dataset_io import GraphBatch

ENCODER_KINDS = ("gcn", "gin")


@dataclass(frozen=True)
class EncoderConfig:
    kind: str | None = None  # None -> resolved per dataset, "gcn" standalone
    layers: int = 2
    hidden_dim: int = 16

    @property
    def d_model(self) -> int:
        return self.layers * self.hidden_dim


def gcn_adjacency(batch: GraphBatch, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Symmetrically normalized adjacency with self-loops, as sparse COO.

    Entries are 1/sqrt(deg_i deg_j) with degrees counted after adding a
    self-loop to every node.
    """
    n = batch.node_count
    e = batch.edges
    rows = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
    cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
    deg = np.ones(n, dtype=np.float64)  # self-loop
    if e.shape[0]:
        np.add.at(deg, e[:, 0], 1.0)
        np.add.at(deg, e[:, 1], 1.0)
    inv_sqrt = 1.0 / np.sqrt(deg)
    vals = inv_sqrt[rows] * inv_sqrt[cols]
    idx = torch.from_numpy(np.stack([rows, cols]))
    return torch.sparse_coo_tensor(
        idx, torch.from_numpy(vals).to(dtype), size=(n, n), check_invariants=False
    ).coalesce()


def sum_adjacency(batch: GraphBatch, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Plain 0/1 adjacency (no self-loops) for neighborhood sums, sparse COO."""
    n = batch.node_count
    e = batch.edges
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    idx = torch.from_numpy(np.stack([rows, cols]))
    vals = torch.ones(rows.shape[0], dtype=dtype)
    return torch.sparse_coo_tensor(idx, vals, size=(n, n), check_invariants=False).coalesce()


class GCNLayer(nn.Module):
    """H_out = ReLU(D^{-1/2} (A + I) D^{-1/2} H W); the propagation matrix
    arrives precomputed as `adj`."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.lin = nn.Linear(in_dim, out_dim, bias=False)

    def forward(self, x: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        return F.relu(torch.sparse.mm(adj, self.lin(x)))


class GINLayer(nn.Module):
    """H_out = MLP((1 + eps) H + sum_{neighbors} H) with a 2-layer MLP."""

    def __init__(self, in_dim: int, out_dim: int, eps: float = 0.0):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(in_dim, out_dim), nn.ReLU(), nn.Linear(out_dim, out_dim)
        )
        self.register_buffer("eps", torch.tensor(float(eps)))

    def forward(self, x: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        return self.mlp((1.0 + self.eps) * x + torch.sparse.mm(adj, x))


def mean_readout(
    node_emb: torch.Tensor, membership: torch.Tensor, graph_count: int
) -> torch.Tensor:
    """Per-graph mean of node embeddings; membership must be non-decreasing."""
    sums = node_emb.new_zeros((graph_count, node_emb.shape[1]))
    sums.index_add_(0, membership, node_emb)
    counts = torch.bincount(membership, minlength=graph_count).to(node_emb.dtype)
    return sums / counts.unsqueeze(1)


class GraphEncoder(nn.Module):
    """Stack of GCN or GIN layers with concatenated layer outputs.

    forward(x, adj, membership, graph_count) returns (node embeddings of
    shape (sum_V, layers * hidden_dim), graph embeddings of shape
    (B, layers * hidden_dim)).  `adj` must be the propagation matrix that
    matches the configured kind (normalized for gcn, raw sums for gin).
    """

    def __init__(self, input_dim: int, cfg: EncoderConfig | None = None):
        super().__init__()
        cfg = cfg or EncoderConfig()
        kind = cfg.kind or "gcn"
        if kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {kind!r}; expected one of {ENCODER_KINDS}")
        if cfg.layers < 1:
            raise ValueError("need at least one layer")
        self.cfg = cfg
        self.kind = kind
        layers = []
        d_in = input_dim
        for _ in range(cfg.layers):
            if kind == "gcn":
                layers.append(GCNLayer(d_in, cfg.hidden_dim))
            else:
                layers.append(GINLayer(d_in, cfg.hidden_dim))
            d_in = cfg.hidden_dim
        self.layers = nn.ModuleList(layers)

    @property
    def d_model(self) -> int:
        return self.cfg.d_model

    def forward(
        self,
        x: torch.Tensor,
        adj: torch.Tensor,
        membership: torch.Tensor,
        graph_count: int,
    ):
        outputs = []
        h = x
        for layer in self.layers:
            h = layer(h, adj)
            outputs.append(h)
        node_emb = torch.cat(outputs, dim=1)
        graph_emb = mean_readout(node_emb, membership, graph_count)
        return node_emb, graph_emb


def default_encoder_kind(dataset_name: str) -> str:
    """Per-dataset default encoder; sum aggregation helps on a few corpora."""
    base = dataset_name.removeprefix("Tox21_")
    return "gin" if base in {"AIDS", "DHFR", "HSE", "MMP"} else "gcn"
