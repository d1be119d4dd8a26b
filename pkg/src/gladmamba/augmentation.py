"""Two deterministic graph views built without perturbing the graph.

The semantic view keeps the native node features (falling back to a degree
one-hot when the dataset has none).  The structural view encodes each node
by its random-walk return probabilities over a fixed horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset_io import Graph


@dataclass(frozen=True)
class AugConfig:
    walk_steps: int = 16
    degree_cap: int = 64


@dataclass(frozen=True)
class ViewPair:
    """Per-node feature matrices for the two views of one graph."""

    features_o: np.ndarray
    features_a: np.ndarray


def build_feature_view(g: Graph, degree_cap: int = 64) -> np.ndarray:
    """Semantic-view features: native features, else a degree one-hot.

    The fallback one-hot has width `degree_cap + 1`; degrees of `degree_cap`
    or more land in the final overflow bucket.
    """
    if g.features.shape[1] > 0:
        return g.features.astype(np.float64, copy=True)
    deg = np.minimum(g.degrees(), degree_cap)
    out = np.zeros((g.node_count, degree_cap + 1), dtype=np.float64)
    out[np.arange(g.node_count), deg] = 1.0
    return out


def build_structure_view(g: Graph, walk_steps: int = 16) -> np.ndarray:
    """Structural-view features: random-walk return probabilities.

    Column t-1 holds (P^t)_{vv} for t = 1..walk_steps where P is the
    degree-normalized transition matrix.  Rows of isolated nodes are zero
    (the walk is undefined there).
    """
    if walk_steps < 1:
        raise ValueError(f"walk_steps must be >= 1, got {walk_steps}")
    n = g.node_count
    adj = g.adjacency()
    deg = adj.sum(axis=1)
    p = np.zeros_like(adj)
    nz = deg > 0
    p[nz] = adj[nz] / deg[nz, None]
    out = np.zeros((n, walk_steps), dtype=np.float64)
    m = p
    for t in range(walk_steps):
        out[:, t] = np.diagonal(m)
        if t + 1 < walk_steps:
            m = m @ p
    return out


def build_view_pair(g: Graph, cfg: AugConfig | None = None) -> ViewPair:
    cfg = cfg or AugConfig()
    return ViewPair(
        features_o=build_feature_view(g, degree_cap=cfg.degree_cap),
        features_a=build_structure_view(g, walk_steps=cfg.walk_steps),
    )
