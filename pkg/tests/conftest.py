import numpy as np
import pytest

from gladmamba.dataset_io import Graph, GraphDataset, assign_anomaly_labels, canonical_edges


def make_graph(n, edge_pairs, features=None, label=0, gid=0):
    edges = canonical_edges(np.array(edge_pairs, dtype=np.int64).reshape(-1, 2))
    if features is None:
        features = np.zeros((n, 0), dtype=np.float64)
    return Graph(id=gid, node_count=n, edges=edges, features=np.asarray(features, dtype=np.float64), label=label)


def triangle(features=None, gid=0, label=0):
    return make_graph(3, [(0, 1), (1, 2), (0, 2)], features, label=label, gid=gid)


def path3(features=None, gid=0, label=0):
    return make_graph(3, [(0, 1), (1, 2)], features, label=label, gid=gid)


def k2(features=None, gid=0, label=0):
    return make_graph(2, [(0, 1)], features, label=label, gid=gid)


def random_graph(rng, gid=0, n_lo=2, n_hi=12, p=0.4, d_f=3, label=0, allow_isolated=True):
    n = int(rng.integers(n_lo, n_hi + 1))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    if not allow_isolated and n > 1:
        pairs += [(i, i + 1) for i in range(n - 1)]
    feats = rng.normal(size=(n, d_f)) if d_f else np.zeros((n, 0))
    return make_graph(n, pairs if pairs else np.zeros((0, 2), dtype=np.int64), feats, label=label, gid=gid)


def _ring_graph(rng, n):
    pairs = [(i, (i + 1) % n) for i in range(n)]
    if rng.random() < 0.5:  # occasional chord, keeps the class from being trivial
        a, b = rng.choice(n, size=2, replace=False)
        if a != b:
            pairs.append((min(a, b), max(a, b)))
    return pairs


def _clique_graph(rng, n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def synthetic_dataset(n_normal=96, n_anomaly=24, seed=0, name="synthetic", d_f=3):
    """Sparse ring-like normals vs dense clique-like anomalies.

    Node attributes carry a weak class signal on top of noise so both views
    have something to contrast.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    gid = 0
    for _ in range(n_normal):
        n = int(rng.integers(6, 13))
        feats = rng.normal(loc=0.0, scale=1.0, size=(n, d_f))
        graphs.append(make_graph(n, _ring_graph(rng, n), feats, label=1, gid=gid))
        gid += 1
    for _ in range(n_anomaly):
        n = int(rng.integers(6, 13))
        feats = rng.normal(loc=1.5, scale=1.0, size=(n, d_f))
        graphs.append(make_graph(n, _clique_graph(rng, n), feats, label=2, gid=gid))
        gid += 1
    return assign_anomaly_labels(GraphDataset(name=name, graphs=tuple(graphs)))


@pytest.fixture
def tiny_dataset():
    return synthetic_dataset(n_normal=24, n_anomaly=8, seed=1, name="tiny")


@pytest.fixture
def synthetic_tu_dir(tmp_path):
    """A synthetic dataset written out in TU layout; returns (root, name)."""
    from gladmamba.dataset_io import write_tu_dataset

    ds = synthetic_dataset(n_normal=28, n_anomaly=10, seed=3, name="SYNTH")
    write_tu_dataset(ds, str(tmp_path))
    return str(tmp_path), "SYNTH"
