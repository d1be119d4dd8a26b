"""Reading, writing and splitting graph classification datasets.

The on-disk layout is the plain-text one used by the TU graph benchmark
collection: a `DS_A.txt` edge list (1-indexed, both directions listed),
`DS_graph_indicator.txt` mapping nodes to graphs, `DS_graph_labels.txt`,
and optional `DS_node_labels.txt` / `DS_node_attributes.txt` files.
"""

from __future__ import annotations

import io
import os
import urllib.request
import zipfile
from dataclasses import dataclass, field, replace

import numpy as np

TU_DOWNLOAD_URL = "https://www.chrsmrrs.com/graphkerneldatasets/{name}.zip"


class DatasetFormatError(ValueError):
    """Raised when a dataset directory does not satisfy the expected format."""


class AnomalyClassTieError(ValueError):
    """Raised when the minority class is ambiguous and no override is given."""


def _require_fields(cond: bool, msg: str) -> None:
    if not cond:
        raise DatasetFormatError(msg)


def canonical_edges(pairs: np.ndarray) -> np.ndarray:
    """Canonicalize an undirected edge list.

    Self-loops are dropped, endpoints are ordered (i, j) with i < j, and
    duplicates (including the reverse direction) are collapsed.  Returns an
    int64 array of shape (E, 2) sorted lexicographically.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        return pairs
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if pairs.shape[0] == 0:
        return pairs.reshape(0, 2)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    stacked = np.stack([lo, hi], axis=1)
    return np.unique(stacked, axis=0)


@dataclass(frozen=True)
class Graph:
    """A single undirected graph with optional node features.

    `edges` is canonical (see :func:`canonical_edges`): no self-loops, no
    duplicates, each undirected edge stored once as (i, j) with i < j.
    `features` has shape (node_count, d_f); d_f may be zero.
    """

    id: int
    node_count: int
    edges: np.ndarray
    features: np.ndarray
    label: int

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise ValueError(f"graph {self.id}: node_count must be >= 1")
        e = self.edges
        if e.ndim != 2 or e.shape[1] != 2:
            raise ValueError(f"graph {self.id}: edges must have shape (E, 2)")
        if e.shape[0]:
            if e.min() < 0 or e.max() >= self.node_count:
                raise ValueError(f"graph {self.id}: edge endpoint out of range")
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValueError(f"graph {self.id}: edges not canonical (need i < j)")
            if np.unique(e, axis=0).shape[0] != e.shape[0]:
                raise ValueError(f"graph {self.id}: duplicate edges")
        f = self.features
        if f.ndim != 2 or f.shape[0] != self.node_count:
            raise ValueError(f"graph {self.id}: features must have shape (n, d_f)")
        if f.size and not np.all(np.isfinite(f)):
            raise ValueError(f"graph {self.id}: non-finite feature values")

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        if self.edges.shape[0]:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count), dtype=np.float64)
        if self.edges.shape[0]:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a


def permute_nodes(g: Graph, perm: np.ndarray) -> Graph:
    """Relabel a graph's nodes so old node i becomes new node perm[i].

    The result is the same graph under a different storage order: features
    travel with their nodes and edges are re-canonicalized.
    """
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (g.node_count,) or not np.array_equal(np.sort(perm), np.arange(g.node_count)):
        raise ValueError(f"perm must be a permutation of 0..{g.node_count - 1}")
    inv = np.argsort(perm)
    edges = canonical_edges(perm[g.edges]) if g.edge_count else g.edges
    return Graph(
        id=g.id,
        node_count=g.node_count,
        edges=edges,
        features=g.features[inv],
        label=g.label,
    )


@dataclass(frozen=True)
class GraphDataset:
    """An ordered collection of graphs; treated as immutable once built."""

    name: str
    graphs: tuple[Graph, ...]
    anomaly_class: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "graphs", tuple(self.graphs))
        for pos, g in enumerate(self.graphs):
            if g.id != pos:
                raise ValueError("graph ids must be consecutive from 0")

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def is_anomaly(self, graph_id: int) -> bool:
        if self.anomaly_class is None:
            raise ValueError("anomaly class has not been assigned")
        return self.graphs[graph_id].label == self.anomaly_class

    def anomaly_flags(self) -> np.ndarray:
        if self.anomaly_class is None:
            raise ValueError("anomaly class has not been assigned")
        return self.labels == self.anomaly_class

    def summary(self) -> dict:
        n_nodes = np.array([g.node_count for g in self.graphs], dtype=np.float64)
        n_edges = np.array([g.edge_count for g in self.graphs], dtype=np.float64)
        return {
            "name": self.name,
            "graph_count": len(self.graphs),
            "avg_nodes": float(n_nodes.mean()),
            "avg_edges": float(n_edges.mean()),
            "feature_dim": int(self.graphs[0].features.shape[1]) if self.graphs else 0,
        }


@dataclass(frozen=True)
class GraphBatch:
    """Graphs packed into one node sequence, graphs contiguous and in order.

    `membership[i]` is the position (0..graph_count-1) of node i's graph
    within the batch; it is non-decreasing.  `edges` are batch-local and
    canonical.  `graph_ids` records the dataset-level id of each packed graph.
    """

    graph_ids: np.ndarray
    node_counts: np.ndarray
    membership: np.ndarray
    edges: np.ndarray
    graph_count: int
    node_count: int

    @staticmethod
    def from_graphs(graphs: list[Graph]) -> "GraphBatch":
        if not graphs:
            raise ValueError("cannot batch zero graphs")
        counts = np.array([g.node_count for g in graphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        membership = np.repeat(np.arange(len(graphs), dtype=np.int64), counts)
        parts = [g.edges + off for g, off in zip(graphs, offsets) if g.edges.shape[0]]
        edges = np.concatenate(parts, axis=0) if parts else np.zeros((0, 2), dtype=np.int64)
        return GraphBatch(
            graph_ids=np.array([g.id for g in graphs], dtype=np.int64),
            node_counts=counts,
            membership=membership,
            edges=edges,
            graph_count=len(graphs),
            node_count=int(counts.sum()),
        )


@dataclass(frozen=True)
class SplitSpec:
    """Train/test id partition.  Train ids reference normal graphs only."""

    train_ids: np.ndarray
    test_ids: np.ndarray
    seed: int
    train_frac: float


def _read_lines(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def parse_tu_dataset(root: str, name: str) -> GraphDataset:
    """Parse a dataset directory in TU layout into a :class:`GraphDataset`.

    Node features come from `DS_node_attributes.txt` when present, otherwise
    from a dataset-wide one-hot encoding of `DS_node_labels.txt`; with
    neither file, graphs carry zero-width feature matrices.
    """
    base = os.path.join(root, name)
    if os.path.isdir(base) and os.path.exists(os.path.join(base, f"{name}_A.txt")):
        prefix = os.path.join(base, name)
    elif os.path.exists(os.path.join(root, f"{name}_A.txt")):
        prefix = os.path.join(root, name)
    else:
        raise DatasetFormatError(
            f"dataset {name!r} not found under {root!r}: expected "
            f"{name}/{name}_A.txt (fetch it first, e.g. `gladmamba fetch`)"
        )

    indicator_path = prefix + "_graph_indicator.txt"
    labels_path = prefix + "_graph_labels.txt"
    edges_path = prefix + "_A.txt"
    for p in (edges_path, indicator_path, labels_path):
        _require_fields(os.path.exists(p), f"missing required file {p}")

    indicator = []
    for lineno, line in enumerate(_read_lines(indicator_path), start=1):
        try:
            indicator.append(int(line))
        except ValueError as exc:
            raise DatasetFormatError(
                f"{indicator_path}:{lineno}: expected an integer graph id"
            ) from exc
    indicator = np.array(indicator, dtype=np.int64)
    _require_fields(indicator.size > 0, f"{indicator_path}: empty file")
    _require_fields(indicator.min() >= 1, f"{indicator_path}: graph ids are 1-indexed")
    graph_count = int(indicator.max())
    node_count = indicator.size
    # Nodes of one graph must be contiguous for offset bookkeeping.
    _require_fields(
        bool(np.all(np.diff(indicator) >= 0)),
        f"{indicator_path}: node-to-graph assignment must be sorted",
    )

    graph_labels = []
    for lineno, line in enumerate(_read_lines(labels_path), start=1):
        try:
            graph_labels.append(int(line))
        except ValueError as exc:
            raise DatasetFormatError(
                f"{labels_path}:{lineno}: expected an integer class label"
            ) from exc
    _require_fields(
        len(graph_labels) == graph_count,
        f"{labels_path}: {len(graph_labels)} labels for {graph_count} graphs",
    )

    raw_edges = []
    for lineno, line in enumerate(_read_lines(edges_path), start=1):
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise DatasetFormatError(f"{edges_path}:{lineno}: expected `i, j`")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DatasetFormatError(f"{edges_path}:{lineno}: non-integer endpoint") from exc
        if not (1 <= u <= node_count and 1 <= v <= node_count):
            raise DatasetFormatError(f"{edges_path}:{lineno}: endpoint out of range")
        if indicator[u - 1] != indicator[v - 1]:
            raise DatasetFormatError(f"{edges_path}:{lineno}: edge crosses graphs")
        raw_edges.append((u - 1, v - 1))
    raw_edges = (
        np.array(raw_edges, dtype=np.int64) if raw_edges else np.zeros((0, 2), dtype=np.int64)
    )

    attr_path = prefix + "_node_attributes.txt"
    node_label_path = prefix + "_node_labels.txt"
    features = None
    if os.path.exists(attr_path):
        rows = []
        width = None
        for lineno, line in enumerate(_read_lines(attr_path), start=1):
            parts = line.replace(",", " ").split()
            try:
                row = [float(p) for p in parts]
            except ValueError as exc:
                raise DatasetFormatError(f"{attr_path}:{lineno}: non-numeric value") from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DatasetFormatError(
                    f"{attr_path}:{lineno}: ragged row ({len(row)} values, expected {width})"
                )
            rows.append(row)
        _require_fields(
            len(rows) == node_count,
            f"{attr_path}: {len(rows)} rows for {node_count} nodes",
        )
        features = np.array(rows, dtype=np.float64).reshape(node_count, width or 0)
    elif os.path.exists(node_label_path):
        vals = []
        for lineno, line in enumerate(_read_lines(node_label_path), start=1):
            try:
                vals.append(int(line.split(",")[0]))
            except ValueError as exc:
                raise DatasetFormatError(f"{node_label_path}:{lineno}: non-integer label") from exc
        _require_fields(
            len(vals) == node_count,
            f"{node_label_path}: {len(vals)} rows for {node_count} nodes",
        )
        vals = np.array(vals, dtype=np.int64)
        alphabet = np.unique(vals)
        features = np.zeros((node_count, alphabet.size), dtype=np.float64)
        features[np.arange(node_count), np.searchsorted(alphabet, vals)] = 1.0
    else:
        features = np.zeros((node_count, 0), dtype=np.float64)

    node_graph = indicator - 1
    starts = np.searchsorted(node_graph, np.arange(graph_count), side="left")
    ends = np.searchsorted(node_graph, np.arange(graph_count), side="right")
    edge_owner = node_graph[raw_edges[:, 0]] if raw_edges.shape[0] else np.zeros(0, np.int64)

    graphs = []
    for gid in range(graph_count):
        lo, hi = int(starts[gid]), int(ends[gid])
        _require_fields(hi > lo, f"graph {gid + 1} has no nodes")
        local_edges = raw_edges[edge_owner == gid] - lo
        graphs.append(
            Graph(
                id=gid,
                node_count=hi - lo,
                edges=canonical_edges(local_edges),
                features=features[lo:hi],
                label=graph_labels[gid],
            )
        )
    return GraphDataset(name=name, graphs=tuple(graphs))


def write_tu_dataset(ds: GraphDataset, root: str) -> str:
    """Write a dataset back out in TU layout; returns the dataset directory.

    Each undirected edge is listed in both directions, matching the upstream
    convention.  Features are written as node attributes with full-precision
    reprs so that a parse round-trip reproduces them exactly.
    """
    base = os.path.join(root, ds.name)
    os.makedirs(base, exist_ok=True)
    prefix = os.path.join(base, ds.name)
    offsets = {}
    total = 0
    for g in ds.graphs:
        offsets[g.id] = total
        total += g.node_count
    with open(prefix + "_A.txt", "w", encoding="utf-8") as fh:
        for g in ds.graphs:
            off = offsets[g.id] + 1
            for i, j in g.edges:
                fh.write(f"{i + off}, {j + off}\n")
                fh.write(f"{j + off}, {i + off}\n")
    with open(prefix + "_graph_indicator.txt", "w", encoding="utf-8") as fh:
        for g in ds.graphs:
            for _ in range(g.node_count):
                fh.write(f"{g.id + 1}\n")
    with open(prefix + "_graph_labels.txt", "w", encoding="utf-8") as fh:
        for g in ds.graphs:
            fh.write(f"{g.label}\n")
    if ds.graphs and ds.graphs[0].features.shape[1] > 0:
        with open(prefix + "_node_attributes.txt", "w", encoding="utf-8") as fh:
            for g in ds.graphs:
                for row in g.features:
                    fh.write(", ".join(repr(float(v)) for v in row) + "\n")
    return base


def fetch_tu_dataset(name: str, root: str, timeout: float = 60.0) -> str:
    """Download and unpack a dataset from the TU collection (needs network)."""
    os.makedirs(root, exist_ok=True)
    target = os.path.join(root, name)
    if os.path.exists(os.path.join(target, f"{name}_A.txt")):
        return target
    url = TU_DOWNLOAD_URL.format(name=name)
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        payload = resp.read()
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        zf.extractall(root)
    if not os.path.exists(os.path.join(target, f"{name}_A.txt")):
        raise DatasetFormatError(f"archive for {name!r} did not contain {name}_A.txt")
    return target


def assign_anomaly_labels(
    ds: GraphDataset, anomaly_class: int | None = None
) -> GraphDataset:
    """Mark one class as anomalous; by default the minority class.

    A tie in class counts is refused unless `anomaly_class` is given
    explicitly, since "minority" is then meaningless.
    """
    labels = ds.labels
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise ValueError(f"dataset {ds.name!r}: need at least two classes, got {classes.size}")
    if anomaly_class is None:
        order = np.argsort(counts)
        if counts[order[0]] == counts[order[1]]:
            raise AnomalyClassTieError(
                f"dataset {ds.name!r}: classes {classes[order[0]]} and {classes[order[1]]} "
                f"are tied at {int(counts[order[0]])} graphs; pass anomaly_class explicitly"
            )
        anomaly_class = int(classes[order[0]])
    if anomaly_class not in classes:
        raise ValueError(f"anomaly_class {anomaly_class} not present in labels {classes.tolist()}")
    return replace(ds, anomaly_class=int(anomaly_class))


def make_split(ds: GraphDataset, seed: int, train_frac: float = 0.8) -> SplitSpec:
    """Sample a training set of normal graphs; everything else is test.

    floor(train_frac * #normals) normal graphs are drawn uniformly without
    replacement under `seed`; the test set holds the remaining normals plus
    every anomaly.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must lie in (0, 1), got {train_frac}")
    flags = ds.anomaly_flags()
    normal_ids = np.flatnonzero(~flags)
    anomaly_ids = np.flatnonzero(flags)
    if normal_ids.size < 2:
        raise ValueError("need at least two normal graphs to split")
    n_train = int(np.floor(train_frac * normal_ids.size))
    if n_train < 1 or n_train == normal_ids.size:
        raise ValueError(
            f"train_frac {train_frac} leaves an empty train or test side "
            f"for {normal_ids.size} normal graphs"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(normal_ids, size=n_train, replace=False)
    train_ids = np.sort(chosen)
    rest = np.setdiff1d(normal_ids, chosen, assume_unique=True)
    test_ids = np.sort(np.concatenate([rest, anomaly_ids]))
    return SplitSpec(train_ids=train_ids, test_ids=test_ids, seed=seed, train_frac=train_frac)
