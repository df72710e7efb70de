"""Graph and dataset representation, file I/O, synthetic data, client splits.

Graphs are undirected and simple. Labels are multi-task binary vectors with
a per-task mask (1 = label observed), so single-task data is just T=1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetFormatError, DatasetSchemaError

# Class-dependent feature means for synthetic data. Kept deliberately closer
# than the default noise level so the edge structure carries real signal.
_CLASS_FEATURE_SHIFT = 0.25


@dataclass(eq=False)
class GraphInstance:
    """One labeled graph: node features, undirected edge set, masked labels."""

    id: int
    num_nodes: int
    edges: frozenset[tuple[int, int]]
    features: np.ndarray
    labels: np.ndarray
    label_mask: np.ndarray

    def __init__(self, id: int, num_nodes: int, edges, features, labels, label_mask):
        self.id = int(id)
        self.num_nodes = int(num_nodes)
        if self.num_nodes < 1:
            raise ValueError(f"graph {self.id}: num_nodes must be >= 1")
        raw = [tuple(e) for e in edges]
        normalized = []
        for i, j in raw:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"graph {self.id}: self-loop on node {i}")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise ValueError(f"graph {self.id}: edge ({i}, {j}) out of range [0, {self.num_nodes})")
            normalized.append((min(i, j), max(i, j)))
        self.edges = frozenset(normalized)
        if len(self.edges) != len(normalized):
            raise ValueError(f"graph {self.id}: duplicate edges")
        self.features = np.asarray(features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != self.num_nodes:
            raise ValueError(
                f"graph {self.id}: features must be ({self.num_nodes}, q), got {self.features.shape}"
            )
        if not np.isfinite(self.features).all():
            raise ValueError(f"graph {self.id}: non-finite feature values")
        self.labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        self.label_mask = np.asarray(label_mask, dtype=np.int64).reshape(-1)
        if self.labels.shape != self.label_mask.shape:
            raise ValueError(f"graph {self.id}: labels and label_mask lengths differ")
        for name, vec in (("labels", self.labels), ("label_mask", self.label_mask)):
            if not np.isin(vec, (0, 1)).all():
                raise ValueError(f"graph {self.id}: {name} must be 0/1")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def task_count(self) -> int:
        return self.labels.shape[0]

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GraphInstance):
            return NotImplemented
        return (
            self.id == other.id
            and self.num_nodes == other.num_nodes
            and self.edges == other.edges
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.label_mask, other.label_mask)
        )


@dataclass(eq=False)
class Dataset:
    """Ordered collection of graphs sharing feature and task dimensions."""

    graphs: list[GraphInstance]
    feature_dim: int
    task_count: int

    def __post_init__(self):
        seen = set()
        for g in self.graphs:
            if g.id in seen:
                raise ValueError(f"duplicate graph id {g.id}")
            seen.add(g.id)
            if g.feature_dim != self.feature_dim:
                raise DatasetSchemaError(
                    f"graph {g.id}: feature_dim {g.feature_dim} != dataset feature_dim {self.feature_dim}"
                )
            if g.task_count != self.task_count:
                raise DatasetSchemaError(
                    f"graph {g.id}: task_count {g.task_count} != dataset task_count {self.task_count}"
                )

    def __len__(self) -> int:
        return len(self.graphs)

    def by_id(self) -> dict[int, GraphInstance]:
        return {g.id: g for g in self.graphs}

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.feature_dim == other.feature_dim
            and self.task_count == other.task_count
            and self.graphs == other.graphs
        )


@dataclass
class ClientPartition:
    """Disjoint assignment of graph ids to clients 0..M-1."""

    assignments: dict[int, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        seen: set[int] = set()
        for client, ids in self.assignments.items():
            overlap = seen.intersection(ids)
            if overlap:
                raise ValueError(f"graph ids {sorted(overlap)} assigned to multiple clients")
            seen.update(ids)
            if len(set(ids)) != len(ids):
                raise ValueError(f"client {client}: duplicate graph ids")


def adjacency(g: GraphInstance) -> np.ndarray:
    """Dense symmetric 0/1 adjacency matrix with zero diagonal."""
    a = np.zeros((g.num_nodes, g.num_nodes), dtype=np.float64)
    for i, j in g.edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    return a


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset as line-delimited JSON (header line, then one graph per line)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"q": dataset.feature_dim, "t": dataset.task_count}) + "\n")
        for g in dataset.graphs:
            record = {
                "id": g.id,
                "p": g.num_nodes,
                "edges": [list(e) for e in g.sorted_edges()],
                "x": g.features.tolist(),
                "y": g.labels.tolist(),
                "mask": g.label_mask.tolist(),
            }
            fh.write(json.dumps(record) + "\n")


def load_dataset(path) -> Dataset:
    """Read a dataset written by save_dataset; file order is preserved.

    Raises DatasetFormatError naming the offending line/graph on malformed
    records, DatasetSchemaError on inconsistent dimensions.
    """
    graphs: list[GraphInstance] = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if header is None:
                if not isinstance(obj, dict) or "q" not in obj or "t" not in obj:
                    raise DatasetFormatError(f"line {lineno}: expected header object with 'q' and 't'")
                header = {"q": int(obj["q"]), "t": int(obj["t"])}
                continue
            try:
                g = GraphInstance(
                    id=obj["id"],
                    num_nodes=obj["p"],
                    edges=obj["edges"],
                    features=obj["x"],
                    labels=obj["y"],
                    label_mask=obj["mask"],
                )
            except (KeyError, TypeError, ValueError) as exc:
                gid = obj.get("id", "?") if isinstance(obj, dict) else "?"
                raise DatasetFormatError(f"line {lineno} (graph {gid}): {exc}") from exc
            if g.feature_dim != header["q"] or g.task_count != header["t"]:
                raise DatasetSchemaError(
                    f"line {lineno} (graph {g.id}): dimensions ({g.feature_dim}, {g.task_count}) "
                    f"do not match header ({header['q']}, {header['t']})"
                )
            graphs.append(g)
    if header is None:
        raise DatasetFormatError("empty dataset file (missing header line)")
    return Dataset(graphs=graphs, feature_dim=header["q"], task_count=header["t"])


def _cycle_edges(p: int) -> list[tuple[int, int]]:
    return [(i, (i + 1) % p) for i in range(p)]


def _complete_edges(p: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(p) for j in range(i + 1, p)]


def generate_synthetic(
    n_graphs: int,
    p_range: tuple[int, int],
    q: int,
    noise_sd: float,
    seed: int,
) -> Dataset:
    """Two-class dataset: class 0 graphs are cycles, class 1 are complete graphs.

    Node features are a class-dependent constant vector plus Gaussian noise of
    standard deviation `noise_sd`. Labels are balanced within one graph and the
    whole construction is deterministic given `seed`.
    """
    if n_graphs < 2:
        raise ValueError(f"n_graphs must be >= 2, got {n_graphs}")
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if noise_sd < 0:
        raise ValueError(f"noise_sd must be >= 0, got {noise_sd}")
    p_lo, p_hi = int(p_range[0]), int(p_range[1])
    if p_hi < p_lo:
        raise ValueError(f"empty p_range ({p_lo}, {p_hi})")
    if p_lo < 3:
        raise ValueError(f"p_range minimum must be >= 3 for cycle graphs, got {p_lo}")

    rng = np.random.default_rng(seed)
    labels = np.array([i % 2 for i in range(n_graphs)], dtype=np.int64)
    labels = labels[rng.permutation(n_graphs)]

    graphs = []
    for gid in range(n_graphs):
        y = int(labels[gid])
        p = int(rng.integers(p_lo, p_hi + 1))
        edges = _complete_edges(p) if y == 1 else _cycle_edges(p)
        base = np.full(q, y * _CLASS_FEATURE_SHIFT)
        x = base + rng.normal(0.0, noise_sd, size=(p, q))
        graphs.append(
            GraphInstance(
                id=gid,
                num_nodes=p,
                edges=edges,
                features=x,
                labels=[y],
                label_mask=[1],
            )
        )
    return Dataset(graphs=graphs, feature_dim=q, task_count=1)


def partition(dataset: Dataset, n_clients: int, seed: int) -> ClientPartition:
    """Shuffled round-robin split of graph ids across clients (sizes differ <= 1)."""
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    if len(dataset) == 0:
        raise ValueError("cannot partition an empty dataset")
    if n_clients > len(dataset):
        raise ValueError(f"n_clients {n_clients} exceeds dataset size {len(dataset)}")
    rng = np.random.default_rng(seed)
    ids = [dataset.graphs[i].id for i in rng.permutation(len(dataset))]
    assignments = {m: ids[m::n_clients] for m in range(n_clients)}
    return ClientPartition(assignments=assignments)


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split on the first observed task (missing labels form their own stratum)."""
    if not (0.0 <= test_fraction < 1.0):
        raise ValueError(f"test_fraction must be in [0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    strata: dict[int, list[int]] = {}
    for idx, g in enumerate(dataset.graphs):
        key = int(g.labels[0]) if g.label_mask[0] == 1 else -1
        strata.setdefault(key, []).append(idx)
    test_idx: set[int] = set()
    for key in sorted(strata):
        members = strata[key]
        shuffled = [members[i] for i in rng.permutation(len(members))]
        n_test = int(round(test_fraction * len(members)))
        n_test = min(n_test, len(members) - 1)  # keep every stratum represented in train
        test_idx.update(shuffled[:n_test])
    train_graphs = [g for i, g in enumerate(dataset.graphs) if i not in test_idx]
    test_graphs = [g for i, g in enumerate(dataset.graphs) if i in test_idx]
    make = lambda gs: Dataset(graphs=gs, feature_dim=dataset.feature_dim, task_count=dataset.task_count)
    return make(train_graphs), make(test_graphs)
