"""Core graph/probability-matrix types, Bernoulli sampling, RNG substreams, I/O.

Matrices are stored dense: the target regime is a few hundred nodes, where
dense symmetric linear algebra is both simpler and faster than sparse.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DimensionMismatchError

logger = logging.getLogger(__name__)

__all__ = [
    "Graph",
    "ProbMatrix",
    "RngStream",
    "sample_graph",
    "frobenius_distance",
    "read_edge_list",
    "write_graph",
    "write_matrix",
    "read_matrix",
]


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph: symmetric 0/1 adjacency with zero diagonal."""

    n: int
    adj: np.ndarray
    labels: dict[str, int] | None = None

    def __post_init__(self):
        adj = np.asarray(self.adj, dtype=np.uint8)
        if adj.shape != (self.n, self.n):
            raise DimensionMismatchError(
                f"adjacency shape {adj.shape} does not match n={self.n}"
            )
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency matrix must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise ValueError("adjacency matrix must have zero diagonal")
        if np.any(adj > 1):
            raise ValueError("adjacency entries must be 0/1")
        object.__setattr__(self, "adj", adj)
        if self.labels is not None:
            idx = sorted(self.labels.values())
            if len(set(idx)) != len(self.labels) or any(
                i < 0 or i >= self.n for i in idx
            ):
                raise ValueError("labels must map nodes to distinct indices in [0, n)")
        self.adj.setflags(write=False)

    @property
    def degrees(self) -> np.ndarray:
        return self.adj.sum(axis=1).astype(np.int64)

    @property
    def num_edges(self) -> int:
        return int(self.adj.sum()) // 2


@dataclass(frozen=True)
class ProbMatrix:
    """Symmetric matrix of dyad probabilities in [0, 1] with zero diagonal."""

    n: int
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.shape != (self.n, self.n):
            raise DimensionMismatchError(
                f"probability matrix shape {p.shape} does not match n={self.n}"
            )
        if not np.allclose(p, p.T, atol=1e-12):
            raise ValueError("probability matrix must be symmetric")
        if np.any(np.diag(p) != 0):
            raise ValueError("probability matrix must have zero diagonal")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "p", p)
        self.p.setflags(write=False)

    @classmethod
    def from_dense(cls, m: np.ndarray, *, clip: bool = False) -> "ProbMatrix":
        """Build from a raw symmetric array; optionally clip into [0, 1].

        The diagonal is always zeroed. Symmetrizes tiny asymmetries from
        floating-point round-off, rejects genuine ones.
        """
        m = np.asarray(m, dtype=np.float64)
        m = 0.5 * (m + m.T) if np.allclose(m, m.T, atol=1e-9) else m
        m = m.copy()
        np.fill_diagonal(m, 0.0)
        if clip:
            np.clip(m, 0.0, 1.0, out=m)
        return cls(m.shape[0], m)


@dataclass(frozen=True)
class RngStream:
    """Deterministic, independent RNG substream keyed by (master_seed, stream_id).

    Substreams are derived with SeedSequence spawn keys, so bootstrap
    replicates can run in any order or thread layout without changing the
    numbers they draw. ``path`` extends the key for nested substreams.
    """

    master_seed: int
    stream_id: int = 0
    path: tuple[int, ...] = field(default=())

    def child(self, *key: int) -> "RngStream":
        return replace(self, path=self.path + key)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            self.master_seed, spawn_key=(self.stream_id, *self.path)
        )
        return np.random.default_rng(seq)

    def derive_seed(self) -> int:
        """A 63-bit integer seed, itself a deterministic function of the key."""
        seq = np.random.SeedSequence(
            self.master_seed, spawn_key=(self.stream_id, *self.path)
        )
        return int(seq.generate_state(2, dtype=np.uint32)[0])


def sample_graph(p: ProbMatrix, rng: RngStream) -> Graph:
    """Draw each dyad i<j once as Bernoulli(p(i,j)); symmetric, zero diagonal."""
    n = p.n
    gen = rng.generator()
    iu = np.triu_indices(n, k=1)
    edges = gen.random(len(iu[0])) < p.p[iu]
    adj = np.zeros((n, n), dtype=np.uint8)
    adj[iu] = edges
    adj |= adj.T
    return Graph(n, adj)


def frobenius_distance(a, b) -> float:
    """Frobenius norm of (a - b), summed over all n^2 entries (both triangles)."""
    ma = a.p if isinstance(a, ProbMatrix) else np.asarray(a, dtype=np.float64)
    mb = b.p if isinstance(b, ProbMatrix) else np.asarray(b, dtype=np.float64)
    if ma.shape != mb.shape:
        raise DimensionMismatchError(f"shape mismatch: {ma.shape} vs {mb.shape}")
    return float(np.linalg.norm(ma - mb, "fro"))


def read_edge_list(
    path,
    node_map: dict[str, int] | None = None,
    *,
    return_stats: bool = False,
):
    """Read a whitespace-separated edge list into a Graph.

    Lines starting with '#' are comments, except an optional header
    ``# n=<count>`` declaring the node count (needed to keep isolated
    nodes). Duplicate edges collapse, self-loops are dropped with a
    warning. With ``node_map``, ids resolve through it (two files can share
    one aligned index space); otherwise ids get indices in first-appearance
    order.
    """
    declared_n: int | None = None
    pairs: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("n="):
                    declared_n = int(body[2:])
                continue
            toks = line.split()
            if len(toks) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            pairs.append((toks[0], toks[1]))

    if node_map is not None:
        missing = sorted(
            {u for pair in pairs for u in pair if u not in node_map}
        )
        if missing:
            raise KeyError(f"node ids absent from node_map: {missing}")
        labels = dict(node_map)
        n = (max(labels.values()) + 1) if labels else 0
    else:
        labels = {}
        for u, v in pairs:
            for tok in (u, v):
                if tok not in labels:
                    labels[tok] = len(labels)
        n = len(labels)
    if declared_n is not None:
        if declared_n < n:
            raise ValueError(
                f"header n={declared_n} is smaller than the {n} ids present"
            )
        n = declared_n

    adj = np.zeros((n, n), dtype=np.uint8)
    self_loops = 0
    duplicates = 0
    for u, v in pairs:
        i, j = labels[u], labels[v]
        if i == j:
            self_loops += 1
            continue
        if adj[i, j]:
            duplicates += 1
        adj[i, j] = adj[j, i] = 1
    if self_loops:
        logger.warning("%s: dropped %d self-loop(s)", path, self_loops)
    g = Graph(n, adj, labels=labels or None)
    if return_stats:
        return g, {"self_loops": self_loops, "duplicates": duplicates}
    return g


def write_graph(path, g: Graph) -> None:
    """Write an edge list with an ``# n=`` header; round-trips through the reader."""
    if g.labels is not None:
        names = {i: name for name, i in g.labels.items()}
    else:
        names = {i: str(i) for i in range(g.n)}
    iu = np.triu_indices(g.n, k=1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n}\n")
        for i, j in zip(*iu):
            if g.adj[i, j]:
                fh.write(f"{names[int(i)]} {names[int(j)]}\n")


def write_matrix(path, m) -> None:
    """Write a dense matrix (ProbMatrix or array) as CSV."""
    arr = m.p if isinstance(m, ProbMatrix) else np.asarray(m, dtype=np.float64)
    np.savetxt(path, arr, delimiter=",", fmt="%.17g")


def read_matrix(path) -> ProbMatrix:
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    return ProbMatrix(arr.shape[0], arr)
