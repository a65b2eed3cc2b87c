"""Dense simple graphs as packed bit rows with cached edge and triangle counts."""

from __future__ import annotations

from itertools import combinations
from typing import Iterable

import numpy as np

from . import _kernels as K


def pair_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major enumeration of the unordered pairs i < j as two index arrays."""
    i, j = np.triu_indices(n, 1)
    return i.astype(np.int64), j.astype(np.int64)


class Graph:
    """Simple graph on ``n`` vertices.

    Adjacency is stored as ``n`` rows of 64-bit words, so the number of common
    neighbours of a pair is an AND/popcount over two rows. ``E`` and ``T`` are
    kept equal to the edge and triangle counts under every mutation.
    """

    __slots__ = ("n", "rows", "E", "T")

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"vertex count must be >= 1, got {n}")
        self.n = int(n)
        self.rows = np.zeros((n, (n + 63) // 64), dtype=np.uint64)
        self.E = 0
        self.T = 0

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        g = cls(n)
        seen = set()
        for i, j in edges:
            if not (0 <= i < j < n):
                raise ValueError(f"pair ({i}, {j}) must satisfy 0 <= i < j < {n}")
            if (i, j) in seen:
                raise ValueError(f"duplicate pair ({i}, {j})")
            seen.add((i, j))
            K.toggle(g.rows, i, j)
        g.E, g.T = (int(v) for v in K.count_edges_triangles(g.rows))
        return g

    @classmethod
    def from_adjacency(cls, adj: np.ndarray) -> "Graph":
        adj = np.asarray(adj, dtype=bool)
        n = adj.shape[0]
        if adj.shape != (n, n) or not np.array_equal(adj, adj.T) or adj.diagonal().any():
            raise ValueError("adjacency must be square, symmetric, with empty diagonal")
        return cls.from_edges(n, zip(*np.nonzero(np.triu(adj, 1))))

    def _check_pair(self, i: int, j: int) -> None:
        if i == j or not (0 <= i < self.n and 0 <= j < self.n):
            raise ValueError(f"invalid vertex pair ({i}, {j}) for n={self.n}")

    def has_edge(self, i: int, j: int) -> bool:
        self._check_pair(i, j)
        return bool(K.has_edge(self.rows, i, j))

    def common_neighbors(self, i: int, j: int) -> int:
        """Number of vertices k adjacent to both i and j (the 2-stars based at ij)."""
        self._check_pair(i, j)
        return int(K.common_neighbors(self.rows, i, j))

    def flip(self, i: int, j: int) -> int:
        """Toggle edge ij in place and return the signed change in ``T``."""
        self._check_pair(i, j)
        L = int(K.common_neighbors(self.rows, i, j))
        present = bool(K.has_edge(self.rows, i, j))
        K.toggle(self.rows, i, j)
        if present:
            self.E -= 1
            self.T -= L
            return -L
        self.E += 1
        self.T += L
        return L

    def densities(self) -> tuple[float, float]:
        """Edge and triangle densities ``2E/n^2`` and ``6T/n^3``."""
        n = self.n
        return 2.0 * self.E / (n * n), 6.0 * self.T / (n * n * n)

    def to_dense(self) -> np.ndarray:
        bits = np.unpackbits(self.rows.view(np.uint8), axis=1, bitorder="little")
        return bits[:, : self.n].astype(bool)

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.to_dense(), 1))
        return list(zip(i.tolist(), j.tolist()))

    def complement(self) -> "Graph":
        adj = ~self.to_dense()
        np.fill_diagonal(adj, False)
        return Graph.from_adjacency(adj)

    def copy(self) -> "Graph":
        g = Graph(self.n)
        g.rows[:] = self.rows
        g.E, g.T = self.E, self.T
        return g

    def recount(self) -> tuple[int, int]:
        """Brute-force ``(E, T)`` from the adjacency matrix, ignoring the caches."""
        adj = self.to_dense()
        E = int(np.triu(adj, 1).sum())
        T = sum(
            1 for a, b, c in combinations(range(self.n), 3)
            if adj[a, b] and adj[b, c] and adj[a, c]
        )
        return E, T

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and self.E == other.E and self.T == other.T
                and np.array_equal(self.rows, other.rows))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, E={self.E}, T={self.T})"


def random_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    """Draw one G(n, p) graph with the supplied generator."""
    i, j = pair_arrays(n)
    keep = rng.random(i.size) < p
    return Graph.from_edges(n, zip(i[keep].tolist(), j[keep].tolist()))
