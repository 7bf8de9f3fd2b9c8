"""Sparse graph core: CSR matrices, adjacency powers, walk-count oracles,
and dominant-eigenpair estimation.

All values are stored as 64-bit reals. Walk counts of unweighted graphs stay
integer-valued and exact in float64 as long as row sums remain below 2**53,
which holds comfortably for the cutoffs (L <= 4) used anywhere in this
package.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import GraphIndexError, OracleGuardError, PowerIterationError, SelfLoopError

# Enumeration guards for the exponential brute-force oracle (kept small so
# every oracle-backed test finishes in well under a second).
ORACLE_MAX_LENGTH = 8
ORACLE_MAX_NODES = 12


@dataclass(frozen=True)
class SparseMatrix:
    """CSR matrix in canonical form.

    Canonical means: row_offsets nondecreasing with row_offsets[-1] == nnz,
    column indices strictly increasing within each row, and no explicitly
    stored zeros. Instances are immutable; construct via the classmethods,
    which canonicalize.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        m = sp.csr_matrix(m, dtype=np.float64)
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        return cls(
            n_rows=m.shape[0],
            n_cols=m.shape[1],
            row_offsets=m.indptr,
            col_indices=m.indices,
            values=m.data,
        )

    @classmethod
    def from_dense(cls, arr) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(arr, dtype=np.float64)))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, dtype=np.float64, format="csr"))

    def to_scipy(self) -> sp.csr_matrix:
        # Wraps the stored arrays without copying.
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.n_rows, self.n_cols),
            copy=False,
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().transpose().tocsr())

    def scale_rows(self, s: np.ndarray) -> "SparseMatrix":
        """Left-multiply by diag(s)."""
        return SparseMatrix.from_scipy(sp.diags(s) @ self.to_scipy())

    def scale_cols(self, s: np.ndarray) -> "SparseMatrix":
        """Right-multiply by diag(s)."""
        return SparseMatrix.from_scipy(self.to_scipy() @ sp.diags(s))

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix.from_scipy(self.to_scipy() @ other.to_scipy())
        return self.to_scipy() @ np.asarray(other)


def canonicalize(m: SparseMatrix) -> SparseMatrix:
    """Re-establish canonical CSR form. Idempotent."""
    return SparseMatrix.from_scipy(m.to_scipy())


class PathKind(Enum):
    ALL_WALKS = "all_walks"
    SHORTEST_PATHS = "shortest_paths"
    SELF_AVOIDING = "self_avoiding"


@dataclass(frozen=True)
class Graph:
    """Undirected unweighted graph: symmetric binary adjacency, zero diagonal."""

    n_nodes: int
    adjacency: SparseMatrix

    def neighbor_lists(self) -> list:
        off, col = self.adjacency.row_offsets, self.adjacency.col_indices
        return [col[off[i]:off[i + 1]].tolist() for i in range(self.n_nodes)]

    def degrees(self) -> np.ndarray:
        return row_sums(self.adjacency)


def build_csr(n_nodes: int, edges) -> Graph:
    """Build a graph from an undirected edge list.

    Duplicate edges (in either orientation) collapse to a single entry.
    Raises GraphIndexError for endpoints outside [0, n_nodes) and
    SelfLoopError for i == j pairs.
    """
    rows, cols = [], []
    for i, j in edges:
        i, j = int(i), int(j)
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise GraphIndexError(f"edge ({i}, {j}) out of range for {n_nodes} nodes")
        if i == j:
            raise SelfLoopError(f"self-loop ({i}, {j}) not allowed")
        rows.extend((i, j))
        cols.extend((j, i))
    m = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n_nodes, n_nodes), dtype=np.float64
    )
    m.sum_duplicates()
    m.data[:] = 1.0  # collapse duplicates to a binary adjacency
    return Graph(n_nodes=n_nodes, adjacency=SparseMatrix.from_scipy(m))


def matrix_power_terms(g: Graph, L: int) -> list:
    """[A^0, A^1, ..., A^L] in canonical CSR, A^0 = identity.

    Computed by repeated sparse-sparse multiplication. For large graphs the
    higher powers densify substantially (on ~20k-node citation graphs A^2 and
    A^3 hold millions of entries); they are kept in CSR regardless since
    cutoffs beyond 3 are not used in practice.
    """
    if L < 0:
        raise ValueError("L must be >= 0")
    terms = [SparseMatrix.identity(g.n_nodes)]
    for _ in range(L):
        terms.append(terms[-1] @ g.adjacency)
    for t in terms:
        if t.nnz and float(np.max(row_sums(t))) >= 2.0**53:
            raise OverflowError("walk counts exceed exact float64 integer range")
    return terms


def row_sums(m: SparseMatrix) -> np.ndarray:
    """Sum of each row; length n_rows."""
    return np.asarray(m.to_scipy().sum(axis=1)).ravel()


def _bfs_distances(adj: list, start: int, n: int) -> np.ndarray:
    dist = np.full(n, -1, dtype=np.int64)
    dist[start] = 0
    q = deque([start])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def count_paths_bruteforce(g: Graph, i: int, j: int, n: int, kind: PathKind) -> int:
    """Exhaustively count length-n walks from i to j of the given kind.

    Deliberately dumb (pure DFS enumeration) so it can serve as an
    independent oracle for the matrix-power route. Guarded to n <= 8 and
    graphs of at most 12 nodes; beyond that use matrix_power_terms.
    """
    if n > ORACLE_MAX_LENGTH or g.n_nodes > ORACLE_MAX_NODES:
        raise OracleGuardError(
            f"oracle guard exceeded (n={n}, nodes={g.n_nodes}); "
            "use matrix_power_terms for larger instances"
        )
    if not (0 <= i < g.n_nodes and 0 <= j < g.n_nodes):
        raise GraphIndexError(f"node index out of range: i={i}, j={j}")
    adj = g.neighbor_lists()

    if kind is PathKind.SHORTEST_PATHS:
        dist = _bfs_distances(adj, i, g.n_nodes)
        if dist[j] < 0 or n != dist[j]:
            return 0
        # Every geodesic is vertex-distinct; enumerate with that constraint.
        kind = PathKind.SELF_AVOIDING

    if kind is PathKind.SELF_AVOIDING:

        def walk(cur: int, remaining: int, visited: frozenset) -> int:
            if remaining == 0:
                return 1 if cur == j else 0
            return sum(
                walk(nb, remaining - 1, visited | {nb})
                for nb in adj[cur]
                if nb not in visited
            )

        return walk(i, n, frozenset({i}))

    def walk_all(cur: int, remaining: int) -> int:
        if remaining == 0:
            return 1 if cur == j else 0
        return sum(walk_all(nb, remaining - 1) for nb in adj[cur])

    return walk_all(i, n)


def estimate_lambda1(m: SparseMatrix, tol: float = 1e-10, max_iters: int = 10000):
    """Dominant eigenpair of a symmetric nonnegative matrix by power iteration.

    Starts from the all-ones vector. Iterates on m + I so the iteration also
    converges on bipartite adjacency spectra (where -lambda_1 ties the
    dominant modulus); the reported eigenvalue is taken from the Rayleigh
    quotient of m itself. The eigenvector is unit length with its first
    nonzero component positive. Convergence criterion: ||m v - lambda v||
    <= tol. Raises PowerIterationError (carrying the last iterate) when
    max_iters is exhausted.
    """
    if m.n_rows != m.n_cols:
        raise ValueError("matrix must be square")
    a = m.to_scipy()
    n = m.n_rows
    v = np.ones(n) / math.sqrt(n)
    mv = a @ v
    lam = float(v @ mv)
    for _ in range(max_iters):
        if np.linalg.norm(mv - lam * v) <= tol:
            nz = np.flatnonzero(v)
            if nz.size and v[nz[0]] < 0:
                v = -v
            return lam, v
        w = mv + v  # +I shift
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            raise PowerIterationError("iterate collapsed to zero", lam, v)
        v = w / nrm
        mv = a @ v
        lam = float(v @ mv)
    raise PowerIterationError(
        f"power iteration did not converge in {max_iters} iterations",
        lam,
        v,
    )
