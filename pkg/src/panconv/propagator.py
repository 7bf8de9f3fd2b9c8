"""Maximal-entropy transition (MET) propagators.

A propagator is a weighted sum of sparse walk-aggregation terms,
M = sum_n c_n T_n, applied lazily to dense node-feature matrices. Seven
normalization variants are supported:

  1  Z^-1  sum_n w_n A^n              (row-stochastic; Z = per-node normalizer)
  2  Z^-1/2 (sum_n w_n A^n) Z^-1/2    (symmetric)
  3  sum_n k_n D_n^-1 A^n             (per-power row normalization)
  4  sum_n k_n D~_n^-1 A~^n           (as 3, with self-loops: A~ = A + I)
  5  sum_n k_n A^^n                   (powers of A^ = D~^-1/2 A~ D~^-1/2)
  6  sum_n k_n D_n^-1/2 A^n D_n^-1/2  (per-power symmetric normalization)
  7  Z^-1  sum_n w_n A^^n             (row-stochastic over A^ powers)

Methods 3-6 hold fully normalized terms, so reweighting only swaps the
coefficient vector. Methods 1, 2 and 7 hold raw powers plus per-term row
sums; their per-node normalizer z(w) is recomputed on every reweight, and
reweighting stays cheap because the scaling is applied around the raw terms
at application time. Zero rows in any normalizer use the pseudo-inverse
convention 0^-1 := 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import OracleGuardError, PropagatorConfigError
from .graph import Graph, SparseMatrix, estimate_lambda1, row_sums

RENORMALIZED_METHODS = frozenset({1, 2, 7})
SYMMETRIC_METHODS = frozenset({2, 5, 6})
ROW_STOCHASTIC_METHODS = frozenset({1, 3, 4})  # 3/4 need weights summing to 1
STENCIL_MAX_CUTOFF = 3


@dataclass(frozen=True)
class EnergyForm:
    """Walk-length weighting: either explicit per-length weights, or
    Boltzmann factors exp(-E(n)/T) of the energy E(n) = scale * n**alpha."""

    kind: str  # "explicit" | "power_law"
    values: tuple | None = None
    alpha: float = 1.0
    scale: float = 1.0
    temperature: float = 1.0

    @classmethod
    def explicit(cls, values) -> "EnergyForm":
        vals = tuple(float(v) for v in values)
        return cls(kind="explicit", values=vals)

    @classmethod
    def power_law(cls, alpha: float, scale: float, temperature: float) -> "EnergyForm":
        if alpha < 1.0:
            raise PropagatorConfigError(f"power-law exponent must be >= 1, got {alpha}")
        if scale <= 0.0:
            raise PropagatorConfigError(f"energy scale must be > 0, got {scale}")
        if temperature <= 0.0:
            raise PropagatorConfigError(f"temperature must be > 0, got {temperature}")
        return cls(kind="power_law", alpha=float(alpha), scale=float(scale),
                   temperature=float(temperature))

    def energy(self, n: int) -> float:
        if self.kind != "power_law":
            raise PropagatorConfigError("energy is only defined for the power-law form")
        return self.scale * float(n) ** self.alpha


def boltzmann_weights(e: EnergyForm, L: int) -> np.ndarray:
    """Per-length weights of the propagator sum, entries 0..L.

    Power-law form: exp(-E(n)/temperature). Explicit form: the stored values
    verbatim (temperature ignored), which must have length L+1.
    """
    if e.kind == "explicit":
        if len(e.values) != L + 1:
            raise PropagatorConfigError(
                f"explicit weights have length {len(e.values)}, expected {L + 1}"
            )
        return np.asarray(e.values, dtype=np.float64)
    if e.temperature <= 0.0:
        raise PropagatorConfigError(f"temperature must be > 0, got {e.temperature}")
    return np.exp(-np.array([e.energy(n) for n in range(L + 1)]) / e.temperature)


@dataclass(frozen=True)
class PropagatorConfig:
    method: int
    cutoff_L: int
    weights: EnergyForm
    trainable_k: bool = False

    def __post_init__(self):
        if self.method not in range(1, 8):
            raise PropagatorConfigError(f"method must be 1..7, got {self.method}")
        if self.cutoff_L < 0:
            raise PropagatorConfigError(f"cutoff_L must be >= 0, got {self.cutoff_L}")
        if self.weights.kind == "explicit":
            if len(self.weights.values) != self.cutoff_L + 1:
                raise PropagatorConfigError(
                    f"explicit weights have length {len(self.weights.values)}, "
                    f"expected {self.cutoff_L + 1}"
                )
            if any(v < 0.0 for v in self.weights.values):
                raise PropagatorConfigError("explicit weights must be nonnegative")

    @classmethod
    def fixed_k(cls, method: int, k) -> "PropagatorConfig":
        k = tuple(float(v) for v in k)
        return cls(method=method, cutoff_L=len(k) - 1, weights=EnergyForm.explicit(k))


def _pinv_vec(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    nz = x != 0.0
    out[nz] = 1.0 / x[nz]
    return out


def _scipy_powers(base: sp.csr_matrix, L: int) -> list:
    n = base.shape[0]
    powers = [sp.identity(n, dtype=np.float64, format="csr")]
    for _ in range(L):
        p = (powers[-1] @ base).tocsr()
        p.sum_duplicates()
        p.sort_indices()
        p.eliminate_zeros()
        powers.append(p)
    return powers


def _sym_normalized_self_loops(g: Graph) -> sp.csr_matrix:
    """A^ = D~^-1/2 (A + I) D~^-1/2 with D~ the degree matrix of A + I."""
    a_tilde = (g.adjacency.to_scipy() + sp.identity(g.n_nodes, format="csr")).tocsr()
    d = np.asarray(a_tilde.sum(axis=1)).ravel()
    s = _pinv_vec(np.sqrt(d))
    return (sp.diags(s) @ a_tilde @ sp.diags(s)).tocsr()


class Propagator:
    """Lazily applied transition operator M = sum_n c_n T_n.

    Immutable once built; `reweight` returns a new lightweight view sharing
    the sparse term structure, so instances are safe to share across threads.
    """

    def __init__(self, method, cutoff, weights, terms, terms_t, term_row_sums=None):
        self.method = method
        self.cutoff = cutoff
        self.weights = np.asarray(weights, dtype=np.float64)
        self._terms = terms            # scipy CSR; normalized (3-6) or raw powers (1/2/7)
        self._terms_t = terms_t        # transposes of the above
        self._row_sums = term_row_sums  # raw-power row sums, methods 1/2/7 only
        if self._row_sums is not None:
            z = np.zeros(terms[0].shape[0])
            for w_n, r_n in zip(self.weights, self._row_sums):
                z += w_n * r_n
            self._z = z
            self._zinv = _pinv_vec(z)
            self._zinv_sqrt = _pinv_vec(np.sqrt(z))
        else:
            self._z = self._zinv = self._zinv_sqrt = None

    @property
    def n_nodes(self) -> int:
        return self._terms[0].shape[0]

    @property
    def n_terms(self) -> int:
        return len(self._terms)

    @property
    def terms(self):
        """(coefficient, SparseMatrix) pairs of the effective term list."""
        return [
            (float(w), SparseMatrix.from_scipy(t))
            for w, t in zip(self.weights, self._effective_terms())
        ]

    def _effective_terms(self):
        if self._row_sums is None:
            return list(self._terms)
        if self.method == 2:
            s = sp.diags(self._zinv_sqrt)
            return [(s @ t @ s).tocsr() for t in self._terms]
        return [(sp.diags(self._zinv) @ t).tocsr() for t in self._terms]

    def reweight(self, weights) -> "Propagator":
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (self.n_terms,):
            raise ValueError(f"expected {self.n_terms} weights, got shape {w.shape}")
        return Propagator(self.method, self.cutoff, w, self._terms, self._terms_t,
                          self._row_sums)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """M @ x for a dense vector or matrix x."""
        return self._apply(x, self._terms, transpose=False)

    def apply_transpose(self, x: np.ndarray) -> np.ndarray:
        """M^T @ x."""
        return self._apply(x, self._terms_t, transpose=True)

    def _apply(self, x, terms, transpose):
        x = np.asarray(x, dtype=np.float64)
        if self._row_sums is None:
            out = np.zeros_like(x)
            for w_n, t in zip(self.weights, terms):
                if w_n != 0.0:
                    out += w_n * (t @ x)
            return out
        if self.method == 2:
            xin = self._scale_rows(x, self._zinv_sqrt)
            out = np.zeros_like(x)
            for w_n, t in zip(self.weights, terms):
                if w_n != 0.0:
                    out += w_n * (t @ xin)
            return self._scale_rows(out, self._zinv_sqrt)
        # methods 1/7: M = Z^-1 S, so M^T x = S^T (Z^-1 x)
        if transpose:
            xin = self._scale_rows(x, self._zinv)
            out = np.zeros_like(x)
            for w_n, t in zip(self.weights, terms):
                if w_n != 0.0:
                    out += w_n * (t @ xin)
            return out
        out = np.zeros_like(x)
        for w_n, t in zip(self.weights, terms):
            if w_n != 0.0:
                out += w_n * (t @ x)
        return self._scale_rows(out, self._zinv)

    @staticmethod
    def _scale_rows(x, s):
        return x * (s[:, None] if x.ndim == 2 else s)

    def term_products(self, x: np.ndarray) -> list:
        """[T_n @ x] for the effective (normalization-applied) terms."""
        x = np.asarray(x, dtype=np.float64)
        if self._row_sums is None:
            return [t @ x for t in self._terms]
        if self.method == 2:
            xin = self._scale_rows(x, self._zinv_sqrt)
            return [self._scale_rows(t @ xin, self._zinv_sqrt) for t in self._terms]
        return [self._scale_rows(t @ x, self._zinv) for t in self._terms]

    def normalizer_ratios(self):
        """u_n = rowsums(raw term n) / z, used to chain gradients through the
        per-node normalizer. None for methods whose terms are fixed."""
        if self._row_sums is None:
            return None
        return [r * self._zinv for r in self._row_sums]

    def assemble(self) -> SparseMatrix:
        """Materialize M as a canonical sparse matrix."""
        acc = None
        for w_n, t in zip(self.weights, self._effective_terms()):
            part = w_n * t
            acc = part if acc is None else acc + part
        return SparseMatrix.from_scipy(acc.tocsr())

    def inspect(self) -> dict:
        """JSON-serializable summary: weights, per-term and assembled
        row-sum statistics, sparsity, and the symmetry residual."""
        def stats(mat):
            r = np.asarray(mat.sum(axis=1)).ravel()
            return {
                "nnz": int(mat.nnz),
                "row_sum_min": float(r.min()),
                "row_sum_max": float(r.max()),
                "row_sum_mean": float(r.mean()),
            }

        assembled = self.assemble().to_scipy()
        sym_residual = float(abs(assembled - assembled.T).max()) if assembled.nnz else 0.0
        n = self.n_nodes
        return {
            "method": self.method,
            "cutoff_L": self.cutoff,
            "weights": [float(w) for w in self.weights],
            "n_nodes": n,
            "terms": [
                {"n": i, **stats(t)} for i, t in enumerate(self._effective_terms())
            ],
            "assembled": {
                **stats(assembled),
                "density": float(assembled.nnz) / float(n * n) if n else 0.0,
                "symmetry_residual": sym_residual,
            },
        }


def build_propagator(g: Graph, cfg: PropagatorConfig) -> Propagator:
    """Assemble the term list for the configured method and cutoff."""
    if g.n_nodes == 0:
        raise PropagatorConfigError("cannot build a propagator on an empty graph")
    w = boltzmann_weights(cfg.weights, cfg.cutoff_L)
    if np.any(w < 0.0):
        raise PropagatorConfigError("weights must be nonnegative")
    L, method = cfg.cutoff_L, cfg.method

    if method in (1, 2):
        raw = _scipy_powers(g.adjacency.to_scipy(), L)
    elif method in (5, 7):
        raw = _scipy_powers(_sym_normalized_self_loops(g), L)
    elif method == 4:
        a_tilde = (g.adjacency.to_scipy() + sp.identity(g.n_nodes, format="csr")).tocsr()
        raw = _scipy_powers(a_tilde, L)
    else:  # methods 3 and 6: plain adjacency powers
        raw = _scipy_powers(g.adjacency.to_scipy(), L)

    if method in RENORMALIZED_METHODS:
        sums = [np.asarray(t.sum(axis=1)).ravel() for t in raw]
        terms_t = [t.T.tocsr() for t in raw]
        return Propagator(method, L, w, raw, terms_t, term_row_sums=sums)

    if method in (3, 4):
        terms = [
            (sp.diags(_pinv_vec(np.asarray(t.sum(axis=1)).ravel())) @ t).tocsr()
            for t in raw
        ]
    elif method == 6:
        terms = []
        for t in raw:
            s = _pinv_vec(np.sqrt(np.asarray(t.sum(axis=1)).ravel()))
            terms.append((sp.diags(s) @ t @ sp.diags(s)).tocsr())
    else:  # method 5: the normalized powers themselves
        terms = raw
    terms_t = [t.T.tocsr() for t in terms]
    return Propagator(method, L, w, terms, terms_t)


def low_temperature_limit_check(g: Graph, e: EnergyForm, T_small: float) -> Propagator:
    """Method-1 propagator in the localized limit; its assembled matrix is
    the identity to within 1e-6. Requires a strictly increasing energy form
    and T_small <= 1e-3 * (E(1) - E(0))."""
    if e.kind != "power_law":
        raise PropagatorConfigError(
            "low-temperature limit is undefined for explicit weights"
        )
    gap = e.energy(1) - e.energy(0)
    if not (0.0 < T_small <= 1e-3 * gap):
        raise PropagatorConfigError(
            f"T_small must satisfy 0 < T <= 1e-3 * (E(1) - E(0)) = {1e-3 * gap}"
        )
    cold = EnergyForm.power_law(e.alpha, e.scale, T_small)
    prop = build_propagator(
        g, PropagatorConfig(method=1, cutoff_L=2, weights=cold)
    )
    residual = np.abs(prop.assemble().to_dense() - np.eye(g.n_nodes)).max()
    if residual > 1e-6:
        raise PropagatorConfigError(
            f"low-temperature propagator deviates from identity by {residual}"
        )
    return prop


@dataclass(frozen=True)
class HighTempOperator:
    """Rank-one-plus-identity operator x -> x + psi (psi^T x), psi the unit
    dominant eigenvector of the adjacency. Never materialized densely."""

    psi: np.ndarray
    eigenvalue: float

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return x + self.psi * float(self.psi @ x)
        return x + np.outer(self.psi, self.psi @ x)

    def to_dense(self) -> np.ndarray:
        return np.eye(self.psi.shape[0]) + np.outer(self.psi, self.psi)


def high_temperature_propagator(g: Graph, tol: float = 1e-12,
                                max_iters: int = 100000) -> HighTempOperator:
    """Delocalized-limit operator I + psi1 psi1^T on a connected graph."""
    lam, psi = estimate_lambda1(g.adjacency, tol=tol, max_iters=max_iters)
    return HighTempOperator(psi=psi, eigenvalue=lam)


def _grid_walk_counts(n: int) -> np.ndarray:
    """Walk counts from the origin on the infinite 4-connected grid,
    returned as a (2n+1) x (2n+1) array centered at the origin."""
    size = 2 * n + 1
    counts = np.zeros((size, size))
    counts[n, n] = 1.0
    for _ in range(n):
        nxt = np.zeros_like(counts)
        nxt[1:, :] += counts[:-1, :]
        nxt[:-1, :] += counts[1:, :]
        nxt[:, 1:] += counts[:, :-1]
        nxt[:, :-1] += counts[:, 1:]
        counts = nxt
    return counts


def map_to_grid_stencil(L: int, k) -> np.ndarray:
    """Equivalent classical convolution stencil of the per-power
    row-normalized propagator (method 3) at an interior node of the infinite
    4-connected grid: entry (L+dx, L+dy) = sum_n k_n * walks(n, origin ->
    (dx, dy)) / 4^n. Side 2L+1."""
    if L > STENCIL_MAX_CUTOFF:
        raise OracleGuardError(
            f"stencil enumeration guarded to L <= {STENCIL_MAX_CUTOFF}, got {L}"
        )
    k = np.asarray(k, dtype=np.float64)
    if k.shape != (L + 1,):
        raise PropagatorConfigError(f"k must have length {L + 1}, got {k.shape}")
    side = 2 * L + 1
    stencil = np.zeros((side, side))
    for n in range(L + 1):
        if k[n] == 0.0:
            continue
        counts = _grid_walk_counts(n)
        pad = L - n
        stencil[pad:side - pad, pad:side - pad] += k[n] * counts / 4.0**n
    return stencil
