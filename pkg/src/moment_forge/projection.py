"""Projection pairs ``(Pb, Pp)`` onto admissible subspaces.

``Pb`` expresses the subspace basis in the full basis (``varphi = Pb phi``)
and ``Pp`` maps full coefficients to subspace coefficients.  Every pair built
here satisfies ``Pb Pp^T = I`` and hence ``Pi = Pb^T Pp`` is idempotent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import count, factorial, index_of, multi_indices, unit


class ProjectionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProjectionPair:
    """Dense windows ``pb`` and ``pp`` of shape ``(n + 1, count(window_cap, dim))``.

    ``row_labels[i]`` is the multi-index naming subspace row ``i``: the index
    itself for identity rows, ``alpha + 2 e_1`` for a trace-contraction row
    ``sum_d H_{alpha + 2 e_d}``.
    """

    pb: np.ndarray
    pp: np.ndarray
    label: str
    dim: int
    window_cap: int
    row_labels: tuple[tuple[int, ...], ...]
    orthogonal: bool = True

    @property
    def subspace_dim(self) -> int:
        return self.pb.shape[0]

    @property
    def pi(self) -> np.ndarray:
        return self.pb.T @ self.pp

    def with_pp(self, pp: np.ndarray, label: str, orthogonal: bool = False) -> "ProjectionPair":
        return ProjectionPair(self.pb, pp, label, self.dim, self.window_cap, self.row_labels, orthogonal)


@dataclass(frozen=True)
class ProjectionVerdict:
    passed: bool
    full_rank: bool
    identity_residual: float
    idempotence_residual: float

    @property
    def residual(self) -> float:
        return max(self.identity_residual, self.idempotence_residual)


def _default_window(M: int, window_cap: int | None) -> int:
    cap = M + 2 if window_cap is None else window_cap
    if cap < M:
        raise ProjectionError("window must hold every subspace degree")
    return cap


def cutoff_projection(M: int, dim: int, window_cap: int | None = None) -> ProjectionPair:
    """Full-degree cut-off ``Pb = Pp = T = (I 0)`` onto degrees ``<= M``."""
    if M < 2:
        raise ProjectionError("order must be >= 2")
    cap = _default_window(M, window_cap)
    n = count(M, dim)
    T = np.eye(n, count(cap, dim))
    return ProjectionPair(T, T.copy(), f"cutoff(M={M})", dim, cap, multi_indices(M, dim))


def orthogonal_pp_from_gram(pb: np.ndarray, gram_sub: np.ndarray, gram_full: np.ndarray) -> np.ndarray:
    """``Pp = gram_sub^{-1} Pb gram_full`` (classical orthogonal projection)."""
    s = np.linalg.svd(np.asarray(gram_sub), compute_uv=False)
    if s.size == 0 or s[-1] <= 1e-10 * s[0]:
        raise ProjectionError("subspace Gram matrix is singular")
    return np.linalg.solve(gram_sub, np.asarray(pb) @ np.asarray(gram_full))


def ordered_hierarchy_projection(M: int, dim: int, window_cap: int | None = None) -> ProjectionPair:
    """Ordered moment hierarchy: ``{H_a}_{|a|<=M-1}`` plus ``{sum_d H_{a+2e_d}}_{|a|=M-2}``.

    ``Pp`` comes from the Gram matrix.  When the contraction rows are mutually
    orthogonal (``M <= 3`` or ``dim == 1``) its weights reduce to
    ``(a+2e_d)! / sum_d (a+2e_d)!``; for larger ``M`` the contraction rows
    overlap and the Gram solve couples them.
    """
    if M < 2:
        raise ProjectionError("order must be >= 2")
    cap = _default_window(M, window_cap)
    full = multi_indices(cap, dim)
    base = multi_indices(M - 1, dim)
    top = [a for a in multi_indices(M - 2, dim) if sum(a) == M - 2]
    n_rows = len(base) + len(top)
    pb = np.zeros((n_rows, len(full)))
    pb[: len(base), : len(base)] = np.eye(len(base))
    labels = list(base)
    for r, a in enumerate(top, start=len(base)):
        for d in range(dim):
            pb[r, index_of(np.add(a, unit(d, dim, 2)), dim)] = 1.0
        labels.append(tuple(np.add(a, unit(0, dim, 2)).tolist()))
    # theta only scales whole degree blocks, so Pp is theta-independent
    gram = np.diag([float(factorial(a)) for a in full])
    pp = orthogonal_pp_from_gram(pb, pb @ gram @ pb.T, gram)
    pp[np.abs(pp) < 1e-15] = 0.0
    return ProjectionPair(pb, pp, f"ordered(M={M})", dim, cap, tuple(labels))


def shifted_projection(M: int, theta: float, window_cap: int | None = None) -> ProjectionPair:
    """1D pair ``(T, T - (M+1)/theta E_{M+1,M+3})`` (1-based ``E``)."""
    if not theta > 0:
        raise ProjectionError("theta must be positive")
    if M < 3:
        raise ProjectionError("order must be >= 3")
    cap = M + 2 if window_cap is None else window_cap
    if cap < M + 2:
        raise ProjectionError("window too small to hold column M+3")
    base = cutoff_projection(M, 1, cap)
    pp = base.pp.copy()
    pp[M, M + 2] -= (M + 1) / theta
    return base.with_pp(pp, f"shifted(M={M})")


def validate_projection(p: ProjectionPair, tol: float = 1e-12) -> ProjectionVerdict:
    """Check full row rank of ``Pb``, ``Pb Pp^T = I`` and ``Pi^2 = Pi``."""
    s = np.linalg.svd(p.pb, compute_uv=False)
    full_rank = bool(s.size == p.pb.shape[0] and s[-1] > 1e-10 * s[0])
    ident = float(np.abs(p.pb @ p.pp.T - np.eye(p.pb.shape[0])).max())
    pi = p.pi
    idem = float(np.abs(pi @ pi - pi).max())
    return ProjectionVerdict(full_rank and ident <= tol and idem <= tol, full_rank, ident, idem)
