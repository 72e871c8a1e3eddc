"""Multi-indices and weighted Hermite families as finite matrix windows.

All "infinite" matrices of the moment framework are materialised on a window
holding every basis function of degree ``<= cap``.  Matrices act on
coefficient vectors: if ``xi_d * Phi = M_d^T Phi`` then multiplying a
distribution with coefficients ``c`` by ``xi_d`` yields coefficients ``M_d c``.

Three families are supported:

``hermite``
    Weighted Hermite functions ``H_alpha`` for the Maxwellian weight with
    parameters ``(u, theta)``.
``gaussian``
    Generalised Hermite functions for an anisotropic Gaussian weight with
    mean ``u`` and covariance ``Theta``.
``scaled``
    Parameter-free Hermite functions ``h_alpha(v)`` of the standard normal
    weight, used with the scaled velocity ``v = (xi - u) / sqrt(theta)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

FAMILY_KINDS = ("hermite", "gaussian", "scaled")


# ---------------------------------------------------------------------------
# multi-index bookkeeping


def count(cap: int, dim: int) -> int:
    """Number of multi-indices in ``N^dim`` of degree ``<= cap``."""
    if cap < 0:
        return 0
    return math.comb(cap + dim, dim)


@lru_cache(maxsize=None)
def _degree_block(degree: int, dim: int) -> tuple[tuple[int, ...], ...]:
    # lexicographically descending compositions of `degree` into `dim` parts
    if dim == 1:
        return ((degree,),)
    out = []
    for first in range(degree, -1, -1):
        for rest in _degree_block(degree - first, dim - 1):
            out.append((first,) + rest)
    return tuple(out)


@lru_cache(maxsize=None)
def multi_indices(cap: int, dim: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices of degree ``<= cap`` in graded lexicographic order."""
    out: list[tuple[int, ...]] = []
    for k in range(cap + 1):
        out.extend(_degree_block(k, dim))
    return tuple(out)


@lru_cache(maxsize=None)
def _block_rank(degree: int, dim: int) -> dict[tuple[int, ...], int]:
    return {a: i for i, a in enumerate(_degree_block(degree, dim))}


def index_of(alpha: Sequence[int], dim: int) -> int:
    """Ordinal ``N(alpha)``: smaller degree first, then descending lex order."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != dim:
        raise ValueError(f"multi-index {alpha} does not have dimension {dim}")
    if any(a < 0 for a in alpha):
        raise ValueError(f"multi-index {alpha} has negative components")
    k = sum(alpha)
    return count(k - 1, dim) + _block_rank(k, dim)[alpha]


def index_from_ordinal(n: int, dim: int) -> tuple[int, ...]:
    """Inverse of :func:`index_of`."""
    if n < 0:
        raise ValueError("ordinal must be non-negative")
    k = 0
    while count(k, dim) <= n:
        k += 1
    return _degree_block(k, dim)[n - count(k - 1, dim)]


def unit(d: int, dim: int, times: int = 1) -> tuple[int, ...]:
    """The multi-index ``times * e_d``."""
    e = [0] * dim
    e[d] = times
    return tuple(e)


def factorial(alpha: Sequence[int]) -> int:
    return math.prod(math.factorial(a) for a in alpha)


@lru_cache(maxsize=None)
def _shift_tables(cap: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """``up[d, n]`` / ``down[d, n]``: ordinal of ``alpha +- e_d`` or -1."""
    idx = multi_indices(cap, dim)
    up = np.full((dim, len(idx)), -1, dtype=np.intp)
    down = np.full((dim, len(idx)), -1, dtype=np.intp)
    for n, a in enumerate(idx):
        for d in range(dim):
            b = list(a)
            b[d] += 1
            if sum(b) <= cap:
                up[d, n] = index_of(b, dim)
            if a[d] > 0:
                b[d] -= 2
                down[d, n] = index_of(b, dim)
    return up, down


def raising_matrix(d: int, cap: int, dim: int) -> np.ndarray:
    """Coefficient map ``(R c)_beta = c_{beta - e_d}``; overflow dropped."""
    up, _ = _shift_tables(cap, dim)
    n = count(cap, dim)
    R = np.zeros((n, n))
    cols = np.nonzero(up[d] >= 0)[0]
    R[up[d, cols], cols] = 1.0
    return R


def lowering_matrix(d: int, cap: int, dim: int) -> np.ndarray:
    """Coefficient map ``(N c)_beta = (beta_d + 1) c_{beta + e_d}``."""
    idx = multi_indices(cap, dim)
    up, _ = _shift_tables(cap, dim)
    n = len(idx)
    N = np.zeros((n, n))
    rows = np.nonzero(up[d] >= 0)[0]
    N[rows, up[d, rows]] = [idx[r][d] + 1 for r in rows]
    return N


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class BasisFamily:
    """A weighted Hermite family and the macroscopic parameters of its weight.

    ``scaled`` ignores ``u`` and ``theta``: its weight is the standard normal
    density in the scaled velocity.
    """

    kind: str
    dim: int = 1
    u: tuple[float, ...] = ()
    theta: float = 1.0
    Theta: tuple[tuple[float, ...], ...] | None = None
    _cov: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown basis family {self.kind!r}")
        u = tuple(float(x) for x in np.atleast_1d(self.u)) or (0.0,) * self.dim
        if len(u) != self.dim:
            raise ValueError("velocity has wrong dimension")
        object.__setattr__(self, "u", u)
        if self.kind == "gaussian":
            cov = np.eye(self.dim) if self.Theta is None else np.array(self.Theta, dtype=float)
            if cov.shape != (self.dim, self.dim) or not np.allclose(cov, cov.T):
                raise ValueError("Theta must be a symmetric dim x dim matrix")
            if np.linalg.eigvalsh(cov).min() <= 0:
                raise ValueError("Theta must be positive definite")
            object.__setattr__(self, "Theta", tuple(map(tuple, cov)))
        else:
            if self.kind == "hermite" and not self.theta > 0:
                raise ValueError("theta must be positive")
            cov = float(self.theta) * np.eye(self.dim)
            if self.kind == "scaled":
                cov = np.eye(self.dim)
        object.__setattr__(self, "_cov", cov)

    @property
    def covariance(self) -> np.ndarray:
        return self._cov.copy()

    @property
    def mean(self) -> np.ndarray:
        return np.zeros(self.dim) if self.kind == "scaled" else np.array(self.u)


@dataclass(frozen=True)
class MatrixWindow:
    """Finite window onto an infinite basis matrix."""

    entries: np.ndarray
    row_cap: int
    col_cap: int
    dim: int

    def __post_init__(self):
        shape = (count(self.row_cap, self.dim), count(self.col_cap, self.dim))
        if self.entries.shape != shape:
            raise ValueError(f"window shape {self.entries.shape} != {shape}")

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @property
    def shape(self):
        return self.entries.shape


def _window(mat: np.ndarray, cap: int, dim: int) -> MatrixWindow:
    return MatrixWindow(mat, cap, cap, dim)


def _hermite_1d(k_max: int, x: np.ndarray, mean: float, var: float) -> list[np.ndarray]:
    w = np.exp(-((x - mean) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
    vals = [w]
    if k_max >= 1:
        vals.append((x - mean) * w / var)
    for k in range(1, k_max):
        vals.append(((x - mean) * vals[k] - k * vals[k - 1]) / var)
    return vals


def hermite_eval(alpha: Sequence[int], family: BasisFamily, xi) -> float:
    """Evaluate ``H_alpha(xi)`` by the three-term recurrence seeded with the weight.

    For ``scaled`` families ``xi`` is the scaled velocity ``v``.
    """
    if family.kind == "gaussian":
        raise ValueError("pointwise evaluation is not available for the gaussian family")
    alpha = tuple(alpha)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if len(alpha) != family.dim or xi.shape[0] != family.dim:
        raise ValueError("dimension mismatch")
    mean = family.mean
    var = 1.0 if family.kind == "scaled" else family.theta
    out = 1.0
    for d, a in enumerate(alpha):
        out *= _hermite_1d(a, xi[d], mean[d], var)[a]
    return float(out)


def recurrence_matrix(d: int, family: BasisFamily, cap: int) -> MatrixWindow:
    """Velocity multiplication ``M_d`` with ``xi_d Phi = M_d^T Phi`` on the window.

    hermite:  xi_d H_a = theta H_{a+e_d} + u_d H_a + a_d H_{a-e_d}
    gaussian: xi_d H_a = sum_j Theta_jd H_{a+e_j} + u_d H_a + a_d H_{a-e_d}
    scaled:   v_d h_a = h_{a+e_d} + a_d h_{a-e_d}
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    dim = family.dim
    n = count(cap, dim)
    lower = lowering_matrix(d, cap, dim)
    if family.kind == "scaled":
        return _window(raising_matrix(d, cap, dim) + lower, cap, dim)
    cov = family.covariance
    M = family.u[d] * np.eye(n) + lower
    for j in range(dim):
        if cov[j, d] != 0.0:
            M += cov[j, d] * raising_matrix(j, cap, dim)
    return _window(M, cap, dim)


class DerivativeWindows(NamedTuple):
    """Parameter-derivative windows of a family.

    ``velocity[d]`` multiplies ``d u_d / ds`` (``D_{v,d}`` for scaled families),
    ``temperature`` multiplies ``d theta / ds`` (``None`` for scaled families).
    """

    velocity: tuple[MatrixWindow, ...]
    temperature: MatrixWindow | None


def derivative_matrix(family: BasisFamily, cap: int) -> DerivativeWindows:
    """Derivative relations as windows ``C`` with ``dPhi = C^T Phi``.

    hermite:  dH_a/du_d = H_{a+e_d},  dH_a/dtheta = 1/2 sum_d H_{a+2e_d}
    scaled:   dh_a/dv_d = -h_{a+e_d}, i.e. ``dPhi/dv_d = -D_{v,d}^T Phi``
    gaussian: dH_a/du_d = H_{a+e_d}; the Theta derivatives are handled in assembly.
    """
    if cap < 2:
        raise ValueError("cap must be >= 2")
    dim = family.dim
    shifts = tuple(raising_matrix(d, cap, dim) for d in range(dim))
    vel = tuple(_window(S, cap, dim) for S in shifts)
    if family.kind != "hermite":
        return DerivativeWindows(vel, None)
    temp = 0.5 * sum(S @ S for S in shifts)
    return DerivativeWindows(vel, _window(temp, cap, dim))


def quadrature_nodes(degree_sum: int) -> int:
    """Gauss-Hermite nodes per axis for a product of polynomial degrees."""
    return math.ceil((degree_sum + 3) / 2) + 2


@lru_cache(maxsize=None)
def _gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.hermite_e.hermegauss(n)


def inner_product(i: int, j: int, family: BasisFamily) -> float:
    """``(phi_i, phi_j)_omega = int phi_i phi_j / omega`` by Gauss-Hermite quadrature."""
    if family.kind == "gaussian":
        raise ValueError("quadrature inner products need pointwise evaluation")
    dim = family.dim
    a, b = index_from_ordinal(i, dim), index_from_ordinal(j, dim)
    mean = family.mean
    var = 1.0 if family.kind == "scaled" else family.theta
    total = 1.0
    for d in range(dim):
        k = max(a[d], b[d])
        nodes, weights = _gauss_rule(quadrature_nodes(a[d] + b[d]))
        x = mean[d] + np.sqrt(var) * nodes
        vals = _hermite_1d(k, x, mean[d], var)
        w0 = vals[0]
        # phi_a phi_b / omega = p_a p_b omega with omega dx = weights / sqrt(2 pi)
        integrand = (vals[a[d]] / w0) * (vals[b[d]] / w0)
        total *= float(np.dot(weights, integrand)) / np.sqrt(2 * np.pi)
    return total


def _permanent(mat: np.ndarray) -> float:
    n = mat.shape[0]
    if n == 0:
        return 1.0
    return float(sum(np.prod(mat[np.arange(n), perm]) for perm in itertools.permutations(range(n))))


def gram_matrix(family: BasisFamily, cap: int) -> np.ndarray:
    """Exact Gram matrix ``((phi_a, phi_b)_omega)`` on the window.

    Blocks of different degree are orthogonal.  Within degree ``k`` the entry
    is ``d^a (Theta^{-1} xi)^b``, a permanent of a ``k x k`` matrix; for
    isotropic weights this collapses to ``a! / theta^k delta_ab``.
    """
    dim = family.dim
    idx = multi_indices(cap, dim)
    if family.kind != "gaussian":
        scale = 1.0 if family.kind == "scaled" else family.theta
        return np.diag([factorial(a) / scale ** sum(a) for a in idx])
    prec = np.linalg.inv(family.covariance)
    G = np.zeros((len(idx), len(idx)))
    for k in range(cap + 1):
        block = _degree_block(k, dim)
        off = count(k - 1, dim)
        for p, a in enumerate(block):
            cols = [d for d in range(dim) for _ in range(a[d])]
            for q, b in enumerate(block[p:], start=p):
                rows = [d for d in range(dim) for _ in range(b[d])]
                val = _permanent(prec[np.ix_(rows, cols)])
                G[off + p, off + q] = G[off + q, off + p] = val
    return G
