"""Macroscopic state plus non-equilibrium Hermite coefficients.

Coefficients are stored in the normalisation of the Maxwellian family
``H_alpha^{[u, theta]}`` (or the anisotropic Gaussian family when ``Theta``
is set), so ``f_0 = rho``.  Constrained slots do not exist in storage:

* isotropic states carry no ``f_{e_i}`` and no ``f_{2e_1}``; the latter is
  recovered from the trace condition ``sum_d f_{2e_d} = 0``;
* anisotropic states carry nothing of degree 1 or 2.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import jsonio
from .basis import count, factorial, index_from_ordinal, index_of, multi_indices, unit


class StateError(ValueError):
    pass


@dataclass(frozen=True)
class StateVector:
    rho: float
    u: tuple[float, ...]
    theta: float | None = None
    Theta: tuple[tuple[float, ...], ...] | None = None
    f: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        u = tuple(float(x) for x in np.atleast_1d(self.u))
        object.__setattr__(self, "u", u)
        dim = len(u)
        if not self.rho > 0:
            raise StateError(f"density must be positive, got {self.rho}")
        if (self.theta is None) == (self.Theta is None):
            raise StateError("exactly one of theta / Theta must be given")
        if self.Theta is not None:
            cov = np.array(self.Theta, dtype=float)
            if cov.shape != (dim, dim) or not np.allclose(cov, cov.T, atol=1e-14):
                raise StateError("Theta must be symmetric")
            if np.linalg.eigvalsh(cov).min() <= 0:
                raise StateError("Theta must be positive definite")
            object.__setattr__(self, "Theta", tuple(map(tuple, cov)))
        elif not self.theta > 0:
            raise StateError(f"temperature must be positive, got {self.theta}")
        coeffs = {}
        for alpha, val in self.f.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != dim:
                raise StateError(f"coefficient index {alpha} has wrong dimension")
            if self._constrained(alpha):
                raise StateError(f"coefficient slot {alpha} is fixed by a constraint")
            if val != 0.0:
                coeffs[alpha] = float(val)
        object.__setattr__(self, "f", MappingProxyType(dict(sorted(coeffs.items(), key=lambda kv: index_of(kv[0], dim)))))

    def _constrained(self, alpha: tuple[int, ...]) -> bool:
        k = sum(alpha)
        if self.Theta is not None:
            return k <= 2
        return k <= 1 or alpha == unit(0, len(alpha), 2)

    @property
    def dim(self) -> int:
        return len(self.u)

    @property
    def anisotropic(self) -> bool:
        return self.Theta is not None

    @property
    def temperature(self) -> float:
        """Scalar temperature (trace average of ``Theta`` when anisotropic)."""
        if self.Theta is None:
            return self.theta
        return float(np.trace(np.array(self.Theta))) / self.dim

    @property
    def order(self) -> int:
        return max([2] + [sum(a) for a in self.f])

    def coefficients(self, cap: int) -> np.ndarray:
        """Full coefficient vector on the degree-``cap`` window, constraints applied."""
        dim = self.dim
        out = np.zeros(count(cap, dim))
        out[0] = self.rho
        for alpha, val in self.f.items():
            if sum(alpha) <= cap:
                out[index_of(alpha, dim)] = val
        if not self.anisotropic and cap >= 2:
            out[index_of(unit(0, dim, 2), dim)] = -sum(
                self.f.get(unit(d, dim, 2), 0.0) for d in range(1, dim)
            )
        return out

    @classmethod
    def from_coefficients(cls, rho, u, coeffs: np.ndarray, *, theta=None, Theta=None) -> "StateVector":
        """Inverse of :meth:`coefficients`; constrained slots are dropped."""
        dim = len(np.atleast_1d(u))
        f = {}
        for n, val in enumerate(coeffs):
            alpha = index_from_ordinal(n, dim)
            k = sum(alpha)
            if k <= (2 if Theta is not None else 1) or (Theta is None and alpha == unit(0, dim, 2)):
                continue
            f[alpha] = float(val)
        return cls(rho, u, theta=theta, Theta=Theta, f=f)

    def packed(self, order: int | None = None) -> np.ndarray:
        """Flat physical vector ``(rho, u, theta, f_alpha...)`` in ordinal order.

        The temperature slot sits at ``N(2e_1)``; ``Theta`` slots (anisotropic)
        hold ``theta_ij`` at ``N(e_i + e_j)``.
        """
        M = self.order if order is None else order
        dim = self.dim
        out = self.coefficients(M)
        for d in range(dim):
            out[1 + d] = self.u[d]
        if self.anisotropic:
            for i in range(dim):
                for j in range(i, dim):
                    out[index_of(np.add(unit(i, dim), unit(j, dim)), dim)] = self.Theta[i][j]
        else:
            out[index_of(unit(0, dim, 2), dim)] = self.theta
        return out

    # -- serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        out: dict = {"rho": self.rho, "u": list(self.u)}
        if self.anisotropic:
            out["Theta"] = [list(r) for r in self.Theta]
        else:
            out["theta"] = self.theta
        out["f"] = {str(index_of(a, self.dim)): v for a, v in self.f.items()}
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "StateVector":
        try:
            u = np.atleast_1d(data["u"]).astype(float)
            f = {index_from_ordinal(int(k), len(u)): float(v) for k, v in data.get("f", {}).items()}
            return cls(float(data["rho"]), u, theta=data.get("theta"), Theta=data.get("Theta"), f=f)
        except (KeyError, TypeError) as exc:
            raise StateError(f"malformed state: {exc}") from exc

    def to_json(self) -> str:
        return jsonio.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "StateVector":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DerivedMoments:
    pressure: np.ndarray
    stress: np.ndarray
    heat_flux: np.ndarray
    delta: Mapping[tuple[int, ...], float]


def maxwellian_state(rho: float, u, theta: float, model_order: int | None = None) -> StateVector:
    """Local Maxwellian: ``f_0 = rho`` and nothing else.  ``model_order`` is accepted
    for symmetry with other constructors; a Maxwellian is the same at every order."""
    if not rho > 0 or not theta > 0:
        raise StateError("rho and theta must be positive")
    return StateVector(rho, u, theta=theta)


def derived_moments(w: StateVector) -> DerivedMoments:
    """Pressure tensor, stress deviator, heat flux and ordered-hierarchy contractions.

    ``int (xi-u)^beta f = beta! f_beta`` for ``|beta| = 2, 3`` gives
    ``sigma_ij = (1 + delta_ij) f_{e_i+e_j}`` and
    ``q_i = 1/2 sum_d (e_i + 2e_d)! f_{e_i+2e_d}``.
    """
    dim = w.dim
    M = w.order
    if M < 3:
        # q vanishes identically on degree-2 models
        M = 3
    c = w.coefficients(M)
    eye = np.eye(dim)
    if w.anisotropic:
        p = w.rho * np.array(w.Theta)
        sigma = p - np.trace(p) / dim * eye
    else:
        sigma = np.zeros((dim, dim))
        for i in range(dim):
            for j in range(dim):
                sigma[i, j] = (1 + (i == j)) * c[index_of(np.add(unit(i, dim), unit(j, dim)), dim)]
        p = w.rho * w.theta * eye + sigma
    q = np.zeros(dim)
    for i in range(dim):
        for d in range(dim):
            beta = np.add(unit(i, dim), unit(d, dim, 2))
            q[i] += 0.5 * factorial(beta) * c[index_of(beta, dim)]
    delta = {}
    scale = 1.0 if w.anisotropic else w.theta
    for a in multi_indices(M - 2, dim):
        if sum(a) != M - 2:
            continue
        tot = 0.0
        for d in range(dim):
            beta = tuple(np.add(a, unit(d, dim, 2)))
            tot += factorial(beta) / scale ** M * c[index_of(beta, dim)]
        delta[a] = 0.5 * tot
    return DerivedMoments(p, sigma, q, MappingProxyType(delta))


# ---------------------------------------------------------------------------
# symmetry transformations


def _poly_mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0.0) + ca * cb
    return out


def rotation_block(R: np.ndarray, degree: int) -> np.ndarray:
    """Degree-``k`` representation ``T`` with ``H_a(R^T xi) = sum_b T_ab H'_b(xi)``.

    ``T_ab`` is the coefficient of ``x^b`` in ``prod_j (sum_i R_ij x_i)^{a_j}``:
    an ``a``-derivative at the rotated point is that polynomial in the
    derivatives of the rotated weight.
    """
    dim = R.shape[0]
    block = [a for a in multi_indices(degree, dim) if sum(a) == degree]
    pos = {b: n for n, b in enumerate(block)}
    forms = [{unit(i, dim): R[i, j] for i in range(dim)} for j in range(dim)]
    T = np.zeros((len(block), len(block)))
    for r, a in enumerate(block):
        poly = {(0,) * dim: 1.0}
        for j in range(dim):
            for _ in range(a[j]):
                poly = _poly_mul(poly, forms[j])
        for e, c in poly.items():
            T[r, pos[e]] += c
    return T


def _check_rotation(R: np.ndarray, dim: int) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (dim, dim):
        raise StateError("rotation has wrong shape")
    if not np.allclose(R @ R.T, np.eye(dim), atol=1e-12) or np.linalg.det(R) < 0:
        raise StateError("R must be a proper rotation")
    return R


def rotate_state(w: StateVector, R) -> StateVector:
    """The state of the rotated distribution ``f'(xi) = f(R^T xi)``."""
    dim = w.dim
    R = _check_rotation(R, dim)
    M = w.order
    c = w.coefficients(M)
    out = np.zeros_like(c)
    for k in range(M + 1):
        lo, hi = count(k - 1, dim), count(k, dim)
        out[lo:hi] = c[lo:hi] @ rotation_block(R, k)
    u = R @ np.array(w.u)
    if w.anisotropic:
        Theta = R @ np.array(w.Theta) @ R.T
        return StateVector.from_coefficients(w.rho, u, out, Theta=0.5 * (Theta + Theta.T))
    return StateVector.from_coefficients(w.rho, u, out, theta=w.theta)


def galilean_shift(w: StateVector, du) -> StateVector:
    """Shift the bulk velocity; coefficients are relative to ``u`` and unchanged."""
    u = np.array(w.u) + np.atleast_1d(np.asarray(du, dtype=float))
    return StateVector(w.rho, u, theta=w.theta, Theta=w.Theta, f=dict(w.f))


def sample_state(rng_seed, model, amplitude: float) -> StateVector:
    """Random state for ``model`` (anything with ``dim``, ``order`` and ``family``).

    ``rho, theta`` in ``[0.5, 2]``, ``u`` in ``[-1, 1]^D``; free coefficients
    uniform in ``[-amplitude, amplitude]`` scaled by ``rho theta^{|a|/2}``.
    """
    if amplitude < 0:
        raise StateError("amplitude must be non-negative")
    rng = np.random.default_rng(rng_seed)
    dim, M = model.dim, model.order
    rho = rng.uniform(0.5, 2.0)
    theta = rng.uniform(0.5, 2.0)
    u = rng.uniform(-1.0, 1.0, dim)
    Theta = None
    if model.family == "gaussian":
        E = rng.uniform(-0.3, 0.3, (dim, dim))
        Theta = theta * (np.eye(dim) + 0.5 * (E + E.T) * (dim > 1))
        min_deg = 3
    else:
        min_deg = 2
    f = {}
    for a in multi_indices(M, dim):
        k = sum(a)
        if k < min_deg or (Theta is None and a == unit(0, dim, 2)):
            continue
        f[a] = amplitude * rng.uniform(-1.0, 1.0) * rho * theta ** (k / 2)
    if Theta is not None:
        return StateVector(rho, u, Theta=Theta, f=f)
    return StateVector(rho, u, theta=theta, f=f)
