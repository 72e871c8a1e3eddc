"""Assemble quasi-linear moment systems ``B dw/dt + sum_d A_d B dw/dx_d = Pp S``.

The unknown ``w`` lives in subspace coordinates: one slot per row of the
projection pair, labelled by ``ProjectionPair.row_labels``.  Slots fixed by a
constraint are reused for the weight parameters:

===========  ===================  =================  ======================
slot         hermite              scaled             gaussian
===========  ===================  =================  ======================
``0``        ``rho``              ``rho theta^-D/2`` ``rho``
``e_i``      ``u_i``              ``u_i``            ``u_i``
``2e_1``     ``theta / 2``        ``theta``          ``theta_11 / 2``
``e_i+e_j``  coefficient          coefficient        ``theta_ij/(1+d_ij)``
===========  ===================  =================  ======================

All remaining slots hold subspace coefficients of the distribution in the
family's own normalisation.  For Grad-type models the stored ``A[d]`` is the
combined flux block ``Pp M_d D`` and the system reads
``B dw/dt + sum_d A_d dw/dx_d = Pp S`` instead.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

from . import jsonio
from .basis import (
    BasisFamily,
    MatrixWindow,
    count,
    gram_matrix,
    lowering_matrix,
    multi_indices,
    raising_matrix,
    unit,
)
from .projection import (
    ProjectionPair,
    cutoff_projection,
    ordered_hierarchy_projection,
)
from .state import StateError, StateVector

EQUATION_FORMS = ("ConventionalBoltzmann", "ScaledBoltzmann")
PS1_STRATEGIES = ("WithInnerProjection", "WithoutInnerProjection")
B_CONDITION_LIMIT = 1e12


class AssemblyError(ValueError):
    pass


class SingularSystemError(ArithmeticError):
    """``B`` is numerically singular: the state is outside the model's validity."""


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Framework inputs for one moment model.

    ``family`` is the basis kind (``hermite``, ``gaussian`` or ``scaled``).
    ``shifted_time_projection`` swaps ``Pp`` for the shifted pair when
    forming ``B`` (alternative second projection in 1D).
    """

    name: str
    equation_form: str
    family: str
    projection: ProjectionPair
    ps1: str = "WithInnerProjection"
    ps2: str = "SingleFactor"
    regularized: bool = True
    shifted_time_projection: bool = False

    def __post_init__(self):
        if self.equation_form not in EQUATION_FORMS:
            raise AssemblyError(f"unknown equation form {self.equation_form!r}")
        if (self.equation_form == "ScaledBoltzmann") != (self.family == "scaled"):
            raise AssemblyError("the scaled equation form goes with the scaled family only")
        if self.family not in ("hermite", "gaussian", "scaled"):
            raise AssemblyError(f"unknown family {self.family!r}")
        if self.ps1 not in PS1_STRATEGIES:
            raise AssemblyError(f"unknown PS1 strategy {self.ps1!r}")
        if self.projection.window_cap < self.order + 2:
            raise AssemblyError("projection window must reach degree M+2")
        if self.shifted_time_projection and (self.dim != 1 or self.family != "hermite"):
            raise AssemblyError("shifted time projection is defined for 1D hermite models")
        missing = [lab for lab in self._param_labels if lab not in self.slot]
        if missing:
            raise AssemblyError(f"subspace lacks parameter slots {missing}")

    # -- shape -------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.projection.dim

    @property
    def order(self) -> int:
        return max(sum(lab) for lab in self.projection.row_labels)

    @property
    def size(self) -> int:
        return self.projection.subspace_dim

    @property
    def window(self) -> int:
        return self.projection.window_cap

    @cached_property
    def slot(self) -> dict[tuple[int, ...], int]:
        return {lab: r for r, lab in enumerate(self.projection.row_labels)}

    @property
    def _param_labels(self) -> list[tuple[int, ...]]:
        D = self.dim
        labels = [unit(i, D) for i in range(D)]
        if self.family == "gaussian":
            labels += [_pair(i, j, D) for i in range(D) for j in range(i, D)]
        else:
            labels.append(unit(0, D, 2))
        return labels

    @cached_property
    def velocity_slots(self) -> tuple[int, ...]:
        return tuple(self.slot[unit(i, self.dim)] for i in range(self.dim))

    @cached_property
    def temperature_slot(self) -> int:
        return self.slot[unit(0, self.dim, 2)]

    @cached_property
    def tensor_slots(self) -> dict[tuple[int, int], int]:
        D = self.dim
        return {(i, j): self.slot[_pair(i, j, D)] for i in range(D) for j in range(i, D)}

    @cached_property
    def conserved_slots(self) -> tuple[int, ...]:
        """Slots whose evolution is a conservation law (mass, momentum, energy)."""
        if self.family == "gaussian":
            return (0,) + self.velocity_slots
        return (0,) + self.velocity_slots + (self.temperature_slot,)

    # -- constant matrices ---------------------------------------------------

    @cached_property
    def constraint(self) -> np.ndarray:
        """``K``: subspace coefficients ``g = K w`` (zero on parameter slots)."""
        n, D = self.size, self.dim
        K = np.eye(n)
        for lab in self._param_labels:
            K[self.slot[lab], self.slot[lab]] = 0.0
        if self.family != "gaussian":
            # trace condition: f_{2e_1} = -sum_{d>1} f_{2e_d}
            t = self.temperature_slot
            for d in range(1, D):
                s = self.slot.get(unit(d, D, 2))
                if s is not None:
                    K[t, s] = -1.0
        return K

    @cached_property
    def _mats(self) -> dict:
        D, W = self.dim, self.window
        pb, pp = self.projection.pb, self.projection.pp
        R = [raising_matrix(d, W, D) for d in range(D)]
        N = [lowering_matrix(d, W, D) for d in range(D)]
        return {
            "R": R,
            "N": N,
            "RR": {(i, j): R[i] @ R[j] for i in range(D) for j in range(i, D)},
            "lift": pb.T @ self.constraint,
            "PpR": [pp @ r for r in R],
            "PpN": [pp @ m for m in N],
            "PpRPb": [pp @ r @ pb.T for r in R],
            "PpNPb": [pp @ m @ pb.T for m in N],
            "Pi": pb.T @ pp,
        }


def _pair(i: int, j: int, dim: int) -> tuple[int, ...]:
    return tuple(a + b for a, b in zip(unit(i, dim), unit(j, dim)))


# ---------------------------------------------------------------------------
# presets

PRESETS = (
    "Grad1D",
    "GradND",
    "HME1D",
    "HMEND",
    "AHME",
    "G13",
    "HR13",
    "OrderedGrad",
    "OrderedRegularized",
    "QBME1D",
    "QBMEND",
    "QBMEAltProjection",
)


def preset(name: str, M: int, D: int = 1) -> ModelSpec:
    """Build a named model of order ``M`` in ``D`` velocity dimensions."""
    if name not in PRESETS:
        raise AssemblyError(f"unknown model {name!r}; available: {', '.join(PRESETS)}")
    if not 1 <= D <= 3:
        raise AssemblyError("dimension must be 1, 2 or 3")
    if name.endswith("1D") or name == "QBMEAltProjection":
        if D != 1:
            raise AssemblyError(f"{name} is one-dimensional")
    if name in ("G13", "HR13") and (M, D) != (3, 3):
        raise AssemblyError(f"{name} requires M=3, D=3")
    if M < (3 if name in ("QBMEAltProjection", "G13", "HR13") else 2):
        raise AssemblyError(f"order {M} too small for {name}")
    conv = "ConventionalBoltzmann"
    if name in ("Grad1D", "GradND", "HME1D", "HMEND"):
        return ModelSpec(name, conv, "hermite", cutoff_projection(M, D), regularized=name.startswith("HME"))
    if name == "AHME":
        return ModelSpec(name, conv, "gaussian", cutoff_projection(M, D))
    if name in ("G13", "HR13", "OrderedGrad", "OrderedRegularized"):
        reg = name in ("HR13", "OrderedRegularized")
        return ModelSpec(name, conv, "hermite", ordered_hierarchy_projection(M, D), regularized=reg)
    if name in ("QBME1D", "QBMEND"):
        return ModelSpec(name, "ScaledBoltzmann", "scaled", cutoff_projection(M, D))
    return ModelSpec(name, conv, "hermite", cutoff_projection(M, 1), shifted_time_projection=True)


def without_inner_projection(spec: ModelSpec) -> ModelSpec:
    return replace(spec, name=spec.name + "[no-inner]", ps1="WithoutInnerProjection")


# ---------------------------------------------------------------------------
# state <-> subspace coordinates


def _family_at(spec: ModelSpec, u, theta=None, Theta=None) -> BasisFamily:
    if spec.family == "gaussian":
        return BasisFamily("gaussian", spec.dim, tuple(u), Theta=Theta)
    if spec.family == "scaled":
        return BasisFamily("scaled", spec.dim)
    return BasisFamily("hermite", spec.dim, tuple(u), theta=theta)


def _degrees(spec: ModelSpec) -> np.ndarray:
    return np.array([sum(lab) for lab in spec.projection.row_labels], dtype=float)


def pack_state(spec: ModelSpec, state: StateVector) -> np.ndarray:
    """Subspace coordinates ``w`` of a state (coefficients projected by ``Pp``)."""
    D = spec.dim
    if state.dim != D:
        raise StateError(f"state dimension {state.dim} does not match model dimension {D}")
    if spec.family == "gaussian" and not state.anisotropic:
        if any(sum(a) == 2 for a in state.f):
            raise StateError("isotropic state with stress cannot seed a gaussian model")
        state = StateVector(state.rho, state.u, Theta=state.theta * np.eye(D), f=dict(state.f))
    if spec.family != "gaussian" and state.anisotropic:
        raise StateError(f"{spec.name} needs an isotropic state")
    c = state.coefficients(spec.window)
    if spec.family == "scaled":
        deg = np.array([sum(a) for a in _full_labels(spec)], dtype=float)
        c = c * state.theta ** (-(D + deg) / 2)
    w = spec.projection.pp @ c
    for i, s in enumerate(spec.velocity_slots):
        w[s] = state.u[i]
    if spec.family == "gaussian":
        for (i, j), s in spec.tensor_slots.items():
            w[s] = state.Theta[i][j] / (1 + (i == j))
    else:
        w[spec.temperature_slot] = state.theta / 2 if spec.family == "hermite" else state.theta
    return w


def _full_labels(spec: ModelSpec):
    return multi_indices(spec.window, spec.dim)


def _params(spec: ModelSpec, w: np.ndarray):
    """``(u, theta, Theta)`` from coordinates; leading axes are batch axes."""
    u = w[..., list(spec.velocity_slots)]
    if spec.family == "gaussian":
        Theta = np.zeros(w.shape[:-1] + (spec.dim, spec.dim))
        for (i, j), s in spec.tensor_slots.items():
            Theta[..., i, j] = Theta[..., j, i] = w[..., s] * (1 + (i == j))
        return u, None, Theta
    t = w[..., spec.temperature_slot]
    return u, (2 * t if spec.family == "hermite" else t), None


def full_coefficients(spec: ModelSpec, w: np.ndarray) -> np.ndarray:
    """``Pb^T K w``: the represented distribution on the whole window."""
    return spec._mats["lift"] @ w


def unpack_state(spec: ModelSpec, w) -> StateVector:
    w = np.asarray(w, dtype=float)
    u, theta, Theta = _params(spec, w)
    c = full_coefficients(spec, w)
    if spec.family == "scaled":
        deg = np.array([sum(a) for a in _full_labels(spec)], dtype=float)
        c = c * theta ** ((spec.dim + deg) / 2)
    c = c[: count(spec.order, spec.dim)]
    if not c[0] > 0:
        raise StateError(f"density must be positive, got {c[0]}")
    return StateVector.from_coefficients(c[0], u, c, theta=theta, Theta=Theta)


def _scaled_exponents(spec: ModelSpec) -> np.ndarray:
    """``k`` with ``w_s = p_s theta^-k`` on coefficient slots (0 on parameter slots)."""
    expo = (spec.dim + _degrees(spec)) / 2
    expo[list(spec.velocity_slots) + [spec.temperature_slot]] = 0.0
    return expo


def physical_vector(spec: ModelSpec, w) -> np.ndarray:
    """Physical layout ``p``: ``rho`` at slot 0, ``theta`` (or ``theta_ij``) in its
    slots and coefficients in the Maxwellian normalisation ``f_0 = rho``.

    Accepts a batch of coordinates along leading axes.
    """
    w = np.asarray(w, dtype=float)
    p = w.copy()
    if spec.family == "gaussian":
        for (i, j), s in spec.tensor_slots.items():
            p[..., s] = w[..., s] * (1 + (i == j))
        return p
    t = spec.temperature_slot
    if spec.family == "hermite":
        p[..., t] = 2 * w[..., t]
        return p
    return w * w[..., t, None] ** _scaled_exponents(spec)


def from_physical(spec: ModelSpec, p) -> np.ndarray:
    """Inverse of :func:`physical_vector`."""
    p = np.asarray(p, dtype=float)
    w = p.copy()
    if spec.family == "gaussian":
        for (i, j), s in spec.tensor_slots.items():
            w[..., s] = p[..., s] / (1 + (i == j))
        return w
    t = spec.temperature_slot
    if spec.family == "hermite":
        w[..., t] = 0.5 * p[..., t]
        return w
    return p * p[..., t, None] ** -_scaled_exponents(spec)


def physical_jacobian(spec: ModelSpec, w) -> np.ndarray:
    """``dw/dp`` at ``w`` for the layout of :func:`physical_vector` (batched)."""
    w = np.asarray(w, dtype=float)
    J = np.broadcast_to(np.eye(spec.size), w.shape + (spec.size,)).copy()
    if spec.family == "gaussian":
        for (i, j), s in spec.tensor_slots.items():
            J[..., s, s] = 1.0 / (1 + (i == j))
        return J
    t = spec.temperature_slot
    if spec.family == "hermite":
        J[..., t, t] = 0.5
        return J
    theta = w[..., t, None]
    expo = _scaled_exponents(spec)
    diag = theta ** -expo
    for s in np.flatnonzero(expo):
        J[..., s, s] = diag[..., s]
        J[..., s, t] = -expo[s] * w[..., s] / theta[..., 0]
    return J


def _as_w(spec: ModelSpec, w) -> np.ndarray:
    if isinstance(w, StateVector):
        return pack_state(spec, w)
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.size,):
        raise StateError(f"expected {spec.size} subspace coordinates, got shape {w.shape}")
    return w


def _check_params(spec: ModelSpec, w: np.ndarray):
    u, theta, Theta = _params(spec, w)
    if not np.all(w[..., 0] > 0):
        raise StateError("density must be positive")
    if Theta is not None:
        if np.linalg.eigvalsh(Theta).min() <= 0:
            raise StateError("Theta must be positive definite")
    elif not np.all(theta > 0):
        raise StateError("temperature must be positive")
    return u, theta, Theta


# ---------------------------------------------------------------------------
# windows


def build_time_derivative_matrix(spec: ModelSpec, w) -> np.ndarray:
    """``D = df/dw``; rows cover all basis functions up to degree M+2, columns the slots of ``w``."""
    return _dfull(spec, _as_w(spec, w))


def _dfull(spec: ModelSpec, w: np.ndarray) -> np.ndarray:
    """``df/dw`` for coordinates ``w`` of shape ``(..., n)``."""
    u, theta, Theta = _check_params(spec, w)
    m = spec._mats
    R, N = m["R"], m["N"]
    f = w @ m["lift"].T
    Dm = np.broadcast_to(m["lift"], w.shape[:-1] + m["lift"].shape).copy()
    Rf = [f @ r.T for r in R]
    if spec.family == "hermite":
        for i, s in enumerate(spec.velocity_slots):
            Dm[..., s] = Rf[i]
        Dm[..., spec.temperature_slot] = sum(Rf[d] @ R[d].T for d in range(spec.dim))
    elif spec.family == "gaussian":
        for i, s in enumerate(spec.velocity_slots):
            Dm[..., s] = Rf[i]
        for (i, j), s in spec.tensor_slots.items():
            Dm[..., s] = f @ m["RR"][i, j].T
    else:
        sq = np.sqrt(theta)[..., None]
        for i, s in enumerate(spec.velocity_slots):
            Dm[..., s] = Rf[i] / sq
        inner = spec.ps1 == "WithInnerProjection"
        col = np.zeros_like(f)
        for k in range(spec.dim):
            g = Rf[k] @ m["Pi"].T if inner else Rf[k]
            col += g @ (R[k] + N[k]).T
        Dm[..., spec.temperature_slot] = col / (2 * theta[..., None])
    return Dm


def _system_arrays(spec: ModelSpec, w: np.ndarray):
    """``(D, B, [A_d])`` for coordinates of shape ``(..., n)``."""
    u, theta, Theta = _check_params(spec, w)
    m = spec._mats
    Dm = _dfull(spec, w)
    B = spec.projection.pp @ Dm
    if spec.shifted_time_projection:
        M = spec.order
        B[..., M, :] -= (M + 1) / theta[..., None] * Dm[..., M + 2, :]
    eye = np.eye(spec.size)
    A = []
    for d in range(spec.dim):
        ud = u[..., d, None, None]
        if spec.family == "gaussian":
            pieces = [Theta[..., j, d, None, None] for j in range(spec.dim)]
        else:
            scale = np.sqrt(theta) if spec.family == "scaled" else theta
            pieces = [scale[..., None, None] if j == d else 0.0 for j in range(spec.dim)]
        if spec.regularized:
            Ad = ud * eye + m["PpNPb"][d] * (np.sqrt(theta)[..., None, None] if spec.family == "scaled" else 1.0)
            Ad = Ad + sum(c * m["PpRPb"][j] for j, c in enumerate(pieces))
        else:
            lower = m["PpN"][d] * (np.sqrt(theta)[..., None, None] if spec.family == "scaled" else 1.0)
            Ad = ud * B + (lower + sum(c * m["PpR"][j] for j, c in enumerate(pieces))) @ Dm
        A.append(Ad)
    return Dm, B, A


def batched_jacobians(spec: ModelSpec, w, n=None) -> np.ndarray:
    """Quasi-linear ``J(n)`` for every row of ``w`` (shape ``(..., n)``).

    Raises :class:`SingularSystemError` if any ``B`` is singular.
    """
    w = np.asarray(w, dtype=float)
    n = np.ones(1) if n is None else np.atleast_1d(np.asarray(n, dtype=float))
    _, B, A = _system_arrays(spec, w)
    C = sum(nd * Ad for nd, Ad in zip(n, A))
    cond = np.linalg.cond(B)
    if not np.all(cond < B_CONDITION_LIMIT):
        raise SingularSystemError(f"B is singular (condition {np.max(cond):.3e})")
    return np.linalg.solve(B, C @ B if spec.regularized else C)


def build_velocity_matrices(spec: ModelSpec, w) -> list[MatrixWindow]:
    """``M_d`` on the window: ``xi_d = u_d + sqrt(theta) v_d`` for the scaled form."""
    w = _as_w(spec, w)
    u, theta, Theta = _check_params(spec, w)
    m = spec._mats
    n = count(spec.window, spec.dim)
    out = []
    for d in range(spec.dim):
        M = u[d] * np.eye(n)
        if spec.family == "scaled":
            M += np.sqrt(theta) * (m["R"][d] + m["N"][d])
        elif spec.family == "gaussian":
            M += m["N"][d] + sum(Theta[j, d] * m["R"][j] for j in range(spec.dim))
        else:
            M += theta * m["R"][d] + m["N"][d]
        out.append(MatrixWindow(M, spec.window, spec.window, spec.dim))
    return out


# ---------------------------------------------------------------------------
# systems


@dataclass(frozen=True, eq=False)
class MomentSystem:
    spec: ModelSpec
    w: np.ndarray
    B: np.ndarray
    A: tuple[np.ndarray, ...]
    source: np.ndarray
    b_condition: float

    @property
    def regularized(self) -> bool:
        return self.spec.regularized

    @property
    def singular(self) -> bool:
        return not self.b_condition < B_CONDITION_LIMIT

    @cached_property
    def _lu(self):
        if self.singular:
            raise SingularSystemError(f"B is singular (condition {self.b_condition:.3e})")
        return scipy.linalg.lu_factor(self.B)

    def solve_b(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve(self._lu, rhs)

    def coefficient_matrix(self, n: Sequence[float]) -> np.ndarray:
        """``sum_d n_d A_d`` for regularized models, ``sum_d n_d B^-1 A_d`` otherwise."""
        n = np.atleast_1d(np.asarray(n, dtype=float))
        if n.shape != (self.spec.dim,):
            raise ValueError("direction has wrong dimension")
        comb = sum(nd * Ad for nd, Ad in zip(n, self.A))
        return comb if self.regularized else self.solve_b(comb)

    def jacobian(self, n: Sequence[float]) -> np.ndarray:
        """Quasi-linear ``J(n)`` with ``dw/dt + J(n) dw/ds = B^-1 Pp S`` along ``n``."""
        C = self.coefficient_matrix(n)
        return self.solve_b(C @ self.B) if self.regularized else C

    def relaxation_rate(self) -> np.ndarray:
        return self.solve_b(self.source)

    def to_dict(self) -> dict:
        return {
            "model": self.spec.name,
            "order": self.spec.order,
            "dim": self.spec.dim,
            "regularized": self.regularized,
            "w": self.w.tolist(),
            "B": self.B.tolist(),
            "A": [a.tolist() for a in self.A],
            "source": self.source.tolist(),
            "ordering": {str(i): list(lab) for i, lab in enumerate(self.spec.projection.row_labels)},
        }


def _source_vector(spec: ModelSpec, w: np.ndarray, tau: float | None) -> np.ndarray:
    if tau is None:
        return np.zeros(spec.size)
    if not tau > 0:
        raise AssemblyError("relaxation time must be positive")
    f = full_coefficients(spec, w)
    deg = np.array([sum(a) for a in _full_labels(spec)])
    S = np.where(deg >= (3 if spec.family == "gaussian" else 2), -f / tau, 0.0)
    return spec.projection.pp @ S


def assemble_system(spec: ModelSpec, w, tau: float | None = None) -> MomentSystem:
    """Evaluate ``B``, ``A_d`` and ``Pp S`` at ``w`` (a ``StateVector`` or coordinates)."""
    w = _as_w(spec, w).copy()
    w.setflags(write=False)
    _, B, A = _system_arrays(spec, w)
    cond = float(np.linalg.cond(B)) if np.all(np.isfinite(B)) else np.inf
    return MomentSystem(spec, w, B, tuple(A), _source_vector(spec, w, tau), cond)


def bgk_source(spec: ModelSpec, w, tau: float) -> np.ndarray:
    """BGK relaxation rate ``dw/dt`` in subspace coordinates.

    Every non-equilibrium coefficient decays as ``-f_a / tau``; mass, momentum
    and energy slots are exactly zero.
    """
    if not tau > 0:
        raise AssemblyError("relaxation time must be positive")
    rate = assemble_system(spec, w, tau).relaxation_rate()
    rate[list(spec.conserved_slots)] = 0.0
    return rate


def grad_vs_regularized_delta(spec: ModelSpec, w, d: int = 0) -> np.ndarray:
    """``Pp M_d (I - Pb^T Pp) D``: the flux part the regularization drops."""
    w = _as_w(spec, w)
    Md = build_velocity_matrices(spec, w)[d].entries
    Pi = spec._mats["Pi"]
    return spec.projection.pp @ Md @ (np.eye(Pi.shape[0]) - Pi) @ _dfull(spec, w)


def subspace_gram(spec: ModelSpec, w) -> np.ndarray:
    """``Pb G Pb^T`` with the family Gram matrix at the state's parameters."""
    w = _as_w(spec, w)
    u, theta, Theta = _params(spec, w)
    cap = spec.order
    G = gram_matrix(_family_at(spec, u, theta, Theta), cap)
    pb = spec.projection.pb[:, : G.shape[0]]
    return pb @ G @ pb.T


# ---------------------------------------------------------------------------
# export


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def matrix_to_csv(mat: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.atleast_2d(mat):
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def system_to_json(system: MomentSystem) -> str:
    return jsonio.dumps(system.to_dict())
