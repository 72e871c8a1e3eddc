"""First-order finite-volume solver for 1D moment systems with BGK relaxation.

Cells hold the physical layout ``(rho, u, theta, f_3, ..., f_M)`` with
coefficients normalised so that ``f_0 = rho``.  The update works on
``U = (rho, rho u, E, f_3, ...)`` with ``E = rho u^2 / 2 + rho theta / 2``:
mass, momentum and energy use exact flux differences, so their totals are
conserved to roundoff with periodic boundaries; the remaining rows use the
quasi-linear Jacobian frozen at the interface average.  A local
Lax-Friedrichs term adds the dissipation, and relaxation is integrated
exactly after each transport step.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import jsonio
from .analysis import TOL_COND, TOL_IMAG, batched_spectra
from .assembly import ModelSpec, SingularSystemError, batched_jacobians, from_physical, physical_jacobian, preset
from .state import StateVector

BOUNDARIES = ("copy", "periodic")
SOLVER_MODELS = ("HME1D", "QBME1D", "Grad1D")


class SolverError(RuntimeError):
    """A run cannot continue; ``cell`` and ``step`` locate the failure."""

    def __init__(self, message: str, cell: int | None = None, step: int | None = None):
        super().__init__(message)
        self.cell = cell
        self.step = step


class NonHyperbolicError(SolverError):
    pass


class InvalidStateError(SolverError):
    pass


@dataclass
class Grid1D:
    cells: np.ndarray
    dx: float
    x0: float = 0.0

    def __post_init__(self):
        self.cells = np.array(self.cells, dtype=float)
        if self.cells.ndim != 2 or self.cells.shape[1] < 3:
            raise ValueError("cells must be an (ncells, M+1) array")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        bad = np.flatnonzero((self.cells[:, 0] <= 0) | (self.cells[:, 2] <= 0))
        if bad.size:
            raise InvalidStateError(f"non-positive density or temperature in cell {bad[0]}", cell=int(bad[0]))

    @property
    def ncells(self) -> int:
        return self.cells.shape[0]

    @property
    def order(self) -> int:
        return self.cells.shape[1] - 1

    @property
    def centers(self) -> np.ndarray:
        return self.x0 + self.dx * (np.arange(self.ncells) + 0.5)

    def states(self) -> list[StateVector]:
        out = []
        for row in self.cells:
            f = {(k,): float(v) for k, v in enumerate(row[3:], start=3)}
            out.append(StateVector(row[0], [row[1]], theta=row[2], f=f))
        return out

    @classmethod
    def from_states(cls, states, dx: float, x0: float = 0.0, order: int | None = None) -> "Grid1D":
        M = order if order is not None else max(s.order for s in states)
        return cls(np.array([s.packed(M) for s in states]), dx, x0)

    def copy(self) -> "Grid1D":
        return Grid1D(self.cells.copy(), self.dx, self.x0)


# ---------------------------------------------------------------------------
# variables


def to_conserved(P: np.ndarray) -> np.ndarray:
    U = P.copy()
    rho, u, theta = P[..., 0], P[..., 1], P[..., 2]
    U[..., 1] = rho * u
    U[..., 2] = 0.5 * rho * u * u + 0.5 * rho * theta
    return U


def from_conserved(U: np.ndarray) -> np.ndarray:
    P = U.copy()
    rho = U[..., 0]
    u = U[..., 1] / rho
    P[..., 1] = u
    P[..., 2] = 2.0 * (U[..., 2] - 0.5 * rho * u * u) / rho
    return P


def _conserved_jacobian(P: np.ndarray) -> np.ndarray:
    """``dU/dP`` for a stack of cells."""
    n = P.shape[-1]
    J = np.broadcast_to(np.eye(n), P.shape + (n,)).copy()
    rho, u, theta = P[..., 0], P[..., 1], P[..., 2]
    J[..., 1, 0] = u
    J[..., 1, 1] = rho
    J[..., 2, 0] = 0.5 * (u * u + theta)
    J[..., 2, 1] = rho * u
    J[..., 2, 2] = 0.5 * rho
    return J


def conservative_flux(P: np.ndarray) -> np.ndarray:
    """Fluxes of mass, momentum and energy (``int xi^3 f = 6 f_3`` about ``u``)."""
    rho, u, theta = P[..., 0], P[..., 1], P[..., 2]
    f3 = P[..., 3] if P.shape[-1] > 3 else 0.0
    return np.stack(
        [rho * u, rho * u * u + rho * theta, 0.5 * rho * u**3 + 1.5 * rho * theta * u + 3.0 * f3], axis=-1
    )


def physical_jacobians(model: ModelSpec, P: np.ndarray) -> np.ndarray:
    """``J`` in the physical layout: ``dP/dt + J dP/dx = ...`` per cell."""
    w = from_physical(model, P)
    T = physical_jacobian(model, w)
    return np.linalg.solve(T, batched_jacobians(model, w) @ T)


def _check_model(model: ModelSpec, grid: Grid1D):
    if model.dim != 1:
        raise ValueError("the solver handles one-dimensional models only")
    if model.size != grid.cells.shape[1]:
        raise ValueError(f"grid has {grid.cells.shape[1]} fields, model {model.name} needs {model.size}")


def cell_spectra(grid: Grid1D, model: ModelSpec):
    _check_model(model, grid)
    try:
        return batched_spectra(physical_jacobians(model, grid.cells))
    except SingularSystemError as exc:
        raise NonHyperbolicError(str(exc)) from exc


def cfl_dt(grid: Grid1D, model: ModelSpec, cfl: float) -> float:
    """``cfl dx / max spectral radius``; non-hyperbolic cells raise with their index."""
    if not 0 < cfl < 1:
        raise ValueError("cfl must lie in (0, 1)")
    spec = cell_spectra(grid, model)
    bad = np.flatnonzero(~spec.hyperbolic())
    if bad.size:
        raise NonHyperbolicError(f"cell {bad[0]} is not hyperbolic", cell=int(bad[0]))
    return cfl * grid.dx / float(spec.radius.max())


def _extend(a: np.ndarray, boundary: str) -> np.ndarray:
    if boundary == "periodic":
        return np.concatenate([a[-1:], a, a[:1]])
    if boundary == "copy":
        return np.concatenate([a[:1], a, a[-1:]])
    raise ValueError(f"unknown boundary {boundary!r}; choose from {BOUNDARIES}")


def relax(cells: np.ndarray, dt: float, tau: float | None) -> np.ndarray:
    """Exact BGK decay of the non-equilibrium coefficients over ``dt``."""
    if tau is None or math.isinf(tau):
        return cells
    if not tau > 0:
        raise ValueError("relaxation time must be positive")
    out = cells.copy()
    out[:, 3:] *= math.exp(-dt / tau)
    return out


def step(grid: Grid1D, model: ModelSpec, dt: float, tau: float | None, boundary: str = "copy", radii=None) -> Grid1D:
    """One transport step followed by exact relaxation."""
    _check_model(model, grid)
    if radii is None:
        radii = cell_spectra(grid, model).radius
    P = _extend(grid.cells, boundary)
    lam = _extend(np.asarray(radii, dtype=float), boundary)
    U = to_conserved(P)
    dU = U[1:] - U[:-1]
    mid = 0.5 * (P[1:] + P[:-1])
    try:
        J = physical_jacobians(model, mid)
    except SingularSystemError as exc:
        raise InvalidStateError(str(exc)) from exc
    C = _conserved_jacobian(mid)
    JU = C @ J @ np.linalg.inv(C)
    fluct = np.einsum("ijk,ik->ij", JU, dU)
    F = conservative_flux(P)
    fluct[:, :3] = F[1:] - F[:-1]
    lam_face = np.maximum(lam[1:], lam[:-1])[:, None]
    diss = 0.5 * lam_face * dU
    update = 0.5 * (fluct[:-1] + fluct[1:]) - diss[1:] + diss[:-1]
    Unew = U[1:-1] - dt / grid.dx * update
    Pnew = from_conserved(Unew)
    bad = np.flatnonzero(~((Pnew[:, 0] > 0) & (Pnew[:, 2] > 0)))
    if bad.size:
        raise InvalidStateError(f"non-positive density or temperature in cell {bad[0]}", cell=int(bad[0]))
    return Grid1D(relax(Pnew, dt, tau), grid.dx, grid.x0)


def conserved_totals(grid: Grid1D) -> np.ndarray:
    """``(mass, momentum, energy)`` summed over cells times ``dx``."""
    U = to_conserved(grid.cells)
    return U[:, :3].sum(axis=0) * grid.dx


# ---------------------------------------------------------------------------
# initial data


def initial_grid(name: str, order: int, ncells: int, length: float = 1.0, amplitude: float = 0.0) -> Grid1D:
    """Named initial data on ``[0, length]``.

    ``maxwellian``: uniform ``(1, 0, 1)``.
    ``sod``: ``(1, 0, 1)`` left of the midpoint, ``(0.125, 0, 0.8)`` right.
    ``smooth``: periodic density and temperature waves with drift ``u = 0.3``.
    ``perturbed``: uniform ``(1, 0, 1)`` with a Gaussian ``f_3`` bump of height ``amplitude``.
    """
    if ncells < 2:
        raise ValueError("need at least two cells")
    dx = length / ncells
    x = (np.arange(ncells) + 0.5) * dx / length
    P = np.zeros((ncells, order + 1))
    P[:, 0] = 1.0
    P[:, 2] = 1.0
    if name == "maxwellian":
        pass
    elif name == "sod":
        right = x > 0.5
        P[right, 0] = 0.125
        P[right, 2] = 0.8
    elif name == "smooth":
        P[:, 0] = 1.0 + 0.2 * np.sin(2 * np.pi * x)
        P[:, 1] = 0.3
        P[:, 2] = 1.0 + 0.1 * np.cos(2 * np.pi * x)
        if order >= 3:
            P[:, 3] = amplitude * np.sin(2 * np.pi * x)
    elif name == "perturbed":
        if order < 3:
            raise ValueError("perturbed data needs order >= 3")
        P[:, 3] = amplitude * np.exp(-(((x - 0.5) / 0.1) ** 2))
    else:
        raise ValueError(f"unknown initial condition {name!r}")
    return Grid1D(P, dx)


INITIAL_CONDITIONS = ("maxwellian", "sod", "smooth", "perturbed")


# ---------------------------------------------------------------------------
# time loop


@dataclass
class SolverConfig:
    model: ModelSpec
    cfl: float = 0.5
    tau: float | None = None
    t_end: float = 0.1
    boundary: str = "copy"
    initial_condition: str | Grid1D = "sod"
    ncells: int = 200
    amplitude: float = 0.0
    max_steps: int | None = None
    snapshot_every: int = 0
    on_nonhyperbolic: str = "abort"

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("relaxation time must be positive")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.on_nonhyperbolic not in ("abort", "flag"):
            raise ValueError("on_nonhyperbolic must be 'abort' or 'flag'")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")

    def initial(self) -> Grid1D:
        if isinstance(self.initial_condition, Grid1D):
            return self.initial_condition.copy()
        return initial_grid(self.initial_condition, self.model.order, self.ncells, amplitude=self.amplitude)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final: Grid1D | None = None
    steps: int = 0
    t: float = 0.0
    aborted: bool = False
    reason: str = ""
    failed_cell: int | None = None
    flags: list = field(default_factory=list)
    max_speed: float = 0.0
    max_imag: float = 0.0
    max_condition: float = 0.0
    initial_totals: list = field(default_factory=list)
    final_totals: list = field(default_factory=list)

    @property
    def all_hyperbolic(self) -> bool:
        return not self.flags

    @property
    def conservation_drift(self) -> list:
        """Per-quantity relative change of the totals, scaled by ``max(|total|, 1)``."""
        a, b = np.array(self.initial_totals), np.array(self.final_totals)
        if a.size == 0 or b.size == 0:
            return []
        return (np.abs(b - a) / np.maximum(np.abs(a), 1.0)).tolist()

    def diagnostics(self) -> dict:
        return {
            "steps": self.steps,
            "t": self.t,
            "aborted": self.aborted,
            "reason": self.reason,
            "failed_cell": self.failed_cell,
            "all_hyperbolic": self.all_hyperbolic,
            "flags": self.flags,
            "max_speed": self.max_speed,
            "max_imag": self.max_imag,
            "max_condition": self.max_condition,
            "initial_totals": self.initial_totals,
            "final_totals": self.final_totals,
            "conservation_drift": self.conservation_drift,
        }


def run(config: SolverConfig) -> Trajectory:
    """Time loop; failures end the run and are recorded, not raised."""
    model = config.model
    grid = config.initial()
    _check_model(model, grid)
    traj = Trajectory()
    traj.initial_totals = conserved_totals(grid).tolist()

    def snap(g, t):
        traj.times.append(t)
        traj.snapshots.append(g.cells.copy())

    snap(grid, 0.0)
    t = 0.0
    while t < config.t_end * (1 - 1e-14):
        if config.max_steps is not None and traj.steps >= config.max_steps:
            break
        try:
            spec = cell_spectra(grid, model)
        except NonHyperbolicError as exc:
            traj.aborted, traj.reason = True, str(exc)
            break
        ok = spec.hyperbolic(TOL_IMAG, TOL_COND)
        traj.max_imag = max(traj.max_imag, float(spec.max_imag.max()))
        traj.max_condition = max(traj.max_condition, float(spec.condition.max()))
        if not ok.all():
            bad = np.flatnonzero(~ok)
            traj.flags.append({"step": traj.steps, "t": t, "cells": bad.tolist()})
            if config.on_nonhyperbolic == "abort":
                traj.aborted = True
                traj.failed_cell = int(bad[0])
                traj.reason = f"cell {bad[0]} lost hyperbolicity at t={t:.6g}"
                break
        speed = float(spec.radius.max())
        traj.max_speed = max(traj.max_speed, speed)
        dt = min(config.cfl * grid.dx / speed, config.t_end - t)
        try:
            grid = step(grid, model, dt, config.tau, config.boundary, radii=spec.radius)
        except SolverError as exc:
            traj.aborted, traj.reason, traj.failed_cell = True, str(exc), exc.cell
            break
        t += dt
        traj.steps += 1
        if config.snapshot_every and traj.steps % config.snapshot_every == 0:
            snap(grid, t)
    traj.t = t
    traj.final = grid
    if not traj.times or traj.times[-1] != t:
        snap(grid, t)
    traj.final_totals = conserved_totals(grid).tolist()
    return traj


def solver_model(name: str, order: int) -> ModelSpec:
    if name not in SOLVER_MODELS:
        raise ValueError(f"solver supports {', '.join(SOLVER_MODELS)}")
    return preset(name, order, 1)


# ---------------------------------------------------------------------------
# output


def snapshots_to_csv(traj: Trajectory, grid: Grid1D) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    M = grid.order
    writer.writerow(["t", "x", "rho", "u", "theta"] + [f"f_{k}" for k in range(3, M + 1)])
    x = grid.centers
    for t, cells in zip(traj.times, traj.snapshots):
        for xi, row in zip(x, cells):
            writer.writerow([format(v, ".17g") for v in (t, xi, *row)])
    return buf.getvalue()


def diagnostics_to_json(traj: Trajectory) -> str:
    return jsonio.dumps(traj.diagnostics())
