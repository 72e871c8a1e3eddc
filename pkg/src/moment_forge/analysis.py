"""Hyperbolicity verdicts, sampling scans and symmetry checks."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import jsonio
from .assembly import ModelSpec, MomentSystem, SingularSystemError, assemble_system, subspace_gram
from .state import StateVector, galilean_shift, rotate_state, sample_state

TOL_IMAG = 1e-9
TOL_COND = 1e8


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    max_imag: float
    condition: float
    verdict: str

    @property
    def hyperbolic(self) -> bool:
        return self.verdict == "hyperbolic"

    @property
    def spectral_radius(self) -> float:
        return float(np.abs(self.eigenvalues).max()) if self.eigenvalues.size else 0.0


def directional_matrix(system: MomentSystem, n) -> np.ndarray:
    n = np.atleast_1d(np.asarray(n, dtype=float))
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return system.coefficient_matrix(n)


def spectrum(matrix, tol_imag: float = TOL_IMAG, tol_cond: float = TOL_COND) -> SpectrumReport:
    """Eigen-decomposition and hyperbolicity verdict of a square matrix.

    ``max_imag`` is normalised by the spectral radius; the eigenvector matrix
    condition number stands in for diagonalizability.  Failures of the
    eigensolver or non-finite input yield a ``non-real`` verdict.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("spectrum needs a square matrix")
    if not np.all(np.isfinite(A)):
        return SpectrumReport(np.full(A.shape[0], np.nan + 0j), np.inf, np.inf, "non-real")
    try:
        vals, vecs = np.linalg.eig(A)
    except np.linalg.LinAlgError:
        return SpectrumReport(np.full(A.shape[0], np.nan + 0j), np.inf, np.inf, "non-real")
    radius = float(np.abs(vals).max()) if vals.size else 0.0
    max_imag = float(np.abs(vals.imag).max() / radius) if radius > 0 else 0.0
    cond = float(np.linalg.cond(vecs))
    if max_imag > tol_imag:
        verdict = "non-real"
    elif not cond <= tol_cond:
        verdict = "defective"
    else:
        verdict = "hyperbolic"
    order = np.lexsort((vals.imag, vals.real))
    return SpectrumReport(vals[order], max_imag, cond, verdict)


# ---------------------------------------------------------------------------
# scans


@dataclass(frozen=True)
class Witness:
    seed: int
    trial: int
    state: dict
    direction: list
    verdict: str
    max_imag: float


@dataclass(frozen=True)
class ScanReport:
    model: str
    order: int
    dim: int
    trials: int
    amplitude: float
    seed: int
    hyperbolic_fraction: float
    singular: int
    witnesses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return jsonio.dumps(self.to_dict())


def trial_sample(spec: ModelSpec, seed: int, trial: int, amplitude: float):
    """State and unit direction of one scan trial; replayable from ``(seed, trial)``."""
    ss = np.random.SeedSequence([seed, trial])
    state_seed, dir_seed = ss.spawn(2)
    state = sample_state(state_seed, spec, amplitude)
    n = np.random.default_rng(dir_seed).normal(size=spec.dim)
    return state, n / np.linalg.norm(n)


def trial_verdict(spec: ModelSpec, state: StateVector, n) -> SpectrumReport | None:
    """Verdict for one (state, direction); ``None`` when ``B`` is singular."""
    try:
        return spectrum(directional_matrix(assemble_system(spec, state), n))
    except SingularSystemError:
        return None


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MOMENT_FORGE_THREADS", "1")))
    except ValueError:
        return 1


def hyperbolicity_scan(spec: ModelSpec, trials: int, amplitude: float, seed: int = 0, max_witnesses: int = 5) -> ScanReport:
    if trials < 1:
        raise ValueError("trials must be >= 1")

    def run(t):
        state, n = trial_sample(spec, seed, t, amplitude)
        return t, state, n, trial_verdict(spec, state, n)

    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, range(trials)))
    else:
        results = [run(t) for t in range(trials)]
    good = singular = 0
    witnesses = []
    for t, state, n, rep in results:
        if rep is None:
            singular += 1
        elif rep.hyperbolic:
            good += 1
            continue
        if len(witnesses) < max_witnesses:
            witnesses.append(
                Witness(
                    seed,
                    t,
                    state.to_dict(),
                    n.tolist(),
                    "singular" if rep is None else rep.verdict,
                    np.inf if rep is None else rep.max_imag,
                )
            )
    return ScanReport(spec.name, spec.order, spec.dim, trials, amplitude, seed, good / trials, singular, witnesses)


def replay_witness(spec: ModelSpec, witness: Witness) -> SpectrumReport | None:
    state = StateVector.from_dict(witness.state)
    return trial_verdict(spec, state, np.array(witness.direction))


# ---------------------------------------------------------------------------
# symmetry


def symmetrization_check(spec: ModelSpec, w) -> float:
    """Max asymmetry of ``L^T A_d L^-T`` with ``Pb G Pb^T = L L^T``."""
    if not spec.projection.orthogonal:
        raise ValueError(f"{spec.name} does not use an orthogonal projection")
    if not spec.regularized:
        raise ValueError("the symmetrizer applies to regularized models")
    system = assemble_system(spec, w)
    L = np.linalg.cholesky(subspace_gram(spec, system.w))
    worst = 0.0
    for A in system.A:
        S = L.T @ A @ np.linalg.inv(L.T)
        worst = max(worst, float(np.abs(S - S.T).max() / max(1.0, np.abs(S).max())))
    return worst


def multiset_distance(a, b) -> float:
    """Max pairwise gap after sorting both spectra by ``(Re, Im)``."""
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return np.inf
    ia, ib = np.lexsort((a.imag, a.real)), np.lexsort((b.imag, b.real))
    return float(np.abs(a[ia] - b[ib]).max()) if a.size else 0.0


@dataclass(frozen=True)
class InvarianceReport:
    rotation_error: float
    galilean_error: float

    @property
    def error(self) -> float:
        return max(self.rotation_error, self.galilean_error)


def _dir_eigs(spec, state, n):
    return np.linalg.eigvals(assemble_system(spec, state).coefficient_matrix(n))


def invariance_suite(spec: ModelSpec, state: StateVector, R, du, n=None) -> InvarianceReport:
    """Rotational and Galilean spectral properties at one state and direction."""
    D = spec.dim
    R = np.asarray(R, dtype=float).reshape(D, D)
    du = np.atleast_1d(np.asarray(du, dtype=float))
    n = np.eye(D)[0] if n is None else np.asarray(n, dtype=float)
    base = _dir_eigs(spec, state, n)
    rot = _dir_eigs(spec, rotate_state(state, R), R @ n)
    shifted = _dir_eigs(spec, galilean_shift(state, du), n)
    return InvarianceReport(multiset_distance(base, rot), multiset_distance(base + n @ du, shifted))


@dataclass(frozen=True)
class BatchSpectra:
    radius: np.ndarray
    max_imag: np.ndarray
    condition: np.ndarray

    def hyperbolic(self, tol_imag: float = TOL_IMAG, tol_cond: float = TOL_COND) -> np.ndarray:
        return (self.max_imag <= tol_imag) & (self.condition <= tol_cond)


def batched_spectra(mats) -> BatchSpectra:
    """Spectral radius, normalised imaginary part and eigenvector conditioning of a stack."""
    vals, vecs = np.linalg.eig(np.asarray(mats, dtype=float))
    radius = np.abs(vals).max(axis=-1)
    safe = np.where(radius > 0, radius, 1.0)
    max_imag = np.abs(vals.imag).max(axis=-1) / safe
    return BatchSpectra(radius, max_imag, np.linalg.cond(vecs))
