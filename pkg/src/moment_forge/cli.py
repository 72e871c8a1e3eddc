"""Command-line entry point: ``moment-forge <command> ...``.

Exit codes: 0 success or passing verdict, 1 failing verdict, 2 usage or
configuration error, 3 numerical singularity.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import jsonio
from .analysis import hyperbolicity_scan, invariance_suite, spectrum, symmetrization_check
from .assembly import (
    PRESETS,
    AssemblyError,
    SingularSystemError,
    assemble_system,
    matrix_to_csv,
    preset,
)
from .basis import BasisFamily, count, gram_matrix, inner_product
from .projection import validate_projection
from .solver import BOUNDARIES, INITIAL_CONDITIONS, SOLVER_MODELS, SolverConfig, diagnostics_to_json, run, snapshots_to_csv
from .state import StateError, StateVector, maxwellian_state, sample_state

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SINGULAR = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def parse_state(text: str, spec) -> StateVector:
    """``maxwellian:rho,u_1..u_D,theta`` | ``file:path.json`` | ``json:{...}`` | ``sample:seed,amplitude``."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "maxwellian":
            vals = _floats(rest)
            if len(vals) != spec.dim + 2:
                raise UsageError(f"maxwellian needs rho, {spec.dim} velocities and theta")
            return maxwellian_state(vals[0], vals[1:-1], vals[-1])
        if kind == "file":
            try:
                return StateVector.from_json(Path(rest).read_text())
            except OSError as exc:
                raise UsageError(f"cannot read state file: {exc}") from exc
        if kind == "json":
            return StateVector.from_json(rest)
        if kind == "sample":
            vals = _floats(rest)
            if len(vals) != 2:
                raise UsageError("sample needs seed,amplitude")
            return sample_state(int(vals[0]), spec, vals[1])
    except (StateError, json.JSONDecodeError) as exc:
        raise UsageError(f"invalid state: {exc}") from exc
    raise UsageError(f"unknown state source {kind!r} (use maxwellian:, file:, json: or sample:)")


def _spec(args):
    try:
        return preset(args.model, args.M, args.D)
    except AssemblyError as exc:
        raise UsageError(str(exc)) from exc


def _write(text: str, output: str | None):
    if output is None:
        sys.stdout.write(text + ("" if text.endswith("\n") else "\n"))
        return
    path = Path(output)
    if not path.parent.is_dir():
        raise UsageError(f"output directory {path.parent} does not exist")
    path.write_text(text)


def _direction(args, dim) -> np.ndarray:
    n = np.eye(dim)[0] if args.direction is None else np.array(_floats(args.direction))
    if n.shape != (dim,) or not np.linalg.norm(n) > 0:
        raise UsageError(f"direction needs {dim} components")
    return n / np.linalg.norm(n)


# ---------------------------------------------------------------------------
# commands


def cmd_derive(args) -> int:
    spec = _spec(args)
    state = parse_state(args.state, spec)
    try:
        system = assemble_system(spec, state, args.tau)
    except StateError as exc:
        raise UsageError(str(exc)) from exc
    if system.singular:
        print(f"B is singular at this state (condition {system.b_condition:.3e})", file=sys.stderr)
        return EXIT_SINGULAR
    if args.format == "json":
        _write(jsonio.dumps({**system.to_dict(), "state": state.to_dict()}), args.output)
        return EXIT_OK
    if args.output is None:
        raise UsageError("csv output needs --output DIR")
    out = Path(args.output)
    if not out.is_dir():
        raise UsageError(f"output directory {out} does not exist")
    (out / "B.csv").write_text(matrix_to_csv(system.B))
    for d, A in enumerate(system.A, start=1):
        (out / f"A{d}.csv").write_text(matrix_to_csv(A))
    (out / "source.csv").write_text(matrix_to_csv(system.source[:, None]))
    rows = "".join(f"{i}," + ",".join(map(str, lab)) + "\n" for i, lab in enumerate(spec.projection.row_labels))
    (out / "ordering.csv").write_text(rows)
    (out / "metadata.json").write_text(
        jsonio.dumps({"model": spec.name, "order": spec.order, "dim": spec.dim, "state": state.to_dict()})
    )
    return EXIT_OK


def cmd_spectrum(args) -> int:
    spec = _spec(args)
    state = parse_state(args.state, spec)
    system = assemble_system(spec, state)
    if system.singular:
        print("B is singular at this state", file=sys.stderr)
        return EXIT_SINGULAR
    n = _direction(args, spec.dim)
    rep = spectrum(system.coefficient_matrix(n), args.tol_imag, args.tol_cond)
    payload = {
        "model": spec.name,
        "direction": n,
        "eigenvalues": [[z.real, z.imag] for z in rep.eigenvalues],
        "max_imag": rep.max_imag,
        "condition": rep.condition,
        "verdict": rep.verdict,
    }
    if args.format == "csv":
        text = "re,im\n" + "".join(f"{z.real:.17g},{z.imag:.17g}\n" for z in rep.eigenvalues)
    else:
        text = jsonio.dumps(payload)
    _write(text, args.output)
    return EXIT_OK if rep.hyperbolic else EXIT_FAIL


def cmd_scan(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.amplitude < 0:
        raise UsageError("--amplitude must be non-negative")
    spec = _spec(args)
    rep = hyperbolicity_scan(spec, args.trials, args.amplitude, args.seed, args.witnesses)
    _write(jsonio.dumps(rep.to_dict()), args.output)
    return EXIT_OK if rep.hyperbolic_fraction == 1.0 else EXIT_FAIL


def cmd_invariance(args) -> int:
    spec = _spec(args)
    state = parse_state(args.state, spec)
    rng = np.random.default_rng(args.seed)
    D = spec.dim
    q, r = np.linalg.qr(rng.normal(size=(D, D)))
    R = q * np.sign(np.diag(r))
    if np.linalg.det(R) < 0:
        R[:, 0] *= -1
    du = rng.uniform(-1, 1, D) if args.shift is None else np.array(_floats(args.shift))
    if du.shape != (D,):
        raise UsageError(f"--shift needs {D} components")
    rep = invariance_suite(spec, state, R, du)
    payload = {
        "model": spec.name,
        "rotation": R,
        "shift": du,
        "rotation_error": rep.rotation_error,
        "galilean_error": rep.galilean_error,
        "tolerance": args.tol,
    }
    _write(jsonio.dumps(payload), args.output)
    return EXIT_OK if rep.error <= args.tol else EXIT_FAIL


def cmd_simulate(args) -> int:
    if args.model not in SOLVER_MODELS:
        raise UsageError(f"simulate supports {', '.join(SOLVER_MODELS)}")
    out = Path(args.output_dir)
    if not out.is_dir():
        raise UsageError(f"output directory {out} does not exist")
    spec = preset(args.model, args.M, 1)
    try:
        config = SolverConfig(
            spec,
            cfl=args.cfl,
            tau=args.tau,
            t_end=args.t_end,
            boundary=args.boundary,
            initial_condition=args.ic,
            ncells=args.ncells,
            amplitude=args.amplitude,
            max_steps=args.max_steps,
            snapshot_every=args.snapshot_every,
            on_nonhyperbolic=args.on_nonhyperbolic,
        )
        traj = run(config)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    (out / "snapshots.csv").write_text(snapshots_to_csv(traj, traj.final))
    (out / "diagnostics.json").write_text(diagnostics_to_json(traj))
    if traj.aborted:
        print(f"run aborted: {traj.reason}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_validate(args) -> int:
    """Structural self-checks for one model: projection identities, basis
    orthogonality and (regularized orthogonal models) symmetrizability."""
    spec = _spec(args)
    verdict = validate_projection(spec.projection)
    checks = {"projection_residual": verdict.residual, "projection_full_rank": verdict.full_rank}
    ok = verdict.passed
    if spec.family != "gaussian":
        fam = BasisFamily(spec.family, spec.dim, theta=1.3) if spec.family == "hermite" else BasisFamily("scaled", spec.dim)
        n = count(min(spec.order, 4), spec.dim)
        G = gram_matrix(fam, min(spec.order, 4))
        quad = np.array([[inner_product(i, j, fam) for j in range(n)] for i in range(n)])
        err = float(np.abs(quad - G).max() / np.abs(G).max())
        checks["orthogonality_error"] = err
        ok &= err <= 1e-10
    if spec.regularized and spec.projection.orthogonal:
        res = max(symmetrization_check(spec, sample_state(k, spec, 0.5)) for k in range(5))
        checks["symmetrization_residual"] = res
        ok &= res <= 1e-10
    checks["passed"] = bool(ok)
    _write(jsonio.dumps(checks), args.output)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="moment-forge", description="Derive and check hyperbolic moment systems.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def model_args(p, default_model="HME1D"):
        p.add_argument("--model", default=default_model, help=f"one of {', '.join(PRESETS)}")
        p.add_argument("-M", type=int, default=3, help="model order")
        p.add_argument("-D", type=int, default=1, help="velocity dimension")
        p.add_argument("--output", "-o", help="output path (stdout when omitted)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("derive", help="assemble B, A_d and the BGK source at a state")
    model_args(p)
    p.add_argument("--state", default="maxwellian:1,0,1")
    p.add_argument("--tau", type=float, default=None, help="BGK relaxation time")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("spectrum", help="eigenvalues and hyperbolicity verdict in one direction")
    model_args(p)
    p.add_argument("--state", default="maxwellian:1,0,1")
    p.add_argument("--direction", help="comma-separated direction (normalised)")
    p.add_argument("--tol-imag", type=float, default=1e-9)
    p.add_argument("--tol-cond", type=float, default=1e8)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("scan", help="sample states and directions, report the hyperbolic fraction")
    model_args(p)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--witnesses", type=int, default=5, help="maximum stored witness states")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("invariance", help="rotational and Galilean spectral checks")
    model_args(p, "HMEND")
    p.add_argument("--state", default="sample:0,0.5")
    p.add_argument("--seed", type=int, default=0, help="seed for the random rotation")
    p.add_argument("--shift", help="comma-separated velocity shift")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_invariance)

    p = sub.add_parser("simulate", help="run the 1D solver and write snapshots")
    p.add_argument("--model", default="HME1D", help=f"one of {', '.join(SOLVER_MODELS)}")
    p.add_argument("-M", type=int, default=4)
    p.add_argument("--ic", choices=INITIAL_CONDITIONS, default="sod")
    p.add_argument("--ncells", type=int, default=200)
    p.add_argument("--t-end", type=float, default=0.1)
    p.add_argument("--cfl", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--boundary", choices=BOUNDARIES, default="copy")
    p.add_argument("--amplitude", type=float, default=1.0, help="f_3 amplitude for perturbed/smooth data")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--snapshot-every", type=int, default=0)
    p.add_argument("--on-nonhyperbolic", choices=("abort", "flag"), default="abort")
    p.add_argument("--output-dir", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="structural self-checks of a model")
    model_args(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    threads = os.environ.get("MOMENT_FORGE_THREADS")
    if threads is not None and not threads.isdigit():
        print("MOMENT_FORGE_THREADS must be a positive integer", file=sys.stderr)
        return EXIT_USAGE
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        return args.func(args)
    except UsageError as exc:
        print(f"moment-forge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SingularSystemError as exc:
        print(f"moment-forge: singular system: {exc}", file=sys.stderr)
        return EXIT_SINGULAR


if __name__ == "__main__":
    sys.exit(main())
