import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import hermite_roots

from moment_forge.analysis import trial_sample
from moment_forge.basis import BasisFamily, hermite_eval, index_of, multi_indices
from moment_forge.assembly import (
    PRESETS,
    AssemblyError,
    MomentSystem,
    SingularSystemError,
    assemble_system,
    bgk_source,
    build_time_derivative_matrix,
    build_velocity_matrices,
    from_physical,
    full_coefficients,
    grad_vs_regularized_delta,
    matrix_to_csv,
    pack_state,
    physical_jacobian,
    physical_vector,
    preset,
    system_to_json,
    unpack_state,
)
from moment_forge.state import StateVector, maxwellian_state, sample_state

ALL_MODELS = [
    ("Grad1D", 4, 1),
    ("GradND", 3, 2),
    ("HME1D", 5, 1),
    ("HMEND", 4, 3),
    ("AHME", 3, 2),
    ("G13", 3, 3),
    ("HR13", 3, 3),
    ("OrderedGrad", 4, 3),
    ("OrderedRegularized", 4, 2),
    ("QBME1D", 4, 1),
    ("QBMEND", 3, 3),
    ("QBMEAltProjection", 4, 1),
]


def test_preset_examples():
    hme = preset("HME1D", 3, 1)
    assert hme.family == "hermite" and hme.regularized and hme.projection.label.startswith("cutoff")
    hr = preset("HR13", 3, 3)
    assert hr.projection.label.startswith("ordered") and hr.regularized and hr.size == 13
    qb = preset("QBME1D", 4, 1)
    assert qb.family == "scaled" and qb.ps1 == "WithInnerProjection"
    assert qb.equation_form == "ScaledBoltzmann"


@pytest.mark.parametrize("args", [("Foo", 3, 1), ("G13", 4, 3), ("HME1D", 3, 2), ("HMEND", 1, 2), ("QBMEAltProjection", 2, 1)])
def test_preset_rejects_inconsistent_parameters(args):
    with pytest.raises(AssemblyError):
        preset(*args)


def test_unknown_model_message_lists_presets():
    with pytest.raises(AssemblyError, match="HR13"):
        preset("nope", 3, 1)


def test_qbme_time_derivative_entries():
    D = np.asarray(build_time_derivative_matrix(preset("QBME1D", 3, 1), maxwellian_state(1.0, [0.0], 1.0)))
    assert D[1, 1] == pytest.approx(1.0)
    assert D[0, 2] == pytest.approx(0.5)


def test_qbme_last_row_drops_inner_projection_term():
    spec = preset("QBME1D", 5, 1)
    B = assemble_system(spec, StateVector(1.0, [0.0], theta=1.0, f={(3,): 0.3, (4,): 0.2, (5,): 0.1})).B
    assert B[5, 2] == pytest.approx(0.3 / 2)
    assert B[4, 2] == pytest.approx((0.0 + 5 * 0.2) / 2)


@pytest.mark.parametrize("rho", [1.0, 2.0])
def test_temperature_block_determinant(rho):
    spec = preset("HMEND", 3, 2)
    B = assemble_system(spec, maxwellian_state(rho, [0.0, 0.0], 1.0)).B
    rows = [spec.slot[(2, 0)], spec.slot[(0, 2)]]
    assert np.linalg.det(B[np.ix_(rows, rows)]) == pytest.approx(2 * rho)


def test_grad_time_matrix_lower_triangular_at_maxwellian():
    B = assemble_system(preset("Grad1D", 5, 1), maxwellian_state(1.3, [0.2], 0.9)).B
    assert np.allclose(B, np.tril(B))
    assert np.all(np.abs(np.diag(B)) > 0)


def test_hme_velocity_matrix_is_tridiagonal():
    M = np.asarray(build_velocity_matrices(preset("HME1D", 3, 1), maxwellian_state(1.0, [0.0], 1.0))[0])
    assert np.allclose(np.diag(M, -1), 1.0)
    assert np.allclose(np.diag(M, 1), np.arange(1, M.shape[0]))
    assert np.allclose(M, np.triu(np.tril(M, 1), -1))


def test_qbme_velocity_matrix_is_shifted_scaled_hermite():
    spec = preset("QBME1D", 3, 1)
    M = np.asarray(build_velocity_matrices(spec, maxwellian_state(1.0, [0.4], 2.0))[0])
    Mv = np.diag(np.ones(M.shape[0] - 1), -1) + np.diag(np.arange(1.0, M.shape[0]), 1)
    assert np.allclose(M, 0.4 * np.eye(M.shape[0]) + np.sqrt(2.0) * Mv)


@pytest.mark.parametrize("M", [3, 4, 5, 6])
def test_hme_spectrum_at_equilibrium_is_hermite_roots(M):
    J = assemble_system(preset("HME1D", M, 1), maxwellian_state(1.0, [0.0], 1.0)).jacobian([1.0])
    assert np.allclose(np.sort(np.linalg.eigvals(J).real), hermite_roots(M + 1), atol=1e-9)


def test_euler_speeds_of_five_moment_system():
    J = assemble_system(preset("OrderedRegularized", 2, 3), maxwellian_state(1.0, [0, 0, 0], 1.0)).jacobian([1, 0, 0])
    speeds = np.sort(np.linalg.eigvals(J).real)
    r = np.sqrt(5 / 3)
    assert np.allclose(speeds, [-r, 0, 0, 0, r], atol=1e-12)


def test_conservation_rows():
    spec = preset("HMEND", 4, 3)
    state = sample_state(4, spec, 0.5)
    sys = assemble_system(spec, state)
    assert np.allclose(sys.B[0], np.eye(spec.size)[0])
    for d in range(3):
        flux = (sys.A[d] @ sys.B)[0]
        expected = np.zeros(spec.size)
        expected[0] = state.u[d]
        expected[spec.velocity_slots[d]] = state.rho
        assert np.allclose(flux, expected)
    assert np.allclose(bgk_source(spec, state, 0.7)[list(spec.conserved_slots)], 0.0)


@pytest.mark.parametrize("name, M, dim", [("HMEND", 3, 2), ("AHME", 3, 2), ("HR13", 3, 3)])
def test_time_derivative_matrix_is_derivative_of_distribution(name, M, dim):
    spec = preset(name, M, dim)
    w = pack_state(spec, sample_state(2, spec, 0.4))
    D = np.asarray(build_time_derivative_matrix(spec, w))
    h = 1e-6
    for s in range(spec.size):
        dw = np.zeros_like(w)
        dw[s] = h
        fd = (full_coefficients(spec, w + dw) - full_coefficients(spec, w - dw)) / (2 * h)
        # coefficient columns are exactly linear; parameter columns move the basis
        if s not in spec.velocity_slots and np.any(fd):
            assert np.allclose(D[:, s], fd, atol=1e-8)


def test_time_derivative_matches_pointwise_derivative():
    spec = preset("HMEND", 3, 2)
    w = pack_state(spec, sample_state(9, spec, 0.4))
    D = np.asarray(build_time_derivative_matrix(spec, w))
    idx = multi_indices(spec.window, 2)
    xi = np.array([0.4, -0.7])

    def density(wv):
        st = unpack_state(spec, wv)
        fam = BasisFamily("hermite", 2, st.u, theta=st.theta)
        c = st.coefficients(spec.window)
        return sum(c[n] * hermite_eval(a, fam, xi) for n, a in enumerate(idx))

    st = unpack_state(spec, w)
    fam = BasisFamily("hermite", 2, st.u, theta=st.theta)
    basis = np.array([hermite_eval(a, fam, xi) for a in idx])
    h = 1e-6
    for s in range(spec.size):
        dw = np.zeros_like(w)
        dw[s] = h
        fd = (density(w + dw) - density(w - dw)) / (2 * h)
        assert basis @ D[:, s] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_bgk_source_examples():
    spec = preset("HME1D", 3, 1)
    assert not bgk_source(spec, maxwellian_state(1.0, [0.0], 1.0), 1.0).any()
    s = bgk_source(spec, StateVector(1.0, [0.0], theta=1.0, f={(3,): 0.1}), 2.0)
    assert s[3] == pytest.approx(-0.05)
    assert not s[:3].any()
    with pytest.raises(AssemblyError):
        bgk_source(spec, maxwellian_state(1.0, [0.0], 1.0), 0.0)


def test_regularization_delta():
    eq = maxwellian_state(1.0, [0.0], 1.0)
    assert not grad_vs_regularized_delta(preset("HME1D", 2, 1), eq).any()
    assert not grad_vs_regularized_delta(preset("HME1D", 3, 1), eq).any()
    delta = grad_vs_regularized_delta(preset("HME1D", 3, 1), StateVector(1.0, [0.0], theta=1.0, f={(3,): 0.3}))
    assert delta[3].any()
    assert not delta[:3].any()


def test_grad_minus_regularized_flux_is_the_delta():
    grad, reg = preset("Grad1D", 4, 1), preset("HME1D", 4, 1)
    state = sample_state(1, grad, 0.5)
    A_grad = assemble_system(grad, state).A[0]
    sys_reg = assemble_system(reg, state)
    assert np.allclose(A_grad - sys_reg.A[0] @ sys_reg.B, grad_vs_regularized_delta(reg, state), atol=1e-12)


@pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m[0])
def test_pack_unpack_roundtrip(model):
    spec = preset(*model)
    w = pack_state(spec, sample_state(3, spec, 0.5))
    assert np.allclose(pack_state(spec, unpack_state(spec, w)), w, atol=1e-13)


@pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m[0])
def test_physical_layout_roundtrip_and_jacobian(model):
    spec = preset(*model)
    w = pack_state(spec, sample_state(5, spec, 0.5))
    p = physical_vector(spec, w)
    assert np.allclose(from_physical(spec, p), w, atol=1e-14)
    J = physical_jacobian(spec, w)
    h = 1e-6
    for s in range(spec.size):
        dp = np.zeros_like(p)
        dp[s] = h
        fd = (from_physical(spec, p + dp) - from_physical(spec, p - dp)) / (2 * h)
        assert np.allclose(J[:, s], fd, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(ALL_MODELS[:2] + ALL_MODELS[2:]), st.integers(0, 10_000))
def test_time_matrix_well_conditioned(model, seed):
    spec = preset(*model)
    assert np.linalg.cond(assemble_system(spec, sample_state(seed, spec, 0.3)).B) < 1e8


@pytest.mark.parametrize("name, dim", [("HMEND", 2), ("HMEND", 3), ("QBMEND", 2), ("AHME", 3), ("OrderedRegularized", 3)])
def test_time_matrix_well_conditioned_at_order_six(name, dim):
    spec = preset(name, 6 if dim == 2 else 5, dim)
    for seed in range(3):
        assert np.linalg.cond(assemble_system(spec, sample_state(seed, spec, 0.3)).B) < 1e8


def test_singular_time_matrix_is_reported():
    spec = preset("HME1D", 3, 1)
    sys = MomentSystem(spec, np.ones(4), np.zeros((4, 4)), (np.eye(4),), np.zeros(4), np.inf)
    assert sys.singular
    with pytest.raises(SingularSystemError):
        sys.jacobian([1.0])


def test_gaussian_model_accepts_maxwellian():
    spec = preset("AHME", 3, 2)
    a = assemble_system(spec, maxwellian_state(1.0, [0.0, 0.0], 1.0))
    b = assemble_system(spec, StateVector(1.0, [0.0, 0.0], Theta=np.eye(2)))
    assert np.allclose(a.B, b.B) and np.allclose(a.A[0], b.A[0])


def test_model_dimension_mismatch():
    with pytest.raises(ValueError):
        pack_state(preset("HMEND", 3, 2), maxwellian_state(1.0, [0.0], 1.0))


def test_csv_export_uses_17_digits():
    text = matrix_to_csv(np.array([[1 / 3, 2.0]]))
    assert text == "0.33333333333333331,2\n"


def test_json_export_is_deterministic():
    spec = preset("HR13", 3, 3)
    state, _ = trial_sample(spec, 0, 0, 0.5)
    assert system_to_json(assemble_system(spec, state)) == system_to_json(assemble_system(spec, state))
