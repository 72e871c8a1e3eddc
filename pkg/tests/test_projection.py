import numpy as np
import pytest

from moment_forge.basis import BasisFamily, gram_matrix, index_of
from moment_forge.projection import (
    ProjectionError,
    cutoff_projection,
    orthogonal_pp_from_gram,
    ordered_hierarchy_projection,
    shifted_projection,
    validate_projection,
)


@pytest.mark.parametrize("M, dim", [(2, 1), (4, 1), (3, 2), (5, 3)])
def test_cutoff_is_identity_block(M, dim):
    p = cutoff_projection(M, dim)
    n = p.subspace_dim
    assert np.array_equal(p.pb[:, :n], np.eye(n))
    assert not p.pb[:, n:].any()
    assert validate_projection(p).passed


@pytest.mark.parametrize("M, expected", [(2, 5), (3, 13), (4, 26), (5, 45)])
def test_ordered_hierarchy_sizes(M, expected):
    assert ordered_hierarchy_projection(M, 3).subspace_dim == expected


def test_thirteen_moment_projection_weights():
    p = ordered_hierarchy_projection(3, 3)
    row = p.pp[10]
    assert row[index_of((3, 0, 0), 3)] == pytest.approx(0.6)
    assert row[index_of((1, 2, 0), 3)] == pytest.approx(0.2)
    assert row[index_of((1, 0, 2), 3)] == pytest.approx(0.2)
    assert np.count_nonzero(row) == 3
    assert p.row_labels[10:] == ((3, 0, 0), (2, 1, 0), (2, 0, 1))


@pytest.mark.parametrize("M, dim", [(2, 2), (3, 3), (4, 2), (4, 3), (5, 3)])
def test_ordered_projection_is_orthogonal(M, dim):
    p = ordered_hierarchy_projection(M, dim)
    G = gram_matrix(BasisFamily("hermite", dim, theta=1.0), p.window_cap)
    # orthogonality: G (I - Pi) is orthogonal to the subspace
    assert np.abs(p.pb @ G @ (np.eye(G.shape[0]) - p.pi)).max() < 1e-12


def test_ordered_one_dimension_is_cutoff():
    a = ordered_hierarchy_projection(4, 1)
    b = cutoff_projection(4, 1)
    assert np.allclose(a.pb, b.pb) and np.allclose(a.pp, b.pp)


def test_shifted_projection_entry():
    p = shifted_projection(3, 1.0)
    assert p.pp[3].tolist() == [0, 0, 0, 1, 0, -4]
    assert not p.orthogonal
    assert validate_projection(p).passed


def test_shifted_projection_rejects_bad_inputs():
    with pytest.raises(ProjectionError):
        shifted_projection(3, 0.0)
    with pytest.raises(ProjectionError):
        shifted_projection(2, 1.0)


def test_cutoff_rejects_low_order():
    with pytest.raises(ProjectionError):
        cutoff_projection(1, 2)


def test_singular_gram_is_reported():
    pb = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ProjectionError):
        orthogonal_pp_from_gram(pb, pb @ pb.T, np.eye(2))


def test_validation_flags_broken_pair():
    p = cutoff_projection(3, 1)
    broken = p.with_pp(2 * p.pp, "broken")
    verdict = validate_projection(broken)
    assert not verdict.passed
    assert verdict.identity_residual == pytest.approx(1.0)
