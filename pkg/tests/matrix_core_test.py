import numpy as np
import pytest

from app.errors import DataError, DimensionMismatch, DimensionTooLarge, IllConditioned, NonPositiveDiagonal, SingularTheta
from app.matrix_core import (
    CorrelationMatrix,
    dense_inverse,
    normalize_to_correlation,
    omega_entry_from_theta,
    operator_norm,
    solve_sym,
    sparse_spectral_norm_exhaustive,
    true_gamma,
    true_theta_block,
)
from app.schemas import GraphKind, GraphSpec, ThetaBlock
from app.synthetic_data import build_precision
from app.utils import complement_indices


def random_correlation(rng, p):
    A = rng.standard_normal((p, p + 2))
    return normalize_to_correlation(A @ A.T + 0.5 * np.eye(p)).entries


def test_normalize_identity():
    R = normalize_to_correlation(np.eye(3))
    assert np.array_equal(R.entries, np.eye(3))


def test_normalize_two_by_two():
    R = normalize_to_correlation(np.array([[4.0, 2.0], [2.0, 4.0]]))
    assert np.allclose(R.entries, [[1.0, 0.5], [0.5, 1.0]], atol=1e-15)


def test_normalize_is_idempotent():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((6, 9))
    once = normalize_to_correlation(A @ A.T)
    twice = normalize_to_correlation(once)
    assert np.max(np.abs(once.entries - twice.entries)) <= 1e-12


def test_normalize_rejects_nonpositive_diagonal():
    with pytest.raises(NonPositiveDiagonal):
        normalize_to_correlation(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_correlation_matrix_requires_unit_diagonal():
    with pytest.raises(DataError):
        CorrelationMatrix(np.array([[1.0, 0.2], [0.2, 0.9]]))


def test_solve_sym_simple_cases():
    b = np.array([1.0, -2.0, 3.0])
    assert np.allclose(solve_sym(np.eye(3), b), b)
    assert np.allclose(solve_sym(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1.0, 1.0])


def test_solve_sym_recovers_solution():
    rng = np.random.default_rng(11)
    M = rng.standard_normal((5, 5))
    A = M @ M.T + 5 * np.eye(5)
    x_star = rng.standard_normal(5)
    x = solve_sym(A, A @ x_star)
    assert np.max(np.abs(x - x_star)) <= 1e-8


def test_solve_sym_refuses_ill_conditioned():
    A = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]])
    with pytest.raises(IllConditioned):
        solve_sym(A, np.array([1.0, 1.0]))


def test_true_gamma_rejects_repeated_node():
    with pytest.raises(DimensionMismatch):
        true_gamma(np.eye(4), 2, 2)


def test_true_gamma_identity_is_zero():
    gamma_a, gamma_b = true_gamma(np.eye(5), 1, 3)
    assert np.array_equal(gamma_a, np.zeros(3))
    assert np.array_equal(gamma_b, np.zeros(3))


def test_true_gamma_scalar_case():
    rho = 0.4
    sigma = np.array([[1.0, 0.0, rho], [0.0, 1.0, rho], [rho, rho, 1.0]])
    gamma_a, gamma_b = true_gamma(sigma, 0, 1)
    assert np.allclose(gamma_a, [rho]) and np.allclose(gamma_b, [rho])


def test_true_gamma_matches_precision_identity_on_grid():
    model = build_precision(GraphSpec(kind=GraphKind.grid, side=10))
    sigma, omega = model.sigma.entries, model.omega.entries
    a, b = 11, 12
    idx = complement_indices(100, a, b)
    theta = np.linalg.inv(omega[np.ix_([a, b], [a, b])])
    gamma_a, gamma_b = true_gamma(sigma, a, b)
    # gamma_c = -Omega_{I,ab} Theta_{ab,c}
    expected = -omega[np.ix_(idx, [a, b])] @ theta
    assert np.max(np.abs(gamma_a - expected[:, 0])) <= 1e-8
    assert np.max(np.abs(gamma_b - expected[:, 1])) <= 1e-8


def test_true_theta_block_trivial_cases():
    theta = true_theta_block(np.eye(4), 0, 2)
    assert np.array_equal(theta.as_matrix(), np.eye(2))
    theta = true_theta_block(np.array([[1.0, 0.5], [0.5, 1.0]]), 0, 1)
    assert np.allclose(theta.as_matrix(), [[1.0, 0.5], [0.5, 1.0]])


def test_true_theta_block_inverts_precision_submatrix():
    model = build_precision(GraphSpec(kind=GraphKind.chain, p=10))
    omega = model.omega.entries
    for a, b in [(0, 1), (3, 7), (9, 2)]:
        theta = true_theta_block(model.sigma, a, b)
        inv = np.linalg.inv(theta.as_matrix())
        assert np.max(np.abs(inv - omega[np.ix_([a, b], [a, b])])) <= 1e-8


def test_four_term_formula_equals_schur_complement():
    rng = np.random.default_rng(5)
    for _ in range(50):
        p = int(rng.integers(3, 13))
        sigma = random_correlation(rng, p)
        a, b = (int(v) for v in rng.choice(p, size=2, replace=False))
        idx = complement_indices(p, a, b)
        G = np.column_stack(true_gamma(sigma, a, b))
        cross = sigma[np.ix_(idx, [a, b])]
        block = sigma[np.ix_([a, b], [a, b])] - G.T @ cross - cross.T @ G + G.T @ sigma[np.ix_(idx, idx)] @ G
        assert np.max(np.abs(block - true_theta_block(sigma, a, b).as_matrix())) <= 1e-8


def test_omega_entry_from_theta_examples():
    assert omega_entry_from_theta(ThetaBlock(a=0, b=1, aa=1, ab=0, bb=1)) == (0.0, 1.0)
    omega_ab, det = omega_entry_from_theta(ThetaBlock(a=0, b=1, aa=2, ab=1, bb=2))
    assert det == 3.0
    assert omega_ab == pytest.approx(-1.0 / 3.0)


def test_omega_entry_matches_dense_inverse():
    rng = np.random.default_rng(8)
    sigma = random_correlation(rng, 7)
    omega = dense_inverse(sigma)
    omega_ab, _ = omega_entry_from_theta(true_theta_block(sigma, 2, 5))
    assert abs(omega_ab - omega[2, 5]) <= 1e-8


def test_singular_theta_raises():
    with pytest.raises(SingularTheta):
        omega_entry_from_theta(ThetaBlock(a=0, b=1, aa=1, ab=1, bb=1))


def test_sparse_norm_examples():
    assert sparse_spectral_norm_exhaustive(np.eye(4), 2) == pytest.approx(1.0)
    assert sparse_spectral_norm_exhaustive(np.diag([3.0, 1.0, 1.0, 1.0]), 1) == pytest.approx(3.0)


def test_sparse_norm_full_support_is_operator_norm():
    rng = np.random.default_rng(2)
    M = rng.standard_normal((6, 6))
    assert abs(sparse_spectral_norm_exhaustive(M, 6) - operator_norm(M)) <= 1e-10
    norms = [sparse_spectral_norm_exhaustive(M, k) for k in range(1, 7)]
    assert all(lo <= hi + 1e-12 for lo, hi in zip(norms, norms[1:]))
    assert norms[0] == pytest.approx(np.abs(M).max())


def test_sparse_norm_dimension_cap():
    with pytest.raises(DimensionTooLarge):
        sparse_spectral_norm_exhaustive(np.eye(17), 2)


def test_bilinear_bound_through_sparse_norm():
    rng = np.random.default_rng(49)
    for _ in range(1000):
        dim = int(rng.integers(2, 9))
        k = int(rng.integers(1, min(3, dim) + 1))
        M = rng.standard_normal((dim, dim))
        u = rng.standard_normal(dim) * (rng.random(dim) < 0.7)
        v = rng.standard_normal(dim) * (rng.random(dim) < 0.7)
        factor_u = np.linalg.norm(u) + np.abs(u).sum() / np.sqrt(k)
        factor_v = np.linalg.norm(v) + np.abs(v).sum() / np.sqrt(k)
        bound = factor_u * factor_v * sparse_spectral_norm_exhaustive(M, k)
        assert bound - abs(u @ M @ v) >= -1e-10
