import math

import numpy as np
import pytest
from scipy.special import ndtri

from app.baselines import (
    normal_scores,
    npn_delta,
    npn_matrix,
    pearson_matrix,
    plugin_edge,
    precision_from_rows,
    pseudo_score_edge,
    pseudo_score_inference,
)
from app.errors import ConstantColumn, DegenerateDenominator
from app.matrix_core import dense_inverse, normalize_to_correlation
from app.rank_correlation import kendall_tau_matrix, sine_transform
from app.rocket_core import rocket_edge
from app.schemas import Estimator, GraphKind, GraphSpec, LassoConfig, MarginalSet, RadiusKind, RadiusLaw
from app.synthetic_data import apply_marginals, build_precision, grid_index, sample_elliptical


def test_pearson_examples():
    x = np.random.default_rng(0).standard_normal(40)
    R = pearson_matrix(np.column_stack([x, x, -x]))
    assert R.entries[0, 1] == pytest.approx(1.0)
    assert R.entries[0, 2] == pytest.approx(-1.0)


def test_pearson_recovers_correlation():
    sigma = np.array([[1.0, 0.7], [0.7, 1.0]])
    X = sample_elliptical(20000, sigma, RadiusLaw(kind=RadiusKind.chi), seed=1)
    assert abs(pearson_matrix(X).entries[0, 1] - 0.7) <= 0.02


def test_pearson_rejects_constant_column():
    X = np.column_stack([np.arange(10.0), np.ones(10)])
    with pytest.raises(ConstantColumn):
        pearson_matrix(X)


def test_npn_delta_value():
    assert npn_delta(400) == pytest.approx(1.0 / (4.0 * 400 ** 0.25 * math.sqrt(math.pi * math.log(400))))
    assert npn_delta(400) == pytest.approx(0.01293, abs=1e-4)


def test_npn_invariant_to_monotone_transforms():
    X = np.random.default_rng(2).standard_normal((300, 5))
    assert np.array_equal(npn_matrix(X).entries, npn_matrix(apply_marginals(X, MarginalSet())).entries)


def test_normal_scores_respect_winsorization():
    n = 400
    scores = normal_scores(np.random.default_rng(3).standard_normal((n, 3)))
    delta = npn_delta(n)
    assert scores.min() >= ndtri(delta)
    assert scores.max() <= ndtri(1.0 - delta)


def test_npn_close_to_pearson_for_gaussian_data():
    sigma = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.3], [0.2, 0.3, 1.0]])
    X = sample_elliptical(20000, sigma, RadiusLaw(kind=RadiusKind.chi), seed=4)
    assert np.max(np.abs(npn_matrix(X).entries - pearson_matrix(X).entries)) <= 0.03


def test_plugin_matrices_are_correlation_matrices():
    X = np.random.default_rng(5).standard_normal((50, 8))
    for R in (pearson_matrix(X), npn_matrix(X)):
        M = R.entries
        assert np.array_equal(M, M.T)
        assert np.all(np.diag(M) == 1.0)
        assert np.linalg.eigvalsh(M).min() >= -1e-10


def test_plugin_edge_on_identity():
    result = plugin_edge(np.eye(6), 100, 0, 1, LassoConfig(lam=0.1))
    assert result.omega_ab == 0.0
    assert result.s_ab == 1.0


def test_plugin_edge_on_population_grid_is_exact():
    model = build_precision(GraphSpec(kind=GraphKind.grid, side=4))
    a, b = grid_index(4, 2, 2), grid_index(4, 2, 3)
    result = plugin_edge(model.sigma, 400, a, b, LassoConfig(lam=0.0))
    assert abs(result.omega_ab - model.truth(a, b)) <= 1e-8


def test_plugin_and_rank_estimators_share_the_point_estimate():
    model = build_precision(GraphSpec(kind=GraphKind.grid, side=4))
    X = sample_elliptical(150, model.sigma, RadiusLaw(), seed=6)
    cfg = LassoConfig()
    sigma_hat = sine_transform(kendall_tau_matrix(X))
    plugin = plugin_edge(sigma_hat, 150, 5, 6, cfg, estimator=Estimator.pearson)
    rank = rocket_edge(X, 5, 6, cfg)
    assert plugin.omega_ab == rank.omega_ab
    assert plugin.s_ab != rank.s_ab


def test_pseudo_score_fixed_point():
    rng = np.random.default_rng(7)
    for _ in range(100):
        p = int(rng.integers(3, 9))
        A = rng.standard_normal((p, p + 4))
        S = normalize_to_correlation(A @ A.T).entries
        W = dense_inverse(S)
        a, b = (int(v) for v in rng.choice(p, size=2, replace=False))
        assert abs(pseudo_score_edge(S, W, a, b) - W[a, b]) <= 1e-10


def test_pseudo_score_identity_and_degenerate_denominator():
    assert pseudo_score_edge(np.eye(4), np.eye(4), 0, 1) == 0.0
    W = np.eye(3)
    W[0, 1] = W[1, 0] = 0.5
    with pytest.raises(DegenerateDenominator):
        pseudo_score_edge(np.eye(3), W, 0, 1)


def test_pseudo_score_one_step_formula():
    model = build_precision(GraphSpec(kind=GraphKind.grid, side=4))
    S, omega = model.sigma.entries, model.omega.entries
    a, b, eps = 5, 6, 0.01
    W = omega.copy()
    W[a, b] += eps
    W[b, a] += eps
    # (W S)_ab = (S W)_ab = eps and (W S W)_ab = W_ab + eps + eps^2 S_ab
    expected = W[a, b] + (eps + eps ** 2 * S[a, b]) / (1.0 - 2.0 * eps)
    assert pseudo_score_edge(S, W, a, b) == pytest.approx(expected, abs=1e-10)


def test_precision_from_rows_on_population():
    model = build_precision(GraphSpec(kind=GraphKind.chain, p=8))
    W = precision_from_rows(model.sigma, LassoConfig(lam=0.0, tol=1e-12, max_sweeps=100000))
    assert np.max(np.abs(W - model.omega.entries)) <= 1e-6


def test_pseudo_score_inference_carries_surrogate_flag():
    model = build_precision(GraphSpec(kind=GraphKind.chain, p=8))
    X = sample_elliptical(200, model.sigma, RadiusLaw(), seed=9)
    S = sine_transform(kendall_tau_matrix(X))
    W = precision_from_rows(S, LassoConfig().resolved(200, 8))
    result = pseudo_score_inference(S, W, 200, 2, 3)
    assert "surrogate_variance" in result.warnings
    assert result.estimator == Estimator.pseudo_score
    assert result.ci_lo <= result.omega_ab <= result.ci_hi
