import math

import numpy as np
import pytest
from scipy import stats

from app.errors import DegenerateIndicator, DimensionMismatch, NotPositiveDefinite, RateOutOfRange
from app.rank_correlation import kendall_tau_pair
from app.schemas import (
    ContaminationMechanism,
    ContaminationSpec,
    GraphKind,
    GraphSpec,
    MarginalSet,
    RadiusKind,
    RadiusLaw,
)
from app.synthetic_data import (
    apply_marginals,
    build_precision,
    contaminate,
    default_target_edges,
    empirical_tail_dependence,
    grid_index,
    sample_elliptical,
    tail_dependence_curve,
)

SQRT_HALF = 1.0 / math.sqrt(2.0)
BIVARIATE = np.array([[1.0, SQRT_HALF], [SQRT_HALF, 1.0]])


def test_grid_constant_from_coverage_tables():
    model = build_precision(GraphSpec(kind=GraphKind.grid, side=30, omega=0.24))
    a, b = grid_index(30, 2, 2), grid_index(30, 2, 3)
    assert abs(model.truth(a, b) - 0.37) <= 0.01


def test_chain_constant_from_coverage_tables():
    model = build_precision(GraphSpec(kind=GraphKind.chain, p=1000, rho_chain=0.5))
    assert abs(model.truth(9, 10) - 10.38) <= 0.05


def test_pair_design_with_zero_rho_is_identity():
    model = build_precision(GraphSpec(kind=GraphKind.pair, p=5, rho=0.0))
    assert np.array_equal(model.sigma.entries, np.eye(5))
    assert np.allclose(model.omega.entries, np.eye(5))


def test_round_trip_and_grid_adjacency():
    side = 6
    model = build_precision(GraphSpec(kind=GraphKind.grid, side=side, omega=0.24))
    assert np.max(np.abs(model.omega.entries @ model.sigma.entries - np.eye(side * side))) <= 1e-8
    off = model.omega0.entries[~np.eye(side * side, dtype=bool)]
    nonzero = off[off != 0]
    assert nonzero.size == 4 * side * (side - 1)
    assert np.all(nonzero == 0.24)


def test_indefinite_design_is_rejected():
    with pytest.raises(NotPositiveDefinite):
        build_precision(GraphSpec(kind=GraphKind.chain, p=10, rho_chain=0.9))


def test_grid_index_and_default_edges():
    assert grid_index(10, 1, 1) == 0
    assert grid_index(10, 2, 3) == 12
    with pytest.raises(DimensionMismatch):
        grid_index(10, 0, 1)
    edges = default_target_edges(build_precision(GraphSpec(kind=GraphKind.grid, side=10)))
    assert [(e.a, e.b) for e in edges] == [(11, 12), (11, 22), (11, 99)]
    assert edges[0].truth != 0.0
    assert edges[1].truth == pytest.approx(0.0, abs=1e-10)
    chain = default_target_edges(build_precision(GraphSpec(kind=GraphKind.chain, p=20)))
    assert [(e.a, e.b) for e in chain] == [(9, 10), (9, 11), (9, 19)]


def test_sampling_is_reproducible():
    sigma = build_precision(GraphSpec(kind=GraphKind.grid, side=3)).sigma
    law = RadiusLaw(kind=RadiusKind.abs_t, df=5)
    first = sample_elliptical(100, sigma, law, seed=17)
    second = sample_elliptical(100, sigma, law, seed=17)
    assert np.array_equal(first, second)


def test_chi_radius_reproduces_covariance():
    sigma = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, -0.3], [0.2, -0.3, 1.0]])
    X = sample_elliptical(100_000, sigma, RadiusLaw(kind=RadiusKind.chi), seed=3)
    assert np.max(np.abs(np.cov(X, rowvar=False) - sigma)) <= 0.03


def test_spherical_data_has_zero_tau():
    X = sample_elliptical(20000, np.eye(2), RadiusLaw(kind=RadiusKind.abs_t, df=1), seed=8)
    assert abs(kendall_tau_pair(X[:, 0], X[:, 1])) <= 0.02


def test_tau_does_not_depend_on_radius():
    X = sample_elliptical(20000, BIVARIATE, RadiusLaw(kind=RadiusKind.abs_t, df=5), seed=9)
    assert abs(kendall_tau_pair(X[:, 0], X[:, 1]) - 0.5) <= 0.02


def test_chi_radius_matches_direct_gaussian_sampling():
    sigma = np.array([[1.0, 0.4, 0.0], [0.4, 1.0, 0.4], [0.0, 0.4, 1.0]])
    weights = np.array([0.3, -1.0, 0.7])
    elliptical = sample_elliptical(10000, sigma, RadiusLaw(kind=RadiusKind.chi), seed=31) @ weights
    direct = np.random.default_rng(32).multivariate_normal(np.zeros(3), sigma, size=10000) @ weights
    assert stats.ks_2samp(elliptical, direct).pvalue > 0.001


def test_radius_draws_are_positive():
    rng = np.random.default_rng(0)
    from app.synthetic_data import draw_radius

    for law in [RadiusLaw(kind=kind, df=df) for kind in RadiusKind for df in (0.5, 5.0, math.inf)]:
        assert np.all(draw_radius(law, 500, 4, rng) > 0)


def test_identity_marginals_leave_data_unchanged():
    X = np.random.default_rng(1).standard_normal((20, 4))
    assert np.array_equal(apply_marginals(X, MarginalSet(transforms=["identity"])), X)


def test_marginals_cycle_and_keep_tau():
    X = np.random.default_rng(2).standard_normal((60, 6))
    Y = apply_marginals(X, MarginalSet())
    assert np.allclose(Y[:, 2], X[:, 2] ** 3)
    assert np.array_equal(Y[:, 5], X[:, 5])
    assert kendall_tau_pair(Y[:, 2], Y[:, 1]) == kendall_tau_pair(X[:, 2], X[:, 1])
    back = np.sign(Y[:, 1]) * Y[:, 1] ** 2
    assert np.max(np.abs(back - X[:, 1])) <= 1e-10


def test_unknown_marginal_is_rejected():
    with pytest.raises(ValueError):
        MarginalSet(transforms=["log"])


def test_contamination_below_one_row_is_a_no_op():
    X = np.random.default_rng(3).standard_normal((10, 4))
    spec = ContaminationSpec(mechanism=ContaminationMechanism.random_row, rate=0.05, seed=1)
    assert np.array_equal(contaminate(X, spec), X)


def test_deterministic_rows():
    X = np.random.default_rng(4).standard_normal((10, 5))
    out = contaminate(X, ContaminationSpec(mechanism=ContaminationMechanism.deterministic_row, rate=0.2, seed=2))
    pattern = np.array([5.0, -5.0, 5.0, -5.0, 5.0])
    assert sum(np.array_equal(row, pattern) for row in out) == 2
    assert np.sum(np.any(out != X, axis=1)) == 2


def test_random_rows_and_elements_counts():
    X = np.random.default_rng(5).standard_normal((100, 10))
    rows = contaminate(X, ContaminationSpec(mechanism=ContaminationMechanism.random_row, rate=0.1, seed=3))
    assert np.sum(np.any(rows != X, axis=1)) == 10
    cells = contaminate(X, ContaminationSpec(mechanism=ContaminationMechanism.element, rate=0.05, seed=4))
    assert np.sum(cells != X) == 50


def test_contamination_rate_bounds():
    X = np.zeros((10, 2))
    for rate in (0.0, 1.0, 1.5):
        with pytest.raises(RateOutOfRange):
            contaminate(X, ContaminationSpec(mechanism=ContaminationMechanism.element, rate=rate, seed=0))


def test_median_tail_dependence_equals_tau():
    for idx, df in enumerate((1.0, 5.0, math.inf)):
        X = sample_elliptical(20000, BIVARIATE, RadiusLaw(kind=RadiusKind.mvt, df=df), seed=100 + idx)
        assert abs(empirical_tail_dependence(X, 0, 1, 0.5) - 0.5) <= 0.03


def test_tail_dependence_independent_and_gaussian_decay():
    X = np.random.default_rng(6).standard_normal((20000, 2))
    assert abs(empirical_tail_dependence(X, 0, 1, 0.5)) <= 0.05
    G = sample_elliptical(20000, BIVARIATE, RadiusLaw(kind=RadiusKind.chi), seed=7)
    assert empirical_tail_dependence(G, 0, 1, 0.95) < empirical_tail_dependence(G, 0, 1, 0.5)


def test_tail_dependence_needs_nonconstant_indicators():
    X = np.column_stack([np.ones(50), np.arange(50.0)])
    with pytest.raises(DegenerateIndicator):
        empirical_tail_dependence(X, 0, 1, 0.5)


def test_tail_dependence_curve_layout():
    frame = tail_dependence_curve(n=2000, seed=1)
    assert list(frame.columns) == ["df", "alpha", "tail"]
    assert len(frame) == 5 * 10
