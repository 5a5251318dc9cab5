import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from penscale import (
    LAMBDA_FLOOR,
    AlsConfig,
    DataValidationError,
    OrdinalDataMatrix,
    PenaltyConfig,
    Quantification,
    als_fit,
    build_indicator,
    orient,
    pca,
    pseudo_responses,
    quantification_step,
    standardize_columns,
    vaf,
)
from penscale.scaling import first_diff_matrix, second_diff_matrix, second_diff_penalty

from conftest import make_ordinal, pava


def test_first_diff_matrix():
    np.testing.assert_array_equal(first_diff_matrix(3), [[-1, 1, 0], [0, -1, 1]])
    for k in (2, 5, 9):
        D1 = first_diff_matrix(k)
        np.testing.assert_array_equal(D1 @ np.ones(k), np.zeros(k - 1))
        np.testing.assert_array_equal(D1 @ np.arange(1, k + 1), np.ones(k - 1))


def test_second_diff_penalty_examples():
    assert np.arange(1, 5) @ second_diff_penalty(4) @ np.arange(1, 5) == pytest.approx(0.0)
    theta = np.array([0.0, 1.0, 0.0])
    assert theta @ second_diff_penalty(3) @ theta == pytest.approx(4.0)
    np.testing.assert_array_equal(second_diff_matrix(4), [[1, -2, 1, 0], [0, 1, -2, 1]])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 7, elements=st.floats(-10, 10)))
def test_penalty_matches_direct_sum(theta):
    direct = sum((theta[l] - 2 * theta[l - 1] + theta[l - 2]) ** 2 for l in range(2, 7))
    np.testing.assert_allclose(theta @ second_diff_penalty(7) @ theta, direct, rtol=1e-12, atol=1e-9)


def test_penalty_config_scales_by_levels():
    data = OrdinalDataMatrix(np.array([[1, 1], [2, 2], [3, 1], [4, 2], [1, 2]]))
    pen = PenaltyConfig.for_data(data, 0.5, monotone=[True, False])
    np.testing.assert_allclose(pen.per_variable_lambda, [1.5, 0.5])
    assert pen.monotone_mask == (True, False)
    assert pen.with_lambda(2.0).lam == 2.0
    with pytest.raises(DataValidationError):
        PenaltyConfig.for_data(data, -1.0)


def _one_variable(seed=0, n=60, k=4):
    rng = np.random.default_rng(seed)
    levels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    Z = np.eye(k)[levels]
    u = rng.normal(size=n) + np.sin(levels)
    phi = standardize_columns(levels[:, None].astype(float)).values.ravel()
    return Z, u, phi, levels


def test_step_output_is_standardized():
    Z, u, phi, _ = _one_variable()
    for lam in (0.0, 0.3, 50.0):
        q = quantification_step(Z, u, lam, phi)
        col = Z @ q.theta
        assert abs(col.mean()) < 1e-12
        assert col.var(ddof=1) == pytest.approx(1.0)


def test_step_level_means_at_lambda_zero():
    Z, u, phi, levels = _one_variable(3)
    q = quantification_step(Z, u, 0.0, phi)
    means = np.array([u[levels == l].mean() for l in range(4)])
    np.testing.assert_allclose(q.raw_theta, means, atol=1e-10)


def test_step_large_lambda_is_linear():
    Z, u, phi, _ = _one_variable(5, k=6)
    q = quantification_step(Z, u, 1e8 * 5, phi)
    assert np.max(np.abs(np.diff(q.theta, 2))) <= 1e-3
    assert np.all(np.diff(q.theta) > 0)


def test_step_monotone_pools_like_isotonic_regression():
    counts = np.array([10, 20, 15])
    levels = np.repeat(np.arange(3), counts)
    Z = np.eye(3)[levels]
    target = np.array([3.0, 1.0, 2.0])
    u = target[levels] + np.tile([-0.5, 0.5], levels.size // 2 + 1)[: levels.size] * 0.1
    means = np.array([u[levels == l].mean() for l in range(3)])
    assert np.any(np.diff(means) < 0)
    phi = standardize_columns(levels[:, None].astype(float)).values.ravel()
    q = quantification_step(Z, u, 0.0, phi, monotone=True)
    np.testing.assert_allclose(q.raw_theta, pava(means, counts), atol=1e-10)
    assert np.all(np.diff(q.theta) >= 0)


def test_step_rejects_unobserved_levels_at_zero():
    Z, u, phi, _ = _one_variable()
    Z = np.column_stack([Z, np.zeros(Z.shape[0])])
    with pytest.raises(Exception, match="unobserved"):
        quantification_step(Z, u, 0.0, phi)
    q = quantification_step(Z, u, LAMBDA_FLOOR * 4, phi)
    assert np.all(np.isfinite(q.theta))


@pytest.mark.parametrize("normalization", ["rescale", "linearized"])
def test_monotone_step_under_each_normalization(normalization):
    Z, u, phi, _ = _one_variable(8)
    q = quantification_step(Z, u, 2.0, phi, monotone=True, normalization=normalization)
    assert np.all(np.diff(q.theta) >= -1e-12)


def test_limit_reproduces_linear_pca():
    data = make_ordinal(4, n=150, p=8)
    fit = als_fit(data, PenaltyConfig.for_data(data, 1e8), AlsConfig(m=2))
    lin = pca(standardize_columns(data.values), data.p).eigenvalues
    np.testing.assert_allclose(fit.eigenvalues, lin, atol=1e-4)
    for q in fit.quantifications:
        assert np.max(np.abs(np.diff(q.theta, 2))) <= 1e-3


def test_nonlinear_scaling_beats_linear_pca():
    rng = np.random.default_rng(12)
    n, p = 300, 6
    F = rng.normal(size=(n, 2)) @ rng.normal(size=(2, p)) + 0.3 * rng.normal(size=(n, p))
    F = np.exp(F / F.std(axis=0))
    cuts = np.quantile(F, [0.2, 0.4, 0.6, 0.8], axis=0)
    L = np.column_stack([1 + np.searchsorted(cuts[:, j], F[:, j]) for j in range(p)])
    data = OrdinalDataMatrix(L)
    fit = als_fit(data, PenaltyConfig.for_data(data, 0.1), AlsConfig(m=2, epsilon=1e-10, max_iter=2000))
    linear = vaf(pca(standardize_columns(L), 2), 2)
    assert fit.vaf_m > linear


def _penalized_losses(data, lam, monotone, m=2, max_iter=200):
    pen = PenaltyConfig.for_data(data, lam, monotone)
    lams = pen.per_variable_lambda
    losses = []

    def cb(it, Phi, qs):
        ev = pca(standardize_columns(Phi), m).eigenvalues
        penalty = sum(lams[j] * q.theta @ pen.omega[j] @ q.theta for j, q in enumerate(qs))
        losses.append((data.n - 1) * (data.p - ev[:m].sum()) + penalty)

    fit = als_fit(data, pen, AlsConfig(m=m, max_iter=max_iter), callback=cb)
    return np.array(losses), fit


@pytest.mark.parametrize("lam", [0.0, 0.05, 1.0, 20.0])
@pytest.mark.parametrize("monotone", [False, True])
def test_penalized_loss_descends(lam, monotone):
    for seed in range(3):
        losses, fit = _penalized_losses(make_ordinal(seed, n=150, p=8), lam, monotone)
        assert np.all(np.diff(losses) <= 1e-9 * max(1.0, abs(losses[0])))
        if lam == 0:
            assert np.all(np.diff(fit.loss_trace) <= 1e-9 * fit.loss_trace[0])


def test_first_iteration_matches_pseudo_response_means():
    data = make_ordinal(9, n=150, p=6)
    captured = {}

    def cb(it, Phi, qs):
        if it == 1:
            captured["raw"] = [q.raw_theta for q in qs]

    als_fit(data, PenaltyConfig.for_data(data, LAMBDA_FLOOR), AlsConfig(m=2, max_iter=3), callback=cb)
    U = pseudo_responses(pca(standardize_columns(data.values), 2)).values
    for j in range(data.p):
        lev = data.values[:, j]
        means = np.array([U[lev == l, j].mean() for l in range(1, data.level_counts[j] + 1)])
        np.testing.assert_allclose(captured["raw"][j], means, atol=1e-6)


def test_fit_result_fields_and_convergence_flag(caplog):
    data = make_ordinal(1, n=100, p=5)
    fit = als_fit(data, PenaltyConfig.for_data(data, 0.5), AlsConfig(m=2))
    assert fit.converged and fit.iterations == fit.convergence_trace.size
    assert fit.eigenvalues.sum() == pytest.approx(data.p)
    assert fit.vaf_m == pytest.approx(fit.eigenvalues[:2].sum() / data.p)
    np.testing.assert_allclose(fit.scaled.values.std(axis=0, ddof=1), 1.0)
    for j, q in enumerate(fit.quantifications):
        np.testing.assert_allclose(build_indicator(data, j).entries @ q.theta, fit.scaled.values[:, j], atol=1e-6)
    with caplog.at_level(logging.WARNING, logger="penscale"):
        short = als_fit(data, PenaltyConfig.for_data(data, 0.5), AlsConfig(m=2, max_iter=1, epsilon=1e-15))
    assert not short.converged
    assert "did not converge" in caplog.text


def test_unobserved_levels_use_floor_at_zero():
    data = make_ordinal(2, n=100, p=4, k=4)
    declared = OrdinalDataMatrix(data.values, level_counts=[5, 4, 4, 4])
    fit = als_fit(declared, PenaltyConfig.for_data(declared, 0.0), AlsConfig(m=2))
    assert fit.quantifications[0].theta.size == 5
    assert np.all(np.isfinite(fit.quantifications[0].theta))


def test_m_larger_than_p_rejected():
    data = make_ordinal(0, n=50, p=3)
    with pytest.raises(DataValidationError):
        als_fit(data, PenaltyConfig.for_data(data, 0.1), AlsConfig(m=4))


def test_restarts_never_worse():
    data = make_ordinal(6, n=120, p=6)
    base = als_fit(data, PenaltyConfig.for_data(data, 0.0), AlsConfig(m=2))
    multi = als_fit(data, PenaltyConfig.for_data(data, 0.0), AlsConfig(m=2, n_restarts=3, seed=1))
    assert multi.vaf_m >= base.vaf_m - 1e-6


def test_orient_examples():
    np.testing.assert_array_equal(orient(np.array([3.0, 2.0, 1.0])), [-3, -2, -1])
    np.testing.assert_array_equal(orient(np.array([1.0, 0.0, 1.0])), [1, 0, 1])
    np.testing.assert_array_equal(orient(np.array([-1.0, 0.0, -1.0])), [1, 0, 1])
    q = orient(Quantification(np.array([2.0, 1.0, 0.0]), 0))
    assert q.orientation == "flipped"
    np.testing.assert_array_equal(orient(np.array([-1.0, 0.0, -2.0]), rule="convex"), [1, 0, 2])
    with pytest.raises(ValueError):
        orient(np.zeros(3), rule="other")


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 5, elements=st.floats(-5, 5)))
def test_orient_is_idempotent(theta):
    once = orient(theta)
    np.testing.assert_array_equal(orient(once), once)
