import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from icsrisk import impact, model
from icsrisk.impact import MttfProxyParams, RankDeficiencyError
from icsrisk.model import DegradationModel, NUMERICAL_A, NUMERICAL_GAMMA, NUMERICAL_KAPPA

A3 = np.array(NUMERICAL_A)


def params(lam=10.0, kappa=0.0, gamma=(1.0, 0.0, 0.0), sigma=1.0, T=4):
    return MttfProxyParams(lam, kappa, np.array(gamma, dtype=float), sigma, T)


def test_identity_estimator_is_minus_A():
    E = impact.estimator_matrix(A3, np.eye(3), np.eye(3))
    assert np.array_equal(E, -A3)


def test_scaled_input_estimator():
    E = impact.estimator_matrix(np.eye(2), 2 * np.eye(2), np.eye(2))
    assert E == pytest.approx(-0.5 * np.eye(2), abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_estimator_matches_normal_equations(seed):
    # 3 states, 2 controllers, 4 sensors: B and C tall with full column rank
    rng = np.random.default_rng(seed)
    A, B, C = rng.normal(size=(3, 3)), rng.normal(size=(3, 2)), rng.normal(size=(4, 3))
    want = -np.linalg.solve(B.T @ B, B.T @ A) @ np.linalg.solve(C.T @ C, C.T)
    assert impact.estimator_matrix(A, B, C) == pytest.approx(want, abs=1e-9)


def test_rank_deficiency_names_matrix():
    B = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(RankDeficiencyError, match="B"):
        impact.estimator_matrix(np.eye(2), B, np.eye(2))


def test_closed_loop_cancels_exactly():
    E = impact.estimator_matrix(A3, np.eye(3), np.eye(3))
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.normal(size=3)
        assert np.array_equal(A3 @ x + E @ x, np.zeros(3))


def test_degradation_rate_examples():
    d0 = DegradationModel.build(0.3, [0.1, 0.2, 0.3], 0.1)
    assert impact.degradation_rate(np.zeros(3), d0) == 0.3
    d1 = DegradationModel.build(0.0, [1.0, 0.0, 0.0], 0.1)
    assert impact.degradation_rate([2.0, 5.0, 9.0], d1) == 2.0
    study = DegradationModel.build(NUMERICAL_KAPPA, NUMERICAL_GAMMA, 0.1)
    assert impact.degradation_rate(np.ones(3), study) == pytest.approx(0.4713 * math.sqrt(2) + 1.112)
    with pytest.raises(ValueError):
        impact.degradation_rate(np.ones(2), study)


def test_z_tau_hand_values():
    X = np.tile([1.0, 0.0, 0.0], (5, 1))
    assert impact.z_tau(X, 4, params()) == pytest.approx(3.0)
    p2 = params(lam=1.0, kappa=0.5, gamma=(0.0, 0.0, 0.0))
    assert impact.z_tau(np.zeros((5, 3)), 4, p2) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        impact.z_tau(X, 5, params())
    with pytest.raises(ValueError):
        impact.z_tau(X, 0, params())


def _trajectory(seed=3, T=40):
    rng = np.random.default_rng(seed)
    return rng.normal(scale=0.7, size=(T + 1, 3))


def test_z_tau_matches_compensated_sum():
    X = _trajectory()
    p = params(lam=31.7, kappa=0.41, gamma=(0.058, 0.058, 0.996), sigma=0.1, T=40)
    for tau in (1, 7, 40):
        acc = math.fsum(float(p.gamma @ X[t]) for t in range(1, tau + 1))
        want = (p.lam - p.kappa * tau - acc) / (p.sigma_s * math.sqrt(tau))
        assert impact.z_tau(X, tau, p) == pytest.approx(want, rel=1e-12, abs=1e-10)


def test_proxy_half_each_term():
    p = params(lam=0.0, kappa=0.0, gamma=(0.0, 0.0, 0.0), T=10)
    assert impact.mttf_proxy(np.zeros((11, 3)), p) == 5.0


def test_proxy_saturates():
    p = params(lam=1e4, kappa=0.0, gamma=(0.0, 0.0, 0.0), sigma=1.0, T=25)
    assert abs(impact.mttf_proxy(np.zeros((26, 3)), p) - 25) <= 1e-12


def test_proxy_matches_quadrature():
    X = _trajectory(seed=5, T=30)
    p = params(lam=12.0, kappa=0.35, gamma=(0.058, 0.058, 0.996), sigma=0.4, T=30)
    dens = lambda u: math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
    want = 0.0
    for z in impact.z_values(X, p):
        val, _ = integrate.quad(dens, -math.inf, z, epsabs=1e-14, epsrel=1e-13)
        want += val
    assert impact.mttf_proxy(X, p) == pytest.approx(want, abs=1e-10)


def test_normal_cdf_lower_tail():
    assert impact.normal_cdf(-10.0) == pytest.approx(7.619853024160527e-24, rel=1e-12)
    assert impact.normal_cdf(0.0) == 0.5


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), bump=st.floats(0.0, 5.0), t=st.integers(1, 12),
       k=st.integers(0, 2))
def test_proxy_monotone_and_bounded(seed, bump, t, k):
    X = _trajectory(seed, T=12)
    p = params(lam=3.0, kappa=0.2, gamma=(0.3, 0.0, 0.9), sigma=0.5, T=12)
    base = impact.mttf_proxy(X, p)
    Y = X.copy()
    Y[t, k] += bump
    moved = impact.mttf_proxy(Y, p)
    assert 0.0 <= base <= 12 and 0.0 <= moved <= 12
    assert moved <= base + 1e-12


def test_moments_constant_rate():
    d = DegradationModel.build(0.7, [0.0, 0.0, 0.0], 0.2)
    mean, var = impact.degradation_moments(np.zeros((11, 3)), 10, d)
    assert mean == pytest.approx(7.0) and var == pytest.approx(0.4)


def test_moments_study_variance():
    d = DegradationModel.build(NUMERICAL_KAPPA, NUMERICAL_GAMMA, 0.1)
    _, var = impact.degradation_moments(np.zeros((101, 3)), 100, d)
    assert var == pytest.approx(1.0)


def test_moments_variance_ignores_trajectory():
    d = DegradationModel.build(0.1, [1.0, 1.0, 1.0], 0.3)
    assert impact.degradation_moments(_trajectory(1), 20, d)[1] == impact.degradation_moments(
        _trajectory(2), 20, d)[1]


def test_moments_match_monte_carlo():
    X = _trajectory(seed=9, T=25)
    d = DegradationModel.build(0.4, [0.5, -0.2, 0.9], 0.3)
    t, n = 25, 100_000
    mean, var = impact.degradation_moments(X, t, d)
    rng = np.random.default_rng(11)
    theta = d.kappa + X[1:t + 1] @ d.gamma
    S = theta.sum() + rng.normal(0.0, d.sigma_s, size=(n, t)).sum(axis=1)
    se_mean = math.sqrt(var / n)
    se_var = var * math.sqrt(2.0 / (n - 1))
    assert abs(S.mean() - mean) <= 3 * se_mean
    assert abs(S.var(ddof=1) - var) <= 3 * se_var


def test_moments_reject_short_trajectory():
    d = DegradationModel.build(0.4, [0.5, -0.2, 0.9], 0.3)
    with pytest.raises(ValueError):
        impact.degradation_moments(np.zeros((3, 3)), 5, d)
    with pytest.raises(ValueError):
        impact.degradation_moments(np.zeros((3, 3)), 0, d)


def test_proxy_params_need_threshold():
    with pytest.raises(ValueError):
        MttfProxyParams.from_model(model.DegradationModel.build(0.1, [1.0], 0.1), 5)
