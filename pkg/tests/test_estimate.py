import numpy as np
import pytest

from regimecredit import (
    EMConfig,
    MarkovChain,
    NumericalError,
    SimulationSpec,
    build_y_series,
    em_fit,
    exact_smoother,
    hamilton_filter,
    log_regime_densities,
    m_step_C,
    m_step_Sigma,
    m_step_transition,
    regime_density,
    simulate_market,
    single_regime_loglik,
    structural_matrices,
)
from regimecredit.estimate import SmootherOutput

from helpers import (
    enumeration_regime_posteriors,
    make_panel,
    make_params,
    random_chain,
)


# ---------------------------------------------------------------- y series


def test_structural_matrices_shape():
    B0, B1 = structural_matrices(1)
    assert B0.shape == (3, 3)
    assert np.allclose(B0, np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -1.0], [0.0, 0.0, 1.0]]))
    assert np.allclose(B1, np.diag([0.0, 0.0, 1.0]))


def _noiseless_log_panel(params, T=6):
    """Data built from the structural equations with the noise set to zero.

    Payments keep a fixed log ratio to values, so the realized log return
    recomputed from (v, p) reproduces the constructed one exactly and the
    structural residual vanishes.
    """
    from regimecredit.panel import LogPanel

    delta = params.delta
    r = np.zeros(T + 1)
    r[0] = 0.01
    v = np.zeros((T + 1, 2))
    v[0] = [0.0, -0.2]
    p = np.empty((T + 1, 2))
    psi = np.ones((T + 1, 1))
    ratio = np.log(0.05)  # log payment-to-value ratio
    p[0] = v[0] + ratio
    for t in range(1, T + 1):
        r[t] = float(params.c_r(0) @ psi[t]) + r[t - 1]
        k = params.C_k(0) @ psi[t] + delta * r[t]
        # V_t (1 + rho) = V_{t-1} e^k with p_t = rho V_t
        v[t] = v[t - 1] + k - np.log1p(np.exp(ratio))
        p[t] = v[t] + ratio
    return LogPanel(v=v, p=p, r=r, psi=psi, company_ids=("a",))


def test_y_series_noiseless_residuals():
    params = make_params(N=1)
    lp = _noiseless_log_panel(params)
    y, psi, B0, B1 = build_y_series(lp)
    assert y.shape == (7, 3)
    resid = y[1:] @ B0.T - psi[1:] @ params.C[0].T - y[:-1] @ B1.T
    assert np.max(np.abs(resid)) < 1e-12


# ---------------------------------------------------------------- densities


def test_regime_density_at_mode():
    # zero residual with identity covariance: (2 pi)^{-3/2}
    y_t = np.zeros(3)
    y_prev = np.zeros(3)
    psi_t = np.ones(1)
    C = np.zeros((3, 1))
    val = regime_density(y_t, y_prev, psi_t, C, np.eye(3))
    assert val == pytest.approx((2.0 * np.pi) ** -1.5, abs=1e-12)
    assert val == pytest.approx(0.06349363593424098, abs=1e-14)


def test_regime_density_gaussian_form():
    rng = np.random.default_rng(1)
    e = rng.normal(0.0, 1.0, 3)
    B0, _ = structural_matrices(1)
    y_t = np.linalg.solve(B0, e)
    val = regime_density(y_t, np.zeros(3), np.zeros(1), np.zeros((3, 1)), np.eye(3))
    assert val == pytest.approx((2.0 * np.pi) ** -1.5 * np.exp(-0.5 * e @ e), rel=1e-12)


def test_regime_densities_match_direct_inverse():
    params = make_params(N=2)
    _, _, lp, _ = make_panel(N=2, T=8, seed=2)
    y, psi, B0, B1 = build_y_series(lp)
    log_eta = log_regime_densities(y, psi, params)
    nt = 3
    for j in range(2):
        S = params.Sigma[j]
        S_inv = np.linalg.inv(S)
        norm_const = (2.0 * np.pi) ** (-nt / 2.0) * np.linalg.det(S) ** -0.5
        for t in range(1, 9):
            e = B0 @ y[t] - params.C[j] @ psi[t] - B1 @ y[t - 1]
            direct = norm_const * np.exp(-0.5 * e @ S_inv @ e)
            assert np.exp(log_eta[t, j]) == pytest.approx(direct, rel=1e-10)


def test_regime_density_singular_sigma():
    with pytest.raises(NumericalError, match="regime 2"):
        log_regime_densities(
            np.zeros((3, 3)),
            np.ones((3, 1)),
            _params_with_singular_sigma(),
        )


def _params_with_singular_sigma():
    # bypass ModelParams validation to exercise the density guard
    params = make_params(N=2)
    Sigma = params.Sigma.copy()
    Sigma[1] = 0.0
    object.__setattr__(params, "Sigma", Sigma)
    return params


# ---------------------------------------------------------------- filter


def test_filter_single_regime():
    chain = MarkovChain(p0=np.array([1.0]), P=np.array([[1.0]]))
    log_eta = np.vstack([[np.nan], np.log(np.array([[0.2], [0.5], [0.1]]))])
    filt = hamilton_filter(log_eta, chain)
    assert np.allclose(filt.z_filt[1:], 1.0)
    assert filt.loglik == pytest.approx(np.log(0.2) + np.log(0.5) + np.log(0.1), abs=1e-12)


def test_filter_uninformative_likelihood():
    rng = np.random.default_rng(3)
    chain = random_chain(2, rng)
    T = 5
    log_eta = np.vstack([np.full((1, 2), np.nan), np.tile(rng.normal(size=(T, 1)), (1, 2))])
    filt = hamilton_filter(log_eta, chain)
    z = chain.p0
    for t in range(1, T + 1):
        assert np.allclose(filt.z_filt[t], z, atol=1e-14)
        z = chain.P.T @ z


def test_filter_matches_enumeration():
    rng = np.random.default_rng(4)
    chain = random_chain(2, rng)
    T = 3
    log_eta = np.vstack([np.full((1, 2), np.nan), rng.normal(0.0, 1.0, (T, 2))])
    filt = hamilton_filter(log_eta, chain)
    filtered, _, _, loglik = enumeration_regime_posteriors(log_eta, chain)
    assert np.max(np.abs(filt.z_filt[1:] - filtered[1:])) < 1e-12
    assert filt.loglik == pytest.approx(loglik, abs=1e-12)


def test_filter_probabilities_sum_to_one():
    rng = np.random.default_rng(5)
    chain = random_chain(3, rng)
    log_eta = np.vstack([np.full((1, 3), np.nan), rng.normal(0.0, 2.0, (20, 3))])
    filt = hamilton_filter(log_eta, chain)
    assert np.allclose(filt.z_filt[1:].sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(filt.z_pred.sum(axis=1), 1.0, atol=1e-12)


def test_filter_underflow_scaling():
    # densities around exp(-1200) underflow raw exponentials; scaling keeps
    # the filter and the likelihood finite
    chain = MarkovChain(p0=np.array([0.5, 0.5]), P=np.array([[0.9, 0.1], [0.1, 0.9]]))
    log_eta = np.vstack([np.full((1, 2), np.nan), np.full((30, 2), -1200.0)])
    filt = hamilton_filter(log_eta, chain)
    assert np.isfinite(filt.loglik)
    assert filt.loglik == pytest.approx(-1200.0 * 30, rel=1e-12)


# ---------------------------------------------------------------- smoother


def test_smoother_single_regime():
    chain = MarkovChain(p0=np.array([1.0]), P=np.array([[1.0]]))
    log_eta = np.vstack([[np.nan], np.log(np.array([[0.2], [0.5], [0.1]]))])
    smooth = exact_smoother(hamilton_filter(log_eta, chain), chain)
    assert np.allclose(smooth.z_smooth[1:], 1.0)
    assert np.allclose(smooth.joint[2:], 1.0)


def test_smoother_terminal_boundary():
    rng = np.random.default_rng(6)
    chain = random_chain(2, rng)
    log_eta = np.vstack([np.full((1, 2), np.nan), rng.normal(0.0, 1.0, (4, 2))])
    filt = hamilton_filter(log_eta, chain)
    smooth = exact_smoother(filt, chain)
    assert np.allclose(smooth.z_smooth[4], filt.z_filt[4], atol=1e-15)


def test_smoother_matches_enumeration():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        chain = random_chain(2, rng)
        T = 4
        log_eta = np.vstack([np.full((1, 2), np.nan), rng.normal(0.0, 1.0, (T, 2))])
        filt = hamilton_filter(log_eta, chain)
        smooth = exact_smoother(filt, chain)
        _, smoothed, joint, _ = enumeration_regime_posteriors(log_eta, chain)
        worst = max(worst, np.max(np.abs(smooth.z_smooth[1:] - smoothed[1:])))
        worst = max(worst, np.max(np.abs(smooth.joint[2:] - joint[2:])))
    assert worst < 1e-10


def test_smoother_marginal_consistency():
    rng = np.random.default_rng(8)
    chain = random_chain(3, rng)
    T = 12
    log_eta = np.vstack([np.full((1, 3), np.nan), rng.normal(0.0, 1.5, (T, 3))])
    filt = hamilton_filter(log_eta, chain)
    smooth = exact_smoother(filt, chain)
    for t in range(2, T + 1):
        assert np.max(np.abs(smooth.joint[t].sum(axis=1) - smooth.z_smooth[t - 1])) < 1e-10
        assert np.max(np.abs(smooth.joint[t].sum(axis=0) - smooth.z_smooth[t])) < 1e-10
        assert smooth.joint[t].sum() == pytest.approx(1.0, abs=1e-10)


# ---------------------------------------------------------------- M-steps


def test_m_step_C_exact_recovery_noiseless():
    params = make_params(N=1)
    lp = _noiseless_log_panel(params, T=8)
    y, psi, _, _ = build_y_series(lp)
    C = m_step_C(y, psi, np.ones(9))
    assert np.max(np.abs(C - params.C[0])) < 1e-10


def test_m_step_C_equals_normal_equations():
    _, _, lp, _ = make_panel(N=2, T=20, seed=9)
    y, psi, B0, B1 = build_y_series(lp)
    C = m_step_C(y, psi, np.ones(21))
    d = y[1:] @ B0.T - y[:-1] @ B1.T
    # explicit normal-equations oracle
    A = psi[1:].T @ psi[1:]
    oracle = (d.T @ psi[1:]) @ np.linalg.inv(A)
    assert np.max(np.abs(C - oracle)) < 1e-12


def test_m_step_C_concentrated_weights_equal_subset_ols():
    _, _, lp, _ = make_panel(N=2, T=20, seed=10)
    y, psi, B0, B1 = build_y_series(lp)
    w = np.zeros(21)
    w[5:12] = 1.0
    C = m_step_C(y, psi, w)
    sub = slice(5, 12)
    d = (y @ B0.T - np.vstack([np.zeros((1, 3)), y[:-1] @ B1.T]))[sub]
    psi_sub = psi[sub]
    oracle = (d.T @ psi_sub) @ np.linalg.inv(psi_sub.T @ psi_sub)
    assert np.max(np.abs(C - oracle)) < 1e-12


def test_m_step_C_weighted_residual_orthogonality():
    _, _, lp, _ = make_panel(N=2, T=30, seed=11)
    y, psi, B0, B1 = build_y_series(lp)
    rng = np.random.default_rng(0)
    w = np.zeros(31)
    w[1:] = rng.dirichlet(np.ones(30)) * 30.0
    C = m_step_C(y, psi, w)
    resid = y[1:] @ B0.T - psi[1:] @ C.T - y[:-1] @ B1.T
    orth = (resid * w[1:, None]).T @ psi[1:]
    assert np.max(np.abs(orth)) < 1e-10


def test_m_step_Sigma_unit_weights():
    _, _, lp, _ = make_panel(N=2, T=15, seed=12)
    y, psi, B0, B1 = build_y_series(lp)
    C = m_step_C(y, psi, np.ones(16))
    S = m_step_Sigma(y, psi, np.ones(16), C)
    resid = y[1:] @ B0.T - psi[1:] @ C.T - y[:-1] @ B1.T
    oracle = resid.T @ resid / 15.0
    assert np.max(np.abs(S - oracle)) < 1e-14


def test_m_step_Sigma_random_weights_oracle():
    _, _, lp, _ = make_panel(N=2, T=15, seed=13)
    y, psi, B0, B1 = build_y_series(lp)
    rng = np.random.default_rng(1)
    w = np.zeros(16)
    w[1:] = rng.uniform(0.1, 1.0, 15)
    C = m_step_C(y, psi, w)
    S = m_step_Sigma(y, psi, w, C)
    resid = y[1:] @ B0.T - psi[1:] @ C.T - y[:-1] @ B1.T
    oracle = (resid * w[1:, None]).T @ resid / w[1:].sum()
    assert np.max(np.abs(S - oracle)) < 1e-12


def test_m_step_Sigma_zero_residuals_floor():
    params = make_params(N=1)
    lp = _noiseless_log_panel(params, T=8)
    y, psi, _, _ = build_y_series(lp)
    C = m_step_C(y, psi, np.ones(9))
    with pytest.warns(UserWarning, match="degenerate"):
        S = m_step_Sigma(y, psi, np.ones(9), C, floor=1e-8)
    assert np.allclose(S, 1e-8 * np.eye(3), atol=1e-12)


def test_m_step_transition_hard_assignments():
    # hard 0/1 smoothed paths reduce the update to transition counting
    labels = np.array([-1, 0, 0, 1, 1, 1, 0, 0, 1])  # entry 0 unused
    T = 8
    N = 2
    z = np.zeros((T + 1, N))
    z[np.arange(1, T + 1), labels[1:]] = 1.0
    joint = np.full((T + 1, N, N), np.nan)
    for t in range(2, T + 1):
        joint[t] = 0.0
        joint[t][labels[t - 1], labels[t]] = 1.0
    prev = MarkovChain(p0=np.array([0.5, 0.5]), P=np.full((2, 2), 0.5))
    chain = m_step_transition(SmootherOutput(z_smooth=z, joint=joint), prev)
    # transitions from 0: 0->0 twice (1-2, 6-7), 0->1 twice (2-3, 7-8); from 1: 1->1 twice, 1->0 once
    assert np.allclose(chain.P[0], [0.5, 0.5], atol=1e-14)
    assert np.allclose(chain.P[1], [1.0 / 3.0, 2.0 / 3.0], atol=1e-14)
    assert np.allclose(chain.p0, [1.0, 0.0], atol=1e-14)


def test_m_step_transition_rows_sum_to_one():
    rng = np.random.default_rng(2)
    T, N = 12, 3
    z = np.full((T + 1, N), np.nan)
    z[1:] = rng.dirichlet(np.ones(N), T)
    joint = np.full((T + 1, N, N), np.nan)
    for t in range(2, T + 1):
        # a consistent joint: outer product pattern normalized, marginals synthetic
        J = np.outer(z[t - 1], z[t])
        joint[t] = J / J.sum()
    prev = MarkovChain(p0=np.full(N, 1.0 / N), P=np.full((N, N), 1.0 / N))
    chain = m_step_transition(SmootherOutput(z_smooth=z, joint=joint), prev)
    assert np.allclose(chain.P.sum(axis=1), 1.0, atol=1e-12)


def test_m_step_transition_literal_variant():
    rng = np.random.default_rng(3)
    chain0 = random_chain(2, rng)
    log_eta = np.vstack([np.full((1, 2), np.nan), rng.normal(0.0, 1.0, (12, 2))])
    filt = hamilton_filter(log_eta, chain0)
    smooth = exact_smoother(filt, chain0)
    default = m_step_transition(smooth, chain0)
    with pytest.warns(UserWarning, match="non-stochastic"):
        literal = m_step_transition(smooth, chain0, literal_paper=True)
    # shared numerator: renormalizing the literal rows recovers the default
    renorm = literal.P / literal.P.sum(axis=1, keepdims=True)
    assert np.max(np.abs(renorm - default.P)) < 1e-12
    assert np.any(np.abs(literal.P.sum(axis=1) - 1.0) > 1e-6)


# ---------------------------------------------------------------- EM


def test_em_single_regime_closed_form():
    _, _, lp, _ = make_panel(N=1, T=60, seed=14)
    fit = em_fit(lp, 1, EMConfig())
    ll, C, Sigma = single_regime_loglik(lp)
    assert fit.loglik == pytest.approx(ll, abs=1e-8)
    assert np.max(np.abs(fit.params.C[0] - C)) < 1e-10
    assert np.max(np.abs(fit.params.Sigma[0] - Sigma)) < 1e-8


def test_em_monotone_and_converged():
    _, _, lp, _ = make_panel(N=2, T=150, seed=15)
    fit = em_fit(lp, 2, EMConfig(seed=0))
    assert np.all(np.diff(fit.trace) >= -1e-10)
    assert fit.converged


def test_em_fixed_point_restart():
    _, _, lp, _ = make_panel(N=2, T=120, seed=16)
    config = EMConfig(seed=0)
    fit = em_fit(lp, 2, config)
    refit = em_fit(lp, 2, EMConfig(seed=0, initial_params=fit.params))
    assert abs(refit.loglik - fit.loglik) < config.loglik_tol * max(1.0, abs(fit.loglik))


def test_em_recovers_well_separated_regimes():
    params = make_params(N=2)
    spec = SimulationSpec(params=params, T=400, equity0=[1.0], liability0=[0.8], seed=21)
    _, regimes, lp = simulate_market(spec)
    fit = em_fit(lp, 2, EMConfig(seed=2))
    hard = fit.smoother.z_smooth[1:].argmax(axis=1)
    truth = regimes[1:]
    acc = max(np.mean(hard == truth), np.mean(hard == 1 - truth))
    assert acc >= 0.9


def test_em_requires_identifiable_sample():
    from regimecredit import ValidationError

    _, _, lp, _ = make_panel(N=2, T=5, seed=17)
    from regimecredit.panel import LogPanel

    short = LogPanel(
        v=lp.v[:3], p=lp.p[:3], r=lp.r[:3], psi=lp.psi[:3], company_ids=lp.company_ids
    )
    with pytest.raises(ValidationError, match="too short"):
        em_fit(short, 2, EMConfig())
