"""Built-in oracle suites behind the ``check`` CLI subcommand.

Each suite exercises one slice of the pipeline against an independent
reference (closed forms, brute-force enumeration, quadrature, or seeded
Monte Carlo at desk scale) and reports a pass/fail line.  The pytest
acceptance suite runs the same comparisons at full budgets; these are the
quick self-diagnostics shipped with the tool.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

from .chain import MarkovChain, enumerate_paths, path_probability
from .dynamics import (
    bond_price,
    build_p_dynamics,
    build_q_dynamics,
    conditional_moments,
    forward_shift,
    transition_product,
)
from .estimate import exact_smoother, hamilton_filter, log_regime_densities, build_y_series
from .linearize import mu_closed_form, newton_solve_mu, solve_mu_schedule, asset_schedule
from .model import ModelParams
from .pricing import (
    ValuationRequest,
    gaussian_rectangle_probability,
    lognormal_call,
    lognormal_put,
    mixture_default_prob,
    mixture_valuation,
    path_asset_law,
)
from .simulate import SimulationSpec, simulate_market, simulate_states


def toy_params(N: int = 2, seed: int = 0) -> ModelParams:
    """Small, stable single-company parameter set used by the check suites."""
    if N == 1:
        chain = MarkovChain(p0=np.array([1.0]), P=np.array([[1.0]]))
        C = np.array([[[0.05], [0.03], [0.001]]])
        Sigma = np.array([_toy_sigma(0.020, 0.012, 0.004, rho=0.3)])
    else:
        chain = MarkovChain(
            p0=np.array([0.6, 0.4]), P=np.array([[0.90, 0.10], [0.15, 0.85]])
        )
        C = np.array([[[0.05], [0.03], [0.001]], [[-0.02], [0.05], [-0.002]]])
        Sigma = np.array(
            [
                _toy_sigma(0.020, 0.012, 0.004, rho=0.3),
                _toy_sigma(0.045, 0.028, 0.009, rho=-0.2),
            ]
        )
    return ModelParams(C=C, Sigma=Sigma, chain=chain, n=1, l=1)


def _toy_sigma(s_e: float, s_l: float, s_r: float, rho: float) -> np.ndarray:
    sd = np.array([s_e, s_l, s_r])
    corr = np.array([[1.0, 0.25, rho], [0.25, 1.0, rho / 2], [rho, rho / 2, 1.0]])
    return corr * np.outer(sd, sd)


def toy_fixture(N: int = 2, T: int = 10, seed: int = 0):
    params = toy_params(N)
    spec = SimulationSpec(
        params=params, T=T, equity0=np.array([1.0]), liability0=np.array([0.8]), seed=seed
    )
    panel, regimes, lp = simulate_market(spec)
    sched = solve_mu_schedule(lp, params)
    return params, panel, lp, sched, regimes


def check_newton(seed: int = 0):
    grid = -np.exp(np.linspace(np.log(1e-6), np.log(20.0), 200))
    worst = max(abs(newton_solve_mu(a) - float(mu_closed_form(a))) for a in grid)
    return worst < 1e-12, f"max |newton - closed form| = {worst:.3e} over a in [-20, -1e-6]"


def check_parity(seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(200):
        mu = rng.normal(0.0, 1.0)
        var = rng.uniform(0.0, 0.5)
        k = rng.uniform(0.05, 3.0)
        resid = lognormal_call(mu, var, k) - lognormal_put(mu, var, k) - (
            np.exp(mu + var / 2.0) - k
        )
        worst = max(worst, abs(resid))
    params, _, lp, sched, _ = toy_fixture(N=2, T=8, seed=seed)
    req = ValuationRequest(t=2, maturity=5, strikes=[1.0], thresholds=[1.0])
    y, psi, _, _ = build_y_series(lp)
    filt = hamilton_filter(log_regime_densities(y, psi, params), params.chain)
    rep = mixture_valuation(req, params, sched, filt.z_filt[2], lp.x(2))
    mix_resid = abs(
        float(rep.call[0] - rep.put[0] - (rep.asset_forward_value[0] - req.strikes[0] * rep.bond_price))
    )
    worst = max(worst, mix_resid)
    return worst < 1e-10, f"max parity residual = {worst:.3e}"


def _enumeration_posteriors(log_eta, chain, T):
    paths = enumerate_paths(chain.N, T)
    lik = np.array(
        [path_probability(chain, p) * np.prod(np.exp(log_eta[1:, :])[np.arange(T), p])
         for p in paths]
    )
    post = lik / lik.sum()
    z_smooth = np.zeros((T + 1, chain.N))
    for t in range(1, T + 1):
        for j in range(chain.N):
            z_smooth[t, j] = post[paths[:, t - 1] == j].sum()
    return paths, post, z_smooth


def check_filter(seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        N, T = int(rng.integers(2, 4)), int(rng.integers(3, 7))
        chain = _random_chain(N, rng)
        log_eta = np.vstack([np.full((1, N), np.nan), rng.normal(0.0, 1.0, (T, N))])
        filt = hamilton_filter(log_eta, chain)
        paths, post, z_smooth = _enumeration_posteriors(log_eta, chain, T)
        for t in range(1, T + 1):
            sub_paths = enumerate_paths(chain.N, t)
            lik = np.array(
                [path_probability(chain, p)
                 * np.prod(np.exp(log_eta[1 : t + 1])[np.arange(t), p])
                 for p in sub_paths]
            )
            lik /= lik.sum()
            for j in range(chain.N):
                brute = lik[sub_paths[:, t - 1] == j].sum()
                worst = max(worst, abs(filt.z_filt[t, j] - brute))
    return worst < 1e-10, f"max |filter - enumeration| = {worst:.3e}"


def check_smoother(seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        N, T = int(rng.integers(2, 4)), int(rng.integers(3, 7))
        chain = _random_chain(N, rng)
        log_eta = np.vstack([np.full((1, N), np.nan), rng.normal(0.0, 1.0, (T, N))])
        filt = hamilton_filter(log_eta, chain)
        smooth = exact_smoother(filt, chain)
        paths, post, z_brute = _enumeration_posteriors(log_eta, chain, T)
        worst = max(worst, np.max(np.abs(smooth.z_smooth[1:] - z_brute[1:])))
        for t in range(2, T + 1):
            for i in range(N):
                for j in range(N):
                    mask = (paths[:, t - 2] == i) & (paths[:, t - 1] == j)
                    worst = max(worst, abs(smooth.joint[t, i, j] - post[mask].sum()))
    return worst < 1e-10, f"max |smoother - enumeration| = {worst:.3e}"


def check_dynamics(seed: int = 0):
    params, _, lp, sched, _ = toy_fixture(N=2, T=8, seed=seed)
    rng = np.random.default_rng(seed)
    t, T = 2, 7
    path = rng.integers(0, 2, T - t)
    worst = 0.0
    for build in (build_p_dynamics, build_q_dynamics):
        dyn = build(params, sched, path, t)
        for i in range(t + 1, T + 1):
            for beta in range(t, i + 1):
                lhs = transition_product(dyn, beta, i)
                rhs = _closed_form_pi(dyn, beta, i, sched)
                worst = max(worst, np.max(np.abs(lhs - rhs)))
    return worst < 1e-12, f"max |iterated - closed form| = {worst:.3e}"


def _closed_form_pi(dyn, beta, i, sched):
    # Block displays of the repeated-substitution coefficients.
    n2 = dyn.nt - 1
    t = dyn.t
    g = lambda s: sched.g[s]
    top = np.diag(np.prod([g(a) for a in range(beta + 1, i + 1)], axis=0)) \
        if beta < i else np.eye(n2)
    out = np.zeros((dyn.nt, dyn.nt))
    out[:n2, :n2] = top
    if dyn.measure == "P":
        delta = np.concatenate([np.zeros(n2 // 2), np.ones(n2 // 2)])
        start = beta + 1 if beta == t else beta
        col = np.zeros(n2)
        for alpha in range(start, i + 1):
            col += np.prod([g(s) for s in range(alpha, i + 1)], axis=0) * delta
        out[:n2, n2] = col
        out[n2, n2] = 1.0
    else:
        F = lambda s: dyn.F[dyn.idx(s)]
        start = beta + 1 if beta == t else beta
        col = np.zeros(n2)
        for alpha in range(beta + 1, i + 1):
            prod_g = np.prod([g(s) for s in range(alpha, i + 1)], axis=0)
            prod_f = np.prod([1.0 / F(s) for s in range(start, alpha)])
            col += prod_g * prod_f
        out[:n2, n2] = col
        out[n2, n2] = np.prod([1.0 / F(s) for s in range(start, i + 1)])
    return out


def check_bond(seed: int = 0, n_mc: int = 200_000):
    params, _, lp, sched, _ = toy_fixture(N=1, T=8, seed=seed)
    t = 3
    x_t = lp.x(t)
    details = []
    ok = True
    for T in (t + 1, t + 2, t + 4):
        path = np.zeros(T - t, dtype=int)
        dyn = build_q_dynamics(params, sched, path, t)
        mom = conditional_moments(dyn, x_t)
        B = bond_price(mom, r_known=float(x_t[-1]))
        states = simulate_states(dyn, x_t, n_mc, seed=seed + T)
        disc = np.exp(-float(x_t[-1]) - states[:, : T - t - 1, -1].sum(axis=1))
        se = disc.std(ddof=1) / np.sqrt(n_mc)
        err = abs(B - disc.mean())
        if T == t + 1:
            ok &= err < 1e-14
        else:
            ok &= err < 3.0 * se
        details.append(f"T-t={T - t}: |B - MC| = {err:.2e} (3se = {3 * se:.2e})")
    return ok, "; ".join(details)


def check_options(seed: int = 0, n_mc: int = 200_000):
    quad_err = _lemma_vs_quadrature()
    params, _, lp, sched, _ = toy_fixture(N=1, T=8, seed=seed)
    t, T = 3, 6
    x_t = lp.x(t)
    path = np.zeros(T - t, dtype=int)
    dyn = build_q_dynamics(params, sched, path, t)
    mom = conditional_moments(dyn, x_t)
    B = bond_price(mom, r_known=float(x_t[-1]))
    alin = asset_schedule(sched)
    mean_a, cov_a = path_asset_law(forward_shift(mom), alin)
    strike = np.exp(mean_a)  # near the money
    call = B * lognormal_call(mean_a, np.diag(cov_a), strike)
    states = simulate_states(dyn, x_t, n_mc, seed=seed + 11)
    disc = np.exp(-float(x_t[-1]) - states[:, : T - t - 1, -1].sum(axis=1))
    v_T = states[:, -1, :2]
    asset_log = v_T @ alin.W[T].T + alin.h_a[T] / alin.g_a[T]
    payoff = disc * np.maximum(np.exp(asset_log[:, 0]) - strike[0], 0.0)
    se = payoff.std(ddof=1) / np.sqrt(n_mc)
    err = abs(call[0] - payoff.mean())
    ok = err < 3.0 * se and quad_err < 1e-8
    return ok, f"|call - MC| = {err:.2e} (3se = {3 * se:.2e}); quadrature err = {quad_err:.2e}"


def _lemma_vs_quadrature():
    worst = 0.0
    for mu, var, k in [(0.0, 0.04, 1.0), (0.2, 0.3, 0.7), (-0.5, 0.8, 1.4)]:
        s = np.sqrt(var)
        call_q = quad(
            lambda x: (np.exp(x) - k) * norm.pdf(x, mu, s), np.log(k), mu + 12 * s
        )[0]
        worst = max(worst, abs(lognormal_call(mu, var, k) - call_q))
    return worst


def check_mixture(seed: int = 0):
    params, _, lp, sched, _ = toy_fixture(N=2, T=8, seed=seed)
    t, T = 3, 6
    y, psi, _, _ = build_y_series(lp)
    filt = hamilton_filter(log_regime_densities(y, psi, params), params.chain)
    z = filt.z_filt[t]
    x_t = lp.x(t)
    req = ValuationRequest(t=t, maturity=T, strikes=[1.0], thresholds=[1.0])
    rep_enum = mixture_valuation(req, params, sched, z, x_t)
    req_mc = ValuationRequest(
        t=t, maturity=T, strikes=[1.0], thresholds=[1.0], path_strategy="mc",
        mc_paths=100_000, seed=seed,
    )
    rep_mc = mixture_valuation(req_mc, params, sched, z, x_t)
    errs = {
        "bond": abs(rep_enum.bond_price - rep_mc.bond_price)
        / max(rep_mc.mc_standard_errors["bond_price"], 1e-15),
        "call": abs(rep_enum.call[0] - rep_mc.call[0])
        / max(rep_mc.mc_standard_errors["call"][0], 1e-15),
        "default": abs(rep_enum.default_joint - rep_mc.default_joint)
        / max(rep_mc.mc_standard_errors["default_joint"], 1e-15),
    }
    worst = max(errs.values())
    return worst < 3.0, f"max |enumerate - mc| / se = {worst:.2f}"


def check_default(seed: int = 0, n_mc: int = 200_000):
    params, _, lp, sched, _ = toy_fixture(N=1, T=8, seed=seed)
    t, T = 3, 6
    x_t = lp.x(t)
    path = np.zeros(T - t, dtype=int)
    alin = asset_schedule(sched)
    pdyn = build_p_dynamics(params, sched, path, t)
    mom = conditional_moments(pdyn, x_t)
    mean_a, cov_a = path_asset_law(mom, alin)
    lbar = np.exp(mean_a)  # median threshold: probability 1/2
    req = ValuationRequest(t=t, maturity=T, strikes=[1.0], thresholds=lbar)
    rep = mixture_default_prob(req, params, sched, None, x_t)
    states = simulate_states(pdyn, x_t, n_mc, seed=seed + 5)
    asset_log = states[:, -1, :2] @ alin.W[T].T + alin.h_a[T] / alin.g_a[T]
    hits = (asset_log[:, 0] <= np.log(lbar[0])).mean()
    se = np.sqrt(hits * (1 - hits) / n_mc)
    err_mc = abs(rep.default_joint - hits)
    err_median = abs(rep.default_joint - 0.5)
    rect, _ = gaussian_rectangle_probability(
        np.zeros(2), np.eye(2), np.zeros(2), seed=seed
    )
    ok = err_mc < 3.0 * se and err_median < 1e-12 and abs(rect - 0.25) < 5e-4
    return ok, (
        f"|p - MC| = {err_mc:.2e} (3se = {3 * se:.2e}); median anchor err = {err_median:.2e}; "
        f"independence anchor err = {abs(rect - 0.25):.2e}"
    )


def check_determinism(seed: int = 0):
    a = toy_fixture(N=2, T=8, seed=seed)
    b = toy_fixture(N=2, T=8, seed=seed)
    same_panel = all(
        np.array_equal(getattr(a[1], f), getattr(b[1], f), equal_nan=True)
        for f in ("equity", "liability", "dividends", "debt_payments", "rates")
    )
    params, _, lp, sched, _ = a
    req = ValuationRequest(t=2, maturity=5, strikes=[1.0], thresholds=[1.0])
    r1 = mixture_valuation(req, params, sched, np.array([0.5, 0.5]), lp.x(2))
    r2 = mixture_valuation(req, params, sched, np.array([0.5, 0.5]), lp.x(2), threads=4)
    same_report = r1.to_dict() == r2.to_dict()
    ok = same_panel and same_report
    return ok, f"panels identical: {same_panel}; 1 vs 4 threads identical: {same_report}"


def _random_chain(N, rng):
    P = rng.uniform(0.2, 1.0, (N, N))
    P /= P.sum(axis=1, keepdims=True)
    p0 = rng.uniform(0.2, 1.0, N)
    return MarkovChain(p0=p0 / p0.sum(), P=P)


CHECK_SUITES = {
    "newton": check_newton,
    "parity": check_parity,
    "filter": check_filter,
    "smoother": check_smoother,
    "dynamics": check_dynamics,
    "bond": check_bond,
    "options": check_options,
    "mixture": check_mixture,
    "default": check_default,
    "determinism": check_determinism,
}


def run_checks(names: list[str], seed: int = 0) -> list[tuple[str, bool, str]]:
    results = []
    for name in names:
        if name not in CHECK_SUITES:
            raise ValueError(f"unknown check suite {name!r}; known: {sorted(CHECK_SUITES)}")
        ok, detail = CHECK_SUITES[name](seed=seed)
        results.append((name, ok, detail))
    return results
