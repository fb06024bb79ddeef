"""Shared fixtures and brute-force oracles for the test suite.

The oracles here deliberately avoid the library's own recursions: regime
posteriors come from full path enumeration, option values from quadrature,
moments from simulation, and transition products from the closed-form block
displays.  Expected values asserted in tests are computed by these.
"""

import numpy as np

from regimecredit import (
    MarkovChain,
    ModelParams,
    SimulationSpec,
    enumerate_paths,
    simulate_market,
    solve_mu_schedule,
)


def sigma_from(sd: np.ndarray, corr: np.ndarray) -> np.ndarray:
    return corr * np.outer(sd, sd)


def base_corr(rho: float) -> np.ndarray:
    return np.array([[1.0, 0.25, rho], [0.25, 1.0, rho / 2], [rho, rho / 2, 1.0]])


def make_params(N: int = 2, sigma_scale: float = 1.0) -> ModelParams:
    """Stable single-company (n=1, l=1) parameter sets used across tests."""
    if N == 1:
        chain = MarkovChain(p0=np.array([1.0]), P=np.array([[1.0]]))
        C = np.array([[[0.05], [0.03], [0.001]]])
        Sigma = np.array([sigma_from(np.array([0.020, 0.012, 0.004]), base_corr(0.3))])
    elif N == 2:
        chain = MarkovChain(p0=np.array([0.6, 0.4]), P=np.array([[0.90, 0.10], [0.15, 0.85]]))
        C = np.array([[[0.05], [0.03], [0.001]], [[-0.02], [0.05], [-0.002]]])
        Sigma = np.array(
            [
                sigma_from(np.array([0.020, 0.012, 0.004]), base_corr(0.3)),
                sigma_from(2.0 * np.array([0.020, 0.012, 0.004]), base_corr(-0.2)),
            ]
        )
    else:
        raise ValueError(N)
    Sigma = Sigma * sigma_scale**2
    return ModelParams(C=C, Sigma=Sigma, chain=chain, n=1, l=1)


def make_panel(N: int = 2, T: int = 10, seed: int = 0):
    """(params, panel, log_panel, regimes) for a simulated market, no schedule.

    Estimation tests can run on long horizons where the payment-to-value
    linearization target would eventually leave its domain; they never need
    the schedule, so it is not solved here.
    """
    params = make_params(N)
    spec = SimulationSpec(
        params=params, T=T, equity0=np.array([1.0]), liability0=np.array([0.8]), seed=seed
    )
    panel, regimes, lp = simulate_market(spec)
    return params, panel, lp, regimes


def make_fixture(N: int = 2, T: int = 10, seed: int = 0):
    """(params, panel, log_panel, schedule, regimes) for a simulated market."""
    params, panel, lp, regimes = make_panel(N, T, seed)
    sched = solve_mu_schedule(lp, params)
    return params, panel, lp, sched, regimes


def make_two_company_params(N: int = 2) -> ModelParams:
    """n=2 (five-dimensional state) parameters for multi-company tests."""
    rng = np.random.default_rng(42)
    n, l = 2, 1
    nt = 2 * n + 1
    C = np.stack(
        [
            np.array([[0.04], [0.06], [0.02], [0.03], [0.001]]),
            np.array([[-0.01], [0.00], [0.05], [0.04], [-0.001]]),
        ]
    )[:N]
    Sigma = []
    for j in range(N):
        A = rng.normal(0.0, 1.0, (nt, nt))
        S = A @ A.T / nt * (0.02 * (j + 1)) ** 2 + np.eye(nt) * (0.01 * (j + 1)) ** 2
        Sigma.append(S)
    if N == 1:
        chain = MarkovChain(p0=np.array([1.0]), P=np.array([[1.0]]))
    else:
        chain = MarkovChain(p0=np.array([0.5, 0.5]), P=np.array([[0.85, 0.15], [0.2, 0.8]]))
    return ModelParams(C=C, Sigma=np.array(Sigma), chain=chain, n=n, l=l)


def random_chain(N: int, rng: np.random.Generator) -> MarkovChain:
    P = rng.uniform(0.1, 1.0, (N, N))
    P /= P.sum(axis=1, keepdims=True)
    p0 = rng.uniform(0.1, 1.0, N)
    return MarkovChain(p0=p0 / p0.sum(), P=P)


def enumeration_regime_posteriors(log_eta: np.ndarray, chain: MarkovChain):
    """Brute-force Bayes over all regime paths.

    Returns (filtered, smoothed, joint, loglik): filtered[t] uses data
    through t, smoothed[t] all data, joint[t] the pairwise (s_{t-1}, s_t)
    posterior; rows 0 (and 0..1 for joint) are NaN.

    All N^T full-length paths are enumerated once; prefix likelihoods give
    the filtered probabilities because every length-t prefix occurs in
    equally many full paths, so the surplus multiplicity cancels when
    normalizing.
    """
    T, N = log_eta.shape[0] - 1, chain.N
    paths = enumerate_paths(N, T)
    eta = np.exp(log_eta[1:])
    first = chain.p0[paths[:, :1]]
    steps = chain.P[paths[:, :-1], paths[:, 1:]] if T > 1 else np.empty((len(paths), 0))
    chain_prefix = np.cumprod(np.hstack([first, steps]), axis=1)
    dens = eta[np.arange(T)[None, :], paths]
    weight_prefix = chain_prefix * np.cumprod(dens, axis=1)

    filtered = np.full((T + 1, N), np.nan)
    for t in range(1, T + 1):
        col = weight_prefix[:, t - 1]
        total = col.sum()
        for j in range(N):
            filtered[t, j] = col[paths[:, t - 1] == j].sum() / total
    full = weight_prefix[:, -1]
    loglik = float(np.log(full.sum()))
    post = full / full.sum()
    smoothed = np.full((T + 1, N), np.nan)
    for t in range(1, T + 1):
        for j in range(N):
            smoothed[t, j] = post[paths[:, t - 1] == j].sum()
    joint = np.full((T + 1, N, N), np.nan)
    for t in range(2, T + 1):
        for i in range(N):
            for j in range(N):
                mask = (paths[:, t - 2] == i) & (paths[:, t - 1] == j)
                joint[t, i, j] = post[mask].sum()
    return filtered, smoothed, joint, loglik


def closed_form_transition_product(dyn, sched, beta: int, i: int) -> np.ndarray:
    """Block-display closed forms of the repeated-substitution coefficients."""
    nt = dyn.nt
    n2 = nt - 1
    t = dyn.t
    out = np.zeros((nt, nt))
    if beta == i and beta > t:
        top = np.eye(n2)
    else:
        top = np.diag(np.prod([sched.g[a] for a in range(beta + 1, i + 1)], axis=0))
    out[:n2, :n2] = top
    start = beta + 1 if beta == t else beta
    if dyn.measure == "P":
        delta = np.concatenate([np.zeros(n2 // 2), np.ones(n2 // 2)])
        col = np.zeros(n2)
        for alpha in range(start, i + 1):
            col += np.prod([sched.g[s] for s in range(alpha, i + 1)], axis=0) * delta
        out[:n2, n2] = col
        out[n2, n2] = 1.0
    else:
        inv_F = lambda s: 1.0 / dyn.F[dyn.idx(s)]
        col = np.zeros(n2)
        for alpha in range(beta + 1, i + 1):
            prod_g = np.prod([sched.g[s] for s in range(alpha, i + 1)], axis=0)
            prod_f = np.prod([inv_F(s) for s in range(start, alpha)])
            col += prod_g * prod_f
        out[:n2, n2] = col
        out[n2, n2] = np.prod([inv_F(s) for s in range(start, i + 1)])
    return out


def bisect_mu(a: float, lo: float = -1000.0, hi: float = 700.0, iters: int = 200) -> float:
    """Bisection oracle for mu - ln(1 + e^mu) = a."""
    f = lambda mu: mu - np.logaddexp(0.0, mu) - a
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
