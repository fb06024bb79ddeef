"""EM estimation of the regime-switching system.

The observation vector is y_t = (k_t', r_t)' where k_t are the realized log
returns of the stacked equity/liability series and r_t the log gross spot
rate.  The structural form

    B0 y_t = C_{s_t} psi_t + B1 y_{t-1} + xi_t,     xi_t ~ N(0, Sigma_{s_t})

with B0 = [[I_2n, -delta], [0, 1]] and B1 selecting only the lagged rate,
is a Markov-switching seemingly-unrelated regression.  Estimation follows
the classic route (Hamilton 1989, 1994): per-regime Gaussian densities, the
forward filter for filtered probabilities and the likelihood, a backward
smoother for full-sample probabilities, and closed-form weighted
least-squares / counting updates for the M-step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .chain import MarkovChain
from .errors import NumericalError, ValidationError
from .model import ModelParams
from .panel import LogPanel

EM_MONOTONE_SLACK = 1e-10
REGIME_COLLAPSE_WEIGHT = 1e-8


def structural_matrices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """B0 and B1 of the structural form for n companies (state dim 2n+1)."""
    nt = 2 * n + 1
    B0 = np.eye(nt)
    B0[: 2 * n, -1] = -np.concatenate([np.zeros(n), np.ones(n)])
    B1 = np.zeros((nt, nt))
    B1[-1, -1] = 1.0
    return B0, B1


def build_y_series(log_panel: LogPanel) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Observation series y_t = (k_t', r_t)' for t = 0..T plus (B0, B1).

    k_0 is unobservable (it would need values at t=-1); B1 only ever reads
    the lagged rate, so y_0 stores zeros in the return block and r_0 in the
    last entry.
    """
    T, n = log_panel.T, log_panel.n
    y = np.zeros((T + 1, 2 * n + 1))
    y[1:, : 2 * n] = np.logaddexp(log_panel.v[1:], log_panel.p[1:]) - log_panel.v[:-1]
    y[:, -1] = log_panel.r
    B0, B1 = structural_matrices(n)
    return y, log_panel.psi, B0, B1


def regime_density(
    y_t: np.ndarray,
    y_prev: np.ndarray,
    psi_t: np.ndarray,
    C_j: np.ndarray,
    Sigma_j: np.ndarray,
) -> float:
    """Gaussian density of the structural residual B0 y_t - C_j psi_t - B1 y_{t-1}.

    Evaluated through a Cholesky factorization in log space and
    exponentiated on return.
    """
    n = (y_t.size - 1) // 2
    B0, B1 = structural_matrices(n)
    resid = B0 @ y_t - C_j @ psi_t - B1 @ y_prev
    return float(np.exp(_log_density_rows(resid[None, :], Sigma_j, regime_label=None)[0]))


def log_regime_densities(
    y: np.ndarray, psi: np.ndarray, params: ModelParams
) -> np.ndarray:
    """(T+1, N) log densities; row t holds log eta_{t,j} for t = 1..T (row 0 NaN)."""
    T = y.shape[0] - 1
    B0, B1 = structural_matrices(params.n)
    d = y[1:] @ B0.T - y[:-1] @ B1.T
    out = np.full((T + 1, params.N), np.nan)
    for j in range(params.N):
        resid = d - psi[1:] @ params.C[j].T
        out[1:, j] = _log_density_rows(resid, params.Sigma[j], regime_label=j + 1)
    return out


def _log_density_rows(resid: np.ndarray, Sigma: np.ndarray, regime_label) -> np.ndarray:
    nt = Sigma.shape[0]
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        where = f" (regime {regime_label})" if regime_label else ""
        raise NumericalError(f"noise covariance is singular{where}") from None
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    z = solve_triangular(L, resid.T, lower=True)
    quad = np.sum(z * z, axis=0)
    return -0.5 * (nt * np.log(2.0 * np.pi) + logdet + quad)


@dataclass(frozen=True)
class FilterOutput:
    """Forward-filter output.

    ``z_filt[t]`` is the filtered distribution of s_t given data through t
    (rows 1..T; row 0 NaN).  ``z_pred[t]`` is the one-step forecast of
    s_{t+1} given data through t, so ``z_pred[0]`` is the starting
    distribution z_{1|0}.  ``log_eta`` stores the per-regime log densities;
    the likelihood is accumulated with per-period rescaling so long series
    do not underflow.
    """

    z_filt: np.ndarray  # (T+1, N)
    z_pred: np.ndarray  # (T+1, N); z_pred[t] = P(s_{t+1} | data through t)
    log_eta: np.ndarray  # (T+1, N)
    loglik: float

    @property
    def eta(self) -> np.ndarray:
        return np.exp(self.log_eta)

    @property
    def T(self) -> int:
        return self.z_filt.shape[0] - 1

    def scaled_eta(self) -> np.ndarray:
        """Per-period max-rescaled densities; every smoother formula is invariant
        to a per-period scaling of eta, so these are safe to substitute."""
        out = np.full_like(self.log_eta, np.nan)
        m = np.nanmax(self.log_eta[1:], axis=1, keepdims=True)
        out[1:] = np.exp(self.log_eta[1:] - m)
        return out


@dataclass(frozen=True)
class SmootherOutput:
    """Backward-smoother output: z_smooth[t] = P(s_t | all data) for t = 1..T and
    joint[t][i, j] = P(s_{t-1}=i, s_t=j | all data) for t = 2..T."""

    z_smooth: np.ndarray  # (T+1, N)
    joint: np.ndarray  # (T+1, N, N)


def hamilton_filter(
    log_eta: np.ndarray, chain: MarkovChain, z_init: np.ndarray | None = None
) -> FilterOutput:
    """Forward recursion for filtered regime probabilities and the log likelihood.

    z_{t|t} = (z_{t|t-1} * eta_t) / sum(...),   z_{t+1|t} = P' z_{t|t},
    loglik = sum_t ln sum_j z_{t|t-1,j} eta_{t,j}.
    """
    T = log_eta.shape[0] - 1
    N = chain.N
    z_filt = np.full((T + 1, N), np.nan)
    z_pred = np.full((T + 1, N), np.nan)
    z_pred[0] = chain.p0 if z_init is None else np.asarray(z_init, dtype=float)
    loglik = 0.0
    for t in range(1, T + 1):
        m = np.max(log_eta[t])
        if not np.isfinite(m):
            raise NumericalError(f"regime densities are not finite at t={t}")
        w = z_pred[t - 1] * np.exp(log_eta[t] - m)
        s = w.sum()
        if s <= 0.0:
            raise NumericalError(
                f"all regime densities vanished at t={t}; the filter cannot proceed"
            )
        z_filt[t] = w / s
        z_pred[t] = chain.P.T @ z_filt[t]
        loglik += np.log(s) + m
    return FilterOutput(z_filt=z_filt, z_pred=z_pred, log_eta=log_eta, loglik=float(loglik))


def exact_smoother(filt: FilterOutput, chain: MarkovChain) -> SmootherOutput:
    """Backward recursion for smoothed and pairwise joint regime probabilities.

    z_{t|T} = (P H_{t+1} (z_{t+1|T} / z_{t+1|t+1})) * z_{t|t}
              / sum_j z_{t+1|t,j} eta_{t+1,j}

    with H diag(eta); at t = T-1 the ratio is a vector of ones.  Divisions
    0/0 are resolved to 0 (a regime with zero filtered probability also has
    zero smoothed probability); any other zero denominator is an error.
    """
    T, N = filt.T, chain.N
    eta = filt.scaled_eta()
    z_smooth = np.full((T + 1, N), np.nan)
    joint = np.full((T + 1, N, N), np.nan)
    z_smooth[T] = filt.z_filt[T]
    for t in range(T - 1, 0, -1):
        ratio = _safe_ratio(z_smooth[t + 1], filt.z_filt[t + 1], t + 1)
        denom = float(filt.z_pred[t] @ eta[t + 1])
        z_smooth[t] = (chain.P @ (eta[t + 1] * ratio)) * filt.z_filt[t] / denom
    for t in range(2, T + 1):
        denom = float(filt.z_pred[t - 1] @ eta[t])
        col = _safe_ratio(z_smooth[t] * eta[t], filt.z_filt[t], t) / denom
        joint[t] = np.outer(filt.z_filt[t - 1], col) * chain.P
    return SmootherOutput(z_smooth=z_smooth, joint=joint)


def _safe_ratio(num: np.ndarray, den: np.ndarray, t: int) -> np.ndarray:
    zero = den == 0.0
    if np.any(zero & (num != 0.0)):
        raise NumericalError(
            f"smoother division by zero filtered probability at t={t} "
            "with nonzero numerator"
        )
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=~zero)
    return out


def m_step_C(
    y: np.ndarray,
    psi: np.ndarray,
    weights: np.ndarray,
    regime_label: int | None = None,
) -> np.ndarray:
    """Weighted least-squares update of a coefficient matrix.

    Solves sum_t w_t (B0 y_t - C psi_t - B1 y_{t-1}) psi_t' = 0, i.e. the
    normal equations of the sqrt(w)-weighted stacked regression.
    """
    n = (y.shape[1] - 1) // 2
    B0, B1 = structural_matrices(n)
    d = y[1:] @ B0.T - y[:-1] @ B1.T
    w = weights[1:]
    A = (psi[1:] * w[:, None]).T @ psi[1:]
    rhs = (d * w[:, None]).T @ psi[1:]
    try:
        return np.linalg.solve(A.T, rhs.T).T
    except np.linalg.LinAlgError:
        where = f" (regime {regime_label})" if regime_label else ""
        raise NumericalError(
            f"regressor moment matrix is rank deficient{where}; "
            "the effective sample for this regime is too small"
        ) from None


def m_step_Sigma(
    y: np.ndarray,
    psi: np.ndarray,
    weights: np.ndarray,
    C_new: np.ndarray,
    floor: float = 0.0,
    regime_label: int | None = None,
) -> np.ndarray:
    """Weighted residual moment matrix, floored to keep it invertible.

    When the smallest eigenvalue falls below ``floor`` the matrix is bumped
    by floor * I and a degenerate-fit warning is emitted.
    """
    n = (y.shape[1] - 1) // 2
    B0, B1 = structural_matrices(n)
    w = weights[1:]
    total = w.sum()
    if total <= 0.0:
        where = f" (regime {regime_label})" if regime_label else ""
        raise NumericalError(f"zero total weight in covariance update{where}")
    resid = y[1:] @ B0.T - y[:-1] @ B1.T - psi[1:] @ C_new.T
    S = (resid * w[:, None]).T @ resid / total
    S = 0.5 * (S + S.T)
    if floor > 0.0 and np.linalg.eigvalsh(S).min() < floor:
        warnings.warn(
            f"degenerate covariance fit{f' (regime {regime_label})' if regime_label else ''}; "
            f"flooring with {floor:g} * I",
            stacklevel=2,
        )
        S = S + floor * np.eye(S.shape[0])
    return S


def m_step_transition(
    smooth: SmootherOutput,
    previous: MarkovChain,
    literal_paper: bool = False,
) -> MarkovChain:
    """Transition-matrix update from smoothed pairwise probabilities.

    The update divides the expected transition counts out of regime i by
    the expected number of departures from i, sum_{t=2..T} z_{t-1|T,i};
    rows are then renormalized to absorb float drift.  ``literal_paper``
    switches the denominator to sum_{t=2..T} z_{t|T,i} and skips the row
    normalization (which would otherwise cancel the difference), so the
    resulting rows need not sum to 1 exactly.
    """
    T = smooth.z_smooth.shape[0] - 1
    counts = np.nansum(smooth.joint[2:], axis=0)
    if literal_paper:
        departures = smooth.z_smooth[2 : T + 1].sum(axis=0)
    else:
        departures = smooth.z_smooth[1:T].sum(axis=0)
    P = previous.P.copy()
    for i in range(previous.N):
        if departures[i] <= 0.0:
            warnings.warn(
                f"regime {i + 1} has zero smoothed departures; keeping its previous "
                "transition row",
                stacklevel=2,
            )
            continue
        P[i] = counts[i] / departures[i]
        if not literal_paper:
            P[i] = P[i] / P[i].sum()
    p0 = smooth.z_smooth[1].copy()
    p0 = p0 / p0.sum()
    if literal_paper:
        rows = P.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-9):
            warnings.warn(
                "literal transition update produced non-stochastic rows "
                f"(sums {rows}); the chain is kept unnormalized for comparison",
                stacklevel=2,
            )
        return MarkovChain(p0=p0, P=P, check=False)
    return MarkovChain(p0=p0, P=P)


@dataclass(frozen=True)
class EMConfig:
    max_iter: int = 500
    loglik_tol: float = 1e-9  # relative improvement threshold
    covariance_floor: float | None = None  # None: 1e-10 * trace/dim, per regime
    init: str = "residual-kmeans"  # or "random"
    n_starts: int = 1
    seed: int = 0
    literal_paper_mstep: bool = False
    initial_params: ModelParams | None = None

    def __post_init__(self):
        if self.loglik_tol <= 0.0:
            raise ValidationError("loglik_tol must be > 0")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")


@dataclass(frozen=True)
class EMFit:
    params: ModelParams
    filter: FilterOutput
    smoother: SmootherOutput
    trace: np.ndarray  # loglik per iteration, starting at the initial point
    iterations: int
    converged: bool

    @property
    def loglik(self) -> float:
        return float(self.trace[-1])


def em_fit(log_panel: LogPanel, n_regimes: int, config: EMConfig = EMConfig()) -> EMFit:
    """Fit (C_j, Sigma_j, chain) by EM; returns the best fit over config.n_starts."""
    y, psi, _, _ = build_y_series(log_panel)
    T, n, l = log_panel.T, log_panel.n, log_panel.l
    if T < n_regimes * l + 1:
        raise ValidationError(
            f"T={T} is too short to identify {n_regimes} regimes with {l} regressors"
        )
    seeds = np.random.SeedSequence(config.seed).spawn(max(1, config.n_starts))
    best: EMFit | None = None
    for start, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        if config.initial_params is not None and start == 0:
            params0 = config.initial_params
        else:
            params0 = _initial_params(y, psi, n, l, n_regimes, config, rng)
        fit = _em_once(y, psi, n, l, params0, config)
        if best is None or fit.loglik > best.loglik:
            best = fit
    return best


def _em_once(y, psi, n, l, params: ModelParams, config: EMConfig) -> EMFit:
    filt = hamilton_filter(log_regime_densities(y, psi, params), params.chain)
    trace = [filt.loglik]
    converged = False
    for _ in range(config.max_iter):
        smooth = exact_smoother(filt, params.chain)
        params = _m_step(y, psi, n, l, params, smooth, config)
        filt = hamilton_filter(log_regime_densities(y, psi, params), params.chain)
        previous, current = trace[-1], filt.loglik
        trace.append(current)
        if current < previous - EM_MONOTONE_SLACK:
            msg = (
                f"EM log-likelihood decreased from {previous!r} to {current!r} "
                f"at iteration {len(trace) - 1}"
            )
            if config.literal_paper_mstep:
                warnings.warn(msg + " (literal transition update is not an exact "
                              "maximizer, so this can happen)", stacklevel=2)
            else:
                raise NumericalError(msg)
        if current - previous < config.loglik_tol * max(1.0, abs(current)):
            converged = True
            break
    smooth = exact_smoother(filt, params.chain)
    return EMFit(
        params=params,
        filter=filt,
        smoother=smooth,
        trace=np.array(trace),
        iterations=len(trace) - 1,
        converged=converged,
    )


def _m_step(y, psi, n, l, params: ModelParams, smooth: SmootherOutput, config: EMConfig) -> ModelParams:
    N = params.N
    C = np.empty_like(params.C)
    Sigma = np.empty_like(params.Sigma)
    for j in range(N):
        w = smooth.z_smooth[:, j].copy()
        w[0] = 0.0
        if w[1:].sum() < REGIME_COLLAPSE_WEIGHT * (y.shape[0] - 1):
            raise NumericalError(
                f"regime {j + 1} collapsed: total smoothed weight "
                f"{w[1:].sum():.3e} is negligible"
            )
        C[j] = m_step_C(y, psi, w, regime_label=j + 1)
        floor = config.covariance_floor
        if floor is None:
            raw = m_step_Sigma(y, psi, w, C[j], floor=0.0, regime_label=j + 1)
            floor = max(1e-10 * np.trace(raw) / raw.shape[0], 1e-12)
        Sigma[j] = m_step_Sigma(y, psi, w, C[j], floor=floor, regime_label=j + 1)
    chain = m_step_transition(smooth, params.chain, literal_paper=config.literal_paper_mstep)
    return ModelParams(C=C, Sigma=Sigma, chain=chain, n=n, l=l)


def _initial_params(y, psi, n, l, N, config: EMConfig, rng: np.random.Generator) -> ModelParams:
    T = y.shape[0] - 1
    nt = 2 * n + 1
    ones = np.ones(T + 1)
    C_pool = m_step_C(y, psi, ones)
    S_pool = m_step_Sigma(y, psi, ones, C_pool, floor=1e-12)
    if N == 1:
        chain = MarkovChain(p0=np.ones(1), P=np.ones((1, 1)))
        return ModelParams(C=C_pool[None], Sigma=S_pool[None], chain=chain, n=n, l=l)

    B0, B1 = structural_matrices(n)
    resid = y[1:] @ B0.T - y[:-1] @ B1.T - psi[1:] @ C_pool.T
    scale = resid.std(axis=0)
    scale[scale == 0.0] = 1.0
    if config.init == "random":
        labels = rng.integers(0, N, size=T)
    elif config.init == "residual-kmeans":
        labels = _kmeans(resid / scale, N, rng)
    else:
        raise ValidationError(f"unknown init strategy {config.init!r}")

    C = np.empty((N, nt, l))
    Sigma = np.empty((N, nt, nt))
    for j in range(N):
        w = np.zeros(T + 1)
        w[1:] = labels == j
        if w.sum() >= max(l + 1, 3):
            try:
                C[j] = m_step_C(y, psi, w)
                Sigma[j] = m_step_Sigma(y, psi, w, C[j], floor=1e-10 * np.trace(S_pool) / nt)
                continue
            except NumericalError:
                pass
        # cluster too thin for a regression: perturb the pooled fit instead
        C[j] = C_pool
        Sigma[j] = S_pool * (0.5 + j)

    counts = np.full((N, N), 0.5)
    for a, b in zip(labels[:-1], labels[1:]):
        counts[a, b] += 1.0
    P = counts / counts.sum(axis=1, keepdims=True)
    chain = MarkovChain(p0=np.full(N, 1.0 / N), P=P)
    return ModelParams(C=C, Sigma=Sigma, chain=chain, n=n, l=l)


def _kmeans(X: np.ndarray, k: int, rng: np.random.Generator, n_init: int = 4, iters: int = 60) -> np.ndarray:
    best_labels, best_inertia = None, np.inf
    for _ in range(n_init):
        centers = _kmeans_pp(X, k, rng)
        for _ in range(iters):
            d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            labels = d2.argmin(axis=1)
            new = centers.copy()
            for j in range(k):
                pts = X[labels == j]
                new[j] = pts.mean(axis=0) if len(pts) else X[rng.integers(len(X))]
            if np.allclose(new, centers):
                centers = new
                break
            centers = new
        inertia = ((X - centers[labels]) ** 2).sum()
        if inertia < best_inertia:
            best_inertia, best_labels = inertia, labels
    return best_labels


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [X[rng.integers(len(X))]]
    for _ in range(1, k):
        d2 = np.min(((X[:, None, :] - np.array(centers)[None, :, :]) ** 2).sum(axis=2), axis=1)
        total = d2.sum()
        probs = d2 / total if total > 0 else np.full(len(X), 1.0 / len(X))
        centers.append(X[rng.choice(len(X), p=probs)])
    return np.array(centers)


def loglik_at(params: ModelParams, log_panel: LogPanel, z_init: np.ndarray | None = None) -> float:
    """Log likelihood of the data under given parameters (one filter pass)."""
    y, psi, _, _ = build_y_series(log_panel)
    return hamilton_filter(log_regime_densities(y, psi, params), params.chain, z_init).loglik


def single_regime_loglik(log_panel: LogPanel) -> tuple[float, np.ndarray, np.ndarray]:
    """Closed-form Gaussian regression benchmark for N = 1.

    Returns (loglik, C, Sigma) where C solves the normal equations, Sigma is
    the residual moment matrix and loglik the exact Gaussian value; the EM
    machinery must collapse to these.
    """
    y, psi, B0, B1 = build_y_series(log_panel)
    T = y.shape[0] - 1
    nt = y.shape[1]
    ones = np.ones(T + 1)
    C = m_step_C(y, psi, ones)
    Sigma = m_step_Sigma(y, psi, ones, C)
    resid = y[1:] @ B0.T - y[:-1] @ B1.T - psi[1:] @ C.T
    cf = cho_factor(Sigma, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    quad = np.sum(resid * cho_solve(cf, resid.T).T)
    loglik = -0.5 * (T * nt * np.log(2.0 * np.pi) + T * logdet + quad)
    return float(loglik), C, Sigma


def estimate_standard_errors(params: ModelParams, log_panel: LogPanel) -> np.ndarray:
    """Standard errors for the C coefficients from the observed information.

    The Hessian of the log likelihood is taken by central finite differences
    over a free-parameter vector: C entries raw, each Sigma_j through its
    Cholesky factor with log diagonal, transition rows through multinomial
    logits (p0 is held fixed; it carries one observation's worth of
    information and sits on the simplex boundary at the MLE).  The
    constraint-respecting parameterization keeps every perturbed point a
    valid model, and the C block of the inverse information is invariant to
    how the nuisance blocks are parameterized.  Returns an array shaped
    like ``params.C``.
    """
    y, psi, _, _ = build_y_series(log_panel)

    def loglik(vec: np.ndarray) -> float:
        p = _unpack(vec, params)
        return hamilton_filter(log_regime_densities(y, psi, p), p.chain).loglik

    x0 = _pack(params)
    P = x0.size
    h = 1e-4 * np.maximum(np.abs(x0), 1e-2)
    H = np.empty((P, P))
    f0 = loglik(x0)
    for a in range(P):
        ea = np.zeros(P)
        ea[a] = h[a]
        H[a, a] = (loglik(x0 + ea) - 2.0 * f0 + loglik(x0 - ea)) / h[a] ** 2
        for b in range(a + 1, P):
            eb = np.zeros(P)
            eb[b] = h[b]
            H[a, b] = H[b, a] = (
                loglik(x0 + ea + eb)
                - loglik(x0 + ea - eb)
                - loglik(x0 - ea + eb)
                + loglik(x0 - ea - eb)
            ) / (4.0 * h[a] * h[b])
    info = -H
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        warnings.warn("observed information is singular; using a pseudo-inverse", stacklevel=2)
        cov = np.linalg.pinv(info)
    var = np.diag(cov)
    if np.any(var < 0.0):
        warnings.warn(
            "observed information is not positive definite; negative variances clipped",
            stacklevel=2,
        )
        var = np.abs(var)
    se = np.sqrt(var)
    n_C = params.C.size
    return se[:n_C].reshape(params.C.shape)


_PROB_CLIP = 1e-12  # boundary transition probabilities are clipped before the logit


def _pack(params: ModelParams) -> np.ndarray:
    N, nt = params.N, params.n_tilde
    off = np.tril_indices(nt, -1)
    parts = [params.C.ravel()]
    for j in range(N):
        L = np.linalg.cholesky(params.Sigma[j])
        parts += [np.log(np.diag(L)), L[off]]
    if N > 1:
        Pm = np.clip(params.chain.P, _PROB_CLIP, None)
        parts.append((np.log(Pm[:, :-1]) - np.log(Pm[:, -1:])).ravel())
    return np.concatenate(parts)


def _unpack(vec: np.ndarray, template: ModelParams) -> ModelParams:
    N, nt, l, n = template.N, template.n_tilde, template.l, template.n
    off = np.tril_indices(nt, -1)
    k = N * nt * l
    C = vec[:k].reshape(N, nt, l)
    Sigma = np.empty((N, nt, nt))
    n_off = off[0].size
    for j in range(N):
        L = np.zeros((nt, nt))
        np.fill_diagonal(L, np.exp(vec[k : k + nt]))
        k += nt
        L[off] = vec[k : k + n_off]
        k += n_off
        Sigma[j] = L @ L.T
    if N > 1:
        logits = vec[k : k + N * (N - 1)].reshape(N, N - 1)
        expq = np.exp(np.hstack([logits, np.zeros((N, 1))]))
        Pm = expq / expq.sum(axis=1, keepdims=True)
        chain = MarkovChain(p0=template.chain.p0, P=Pm)
    else:
        chain = template.chain
    return ModelParams(C=C, Sigma=Sigma, chain=chain, n=n, l=l)
