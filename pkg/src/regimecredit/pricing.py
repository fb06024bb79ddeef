"""Valuation: option formulas, regime-path mixtures and default probabilities.

Per future regime path the terminal log asset value is Gaussian, so equity
(a call on assets struck at the liability nominal) and liabilities (nominal
minus a put) have Black-Scholes-type closed forms scaled by the path's
zero-coupon bond price; physical default probabilities are Gaussian
rectangle probabilities of the terminal asset law.  Unconditional prices
average the per-path values with the regime-path posterior implied by the
filtered regime distribution, either by exact enumeration or by seeded
Monte Carlo path sampling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, qmc

from .chain import MAX_ENUM_PATHS, future_path_weights, sample_paths
from .dynamics import (
    ConditionalMoments,
    bond_price,
    build_p_dynamics,
    build_q_dynamics,
    conditional_moments,
    forward_shift,
)
from .errors import NumericalError, ValidationError
from .linearize import AssetLinearization, LinearizationSchedule, asset_schedule
from .model import ModelParams

_DEGENERATE_VAR = 1e-300


def lognormal_call(mu, var, strike):
    """E[(e^X - K)^+] for X ~ N(mu, var):

    e^{mu + var/2} Phi(d1) - K Phi(d2),  d1 = (mu + var - ln K)/sqrt(var),
    d2 = d1 - sqrt(var); var = 0 degenerates to (e^mu - K)^+.
    """
    mu, var, strike = np.broadcast_arrays(*map(np.asarray, (mu, var, strike)))
    _check_option_inputs(var, strike)
    out = np.empty(mu.shape, dtype=float)
    flat = var <= _DEGENERATE_VAR
    out[flat] = np.maximum(np.exp(mu[flat]) - strike[flat], 0.0)
    if np.any(~flat):
        m, v, k = mu[~flat], var[~flat], strike[~flat]
        s = np.sqrt(v)
        d1 = (m + v - np.log(k)) / s
        out[~flat] = np.exp(m + 0.5 * v) * norm.cdf(d1) - k * norm.cdf(d1 - s)
    return out if out.ndim else float(out)


def lognormal_put(mu, var, strike):
    """E[(K - e^X)^+] for X ~ N(mu, var); parity: call - put = e^{mu+var/2} - K."""
    mu, var, strike = np.broadcast_arrays(*map(np.asarray, (mu, var, strike)))
    _check_option_inputs(var, strike)
    out = np.empty(mu.shape, dtype=float)
    flat = var <= _DEGENERATE_VAR
    out[flat] = np.maximum(strike[flat] - np.exp(mu[flat]), 0.0)
    if np.any(~flat):
        m, v, k = mu[~flat], var[~flat], strike[~flat]
        s = np.sqrt(v)
        d1 = (m + v - np.log(k)) / s
        out[~flat] = k * norm.cdf(-(d1 - s)) - np.exp(m + 0.5 * v) * norm.cdf(-d1)
    return out if out.ndim else float(out)


def _check_option_inputs(var, strike):
    if np.any(strike <= 0.0):
        raise ValidationError("option strikes must be > 0")
    if np.any(var < 0.0):
        raise ValidationError("option variance must be >= 0")


def gaussian_rectangle_probability(
    mean: np.ndarray,
    cov: np.ndarray,
    upper: np.ndarray,
    seed: int = 0,
    n_points: int = 2**13,
    n_batches: int = 8,
) -> tuple[float, float]:
    """P[X <= upper] for X ~ N(mean, cov) with a quasi-Monte Carlo error estimate.

    Uses the sequential conditioning (Genz) transform with scrambled Sobol
    points; the standard error is the spread over independently scrambled
    batches.  Dimensions with (numerically) zero variance reduce to
    indicator constraints.  Returns (probability, standard_error).
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    b = upper - mean
    sd = np.sqrt(np.maximum(np.diag(cov), 0.0))
    scale = float(np.max(np.diag(cov), initial=0.0))

    fixed = sd <= np.sqrt(scale) * 1e-12
    if np.any(fixed):
        if np.any(b[fixed] < 0.0):
            return 0.0, 0.0
        keep = ~fixed
        if not np.any(keep):
            return 1.0, 0.0
        b, cov = b[keep], cov[np.ix_(keep, keep)]
    d = b.size
    if d == 1:
        return float(norm.cdf(b[0] / np.sqrt(cov[0, 0]))), 0.0

    L = _chol_psd(cov)
    estimates = np.empty(n_batches)
    for batch in range(n_batches):
        sobol = qmc.Sobol(d - 1, scramble=True, seed=seed + batch)
        w = sobol.random(n_points)
        f = np.full(n_points, norm.cdf(b[0] / L[0, 0]))
        y = np.zeros((n_points, d - 1))
        e_prev = f.copy()
        for j in range(1, d):
            y[:, j - 1] = norm.ppf(np.clip(w[:, j - 1] * e_prev, 1e-16, 1.0 - 1e-16))
            num = b[j] - y[:, :j] @ L[j, :j]
            e_prev = norm.cdf(num / L[j, j]) if L[j, j] > 0.0 else (num >= 0.0).astype(float)
            f *= e_prev
        estimates[batch] = f.mean()
    p = float(np.clip(estimates.mean(), 0.0, 1.0))
    se = float(estimates.std(ddof=1) / np.sqrt(n_batches))
    return p, se


def _chol_psd(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * max(np.trace(cov), 1.0)
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            raise NumericalError("asset covariance is not positive semidefinite") from None


def literal_gaussian_cdf(mean: np.ndarray, cov: np.ndarray, upper: np.ndarray) -> float:
    """Comparison-only variant: product of standard normal CDFs evaluated at
    cov^{-1} (upper - mean).

    This applies the inverse covariance (not a standardization) and ignores
    correlation; it is dimensionally inconsistent and kept only behind the
    ``literal_cdf`` flag.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    z = np.linalg.solve(cov, upper - mean)
    return float(np.prod(norm.cdf(z)))


def path_asset_law(
    mom: ConditionalMoments, asset_lin: AssetLinearization
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian law (mean, covariance) of the terminal log asset value.

    Projects the terminal value block out of the state moments and applies
    the asset linearization: mean = W mu_V + h_a / g_a, cov = W Sigma_V W'.
    """
    T = mom.T
    n2 = mom.nt - 1
    W = asset_lin.W[T]
    mean_v = mom.mean_at(T)[:n2]
    cov_v = mom.cov_at(T, T)[:n2, :n2]
    mean_a = W @ mean_v + asset_lin.h_a[T] / asset_lin.g_a[T]
    cov_a = W @ cov_v @ W.T
    return mean_a, cov_a


def path_call_put(
    law: tuple[np.ndarray, np.ndarray], bond: float, strikes: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-company call/put prices on the terminal asset value, scaled by the
    path bond price; expects the forward-measure law."""
    mean_a, cov_a = law
    var = np.diag(cov_a)
    return bond * lognormal_call(mean_a, var, strikes), bond * lognormal_put(mean_a, var, strikes)


def path_default_prob(
    law: tuple[np.ndarray, np.ndarray],
    thresholds: np.ndarray,
    seed: int = 0,
    literal_cdf: bool = False,
) -> tuple[float, np.ndarray, float]:
    """Joint and marginal default probabilities under the physical asset law.

    Default means the terminal asset value falls to or below the threshold;
    the joint probability is the Gaussian rectangle P[V^a <= thresholds]
    (closed form for one company, seeded quasi-Monte Carlo beyond).
    Returns (joint, marginals, joint_standard_error).
    """
    mean_a, cov_a = law
    thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if np.any(thresholds <= 0.0):
        raise ValidationError("default thresholds must be > 0")
    b = np.log(thresholds)
    sd = np.sqrt(np.maximum(np.diag(cov_a), 0.0))
    marginals = np.where(sd > 0.0, norm.cdf((b - mean_a) / np.where(sd > 0.0, sd, 1.0)),
                         (b >= mean_a).astype(float))
    if literal_cdf:
        return literal_gaussian_cdf(mean_a, cov_a, b), marginals, 0.0
    joint, se = gaussian_rectangle_probability(mean_a, cov_a, b, seed=seed)
    return joint, marginals, se


@dataclass(frozen=True)
class ValuationRequest:
    """What to value: horizon, liability strikes, default thresholds, and how
    to traverse the regime-path mixture."""

    t: int
    maturity: int
    strikes: np.ndarray  # (n,) liability nominals (option strikes)
    thresholds: np.ndarray  # (n,) default thresholds
    path_strategy: str = "enumerate"  # or "mc"
    mc_paths: int = 100_000
    seed: int = 0
    literal_discount: bool = False
    literal_cdf: bool = False
    emit_paths: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strikes", np.atleast_1d(np.asarray(self.strikes, dtype=float)))
        object.__setattr__(self, "thresholds", np.atleast_1d(np.asarray(self.thresholds, dtype=float)))
        if self.t < 0 or self.maturity <= self.t:
            raise ValidationError(
                f"need 0 <= t < maturity, got t={self.t}, maturity={self.maturity}"
            )
        if np.any(self.strikes <= 0.0) or np.any(self.thresholds <= 0.0):
            raise ValidationError("strikes and thresholds must be > 0")
        if self.path_strategy not in ("enumerate", "mc"):
            raise ValidationError(f"unknown path strategy {self.path_strategy!r}")
        if self.mc_paths < 1:
            raise ValidationError("mc_paths must be >= 1")


@dataclass(frozen=True)
class ValuationReport:
    """Mixture valuation output; per-company arrays are ordered like the panel."""

    t: int
    maturity: int
    bond_price: float
    call: np.ndarray
    put: np.ndarray
    equity_rn: np.ndarray
    liability_rn: np.ndarray
    asset_forward_value: np.ndarray  # mixture of B * e^{mu_a + var_a/2}, per company
    default_joint: float
    default_marginal: np.ndarray
    n_paths: int
    weight_entropy: float
    mc_standard_errors: dict | None = None
    paths: list | None = None

    def to_dict(self) -> dict:
        out = {
            "t": self.t,
            "maturity": self.maturity,
            "bond_price": self.bond_price,
            "call": self.call.tolist(),
            "put": self.put.tolist(),
            "equity_rn": self.equity_rn.tolist(),
            "liability_rn": self.liability_rn.tolist(),
            "asset_forward_value": self.asset_forward_value.tolist(),
            "default_joint": self.default_joint,
            "default_marginal": self.default_marginal.tolist(),
            "n_paths": self.n_paths,
            "weight_entropy": self.weight_entropy,
        }
        if self.mc_standard_errors is not None:
            out["mc_standard_errors"] = {
                k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.mc_standard_errors.items()
            }
        if self.paths is not None:
            out["paths"] = self.paths
        return out


def mixture_valuation(
    request: ValuationRequest,
    params: ModelParams,
    sched: LinearizationSchedule,
    z_tt: np.ndarray | None,
    x_t: np.ndarray,
    asset_lin: AssetLinearization | None = None,
    threads: int = 1,
) -> ValuationReport:
    """Full valuation report: bond, calls/puts, risk-neutral equity/liability
    values and default probabilities, averaged over future regime paths."""
    return _mixture(request, params, sched, z_tt, x_t, asset_lin, threads, want_q=True)


def mixture_default_prob(
    request: ValuationRequest,
    params: ModelParams,
    sched: LinearizationSchedule,
    z_tt: np.ndarray | None,
    x_t: np.ndarray,
    asset_lin: AssetLinearization | None = None,
    threads: int = 1,
) -> ValuationReport:
    """Default probabilities only (physical measure); other fields are NaN."""
    return _mixture(request, params, sched, z_tt, x_t, asset_lin, threads, want_q=False)


def _mixture(request, params, sched, z_tt, x_t, asset_lin, threads, want_q) -> ValuationReport:
    t, T = request.t, request.maturity
    if T > sched.T:
        raise ValidationError(f"maturity {T} beyond the linearization schedule ({sched.T})")
    n = params.n
    if request.strikes.shape != (n,) or request.thresholds.shape != (n,):
        raise ValidationError(f"strikes/thresholds must have shape ({n},)")
    if asset_lin is None:
        asset_lin = asset_schedule(sched)
    x_t = np.asarray(x_t, dtype=float)

    horizon = T - t
    if request.path_strategy == "enumerate":
        if params.N**horizon > MAX_ENUM_PATHS:
            raise ValidationError(
                f"{params.N}^{horizon} paths exceed the enumeration budget; "
                "use the Monte Carlo path strategy"
            )
        paths, weights = future_path_weights(params.chain, z_tt, horizon)
        mc = False
    else:
        rng = np.random.default_rng(np.random.Philox(key=request.seed))
        drawn = sample_paths(params.chain, z_tt, horizon, request.mc_paths, rng)
        paths, counts = np.unique(drawn, axis=0, return_counts=True)
        weights = counts / request.mc_paths
        mc = True

    def value_one(index_path):
        idx, path = index_path
        return _value_path(
            request, params, sched, asset_lin, path, t, T, x_t, want_q, path_index=idx
        )

    items = list(enumerate(paths))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(value_one, items))
    else:
        rows = [value_one(item) for item in items]

    w = weights
    mix = lambda arr: np.sum(arr * w.reshape((-1,) + (1,) * (arr.ndim - 1)), axis=0)
    d_joint = np.array([r["default_joint"] for r in rows])
    d_marg = np.array([r["default_marginal"] for r in rows])
    d_joint_mix, d_marg_mix = float(mix(d_joint)), mix(d_marg)
    if want_q:
        bond = np.array([r["bond"] for r in rows])
        call = np.array([r["call"] for r in rows])
        put = np.array([r["put"] for r in rows])
        fwd_asset = np.array([r["fwd_asset"] for r in rows])
        bond_mix = float(mix(bond))
        call_mix, put_mix = mix(call), mix(put)
        fwd_mix = mix(fwd_asset)
    else:
        bond_mix = float("nan")
        call_mix = put_mix = fwd_mix = np.full(n, np.nan)

    errors = None
    if mc:
        M = request.mc_paths
        se = lambda arr, mean: np.sqrt(
            np.sum((arr - mean) ** 2 * w.reshape((-1,) + (1,) * (arr.ndim - 1)), axis=0) / M
        )
        errors = {
            "default_joint": float(se(d_joint, d_joint_mix)),
            "default_marginal": se(d_marg, d_marg_mix),
        }
        if want_q:
            errors.update(
                {
                    "bond_price": float(se(bond, bond_mix)),
                    "call": se(call, call_mix),
                    "put": se(put, put_mix),
                }
            )

    nz = w > 0.0
    entropy = float(-np.sum(w[nz] * np.log(w[nz])))
    emitted = None
    if request.emit_paths:
        emitted = [
            {
                "path": (np.asarray(p) + 1).tolist(),  # 1-based regimes externally
                "weight": float(wi),
                **{k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in r.items()},
            }
            for p, wi, r in zip(paths, w, rows)
        ]

    if want_q:
        liability_rn = request.strikes * bond_mix - put_mix
    else:
        liability_rn = np.full(n, np.nan)
    return ValuationReport(
        t=t,
        maturity=T,
        bond_price=bond_mix if want_q else float("nan"),
        call=call_mix,
        put=put_mix,
        equity_rn=call_mix,
        liability_rn=liability_rn,
        asset_forward_value=fwd_mix,
        default_joint=d_joint_mix,
        default_marginal=d_marg_mix,
        n_paths=int(paths.shape[0]),
        weight_entropy=entropy,
        mc_standard_errors=errors,
        paths=emitted,
    )


def _value_path(request, params, sched, asset_lin, path, t, T, x_t, want_q, path_index):
    out = {}
    if want_q:
        qdyn = build_q_dynamics(params, sched, path, t)
        qmom = conditional_moments(qdyn, x_t)
        B = bond_price(qmom, r_known=float(x_t[-1]), literal_discount=request.literal_discount)
        fwd = forward_shift(qmom)
        mean_a, cov_a = path_asset_law(fwd, asset_lin)
        var_a = np.diag(cov_a)
        out["bond"] = B
        out["call"] = B * lognormal_call(mean_a, var_a, request.strikes)
        out["put"] = B * lognormal_put(mean_a, var_a, request.strikes)
        out["fwd_asset"] = B * np.exp(mean_a + 0.5 * var_a)
    pdyn = build_p_dynamics(params, sched, path, t)
    pmom = conditional_moments(pdyn, x_t)
    law_p = path_asset_law(pmom, asset_lin)
    joint, marginals, _ = path_default_prob(
        law_p,
        request.thresholds,
        seed=request.seed + 7919 * path_index,
        literal_cdf=request.literal_cdf,
    )
    out["default_joint"] = joint
    out["default_marginal"] = marginals
    return out
