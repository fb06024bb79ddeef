"""Log-linearization schedules for the present-value approximation.

The dynamic Gordon growth approximation expands the exact return identity
around the mean log payment-to-value ratio mu_t, producing per-period
constants

    g_t = 1 + exp(mu_t),      h_t = g_t * (ln g_t - mu_t) + mu_t

(component-wise over the 2n stacked equity/liability series).  The mu_t
themselves solve a nonlinear recurrence

    mu_t - ln(1 + exp(mu_t)) = a_t,
    a_t = mu_{t-1} + p_t - p_{t-1} - Cbar_t psi_t - delta * rbar_t,

where Cbar_t and rbar_t are regime-probability-weighted expectations of the
return coefficients and of the log spot rate given time-0 information, and
mu_0 = p_0 - v_0 from the observed t=0 payment-to-value ratios.  The scalar
equation is solved by Newton's iteration (the map is analytically
invertible, which doubles as a fallback and as a cross-check).

A second expansion around the mean log liability-to-equity ratio mu_t^a
turns the log asset value into a weighted average of the log equity and
liability values; the weights W_t^a feed the option-pricing formulas.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import NumericalError, ValidationError
from .model import ModelParams
from .panel import LogPanel

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100

# exp overflow guard for Newton iterates; the solution never exceeds
# -ln(expm1(-a)) which stays far below this for representable targets.
_MU_CAP = 700.0


def mu_closed_form(a):
    """Exact inverse of mu - ln(1 + e^mu) = a, i.e. -ln(e^{-a} - 1), for a < 0.

    Branches to keep full precision: -ln(expm1(-a)) near zero (where
    1 - e^a cancels) and a - log1p(-e^a) for a <= -1 (where e^{-a} would
    overflow long before a leaves the representable range).
    """
    a = np.asarray(a, dtype=float)
    if np.any(a >= 0.0):
        raise ValidationError("mu target must be < 0 (the map mu - ln(1+e^mu) has range (-inf, 0))")
    scalar = a.ndim == 0
    a = np.atleast_1d(a)
    near = a > -1.0
    out = np.empty(a.shape)
    out[near] = -np.log(np.expm1(-a[near]))
    out[~near] = a[~near] - np.log1p(-np.exp(a[~near]))
    return float(out[0]) if scalar else out


def newton_solve_mu(
    a: float,
    init: float | None = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> float:
    """Solve mu - ln(1 + e^mu) = a by Newton's iteration.

    The residual map M(mu) = mu - ln(1+e^mu) - a has inverse Jacobian
    diag(1 + e^mu), so each step is mu <- mu - (1 + e^mu) M(mu).  M is
    increasing and concave, hence the iteration converges globally; the
    default initial guess is a itself (exact in the deep-discount limit).
    Near a = 0 the map is nearly flat in mu, so iteration continues to a
    step-size fixed point rather than stopping at the residual tolerance;
    the tolerance is still enforced on the final residual.
    """
    if not a < 0.0:
        raise ValidationError(f"mu target must be < 0, got {a!r}")
    mu = float(a if init is None else init)
    eps = np.finfo(float).eps
    converged = False
    for _ in range(max_iter):
        step = (1.0 + np.exp(mu)) * mu_residual(mu, a)
        mu_next = min(mu - step, _MU_CAP)
        done = mu_next == mu or abs(step) <= 4.0 * eps * max(1.0, abs(mu_next))
        mu = mu_next
        if done:
            converged = True
            break
    resid = float(mu_residual(mu, a))
    if not converged or abs(resid) > tol:
        raise NumericalError(
            f"Newton iteration for mu did not reach |residual| <= {tol:g} "
            f"within {max_iter} steps (target a={a!r}, residual {resid!r})"
        )
    return mu


def mu_residual(mu, a):
    """Recurrence residual M(mu) = mu - ln(1+e^mu) - a.

    Branches on the sign of mu so the ln(1+e^mu) term is evaluated without
    cancellation against mu; the absolute error stays near machine epsilon
    even where the map is flat.
    """
    mu_b, a_b = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(a, dtype=float))
    scalar = mu_b.ndim == 0
    mu_b, a_b = np.atleast_1d(mu_b), np.atleast_1d(a_b)
    pos = mu_b >= 0.0
    out = np.empty(mu_b.shape)
    out[pos] = -np.log1p(np.exp(-mu_b[pos])) - a_b[pos]
    out[~pos] = mu_b[~pos] - np.log1p(np.exp(mu_b[~pos])) - a_b[~pos]
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class LinearizationSchedule:
    """Per-period linearization constants for the stacked 2n value series.

    Row t of each array belongs to time t; row 0 holds the initial ratio
    mu_0 = p_0 - v_0 and its induced (g_0, h_0).  The payment and regressor
    series the schedule was solved from ride along so that the pricing
    dynamics can be built from the schedule alone.
    """

    mu: np.ndarray  # (T+1, 2n)
    g: np.ndarray  # (T+1, 2n)
    h: np.ndarray  # (T+1, 2n)
    p_log: np.ndarray  # (T+1, 2n) log payments (known at time 0)
    psi: np.ndarray  # (T+1, l)
    expected_log_rate: np.ndarray  # (T+1,) E[r_t | time-0 info]; entry 0 unused
    company_ids: tuple[str, ...]

    @property
    def T(self) -> int:
        return self.mu.shape[0] - 1

    @property
    def n(self) -> int:
        return self.mu.shape[1] // 2


@dataclass(frozen=True)
class AssetLinearization:
    """Weights expressing the log asset value through log equity/liability values.

    W[t] is the (n x 2n) row-stochastic weight matrix
    [diag(1/g_a) : I - diag(1/g_a)]; the approximation adds the intercept
    h_a / g_a and is exact whenever v_liability - v_equity = mu_a.
    """

    mu_a: np.ndarray  # (T+1, n)
    g_a: np.ndarray  # (T+1, n)
    h_a: np.ndarray  # (T+1, n)
    W: np.ndarray  # (T+1, n, 2n)

    @property
    def T(self) -> int:
        return self.mu_a.shape[0] - 1

    @property
    def n(self) -> int:
        return self.mu_a.shape[1]


def expected_regime_quantities(
    params: ModelParams, psi: np.ndarray, r1: float, t: int
) -> tuple[np.ndarray, float]:
    """Regime-probability-weighted (Cbar_t, E[r_t]) given time-0 information.

    The regime marginal at time t is p0 @ P^(t-1), so t=1 reproduces the
    initial distribution.  The expected log rate accumulates the expected
    drift from t=2 on top of the observed r_1.
    """
    if t < 1:
        raise ValidationError(f"expected regime quantities need t >= 1, got {t}")
    w = params.chain.marginal(t)
    C_bar = np.einsum("j,jkl->kl", w, params.C[:, : 2 * params.n, :])
    r_bar = float(r1)
    for i in range(2, t + 1):
        wi = params.chain.marginal(i)
        c_bar = wi @ params.C[:, 2 * params.n, :]
        r_bar += float(c_bar @ psi[i])
    return C_bar, r_bar


def solve_mu_schedule(
    log_panel: LogPanel,
    params: ModelParams,
    newton_tol: float = NEWTON_TOL,
    horizon: int | None = None,
) -> LinearizationSchedule:
    """Solve the mean log payment-to-value recurrence over t = 1..horizon.

    ``horizon`` defaults to the panel length; solving only through the
    valuation maturity avoids failures from later periods where the
    recurrence target may leave its domain.
    """
    if params.n != log_panel.n or params.l != log_panel.l:
        raise ValidationError(
            f"parameters were fit for n={params.n}, l={params.l} but the panel has "
            f"n={log_panel.n}, l={log_panel.l} (supply the matching exogenous file)"
        )
    if not log_panel.has_t0_payments:
        raise ValidationError(
            "linearization needs t=0 payments to initialize mu_0 = p_0 - v_0; "
            "supply dividend/debt payments in the t=0 panel rows"
        )
    T, n = (log_panel.T if horizon is None else horizon), log_panel.n
    if not 1 <= T <= log_panel.T:
        raise ValidationError(f"schedule horizon must lie in 1..{log_panel.T}, got {T}")
    delta = params.delta
    p = log_panel.p
    psi = log_panel.psi

    mu = np.empty((T + 1, 2 * n))
    mu[0] = p[0] - log_panel.v[0]
    exp_rate = np.full(T + 1, np.nan)

    r_bar = float(log_panel.r[1])
    for t in range(1, T + 1):
        w = params.chain.marginal(t)
        C_bar = np.einsum("j,jkl->kl", w, params.C[:, : 2 * n, :])
        if t >= 2:
            c_bar = w @ params.C[:, 2 * n, :]
            r_bar += float(c_bar @ psi[t])
        exp_rate[t] = r_bar
        a = mu[t - 1] + p[t] - p[t - 1] - C_bar @ psi[t] - delta * r_bar
        bad = np.nonzero(a >= 0.0)[0]
        if bad.size:
            raise NumericalError(
                f"mu recurrence has no solution at t={t}, component {bad[0] + 1}: "
                f"target {a[bad[0]]!r} >= 0"
            )
        for k in range(2 * n):
            try:
                mu[t, k] = newton_solve_mu(a[k], init=mu[t - 1, k], tol=newton_tol)
            except NumericalError:
                mu[t, k] = float(mu_closed_form(a[k]))
            if abs(mu_residual(mu[t, k], a[k])) > newton_tol:
                raise NumericalError(
                    f"mu solve failed at t={t}, component {k + 1}: residual above {newton_tol:g}"
                )

    g = 1.0 + np.exp(mu)
    h = g * (np.log(g) - mu) + mu
    return LinearizationSchedule(
        mu=mu,
        g=g,
        h=h,
        p_log=p[: T + 1].copy(),
        psi=psi[: T + 1].copy(),
        expected_log_rate=exp_rate,
        company_ids=log_panel.company_ids,
    )


def gordon_step(
    v_prev: np.ndarray,
    p_t: np.ndarray,
    k_t: np.ndarray,
    sched: LinearizationSchedule,
    t: int,
) -> np.ndarray:
    """One step of the dynamic Gordon growth approximation:

    v_t ~= G_t (v_{t-1} - p_t + k_t) + p_t - h_t.
    """
    if not 1 <= t <= sched.T:
        raise ValidationError(f"schedule does not cover t={t}")
    return sched.g[t] * (v_prev - p_t + k_t) + p_t - sched.h[t]


def asset_linearization(mu_a: np.ndarray) -> AssetLinearization:
    """Build asset-level linearization constants from given mu_a (rows = times)."""
    mu_a = np.atleast_2d(np.asarray(mu_a, dtype=float))
    n = mu_a.shape[1]
    g_a = 1.0 + np.exp(mu_a)
    h_a = g_a * (np.log(g_a) - mu_a) + mu_a
    W = np.zeros((mu_a.shape[0], n, 2 * n))
    rows = np.arange(n)
    W[:, rows, rows] = 1.0 / g_a
    W[:, rows, n + rows] = 1.0 - 1.0 / g_a
    return AssetLinearization(mu_a=mu_a, g_a=g_a, h_a=h_a, W=W)


def asset_schedule(sched: LinearizationSchedule) -> AssetLinearization:
    """Model-implied asset linearization over t = 0..T.

    By definition mu_t = E[p_t - v_t | time-0 info], so the implied mean log
    value is p_t - mu_t and the mean log liability-to-equity ratio is

        mu_a_t = (p_liab - p_eq) + (mu_eq - mu_liab).
    """
    n = sched.n
    mu_a = (sched.p_log[:, n:] - sched.p_log[:, :n]) + (sched.mu[:, :n] - sched.mu[:, n:])
    return asset_linearization(mu_a)


def export_schedule(sched: LinearizationSchedule, path: str, float_format: str = "%.12g") -> None:
    """Write the schedule as CSV rows (t, component, mu, g, h); components are 1-based."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    rows = []
    for t in range(sched.T + 1):
        for k in range(2 * sched.n):
            rows.append(
                {"t": t, "component": k + 1, "mu": sched.mu[t, k], "g": sched.g[t, k], "h": sched.h[t, k]}
            )
    pd.DataFrame(rows).to_csv(path, index=False, float_format=float_format)
