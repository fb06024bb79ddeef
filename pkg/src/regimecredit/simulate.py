"""Synthetic data generation under known parameters.

``simulate_market`` draws regimes and noise, builds the log returns from
the structural equations and rolls the market values forward through the
exact return identity V_t = e^{k_t} V_{t-1} - p_t (not the log-linear
approximation), so the emitted panel is a valid input for the whole
pipeline and linearization error can be measured rather than baked in.
Payments come from a payout-ratio rule by default, which keeps values
positive for any noise draw; explicit payment series are accepted too.

``simulate_states`` rolls the per-path VAR dynamics forward under either
measure and is the Monte Carlo side of the moment/pricing oracles.

Randomness uses counter-based Philox streams keyed by the master seed with
fixed counter offsets per component, so results are independent of
scheduling and reproducible bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import simulate_regimes
from .dynamics import PathDynamics
from .errors import NumericalError, ValidationError
from .model import ModelParams
from .panel import LogPanel, MarketPanel, log_transform

_REGIME_STREAM = 1
_NOISE_STREAM = 2


def substream(seed: int, stream: int) -> np.random.Generator:
    """Independent Philox substream for (seed, stream)."""
    return np.random.default_rng(np.random.Philox(key=seed, counter=[0, 0, 0, stream]))


@dataclass(frozen=True)
class SimulationSpec:
    """Inputs for a synthetic market panel."""

    params: ModelParams
    T: int
    equity0: np.ndarray  # (n,) initial equity values
    liability0: np.ndarray  # (n,) initial liability values
    rate0: float = 0.01  # simple spot rate at t=0
    psi: np.ndarray | None = None  # (T+1, l); default: intercept column of ones
    payout_equity: float | np.ndarray = 0.04
    payout_liability: float | np.ndarray = 0.06
    payments: np.ndarray | None = None  # (T+1, 2n) explicit payment levels
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "equity0", np.atleast_1d(np.asarray(self.equity0, dtype=float)))
        object.__setattr__(self, "liability0", np.atleast_1d(np.asarray(self.liability0, dtype=float)))
        n = self.params.n
        if self.T < 1:
            raise ValidationError("simulation horizon must be >= 1")
        if self.equity0.shape != (n,) or self.liability0.shape != (n,):
            raise ValidationError(f"initial values must have shape ({n},)")
        if np.any(self.equity0 <= 0.0) or np.any(self.liability0 <= 0.0):
            raise ValidationError("initial values must be > 0")
        if self.rate0 <= -1.0:
            raise ValidationError("initial spot rate must be > -1")
        if self.psi is not None:
            psi = np.asarray(self.psi, dtype=float)
            if psi.shape != (self.T + 1, self.params.l):
                raise ValidationError(
                    f"psi must have shape ({self.T + 1}, {self.params.l}), got {psi.shape}"
                )
            object.__setattr__(self, "psi", psi)
        if self.payments is not None:
            p = np.asarray(self.payments, dtype=float)
            if p.shape != (self.T + 1, 2 * n):
                raise ValidationError(f"payments must have shape ({self.T + 1}, {2 * n})")
            if np.any(p <= 0.0):
                raise ValidationError("explicit payments must be > 0")
            object.__setattr__(self, "payments", p)

    def payout_ratio(self) -> np.ndarray:
        n = self.params.n
        ratio = np.concatenate(
            [np.broadcast_to(self.payout_equity, n), np.broadcast_to(self.payout_liability, n)]
        ).astype(float)
        if np.any(ratio <= 0.0) or np.any(ratio >= 1.0):
            raise ValidationError("payout ratios must lie in (0, 1)")
        return ratio


def simulate_market(spec: SimulationSpec) -> tuple[MarketPanel, np.ndarray, LogPanel]:
    """Simulate a market panel; returns (panel, regimes, log_panel).

    ``regimes[t]`` is the latent regime at t for t = 1..T (entry 0 is -1),
    kept for parameter-recovery scoring.
    """
    params, T, n = spec.params, spec.T, spec.params.n
    nt, n2 = params.n_tilde, 2 * spec.params.n
    psi = spec.psi if spec.psi is not None else np.ones((T + 1, params.l))
    delta = params.delta

    regimes = simulate_regimes(params.chain, T, substream(spec.seed, _REGIME_STREAM))
    chols = [np.linalg.cholesky(params.Sigma[j]) for j in range(params.N)]
    z = substream(spec.seed, _NOISE_STREAM).standard_normal((T + 1, nt))

    r_log = np.empty(T + 1)
    r_log[0] = np.log1p(spec.rate0)
    k_log = np.full((T + 1, n2), np.nan)
    values = np.empty((T + 1, n2))
    payments = np.empty((T + 1, n2))
    values[0] = np.concatenate([spec.equity0, spec.liability0])
    ratio = None
    if spec.payments is not None:
        payments[:] = spec.payments
    else:
        ratio = spec.payout_ratio()
        payments[0] = ratio * values[0]

    for t in range(1, T + 1):
        j = regimes[t]
        xi = chols[j] @ z[t]
        r_log[t] = params.c_r(j) @ psi[t] + r_log[t - 1] + xi[n2]
        k_log[t] = params.C_k(j) @ psi[t] + delta * r_log[t] + xi[:n2]
        gross = np.exp(k_log[t]) * values[t - 1]
        if ratio is not None:
            payments[t] = ratio * gross
        values[t] = gross - payments[t]
        if np.any(values[t] <= 0.0):
            raise NumericalError(
                f"simulated market value went nonpositive at t={t}; "
                "reduce the explicit payments or the payout ratio"
            )

    panel = MarketPanel(
        equity=values[:, :n],
        liability=values[:, n:],
        dividends=payments[:, :n],
        debt_payments=payments[:, n:],
        rates=np.expm1(r_log),
        psi=psi,
        company_ids=tuple(f"c{i + 1}" for i in range(n)),
    )
    return panel, regimes, log_transform(panel)


def simulate_states(
    dyn: PathDynamics, x_t: np.ndarray, n_paths: int, seed: int = 0
) -> np.ndarray:
    """Monte Carlo paths of the state under the path dynamics.

    Returns an (n_paths, m, nt) array of x_{t+1..T}; each step solves
    Q0 x = nu + Q1 x_prev + Gn xi with freshly drawn xi ~ N(0, Sigma), so
    the draw is independent of the transition-product algebra it is used
    to check.
    """
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape != (dyn.nt,):
        raise ValidationError(f"x_t has shape {x_t.shape}, expected ({dyn.nt},)")
    rng = substream(seed, _NOISE_STREAM)
    out = np.empty((n_paths, dyn.m, dyn.nt))
    prev = np.broadcast_to(x_t, (n_paths, dyn.nt))
    for b in range(dyn.m):
        chol = np.linalg.cholesky(dyn.Sigma[b])
        xi = rng.standard_normal((n_paths, dyn.nt)) @ chol.T
        rhs = dyn.nu[b] + prev @ dyn.Q1[b].T + xi @ dyn.Gn[b].T
        out[:, b, :] = np.linalg.solve(dyn.Q0[b], rhs.T).T
        prev = out[:, b, :]
    return out
