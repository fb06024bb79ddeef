"""Conditional state dynamics along a fixed future regime path.

Given a regime path over beta = t+1..T, the stacked state
x_beta = (v_beta', r_beta)' follows a linear system

    Q0_beta x_beta = nu_beta + Q1_beta x_{beta-1} + Gn_beta xi_beta

under either the physical measure (rate enters the value equations
contemporaneously through Q0) or the risk-neutral measure (returns earn the
previous period's known rate; the rate equation is renormalized by a scalar
F_beta that absorbs the rate/return noise correlation).  Repeated
substitution yields transition products Pi(beta, i) from which conditional
means, cross-covariances, the zero-coupon bond price and the
forward-measure mean shift all follow in closed form.

Discounting convention: the rate known at time s applies over (s, s+1], so
the discount from t to T is exp(-(r_t + sum_{beta=t+1..T-1} r_beta)) with
r_t observed at valuation time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError, ValidationError
from .linearize import LinearizationSchedule
from .model import ModelParams

_F_TOL = 1e-12


@dataclass(frozen=True)
class PathDynamics:
    """System matrices over beta = t+1..T for one regime path (index beta-t-1)."""

    t: int
    T: int
    measure: str  # "P" or "Q"
    path: np.ndarray  # (m,) regimes s_{t+1}..s_T (0-based)
    nu: np.ndarray  # (m, nt) intercepts
    Q0: np.ndarray  # (m, nt, nt)
    Q0_inv: np.ndarray  # (m, nt, nt)
    Q1: np.ndarray  # (m, nt, nt)
    Gn: np.ndarray  # (m, nt, nt) noise loadings blockdiag(G_beta, 1)
    Sigma: np.ndarray  # (m, nt, nt) per-period noise covariance
    F: np.ndarray | None  # (m,) rate normalizers (risk-neutral only)

    @property
    def m(self) -> int:
        return self.T - self.t

    @property
    def nt(self) -> int:
        return self.nu.shape[1]

    def idx(self, beta: int) -> int:
        if not self.t + 1 <= beta <= self.T:
            raise ValidationError(f"beta={beta} outside dynamics range ({self.t + 1}..{self.T})")
        return beta - self.t - 1


def _check_path(sched: LinearizationSchedule, path, t: int) -> np.ndarray:
    path = np.asarray(path, dtype=np.intp).ravel()
    T = t + path.size
    if path.size < 1:
        raise ValidationError("regime path must cover at least one period")
    if T > sched.T:
        raise ValidationError(
            f"path reaches t={T} but the linearization schedule stops at {sched.T}"
        )
    return path


def build_p_dynamics(
    params: ModelParams, sched: LinearizationSchedule, path, t: int
) -> PathDynamics:
    """Physical-measure dynamics: the contemporaneous rate loading G delta sits
    in Q0, the value intercept is G C_k psi - (G - I) p - h."""
    path = _check_path(sched, path, t)
    m, nt, n2 = path.size, params.n_tilde, 2 * params.n
    delta = params.delta
    nu = np.empty((m, nt))
    Q0 = np.zeros((m, nt, nt))
    Q0_inv = np.zeros((m, nt, nt))
    Q1 = np.zeros((m, nt, nt))
    Gn = np.zeros((m, nt, nt))
    Sig = np.empty((m, nt, nt))
    for b, j in enumerate(path):
        beta = t + 1 + b
        g = sched.g[beta]
        psi_b = sched.psi[beta]
        nu[b, :n2] = g * (params.C_k(j) @ psi_b) - (g - 1.0) * sched.p_log[beta] - sched.h[beta]
        nu[b, n2] = params.c_r(j) @ psi_b
        Q0[b] = np.eye(nt)
        Q0[b, :n2, n2] = -g * delta
        Q0_inv[b] = np.eye(nt)
        Q0_inv[b, :n2, n2] = g * delta
        Q1[b, :n2, :n2] = np.diag(g)
        Q1[b, n2, n2] = 1.0
        Gn[b] = np.diag(np.append(g, 1.0))
        Sig[b] = params.Sigma[j]
    return PathDynamics(
        t=t, T=t + m, measure="P", path=path, nu=nu, Q0=Q0, Q0_inv=Q0_inv, Q1=Q1,
        Gn=Gn, Sigma=Sig, F=None,
    )


def build_q_dynamics(
    params: ModelParams, sched: LinearizationSchedule, path, t: int
) -> PathDynamics:
    """Risk-neutral dynamics.

    Every traded value earns the previous period's rate plus a convexity
    correction, so the value intercept loses its C_k drift and gains
    -0.5 G diag(Sigma_uu); the lagged rate loads through Q1 with weight G.
    The rate equation is scaled by F = 1 - Sigma_vu Sigma_uu^{-1} (1 - delta)
    and its drift picks up the regression of the rate noise on the return
    noise.
    """
    path = _check_path(sched, path, t)
    m, nt, n2 = path.size, params.n_tilde, 2 * params.n
    delta = params.delta
    nu = np.empty((m, nt))
    Q0 = np.zeros((m, nt, nt))
    Q0_inv = np.zeros((m, nt, nt))
    Q1 = np.zeros((m, nt, nt))
    Gn = np.zeros((m, nt, nt))
    Sig = np.empty((m, nt, nt))
    F = np.empty(m)
    for b, j in enumerate(path):
        beta = t + 1 + b
        g = sched.g[beta]
        psi_b = sched.psi[beta]
        Suu = params.Sigma_uu(j)
        d_uu = np.diag(Suu)
        try:
            a = np.linalg.solve(Suu, params.Sigma_vu(j))
        except np.linalg.LinAlgError:
            raise NumericalError(
                f"return-noise covariance is singular (regime {j + 1})"
            ) from None
        F[b] = 1.0 - a @ (np.ones(n2) - delta)
        if abs(F[b]) < _F_TOL:
            raise NumericalError(
                f"risk-neutral rate normalizer vanished at t={beta} (regime {j + 1}); "
                "the implied system is not invertible"
            )
        nu[b, :n2] = -(g - 1.0) * sched.p_log[beta] - 0.5 * g * d_uu - sched.h[beta]
        nu[b, n2] = params.c_r(j) @ psi_b - a @ (params.C_k(j) @ psi_b + 0.5 * d_uu)
        Q0[b] = np.eye(nt)
        Q0[b, n2, n2] = F[b]
        Q0_inv[b] = np.eye(nt)
        Q0_inv[b, n2, n2] = 1.0 / F[b]
        Q1[b, :n2, :n2] = np.diag(g)
        Q1[b, :n2, n2] = g
        Q1[b, n2, n2] = 1.0
        Gn[b] = np.diag(np.append(g, 1.0))
        Sig[b] = params.Sigma[j]
    return PathDynamics(
        t=t, T=t + m, measure="Q", path=path, nu=nu, Q0=Q0, Q0_inv=Q0_inv, Q1=Q1,
        Gn=Gn, Sigma=Sig, F=F,
    )


def girsanov_kernel(
    params: ModelParams,
    sched: LinearizationSchedule,
    regime: int,
    t: int,
    r_tilde: float,
) -> np.ndarray:
    """Diagnostic measure-change kernel at time t for a given regime.

    theta = [G lam; Sigma_vu Sigma_uu^{-1} lam] with
    lam = (1 - delta) r - C_k psi - 0.5 diag(Sigma_uu).  Pricing constructs
    the risk-neutral coefficients directly; evaluated at r = 0 the kernel
    reproduces the intercept adjustments nu_Q - nu_P.
    """
    n2 = 2 * params.n
    g = sched.g[t]
    Suu = params.Sigma_uu(regime)
    lam = (
        (np.ones(n2) - params.delta) * r_tilde
        - params.C_k(regime) @ sched.psi[t]
        - 0.5 * np.diag(Suu)
    )
    try:
        a = np.linalg.solve(Suu, params.Sigma_vu(regime))
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"return-noise covariance is singular (regime {regime + 1})"
        ) from None
    return np.append(g * lam, a @ lam)


def transition_product(dyn: PathDynamics, beta: int, i: int) -> np.ndarray:
    """Pi(beta, i): the loading of the time-beta innovation (or of x_t when
    beta == t) on x_i, built by iterated products.

    Pi(t, i)    = prod_{a=t+1..i} Q0_a^{-1} Q1_a          (products compose
    Pi(beta, i) = (prod_{a=beta+1..i} Q0_a^{-1} Q1_a) Q0_beta^{-1}   right to left)
    Pi(i, i)    = Q0_i^{-1}.
    """
    if not dyn.t <= beta <= i <= dyn.T or i < dyn.t + 1:
        raise ValidationError(f"need t <= beta <= i <= T, got beta={beta}, i={i}")
    out = np.eye(dyn.nt) if beta == dyn.t else dyn.Q0_inv[dyn.idx(beta)]
    for alpha in range(beta + 1, i + 1):
        b = dyn.idx(alpha)
        out = dyn.Q0_inv[b] @ dyn.Q1[b] @ out
    return out


def transition_products(dyn: PathDynamics) -> dict[tuple[int, int], np.ndarray]:
    """All Pi(beta, i) for t <= beta <= i, built by the downward recursion
    Pi(beta, i) = Pi(beta+1, i) Q1_{beta+1} Q0_beta^{-1} from Pi(i, i) = Q0_i^{-1};
    the beta = t entry drops the trailing inverse because x_t is given."""
    t, T = dyn.t, dyn.T
    out: dict[tuple[int, int], np.ndarray] = {}
    for i in range(t + 1, T + 1):
        out[(i, i)] = dyn.Q0_inv[dyn.idx(i)]
        for beta in range(i - 1, t, -1):
            out[(beta, i)] = out[(beta + 1, i)] @ dyn.Q1[dyn.idx(beta + 1)] @ dyn.Q0_inv[dyn.idx(beta)]
        out[(t, i)] = out[(t + 1, i)] @ dyn.Q1[dyn.idx(t + 1)]
    return out


@dataclass(frozen=True)
class ConditionalMoments:
    """Means and cross-covariances of x_{t+1..T} given x_t and the regime path.

    ``mean[i - t - 1]`` and ``cov[i1 - t - 1, i2 - t - 1]`` hold the
    conditional mean at i and the covariance block Cov[x_i1, x_i2].
    """

    t: int
    T: int
    measure: str  # "P", "Q" or "forward"
    mean: np.ndarray  # (m, nt)
    cov: np.ndarray  # (m, m, nt, nt)

    @property
    def m(self) -> int:
        return self.T - self.t

    @property
    def nt(self) -> int:
        return self.mean.shape[1]

    def mean_at(self, i: int) -> np.ndarray:
        return self.mean[i - self.t - 1]

    def cov_at(self, i1: int, i2: int) -> np.ndarray:
        return self.cov[i1 - self.t - 1, i2 - self.t - 1]

    def stacked_cov(self) -> np.ndarray:
        """(m*nt, m*nt) covariance of the stacked future state."""
        m, nt = self.m, self.nt
        return self.cov.transpose(0, 2, 1, 3).reshape(m * nt, m * nt)


def conditional_moments(dyn: PathDynamics, x_t: np.ndarray) -> ConditionalMoments:
    """Propagate mean and covariance through the path dynamics:

    mu_i  = Pi(t,i) x_t + sum_beta Pi(beta,i) nu_beta
    Cov_{i1,i2} = sum_{beta <= min(i1,i2)} Pi(beta,i1) Gn Sigma Gn' Pi(beta,i2)'.
    """
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape != (dyn.nt,):
        raise ValidationError(f"x_t has shape {x_t.shape}, expected ({dyn.nt},)")
    t, T, m, nt = dyn.t, dyn.T, dyn.m, dyn.nt
    Pi = transition_products(dyn)
    S = np.einsum("bij,bjk,blk->bil", dyn.Gn, dyn.Sigma, dyn.Gn)

    mean = np.empty((m, nt))
    for i in range(t + 1, T + 1):
        acc = Pi[(t, i)] @ x_t
        for beta in range(t + 1, i + 1):
            acc = acc + Pi[(beta, i)] @ dyn.nu[dyn.idx(beta)]
        mean[i - t - 1] = acc

    cov = np.zeros((m, m, nt, nt))
    for i1 in range(t + 1, T + 1):
        for i2 in range(i1, T + 1):
            acc = np.zeros((nt, nt))
            for beta in range(t + 1, i1 + 1):
                acc += Pi[(beta, i1)] @ S[dyn.idx(beta)] @ Pi[(beta, i2)].T
            cov[i1 - t - 1, i2 - t - 1] = acc
            if i2 != i1:
                cov[i2 - t - 1, i1 - t - 1] = acc.T
    return ConditionalMoments(t=t, T=T, measure=dyn.measure, mean=mean, cov=cov)


def forward_shift(mom: ConditionalMoments) -> ConditionalMoments:
    """Change risk-neutral moments to the T-maturity forward measure.

    The bond numeraire tilts the law by exp(-sum_{beta=t+1..T-1} r_beta), so
    every conditional mean shifts down by the summed covariance with those
    rates (the last column of each cross block); covariances are unchanged.
    """
    if mom.measure != "Q":
        raise ValidationError(f"forward shift expects risk-neutral moments, got {mom.measure!r}")
    mean = mom.mean.copy()
    for s in range(mom.m):
        for b in range(mom.m - 1):
            mean[s] -= mom.cov[s, b][:, -1]
    return replace(mom, measure="forward", mean=mean)


def bond_price(mom: ConditionalMoments, r_known: float, literal_discount: bool = False) -> float:
    """Zero-coupon price at t for maturity T given the regime path.

    B = exp(-r_known - sum_beta E[r_beta] + 0.5 sum_{a,b} Cov[r_a, r_b])
    with a, b over t+1..T-1 and r_known the rate observed at the valuation
    time.  ``literal_discount`` swaps r_known for the model-implied mean of
    r_{t+1} (comparison mode; that rate is not known at t).
    """
    if mom.measure != "Q":
        raise ValidationError(f"bond price needs risk-neutral moments, got {mom.measure!r}")
    if literal_discount:
        r_known = float(mom.mean[0][-1])
    rates_mean = mom.mean[: mom.m - 1, -1]
    rates_cov = mom.cov[: mom.m - 1, : mom.m - 1, -1, -1]
    return float(np.exp(-r_known - rates_mean.sum() + 0.5 * rates_cov.sum()))
