"""Markov-chain machinery for the latent regime process.

Regime indices are 0-based everywhere inside the library; 1-based labels
appear only in files, reports and error messages.
"""

from __future__ import annotations

import itertools
from dataclasses import InitVar, dataclass

import numpy as np

from .errors import ValidationError

PROB_TOL = 1e-12

# Exact path enumeration is refused beyond this many paths; callers fall back
# to Monte Carlo path sampling.
MAX_ENUM_PATHS = 2**20


@dataclass(frozen=True)
class MarkovChain:
    """Homogeneous first-order chain: initial distribution and transition matrix.

    ``p0[j]`` is the probability that the first regime equals j and
    ``P[i, j]`` the probability of moving from regime i to regime j.
    """

    p0: np.ndarray
    P: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check: bool) -> None:
        p0 = np.asarray(self.p0, dtype=float)
        P = np.asarray(self.P, dtype=float)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "P", P)
        if p0.ndim != 1 or P.shape != (p0.size, p0.size):
            raise ValidationError(
                f"inconsistent chain dimensions: p0 {p0.shape}, P {P.shape}"
            )
        if not check:
            return
        if np.any(p0 < 0.0) or np.any(P < 0.0):
            raise ValidationError("chain probabilities must be nonnegative")
        if abs(p0.sum() - 1.0) > PROB_TOL:
            raise ValidationError(f"initial probabilities sum to {p0.sum()!r}, not 1")
        bad = np.nonzero(np.abs(P.sum(axis=1) - 1.0) > PROB_TOL)[0]
        if bad.size:
            raise ValidationError(f"transition row {bad[0] + 1} does not sum to 1")

    @property
    def N(self) -> int:
        return self.p0.size

    def marginal(self, t: int) -> np.ndarray:
        """Unconditional regime distribution at time t >= 1: p0 @ P^(t-1)."""
        if t < 1:
            raise ValidationError(f"regime marginal undefined for t={t}")
        return self.p0 @ np.linalg.matrix_power(self.P, t - 1)


def path_probability(chain: MarkovChain, path: np.ndarray) -> float:
    """Probability of the regime path (s_1, ..., s_k): p0[s_1] * prod P[s_i, s_i+1]."""
    path = _as_path(chain, path)
    if path.size == 0:
        return 1.0
    prob = chain.p0[path[0]]
    if path.size > 1:
        prob *= np.prod(chain.P[path[:-1], path[1:]])
    return float(prob)


def enumerate_paths(N: int, k: int) -> np.ndarray:
    """All N^k regime paths of length k in lexicographic order, shape (N^k, k)."""
    if N**k > MAX_ENUM_PATHS:
        raise ValidationError(
            f"{N}^{k} regime paths exceed the enumeration budget ({MAX_ENUM_PATHS}); "
            "use Monte Carlo path sampling"
        )
    if k == 0:
        return np.zeros((1, 0), dtype=np.intp)
    return np.array(list(itertools.product(range(N), repeat=k)), dtype=np.intp)


def future_path_weights(
    chain: MarkovChain, z_tt: np.ndarray | None, horizon: int
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior weights of the regime paths over the next ``horizon`` periods.

    ``z_tt`` is the filtered regime distribution at the valuation time; the
    first step then has probability (P' z_tt). Passing ``None`` values the
    paths from time 0, where the first step is drawn from p0 directly.

    Returns (paths, weights) with paths in lexicographic order and weights
    summing to 1.
    """
    if horizon < 1:
        raise ValidationError(f"path horizon must be >= 1, got {horizon}")
    if z_tt is None:
        first = chain.p0
    else:
        z_tt = np.asarray(z_tt, dtype=float)
        if z_tt.shape != (chain.N,):
            raise ValidationError(f"z_tt has shape {z_tt.shape}, expected ({chain.N},)")
        if abs(z_tt.sum() - 1.0) > 1e-9:
            raise ValidationError(f"z_tt sums to {z_tt.sum()!r}, not 1")
        first = chain.P.T @ z_tt
    paths = enumerate_paths(chain.N, horizon)
    weights = first[paths[:, 0]].copy()
    for step in range(1, horizon):
        weights *= chain.P[paths[:, step - 1], paths[:, step]]
    return paths, weights


def sample_paths(
    chain: MarkovChain,
    z_tt: np.ndarray | None,
    horizon: int,
    n_paths: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw ``n_paths`` future regime paths from the same law as future_path_weights."""
    first = chain.p0 if z_tt is None else chain.P.T @ np.asarray(z_tt, dtype=float)
    paths = np.empty((n_paths, horizon), dtype=np.intp)
    paths[:, 0] = _draw_categorical(np.broadcast_to(first, (n_paths, chain.N)), rng)
    for step in range(1, horizon):
        paths[:, step] = _draw_categorical(chain.P[paths[:, step - 1]], rng)
    return paths


def dedup_regimes(path: np.ndarray) -> np.ndarray:
    """Distinct regimes of a path in order of first occurrence."""
    path = np.asarray(path, dtype=np.intp).ravel()
    seen = dict.fromkeys(path.tolist())
    return np.array(list(seen), dtype=np.intp)


def simulate_regimes(chain: MarkovChain, T: int, rng: np.random.Generator) -> np.ndarray:
    """Sample a regime path s_1..s_T from the chain; entry 0 is a -1 placeholder."""
    out = np.full(T + 1, -1, dtype=np.intp)
    if T == 0:
        return out
    out[1:] = sample_paths(chain, None, T, 1, rng)[0]
    return out


def _draw_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # probs: (m, N) rows summing to 1; one draw per row via inverse transform.
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def _as_path(chain: MarkovChain, path: np.ndarray) -> np.ndarray:
    path = np.asarray(path, dtype=np.intp).ravel()
    if path.size and (path.min() < 0 or path.max() >= chain.N):
        raise ValidationError(
            f"regime index out of range [0, {chain.N}) in path {path.tolist()}"
        )
    return path
