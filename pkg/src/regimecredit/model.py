"""Model parameter container shared by estimation, dynamics and pricing.

For n companies the state dimension is n_tilde = 2n + 1: the 2n log value
equations (equity block stacked over liability block) plus the log spot
rate equation.  Per regime j the coefficient matrix C[j] is (n_tilde x l):
its top 2n rows load the return equations on the exogenous regressors and
its last row is the spot-rate drift.  Sigma[j] is the (n_tilde x n_tilde)
noise covariance with blocks

    [[Sigma_uu, Sigma_uv],
     [Sigma_vu, Sigma_vv]]

where u is the 2n-dimensional return noise and v the scalar rate noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .chain import MarkovChain
from .errors import ValidationError

PARAMS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ModelParams:
    C: np.ndarray  # (N, 2n+1, l)
    Sigma: np.ndarray  # (N, 2n+1, 2n+1), symmetric positive definite
    chain: MarkovChain
    n: int
    l: int

    def __post_init__(self) -> None:
        C = np.asarray(self.C, dtype=float)
        Sigma = np.asarray(self.Sigma, dtype=float)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "Sigma", Sigma)
        nt = 2 * self.n + 1
        N = self.chain.N
        if C.shape != (N, nt, self.l):
            raise ValidationError(f"C has shape {C.shape}, expected {(N, nt, self.l)}")
        if Sigma.shape != (N, nt, nt):
            raise ValidationError(f"Sigma has shape {Sigma.shape}, expected {(N, nt, nt)}")
        for j in range(N):
            sym_err = np.max(np.abs(Sigma[j] - Sigma[j].T))
            if sym_err > 1e-9 * max(1.0, np.max(np.abs(Sigma[j]))):
                raise ValidationError(f"Sigma[{j + 1}] is not symmetric (max asymmetry {sym_err:g})")
            if np.linalg.eigvalsh(Sigma[j]).min() <= 0.0:
                raise ValidationError(f"Sigma[{j + 1}] is not positive definite")

    @property
    def N(self) -> int:
        return self.chain.N

    @property
    def n_tilde(self) -> int:
        return 2 * self.n + 1

    @property
    def delta(self) -> np.ndarray:
        """(2n,) rate loading of the return equations: 0 for equity, 1 for liabilities."""
        return np.concatenate([np.zeros(self.n), np.ones(self.n)])

    def C_k(self, j: int) -> np.ndarray:
        """(2n, l) return-equation coefficients in regime j."""
        return self.C[j, : 2 * self.n, :]

    def c_r(self, j: int) -> np.ndarray:
        """(l,) spot-rate drift coefficients in regime j."""
        return self.C[j, 2 * self.n, :]

    def Sigma_uu(self, j: int) -> np.ndarray:
        return self.Sigma[j, : 2 * self.n, : 2 * self.n]

    def Sigma_vu(self, j: int) -> np.ndarray:
        return self.Sigma[j, 2 * self.n, : 2 * self.n]

    def Sigma_vv(self, j: int) -> float:
        return float(self.Sigma[j, 2 * self.n, 2 * self.n])

    def to_dict(self, **extra) -> dict:
        out = {
            "version": PARAMS_SCHEMA_VERSION,
            "N": self.N,
            "n": self.n,
            "l": self.l,
            "C": self.C.tolist(),
            "Sigma": self.Sigma.tolist(),
            "p0": self.chain.p0.tolist(),
            "P": self.chain.P.tolist(),
        }
        out.update(extra)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        try:
            chain = MarkovChain(p0=np.array(data["p0"]), P=np.array(data["P"]))
            return cls(
                C=np.array(data["C"]),
                Sigma=np.array(data["Sigma"]),
                chain=chain,
                n=int(data["n"]),
                l=int(data["l"]),
            )
        except KeyError as exc:
            raise ValidationError(f"parameter file is missing field {exc}") from None


def save_params(params: ModelParams, path: str, **extra) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params.to_dict(**extra), fh, indent=2)
        fh.write("\n")


def load_params(path: str) -> ModelParams:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"parameter file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    return ModelParams.from_dict(data)
