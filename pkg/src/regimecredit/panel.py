"""Observed market panels: ingestion, validation and log transforms.

A panel holds per-company equity and liability market values and payments,
spot rates and exogenous regressors on a common time grid t = 0..T.  All
value and payment entries must be strictly positive so that logs exist;
zero or negative cells are hard errors, never imputed.

Time-indexed arrays are stored with shape (T+1, ...) so that row t is the
observation at time t.  Payment rows at t = 0 are optional (the value
recursions only use payments from t = 1 on) and are NaN when absent; they
are required only when a linearization schedule has to be initialized.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ValidationError

PANEL_COLUMNS = [
    "t",
    "company_id",
    "equity_value",
    "liability_value",
    "dividend_payment",
    "debt_payment",
]
RATES_COLUMNS = ["t", "spot_rate"]

# Data files round-trip bit-exactly, so they carry full float precision.
# Derived reports use the coarser 12-significant-digit display format.
DATA_FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class MarketPanel:
    """Validated market observations for n companies over t = 0..T."""

    equity: np.ndarray  # (T+1, n) market values of equity, > 0
    liability: np.ndarray  # (T+1, n) market values of liabilities, > 0
    dividends: np.ndarray  # (T+1, n) payments to investors; row 0 may be NaN
    debt_payments: np.ndarray  # (T+1, n) payments to debtholders; row 0 may be NaN
    rates: np.ndarray  # (T+1,) simple spot rates, > -1
    psi: np.ndarray  # (T+1, l) exogenous regressors; row 0 unused (may be NaN)
    company_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        for name in ("equity", "liability", "dividends", "debt_payments", "rates", "psi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "company_ids", tuple(str(c) for c in self.company_ids))
        _check_shapes(self)
        _check_values(self)

    @property
    def T(self) -> int:
        return self.equity.shape[0] - 1

    @property
    def n(self) -> int:
        return self.equity.shape[1]

    @property
    def l(self) -> int:
        return self.psi.shape[1]

    @property
    def has_t0_payments(self) -> bool:
        return bool(
            np.all(np.isfinite(self.dividends[0])) and np.all(np.isfinite(self.debt_payments[0]))
        )

    def values(self) -> np.ndarray:
        """Stacked (T+1, 2n) market values: equity block then liability block."""
        return np.hstack([self.equity, self.liability])

    def payments(self) -> np.ndarray:
        """Stacked (T+1, 2n) payments: dividends block then debt-payment block."""
        return np.hstack([self.dividends, self.debt_payments])


@dataclass(frozen=True)
class LogPanel:
    """Log transform of a MarketPanel.

    ``v`` and ``p`` stack the equity block over the liability block, and
    ``r`` is ln(1 + spot rate).  ``x(t)`` returns the state vector
    (v_t', r_t)' used by the pricing dynamics.
    """

    v: np.ndarray  # (T+1, 2n) log market values
    p: np.ndarray  # (T+1, 2n) log payments; row 0 may be NaN
    r: np.ndarray  # (T+1,) log gross spot rate
    psi: np.ndarray  # (T+1, l)
    company_ids: tuple[str, ...]

    @property
    def T(self) -> int:
        return self.v.shape[0] - 1

    @property
    def n(self) -> int:
        return self.v.shape[1] // 2

    @property
    def l(self) -> int:
        return self.psi.shape[1]

    @property
    def has_t0_payments(self) -> bool:
        return bool(np.all(np.isfinite(self.p[0])))

    def x(self, t: int) -> np.ndarray:
        """State vector (log values, log gross rate) at time t, length 2n+1."""
        return np.append(self.v[t], self.r[t])


def log_transform(panel: MarketPanel) -> LogPanel:
    """Component-wise natural logs of values and payments; r = ln(1 + spot)."""
    return LogPanel(
        v=np.log(panel.values()),
        p=np.log(panel.payments()),
        r=np.log1p(panel.rates),
        psi=panel.psi,
        company_ids=panel.company_ids,
    )


def realized_log_returns(panel: MarketPanel) -> np.ndarray:
    """Exact realized log returns k_t = ln((V_t + p_t) / V_{t-1}) for t = 1..T.

    Returns a (T+1, 2n) array; row 0 is NaN (a return needs the previous value).
    """
    values = panel.values()
    payments = panel.payments()
    out = np.full_like(values, np.nan)
    out[1:] = np.log(values[1:] + payments[1:]) - np.log(values[:-1])
    return out


def load_panel(
    panel_path: str, rates_path: str, exog_path: str | None = None
) -> MarketPanel:
    """Load and validate panel, rates and optional exogenous CSV files.

    Without an exogenous file the regressors default to a lone intercept
    column (psi_t = 1).
    """
    panel_df = _read_csv(panel_path, PANEL_COLUMNS)
    rates_df = _read_csv(rates_path, RATES_COLUMNS)

    times = _time_index(panel_df["t"], panel_path)
    T = times.max()
    company_ids = sorted(panel_df["company_id"].astype(str).unique())
    n = len(company_ids)
    col_of = {c: i for i, c in enumerate(company_ids)}

    keys = set()
    equity = np.full((T + 1, n), np.nan)
    liability = np.full((T + 1, n), np.nan)
    dividends = np.full((T + 1, n), np.nan)
    debt = np.full((T + 1, n), np.nan)
    for row in panel_df.itertuples(index=True):
        t = _to_int(row.t, panel_path, row.Index, "t")
        cid = str(row.company_id)
        if (t, cid) in keys:
            raise ValidationError(
                f"{panel_path}: duplicate (t={t}, company_id={cid}) at data row {row.Index + 1}"
            )
        keys.add((t, cid))
        j = col_of[cid]
        equity[t, j] = _to_float(row.equity_value, panel_path, row.Index, "equity_value")
        liability[t, j] = _to_float(row.liability_value, panel_path, row.Index, "liability_value")
        dividends[t, j] = _to_float(
            row.dividend_payment, panel_path, row.Index, "dividend_payment", blank_ok=(t == 0)
        )
        debt[t, j] = _to_float(
            row.debt_payment, panel_path, row.Index, "debt_payment", blank_ok=(t == 0)
        )
    missing = [(t, c) for t in range(T + 1) for c in company_ids if (t, c) not in keys]
    if missing:
        raise ValidationError(f"{panel_path}: missing rows for (t, company) {missing[:5]}")

    rt = _time_index(rates_df["t"], rates_path)
    if rt.max() != T:
        raise ValidationError(
            f"{rates_path}: rate horizon {rt.max()} does not match panel horizon {T}"
        )
    rates = np.full(T + 1, np.nan)
    for row in rates_df.itertuples(index=True):
        t = _to_int(row.t, rates_path, row.Index, "t")
        rates[t] = _to_float(row.spot_rate, rates_path, row.Index, "spot_rate")

    if exog_path is None:
        psi = np.ones((T + 1, 1))
    else:
        psi = _load_exog(exog_path, T)

    return MarketPanel(
        equity=equity,
        liability=liability,
        dividends=dividends,
        debt_payments=debt,
        rates=rates,
        psi=psi,
        company_ids=tuple(company_ids),
    )


def save_panel(panel: MarketPanel, out_dir: str) -> dict[str, str]:
    """Write panel.csv, rates.csv and exog.csv under ``out_dir``.

    Floats are written with 17 significant digits so load -> save -> load
    round-trips bit-exactly.  Returns the paths written.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "panel": os.path.join(out_dir, "panel.csv"),
        "rates": os.path.join(out_dir, "rates.csv"),
        "exog": os.path.join(out_dir, "exog.csv"),
    }
    rows = []
    for t in range(panel.T + 1):
        for j, cid in enumerate(panel.company_ids):
            rows.append(
                {
                    "t": t,
                    "company_id": cid,
                    "equity_value": panel.equity[t, j],
                    "liability_value": panel.liability[t, j],
                    "dividend_payment": panel.dividends[t, j],
                    "debt_payment": panel.debt_payments[t, j],
                }
            )
    pd.DataFrame(rows, columns=PANEL_COLUMNS).to_csv(
        paths["panel"], index=False, float_format=DATA_FLOAT_FORMAT
    )
    pd.DataFrame({"t": np.arange(panel.T + 1), "spot_rate": panel.rates}).to_csv(
        paths["rates"], index=False, float_format=DATA_FLOAT_FORMAT
    )
    # the t=0 regressor row is optional; emit it only when present
    t_from = 0 if np.all(np.isfinite(panel.psi[0])) else 1
    exog = pd.DataFrame(
        panel.psi[t_from:], columns=[f"psi_{k + 1}" for k in range(panel.l)]
    )
    exog.insert(0, "t", np.arange(t_from, panel.T + 1))
    exog.to_csv(paths["exog"], index=False, float_format=DATA_FLOAT_FORMAT)
    return paths


def _load_exog(path: str, T: int) -> np.ndarray:
    df = _read_csv(path, ["t"])
    psi_cols = [c for c in df.columns if c.startswith("psi_")]
    if not psi_cols:
        raise ValidationError(f"{path}: no psi_<k> columns found")
    psi_cols = sorted(psi_cols, key=lambda c: int(c.split("_", 1)[1]))
    psi = np.full((T + 1, len(psi_cols)), np.nan)
    seen = set()
    for row in df.itertuples(index=True):
        t = _to_int(getattr(row, "t"), path, row.Index, "t")
        if t in seen:
            raise ValidationError(f"{path}: duplicate t={t} at data row {row.Index + 1}")
        seen.add(t)
        if t > T:
            raise ValidationError(f"{path}: t={t} beyond panel horizon {T}")
        for k, c in enumerate(psi_cols):
            psi[t, k] = _to_float(getattr(row, c), path, row.Index, c)
    missing = [t for t in range(1, T + 1) if t not in seen]
    if missing:
        raise ValidationError(f"{path}: missing exogenous rows for t in {missing[:5]}")
    return psi


def _read_csv(path: str, required: list[str]) -> pd.DataFrame:
    if not os.path.exists(path):
        raise ValidationError(f"input file not found: {path}")
    df = pd.read_csv(path, dtype=str, skipinitialspace=True)
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ValidationError(f"{path}: missing column(s) {missing}")
    return df


def _time_index(col: pd.Series, path: str) -> np.ndarray:
    try:
        t = col.astype(int).to_numpy()
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: non-integer time index: {exc}") from None
    uniq = np.unique(t)
    if uniq[0] != 0 or not np.array_equal(uniq, np.arange(uniq.size)):
        gaps = sorted(set(range(uniq.max() + 1)) - set(uniq.tolist()))
        raise ValidationError(f"{path}: time index must cover 0..T; missing t={gaps[:5]}")
    return t


def _to_int(raw, path: str, row: int, col: str) -> int:
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ValidationError(
            f"{path}: non-integer value {raw!r} in column {col}, data row {row + 1}"
        ) from None


def _to_float(raw, path: str, row: int, col: str, blank_ok: bool = False) -> float:
    if raw is None or (isinstance(raw, float) and np.isnan(raw)) or str(raw).strip() == "":
        if blank_ok:
            return np.nan
        raise ValidationError(f"{path}: missing value in column {col}, data row {row + 1}")
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ValidationError(
            f"{path}: non-numeric value {raw!r} in column {col}, data row {row + 1}"
        ) from None


def _check_shapes(panel: MarketPanel) -> None:
    shape = panel.equity.shape
    if len(shape) != 2 or shape[0] < 2:
        raise ValidationError(f"panel needs at least t=0,1 observations, got shape {shape}")
    for name in ("liability", "dividends", "debt_payments"):
        if getattr(panel, name).shape != shape:
            raise ValidationError(
                f"{name} shape {getattr(panel, name).shape} does not match equity {shape}"
            )
    if panel.rates.shape != (shape[0],):
        raise ValidationError(f"rates shape {panel.rates.shape}, expected ({shape[0]},)")
    if panel.psi.ndim != 2 or panel.psi.shape[0] != shape[0]:
        raise ValidationError(f"psi shape {panel.psi.shape} inconsistent with T={shape[0] - 1}")
    if len(panel.company_ids) != shape[1]:
        raise ValidationError("company_ids length does not match panel width")


def _check_values(panel: MarketPanel) -> None:
    for name in ("equity", "liability"):
        arr = getattr(panel, name)
        bad = np.argwhere(~(arr > 0.0))
        if bad.size:
            t, j = bad[0]
            raise ValidationError(
                f"nonpositive {name} value {arr[t, j]!r} at t={t}, "
                f"company {panel.company_ids[j]} (logs require strictly positive values)"
            )
    for name in ("dividends", "debt_payments"):
        arr = getattr(panel, name)
        bad = np.argwhere(~(arr[1:] > 0.0)) + [1, 0]
        if bad.size:
            t, j = bad[0]
            raise ValidationError(
                f"nonpositive or missing {name} value {arr[t, j]!r} at t={t}, "
                f"company {panel.company_ids[j]}"
            )
        row0 = arr[0]
        if not (np.all(np.isnan(row0)) or np.all(row0 > 0.0)):
            raise ValidationError(
                f"t=0 {name} row must be entirely positive or entirely absent, got {row0!r}"
            )
    if np.any(~np.isfinite(panel.rates)) or np.any(panel.rates <= -1.0):
        t = int(np.argwhere(~np.isfinite(panel.rates) | (panel.rates <= -1.0))[0])
        raise ValidationError(f"spot rate at t={t} must be finite and > -1")
    if np.any(~np.isfinite(panel.psi[1:])):
        t = 1 + int(np.argwhere(~np.isfinite(panel.psi[1:]))[0][0])
        raise ValidationError(f"exogenous regressors must be finite for t>=1 (bad row t={t})")
