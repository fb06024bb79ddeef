"""Command-line interface: simulate, estimate, linearize, price, default, check.

Option precedence is flags over a JSON config file (``--config``) over
built-in defaults.  Exit codes: 0 success, 1 validation error, 2 numerical
failure.  All derived numeric output is printed with 12 significant digits;
data CSV files keep full precision so they round-trip bit-exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from .checks import CHECK_SUITES, run_checks
from .errors import NumericalError, RegimeCreditError, ValidationError
from .estimate import EMConfig, build_y_series, em_fit, hamilton_filter, log_regime_densities
from .linearize import export_schedule, solve_mu_schedule
from .model import load_params, save_params
from .panel import load_panel, log_transform, save_panel
from .pricing import ValuationRequest, mixture_default_prob, mixture_valuation
from .simulate import SimulationSpec, simulate_market

CONFIG_SCHEMA_VERSION = 1
REPORT_DIGITS = 12

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "paths": "enumerate",
    "mc_paths": 100_000,
    "max_iter": 500,
    "tol": 1e-9,
    "init": "residual-kmeans",
    "n_starts": 1,
    "T": 200,
    "rate0": 0.01,
    "payout_equity": 0.04,
    "payout_liability": 0.06,
    "equity0": "1.0",
    "liability0": "1.0",
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    try:
        opts = _merge_options(args)
        return args.handler(opts)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except RegimeCreditError as exc:  # defensive: unclassified library error
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _merge_options(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.config}: invalid JSON: {exc}") from None
        version = cfg.pop("version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ValidationError(
                f"config version {version} not supported (expected {CONFIG_SCHEMA_VERSION})"
            )
    merged = dict(DEFAULTS)
    merged.update(cfg)
    for key, val in vars(args).items():
        if val is not None and key not in ("handler", "command", "config"):
            merged[key] = val
    return merged


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="regimecredit",
        description="Regime-switching structural credit model toolkit",
    )
    p.set_defaults(command=None)
    sub = p.add_subparsers(dest="command")

    def common(sp, *, data=False, params=False):
        sp.add_argument("--config", help="JSON config file; flags override its entries")
        sp.add_argument("--seed", type=int)
        if data:
            sp.add_argument("--panel", help="panel.csv path")
            sp.add_argument("--rates", help="rates.csv path")
            sp.add_argument("--exog", help="optional exog.csv path")
        if params:
            sp.add_argument("--params", help="estimated parameters JSON")

    sp = sub.add_parser("simulate", help="generate a synthetic market panel")
    common(sp, params=True)
    sp.add_argument("--T", type=int, help="horizon (number of periods)")
    sp.add_argument("--equity0", help="comma list of initial equity values")
    sp.add_argument("--liability0", help="comma list of initial liability values")
    sp.add_argument("--rate0", type=float, help="initial simple spot rate")
    sp.add_argument("--payout-equity", dest="payout_equity", type=float)
    sp.add_argument("--payout-liability", dest="payout_liability", type=float)
    sp.add_argument("--out-dir", dest="out_dir", required=True)
    sp.set_defaults(handler=_cmd_simulate)

    sp = sub.add_parser("estimate", help="fit regime-switching parameters by EM")
    common(sp, data=True)
    sp.add_argument("--regimes", type=int, help="number of regimes N")
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.add_argument("--tol", type=float, help="relative log-likelihood tolerance")
    sp.add_argument("--init", choices=["residual-kmeans", "random"])
    sp.add_argument("--n-starts", dest="n_starts", type=int)
    sp.add_argument("--literal-paper-mstep", dest="literal_paper_mstep",
                    action="store_true", default=None,
                    help="use the printed transition denominator without row renormalization")
    sp.add_argument("--out", required=True, help="output parameters JSON")
    sp.add_argument("--trace", help="optional CSV of the log-likelihood trace")
    sp.set_defaults(handler=_cmd_estimate)

    sp = sub.add_parser("linearize", help="solve and export the linearization schedule")
    common(sp, data=True, params=True)
    sp.add_argument("--out", required=True, help="output schedule CSV")
    sp.set_defaults(handler=_cmd_linearize)

    for name in ("price", "default"):
        sp = sub.add_parser(
            name,
            help="value bonds/options/equity/liabilities" if name == "price"
            else "physical default probabilities",
        )
        common(sp, data=True, params=True)
        sp.add_argument("--t", type=int, help="valuation time")
        sp.add_argument("--maturity", type=int)
        sp.add_argument("--strikes", help="comma list (or scalar) of liability nominals")
        sp.add_argument("--thresholds", help="comma list (or scalar) of default thresholds")
        sp.add_argument("--regime-beliefs", dest="regime_beliefs",
                        help="comma list overriding the filtered regime distribution")
        sp.add_argument("--paths", choices=["enumerate", "mc"])
        sp.add_argument("--mc-paths", dest="mc_paths", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--emit-paths", dest="emit_paths", action="store_true", default=None)
        sp.add_argument("--literal-discount", dest="literal_discount",
                        action="store_true", default=None)
        sp.add_argument("--literal-paper-cdf", dest="literal_cdf",
                        action="store_true", default=None)
        sp.add_argument("--no-timestamps", dest="no_timestamps",
                        action="store_true", default=None)
        sp.add_argument("--out", required=True, help="output report JSON")
        if name == "price":
            sp.add_argument("--csv", help="optional per-company summary CSV")
        sp.set_defaults(handler=_cmd_price if name == "price" else _cmd_default)

    sp = sub.add_parser("check", help="run built-in oracle suites")
    sp.add_argument("--suite", default="all",
                    help=f"comma list from {sorted(CHECK_SUITES)} or 'all'")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config", help=argparse.SUPPRESS)
    sp.set_defaults(handler=_cmd_check)
    return p


def _cmd_simulate(opts) -> int:
    params = load_params(_require(opts, "params"))
    spec = SimulationSpec(
        params=params,
        T=int(opts["T"]),
        equity0=_floats(opts["equity0"]),
        liability0=_floats(opts["liability0"]),
        rate0=float(opts["rate0"]),
        payout_equity=float(opts["payout_equity"]),
        payout_liability=float(opts["payout_liability"]),
        seed=int(opts["seed"]),
    )
    panel, regimes, _ = simulate_market(spec)
    paths = save_panel(panel, opts["out_dir"])
    regimes_path = os.path.join(opts["out_dir"], "regimes.csv")
    with open(regimes_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "s_t"])
        for t in range(1, panel.T + 1):
            writer.writerow([t, int(regimes[t]) + 1])
    paths["regimes"] = regimes_path
    print(f"simulated T={panel.T}, n={panel.n} panel -> {opts['out_dir']}")
    return 0


def _cmd_estimate(opts) -> int:
    panel = load_panel(_require(opts, "panel"), _require(opts, "rates"), opts.get("exog"))
    lp = log_transform(panel)
    config = EMConfig(
        max_iter=int(opts["max_iter"]),
        loglik_tol=float(opts["tol"]),
        init=opts["init"],
        n_starts=int(opts["n_starts"]),
        seed=int(opts["seed"]),
        literal_paper_mstep=bool(opts.get("literal_paper_mstep", False)),
    )
    fit = em_fit(lp, int(_require(opts, "regimes")), config)
    save_params(
        fit.params,
        opts["out"],
        loglik=fit.loglik,
        iterations=fit.iterations,
        converged=fit.converged,
    )
    if opts.get("trace"):
        with open(opts["trace"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "loglik"])
            for i, ll in enumerate(fit.trace):
                writer.writerow([i, _fmt(ll)])
    print(
        f"estimated N={fit.params.N} model: loglik={_fmt(fit.loglik)} "
        f"iterations={fit.iterations} converged={fit.converged} -> {opts['out']}"
    )
    return 0


def _cmd_linearize(opts) -> int:
    panel = load_panel(_require(opts, "panel"), _require(opts, "rates"), opts.get("exog"))
    params = load_params(_require(opts, "params"))
    sched = solve_mu_schedule(log_transform(panel), params)
    export_schedule(sched, opts["out"])
    print(f"schedule over t=0..{sched.T} -> {opts['out']}")
    return 0


def _cmd_price(opts) -> int:
    return _price_or_default(opts, want_q=True)


def _cmd_default(opts) -> int:
    return _price_or_default(opts, want_q=False)


def _price_or_default(opts, want_q: bool) -> int:
    panel = load_panel(_require(opts, "panel"), _require(opts, "rates"), opts.get("exog"))
    params = load_params(_require(opts, "params"))
    lp = log_transform(panel)
    t = int(_require(opts, "t"))
    maturity = int(_require(opts, "maturity"))
    if t >= maturity:
        raise ValidationError(f"valuation time t={t} must be before maturity {maturity}")
    if maturity > panel.T:
        raise ValidationError(f"maturity {maturity} beyond panel horizon {panel.T}")
    sched = solve_mu_schedule(lp, params, horizon=maturity)
    thresholds = _floats(_require(opts, "thresholds"), width=panel.n)
    # the default-probability path never prices options; strikes are optional there
    strikes_raw = opts.get("strikes")
    if strikes_raw is None and not want_q:
        strikes = thresholds
    else:
        strikes = _floats(_require(opts, "strikes"), width=panel.n)
    request = ValuationRequest(
        t=t,
        maturity=maturity,
        strikes=strikes,
        thresholds=thresholds,
        path_strategy=opts["paths"],
        mc_paths=int(opts["mc_paths"]),
        seed=int(opts["seed"]),
        literal_discount=bool(opts.get("literal_discount", False)),
        literal_cdf=bool(opts.get("literal_cdf", False)),
        emit_paths=bool(opts.get("emit_paths", False)),
    )
    z_tt = _regime_beliefs(opts, lp, params, t)
    fn = mixture_valuation if want_q else mixture_default_prob
    report = fn(request, params, sched, z_tt, lp.x(t), threads=int(opts["threads"]))

    doc = report.to_dict()
    if not want_q:
        for key in ("bond_price", "call", "put", "equity_rn", "liability_rn",
                    "asset_forward_value"):
            doc.pop(key, None)
    doc["company_ids"] = list(panel.company_ids)
    if not opts.get("no_timestamps", False):
        doc["created_at"] = datetime.now(timezone.utc).isoformat()
    _write_json(doc, opts["out"])
    if want_q and opts.get("csv"):
        _write_summary_csv(report, panel.company_ids, opts["csv"])
    if want_q:
        print(f"bond={_fmt(report.bond_price)} joint_default={_fmt(report.default_joint)} "
              f"paths={report.n_paths} -> {opts['out']}")
    else:
        print(f"joint_default={_fmt(report.default_joint)} paths={report.n_paths} "
              f"-> {opts['out']}")
    return 0


def _cmd_check(opts) -> int:
    names = list(CHECK_SUITES) if opts["suite"] == "all" else opts["suite"].split(",")
    try:
        results = run_checks([s.strip() for s in names], seed=int(opts["seed"]))
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    width = max(len(name) for name, _, _ in results)
    failures = 0
    for name, ok, detail in results:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} suite(s) failed", file=sys.stderr)
        return 2
    return 0


def _regime_beliefs(opts, lp, params, t):
    if opts.get("regime_beliefs"):
        z = _floats(opts["regime_beliefs"])
        if z.size != params.N:
            raise ValidationError(f"--regime-beliefs needs {params.N} entries")
        return z
    if t == 0:
        return None
    y, psi, _, _ = build_y_series(lp)
    filt = hamilton_filter(log_regime_densities(y, psi, params), params.chain)
    return filt.z_filt[t]


def _require(opts, key):
    val = opts.get(key)
    if val is None:
        raise ValidationError(f"missing required option --{key.replace('_', '-')}")
    return val


def _floats(raw, width: int | None = None) -> np.ndarray:
    if isinstance(raw, (list, tuple, np.ndarray)):
        vals = np.asarray(raw, dtype=float)
    else:
        try:
            vals = np.array([float(tok) for tok in str(raw).split(",") if tok.strip()])
        except ValueError:
            raise ValidationError(f"could not parse float list {raw!r}") from None
    if width is not None and vals.size == 1 and width > 1:
        vals = np.full(width, vals[0])
    if width is not None and vals.size != width:
        raise ValidationError(f"expected {width} value(s), got {vals.size} from {raw!r}")
    return vals


def _fmt(x) -> str:
    return f"{float(x):.{REPORT_DIGITS}g}"


def _round_tree(obj):
    if isinstance(obj, float):
        return float(_fmt(obj)) if np.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: _round_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_tree(v) for v in obj]
    return obj


def _write_json(doc: dict, path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_round_tree(doc), fh, indent=2)
        fh.write("\n")


def _write_summary_csv(report, company_ids, path: str) -> None:
    rows = []
    for i, cid in enumerate(company_ids):
        rows.append(
            {
                "company": cid,
                "call": report.call[i],
                "put": report.put[i],
                "equity_rn": report.equity_rn[i],
                "liability_rn": report.liability_rn[i],
                "default_prob_marginal": report.default_marginal[i],
            }
        )
    pd.DataFrame(rows).to_csv(path, index=False, float_format=f"%.{REPORT_DIGITS}g")


if __name__ == "__main__":
    sys.exit(main())
