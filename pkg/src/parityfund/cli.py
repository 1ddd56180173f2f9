"""Command-line entry point: ``parityfund <subcommand> [flags]``.

Exit codes: 0 success, 1 validation or usage error, 2 data error.
Diagnostics go to stderr; data goes to ``--out`` or stdout. When the
``PARITY_OUT_DIR`` environment variable is set, relative ``--out`` paths are
placed under it.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .backtest import BacktestConfig, compare_schemes, run_backtest
from .exceptions import DataError, ParityError, ValidationError
from .funds import ABGClassifier, allocation_from_preference, build_parity_line, InvestorPreference
from .marketdata import load_price_history, log_returns, write_price_csv
from .metrics import cri, performance_report, report_to_csv
from .multichain import load_network_config, plan_bridge_transfers
from .rebalancer import (
    CostModel,
    asset_capacities,
    no_trade_filter,
    trade_bounds,
    waterfall_round_robin,
)
from .safehouse import read_audit_log, verify_audit_log
from .synthetic import generate_history
from .weights import weights_report

log = logging.getLogger("parityfund")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _date(text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad date {text!r}, want YYYY-MM-DD") from None


def _out_path(out):
    if out is None:
        return None
    path = Path(out)
    root = os.environ.get("PARITY_OUT_DIR")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _emit(text, out):
    path = _out_path(out)
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise ValidationError(f"{args.command} requires {', '.join(missing)}")


def _history(args):
    _require(args, "data")
    return load_price_history(args.data, (args.date_from, args.date_to))


# -- subcommands -----------------------------------------------------------


def cmd_ingest(args):
    history = _history(args)
    report = {
        "assets": list(history.assets),
        "start": history.dates[0].isoformat(),
        "end": history.dates[-1].isoformat(),
        "n_dates": history.n_dates,
        **history.report.to_dict(),
    }
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", args.out)
    log.info("ingested %d assets x %d days, %d cells forward-filled",
             history.n_assets, history.n_dates, len(history.report.filled))


def cmd_weights(args):
    history = _history(args)
    report = weights_report(history, args.window, args.vvv_window, args.benchmark)
    _emit(report.to_csv(), args.out)


def cmd_classify(args):
    history = _history(args)
    returns = log_returns(history)
    clf = ABGClassifier(args.window, args.vvv_window, benchmark_rate=args.benchmark,
                        assets=history.assets).fit(returns.values)
    line = build_parity_line(clf.subfund_mu_, clf.subfund_cov_)
    default = allocation_from_preference(InvestorPreference("default"), line)
    out = {
        "subfunds": {
            sub.label: {
                "members": list(sub.members),
                "weighting": sub.weighting,
                "weights": {a: float(clf.weights_[history.assets.index(a), k])
                            for a in sub.members},
                "expected_return": sub.stats.expected_return,
                "volatility": sub.stats.volatility,
                "sharpe": None if np.isnan(sub.stats.sharpe) else sub.stats.sharpe,
            }
            for k, sub in enumerate(clf.subfunds_)
        },
        "parity_line": [
            {"position": p.position, "abg": list(p.abg), "expected_return": p.expected_return,
             "volatility": p.volatility}
            for p in line.points
        ],
        "default_allocation": list(default.abg),
    }
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)


def cmd_rebalance(args):
    _require(args, "config")
    cfg = _load_json(args.config)
    try:
        targets = cfg["targets"]
        tvl = float(cfg["tvl_usd"])
        flow = float(cfg.get("net_flow_usd", 0.0))
        current = cfg.get("current_usd", {})
        c = cfg.get("cost", {})
        assets = sorted(targets)

        def per_asset(v, default):
            v = c.get(v, default)
            return {a: float(v[a] if isinstance(v, dict) else v) for a in assets}

        cost = CostModel(per_asset("gas_fee_usd", 0.0), per_asset("pool_depth_usd", 1e7),
                         float(c.get("max_gas_fraction", 0.01)), float(c.get("max_slippage", 0.005)))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"rebalance config: missing or bad field {exc}") from None
    band = args.band if args.band is not None else float(cfg.get("band", 0.01))
    caps = asset_capacities(targets, tvl, flow, current)
    # drift is measured against the post-flow fund value, so a flow alone can trigger trades
    total = tvl + flow
    current_w = {a: (current.get(a, 0.0) / total if total > 0 else 0.0) for a in assets}
    actionable = no_trade_filter(current_w, targets, band)
    plan = waterfall_round_robin(caps, trade_bounds(cost), actionable, flow, cost)
    _emit(plan.to_json() + "\n", args.out)


def _backtest_config(args):
    _require(args, "config")
    cfg = BacktestConfig.from_json(args.config)
    if args.data is not None:
        cfg.data = args.data
    if args.date_from is not None:
        cfg.start = args.date_from
    if args.date_to is not None:
        cfg.end = args.date_to
    if args.band is not None:
        cfg.band = args.band
    if args.window is not None:
        cfg.window_days = args.window
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.synthetic = {**cfg.synthetic, "seed": args.seed}
    return cfg


def cmd_backtest(args):
    cfg = _backtest_config(args)
    report = run_backtest(cfg)
    out = _out_path(args.out or "backtest")
    report.write(out)
    sys.stdout.write(f"{out}\n")


def cmd_compare(args):
    cfg = _backtest_config(args)
    table, _ = compare_schemes(cfg)
    _emit(table.to_csv(), args.out)


def cmd_cri(args):
    _require(args, "config")
    cfg = _load_json(args.config)
    try:
        report = cri(cfg["weights"], cfg["market_caps"], cfg["volatilities"],
                     assets=cfg.get("assets"), universe_market_cap=cfg.get("universe_market_cap"),
                     sigma_ref=cfg.get("sigma_ref"), chain_fractions=cfg.get("chain_fractions"))
    except KeyError as exc:
        raise ValidationError(f"cri config missing {exc}") from None
    _emit(report.to_json() + "\n", args.out)


def cmd_report(args):
    _require(args, "data")
    series = {}
    dates = {}
    try:
        with open(args.data, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            cols = reader.fieldnames or []
            entity_col = "fund" if "fund" in cols else "entity"
            value_col = "unit_price" if "unit_price" in cols else "nav_usd"
            if entity_col not in cols or value_col not in cols or "date" not in cols:
                raise DataError("NAV CSV needs date, fund|entity and unit_price|nav_usd columns")
            for line, row in enumerate(reader, start=2):
                try:
                    value = float(row[value_col])
                except ValueError:
                    raise DataError(f"line {line}: bad {value_col} {row[value_col]!r}") from None
                series.setdefault(row[entity_col], []).append(value)
                dates.setdefault(row[entity_col], []).append(row["date"])
    except FileNotFoundError:
        raise DataError(f"file not found: {args.data}") from None
    cri_values = _load_json(args.config).get("cri", {}) if args.config else {}
    rows = performance_report({k: np.array(v) for k, v in series.items()}, dates, cri_values,
                              benchmark_rate=args.benchmark)
    _emit(report_to_csv(rows), args.out)


def cmd_safehouse_verify(args):
    _require(args, "log")
    try:
        events = read_audit_log(args.log)
    except FileNotFoundError:
        raise DataError(f"audit log not found: {args.log}") from None
    result = verify_audit_log(events)
    if result.ok:
        sys.stdout.write(f"ok {result.n_events} events head {result.final_digest}\n")
        return 0
    sys.stderr.write(f"audit chain broken at event {result.index}: {result.error}\n")
    return 2


def cmd_bridge_plan(args):
    _require(args, "config")
    cfg = _load_json(args.config)
    try:
        _, links = load_network_config(cfg["networks"])
        plan = plan_bridge_transfers(cfg["targets"], cfg["tvls_usd"], links,
                                     float(cfg.get("max_gas_fraction", 0.01)))
    except KeyError as exc:
        raise ValidationError(f"bridge-plan config missing {exc}") from None
    _emit(plan.to_json() + "\n", args.out)


def cmd_synth(args):
    history = generate_history(args.assets, args.days, seed=args.seed or 0)
    path = _out_path(args.out or "prices.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    write_price_csv(history, path)
    sys.stdout.write(f"{path}\n")


COMMANDS = {
    "ingest": (cmd_ingest, "load a price CSV and print the ingest report"),
    "weights": (cmd_weights, "VVV / MVO / no-short weight comparison CSV"),
    "classify": (cmd_classify, "Alpha/Beta/Gamma sub-funds and the parity line"),
    "rebalance": (cmd_rebalance, "trade plan for a flow from a JSON config"),
    "backtest": (cmd_backtest, "run a backtest and write a report directory"),
    "compare": (cmd_compare, "backtest each weighting scheme and compare"),
    "cri": (cmd_cri, "Concentration Risk Indicator breakdown"),
    "report": (cmd_report, "interval performance report from a NAV CSV"),
    "safehouse-verify": (cmd_safehouse_verify, "verify an audit log hash chain"),
    "bridge-plan": (cmd_bridge_plan, "plan cross-network bridge transfers"),
    "synth": (cmd_synth, "write a synthetic price CSV"),
}


def build_parser():
    parser = _Parser(prog="parityfund", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data")
        p.add_argument("--config")
        p.add_argument("--out")
        p.add_argument("--window", type=int, default=None)
        p.add_argument("--band", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--from", dest="date_from", type=_date, default=None)
        p.add_argument("--to", dest="date_to", type=_date, default=None)
        if name in ("weights", "classify"):
            p.add_argument("--vvv-window", type=int, default=90)
        if name in ("weights", "classify", "report"):
            p.add_argument("--benchmark", type=float, default=0.10)
        if name == "safehouse-verify":
            p.add_argument("--log")
        if name == "synth":
            p.add_argument("--assets", type=int, default=10)
            p.add_argument("--days", type=int, default=546)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command in ("weights", "classify") and args.window is None:
        args.window = 90
    try:
        code = COMMANDS[args.command][0](args)
    except DataError as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return 2
    except FileNotFoundError as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return 2
    except ParityError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
