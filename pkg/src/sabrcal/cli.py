"""Command-line entry point: ``sabrcal {calibrate,price,smile,eval} CONFIG``.

Exit statuses: 0 success, 2 configuration error, 3 input-file parse or
validation error, 4 numerical failure, 5 any other calibration or pricing
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import model_implied_vol
from .blackscholes import black_scholes_call
from .calibration import (
    PARAM_NAMES,
    calibrate_case2_T2,
    calibrate_formula,
    calibrate_static_T1,
    evaluate,
)
from .dataio import RunConfig, params_to_json, parse_surface
from .errors import ConfigError, NumericDomainError, ParseError, SabrError, ValidationError
from .montecarlo import CliquetSpec, price_cliquet, price_european_call
from .params import params_from_dict

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4
EXIT_FAILURE = 5

REPORT_SCHEMA_VERSION = 1
WORKERS_ENV = "SABRCAL_WORKERS"


def _parse_fixed(items):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--fixed expects key=value, got {item!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--fixed {key}: {value!r} is not a number") from None
    return out


def _worker_budget(flag):
    if flag is not None:
        return flag
    env = os.environ.get(WORKERS_ENV)
    if env is None:
        return None
    try:
        value = int(env)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {env!r}") from None
    if value < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
    return value


def _output_dir(cfg, args):
    out = Path(args.output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_report_csv(path, report):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "K", f"{report.quantity}_market", f"{report.quantity}_model", "rel_error"])
        for r in report.rows:
            w.writerow([repr(r.maturity), repr(r.strike), repr(r.market), repr(r.model), repr(r.rel_error)])


def _report_payload(command, report, cfg):
    body = report.to_dict()
    # wall time goes to stdout only, so report files are reproducible
    body.pop("wall_time", None)
    return {"schema_version": REPORT_SCHEMA_VERSION, "command": command, "report": body, "config": cfg.to_dict()}


def _summary(report, wall):
    return (
        f"{report.model} {report.technique}: mean rel error {report.mean_rel_error:.6e}, "
        f"max {report.max_rel_error:.6e}, cost {report.cost:.6e}, evals {report.evals}, "
        f"seed {report.seed}, wall {wall:.2f}s"
    )


def _params_with_overrides(cfg, fixed):
    params = cfg.model_params()
    if params is None:
        if not fixed:
            raise ConfigError("no model parameters given (params, params_file or --fixed)")
        return params_from_dict(cfg.model, fixed)
    if fixed:
        try:
            params = params.replace(**fixed)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    return params


def cmd_calibrate(cfg: RunConfig, args):
    if cfg.surface is None:
        raise ConfigError("calibrate needs a 'surface'")
    surface = parse_surface(cfg.surface)
    fixed = {**cfg.fixed, **_parse_fixed(args.fixed)}
    workers = _worker_budget(args.workers)
    sched_over = {} if args.seed is None else {"seed": args.seed}
    plan_over = {} if workers is None else {"workers": workers}
    schedule = cfg.annealing_schedule(**sched_over)
    bounds = {k: tuple(v) for k, v in cfg.bounds.items()}
    t0 = time.perf_counter()
    if set(fixed) >= set(PARAM_NAMES[cfg.model]):
        # everything fixed: tabulate model against market
        params = params_from_dict(cfg.model, fixed)
        if cfg.model == "static" and cfg.slice is not None:
            from .calibration import _single_slice

            surface = _single_slice(surface, cfg.slice)
        plan = cfg.simulation_plan(**plan_over, **({} if args.seed is None else {"seed": args.seed}))
        report = evaluate(surface, params, cfg.technique, plan)
    elif cfg.technique == "T_II":
        plan = cfg.simulation_plan(**plan_over)
        report = calibrate_case2_T2(surface, bounds, schedule, plan, fixed, cfg.start)
    elif cfg.model == "static":
        if cfg.slice is None:
            raise ConfigError("the static model is calibrated per maturity: set 'slice'")
        report = calibrate_static_T1(surface, cfg.slice, bounds, schedule, fixed, cfg.start)
    else:
        report = calibrate_formula(surface, cfg.model, bounds, schedule, fixed, cfg.start)
    wall = time.perf_counter() - t0
    out = _output_dir(cfg, args)
    _write_json(out / f"{cfg.label}.json", _report_payload("calibrate", report, cfg))
    _write_report_csv(out / f"{cfg.label}.csv", report)
    print(_summary(report, wall))
    print(json.dumps(params_to_json(report.params)))
    return report


def cmd_eval(cfg: RunConfig, args):
    if cfg.surface is None:
        raise ConfigError("eval needs a 'surface'")
    surface = parse_surface(cfg.surface)
    params = _params_with_overrides(cfg, _parse_fixed(args.fixed))
    workers = _worker_budget(args.workers)
    over = {} if workers is None else {"workers": workers}
    if args.seed is not None:
        over["seed"] = args.seed
    t0 = time.perf_counter()
    report = evaluate(surface, params, cfg.technique, cfg.simulation_plan(**over))
    wall = time.perf_counter() - t0
    out = _output_dir(cfg, args)
    _write_json(out / f"{cfg.label}.json", _report_payload("eval", report, cfg))
    _write_report_csv(out / f"{cfg.label}.csv", report)
    print(_summary(report, wall))
    return report


def cmd_price(cfg: RunConfig, args):
    if cfg.contract is None:
        raise ConfigError("price needs a 'contract'")
    params = _params_with_overrides(cfg, _parse_fixed(args.fixed))
    workers = _worker_budget(args.workers)
    over = {} if workers is None else {"workers": workers}
    if args.seed is not None:
        over["seed"] = args.seed
    plan = cfg.simulation_plan(**over)
    c = cfg.contract
    t0 = time.perf_counter()
    if c["type"] == "european":
        est = price_european_call(params, c["spot"], c["strike"], c["rate"], c["dividend"], c["maturity"], plan)
    else:
        resets = c.get("resets")
        limits = (c["local_floor"], c["local_cap"], c["global_floor"], c["global_cap"])
        if isinstance(resets, int):
            spec = CliquetSpec.evenly_spaced(c["maturity"], resets, *limits)
        elif isinstance(resets, list):
            spec = CliquetSpec(*limits, resets)
        else:
            raise ConfigError("cliquet 'resets' must be a number of dates or a list of dates")
        est = price_cliquet(params, c["spot"], c["rate"], c["dividend"], spec, plan)
    wall = time.perf_counter() - t0
    result = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "price",
        "contract": c,
        "model": params_to_json(params),
        "value": est.value,
        "std_error": est.std_error,
        "num_paths": est.num_paths,
        "dt": plan.dt,
        "seed": plan.seed,
    }
    out = _output_dir(cfg, args)
    _write_json(out / f"{cfg.label}.json", result)
    print(json.dumps({**result, "wall_time": round(wall, 3)}, sort_keys=True))
    return est


def _smile_strikes(cfg, slice_, forward):
    spec = cfg.smile
    if "strikes" in spec:
        return np.asarray(spec["strikes"], dtype=float)
    if "points" in spec:
        n = int(spec["points"])
        if n < 1:
            raise ConfigError("smile.points must be at least 1")
        lo, hi = float(spec.get("low", 0.7)), float(spec.get("high", 1.3))
        if n == 1:
            return np.array([forward])
        return forward * np.linspace(lo, hi, n)
    return np.asarray(slice_.strikes)


def cmd_smile(cfg: RunConfig, args):
    if cfg.surface is None:
        raise ConfigError("smile needs a 'surface' for maturities, rates and dividends")
    surface = parse_surface(cfg.surface)
    params = _params_with_overrides(cfg, _parse_fixed(args.fixed))
    with_prices = bool(cfg.smile.get("prices", False))
    out = _output_dir(cfg, args)
    path = out / f"{cfg.label}.csv"
    rows = 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "K", "sigma_model"] + (["V_model"] if with_prices else []))
        for s in surface.slices:
            f = s.forward(surface.spot)
            ks = _smile_strikes(cfg, s, f)
            vols = np.atleast_1d(model_implied_vol(params, ks, f, s.maturity))
            prices = None
            if with_prices:
                prices = np.atleast_1d(
                    black_scholes_call(surface.spot, ks, s.rate, s.dividend, s.maturity, np.maximum(vols, 0.0))
                )
            for j, (k, v) in enumerate(zip(ks, vols)):
                extra = [repr(float(prices[j]))] if with_prices else []
                w.writerow([repr(s.maturity), repr(float(k)), repr(float(v))] + extra)
                rows += 1
    print(f"wrote {rows} rows to {path}")
    return path


COMMANDS = {"calibrate": cmd_calibrate, "price": cmd_price, "smile": cmd_smile, "eval": cmd_eval}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser():
    parser = _Parser(prog="sabrcal", description="Calibrate and price static and dynamic SABR models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("calibrate", "fit model parameters to a market surface"),
        ("price", "Monte Carlo price of a European or cliquet contract"),
        ("smile", "tabulate model implied vols (and prices) on a strike grid"),
        ("eval", "compare fixed model parameters with a market surface"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="run configuration (JSON)")
        p.add_argument("--seed", type=int, help="override the annealing / simulation seed")
        p.add_argument("--workers", type=int, help=f"worker budget (default: ${WORKERS_ENV} or the config)")
        p.add_argument("--output-dir", help="directory for report files")
        p.add_argument("--fixed", action="append", metavar="K=V", help="fix or override a parameter; repeatable")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be positive")
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, ValidationError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (NumericDomainError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SabrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
