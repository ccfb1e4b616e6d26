"""``dame`` command-line interface.

Each invocation is turned into a config dict ``{"command", "params", "seed"}``
which fully determines the output. The config is echoed as the first line
of the CSV, so ``dame replay out.csv`` reproduces ``out.csv`` exactly.

Exit codes: 0 success, 2 invalid input, 3 numeric failure. Errors are
printed to stderr as a single JSON line.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Any, Callable

import numpy as np

from . import experiments as ex
from .bounds import NumericError, lower_bound_at, m_tilde_search, upper_bound_at
from .distributions import size_distribution_from_dict
from .mechanisms import (
    STRICT_ALPHA_MAX,
    audit_laplace_privacy,
    audit_rr_privacy,
    empirical_laplace_audit,
    empirical_rr_audit,
    keep_probability,
)
from .protocol import SENSITIVITY_FACTOR, BinPartition, compute_tau, run_dame
from .report import BOUNDS_HEADER, SIM_HEADER, parse_csv, render_csv, render_svg, write_text_atomic

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("mtilde", "bounds", "simulate", "benchmark", "audit")
PRESETS = ("figure-s2-desk", "figure-s2-paper", "figure-s1-poisson", "figure-s1-uniform",
           "figure-s1-binomial", "figure-s1-sweep")
INT_KEYS = {"m", "m1", "m2", "trials", "n"}


class ValidationError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _json_arg(text: str, what: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what}: malformed JSON ({exc.msg} at char {exc.pos})") from None


def _pos_int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValidationError(f"{what} must be a positive integer")
    return value


def _alpha(value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError("alpha must be a number")
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ValidationError("alpha must be a positive finite number")
    return value


def _check_keys(params: dict, allowed: set[str], what: str) -> None:
    extra = set(params) - allowed
    if extra:
        raise ValidationError(f"{what}: unknown keys {sorted(extra)}")


# ---------------------------------------------------------------------------
# commands: each takes (params, seed, ctx) and returns (header, rows, chart)


class Context:
    def __init__(self, threads: int | None, quiet: bool, transcript_path: str | None = None):
        self.threads = threads
        self.quiet = quiet
        self.transcript_path = transcript_path

    def progress(self, msg: str) -> None:
        if not self.quiet:
            print(msg, file=sys.stderr, flush=True)


MTILDE_HEADER = ("family", "n", "alpha", "n_alpha_sq", "m_tilde", "iterations", "iteration_budget",
                 "search_hi", "fallback")


def cmd_mtilde(params: dict, seed: int, ctx: Context):
    _check_keys(params, {"dist", "n", "alpha"}, "mtilde")
    dist = size_distribution_from_dict(params["dist"])
    n, alpha = _pos_int(params["n"], "n"), _alpha(params["alpha"])
    x = n * alpha * alpha
    res = m_tilde_search(dist, x)
    row = {"family": dist.kind, "n": n, "alpha": alpha, "n_alpha_sq": x, "m_tilde": res.m_tilde,
           "iterations": res.iterations, "iteration_budget": res.iteration_budget(x),
           "search_hi": res.search_hi, "fallback": res.fallback}
    return MTILDE_HEADER, [row], None


def _grid_values(grid: dict) -> tuple[str, list]:
    _check_keys(grid, {"param", "lo", "hi", "steps"}, "grid")
    steps = _pos_int(grid["steps"], "grid steps")
    vals = np.linspace(float(grid["lo"]), float(grid["hi"]), steps)
    if grid["param"] in INT_KEYS:
        return grid["param"], [int(round(v)) for v in vals]
    return grid["param"], [float(v) for v in vals]


def parse_grid(text: str) -> dict:
    """``param=lo:hi:steps`` into a grid dict."""
    try:
        name, rng = text.split("=", 1)
        lo, hi, steps = rng.split(":")
        return {"param": name, "lo": float(lo), "hi": float(hi), "steps": int(steps)}
    except ValueError:
        raise ValidationError(f"--grid expects param=lo:hi:steps, got {text!r}") from None


def cmd_bounds(params: dict, seed: int, ctx: Context):
    _check_keys(params, {"dist", "n", "alpha", "grid", "a_max"}, "bounds")
    base = dict(params["dist"]) if isinstance(params["dist"], dict) else params["dist"]
    size_distribution_from_dict(base)
    n, alpha = _pos_int(params["n"], "n"), _alpha(params["alpha"])
    a_max = params.get("a_max")
    grid = params.get("grid")
    points: list[tuple[str, Any, dict, int, float]] = []
    if grid is None:
        points.append(("none", 0, base, n, alpha))
    else:
        name, values = _grid_values(grid)
        for v in values:
            d, nn, aa = dict(base), n, alpha
            if name == "n":
                nn = _pos_int(v, "n")
            elif name == "alpha":
                aa = _alpha(v)
            elif name in d and name != "kind":
                d[name] = v
            else:
                raise ValidationError(f"grid parameter {name!r} is not a key of the distribution, n or alpha")
            points.append((name, v, d, nn, aa))
    rows = []
    for name, v, d, nn, aa in points:
        dist = size_distribution_from_dict(d)
        x = nn * aa * aa
        lower, arg = lower_bound_at(dist, x, a_max)
        upper, mt = upper_bound_at(dist, x)
        rows.append({"family": dist.kind, "param_name": name, "param_value": v, "n_alpha_sq": x,
                     "lower": lower, "lower_a": arg, "upper": upper, "m_tilde": mt})
    chart = None
    if grid is not None:
        chart = _bounds_chart(rows, grid["param"])
    return BOUNDS_HEADER, rows, chart


def _bounds_chart(rows, xlabel):
    series = {
        "lower": [(r["param_value"], r["lower"]) for r in rows],
        "upper": [(r["param_value"], r["upper"]) for r in rows],
    }
    return dict(series=series, title="risk bounds", xlabel=xlabel, ylabel="risk", logx=True, logy=True)


def cmd_simulate(params: dict, seed: int, ctx: Context):
    _check_keys(params, {"scenario"}, "simulate")
    spec = dict(params["scenario"]) if isinstance(params["scenario"], dict) else params["scenario"]
    if isinstance(spec, dict):
        spec["seed"] = seed
    s = ex.Scenario.from_dict(spec)
    r = ex.estimate_risk(s, threads=ctx.threads)
    if ctx.transcript_path:
        if s.algorithm != "dame":
            raise ValidationError("--dump-transcript needs algorithm 'dame'")
        rng = ex.trial_rng(s.seed, 0)
        users = ex.draw_users(s.size_dist, s.data_dist, s.n, rng)
        t = run_dame(users, s.size_dist, s.alpha, None, rng)
        write_text_atomic(ctx.transcript_path, json.dumps(t.to_dict()) + "\n")
    return SIM_HEADER, [ex.risk_row(s, "none", 0.0, r)], None


def _s2_preset(name: str, trials: int | None) -> ex.FigureS2Preset:
    base = ex.FIGURE_S2_DESK if name == "figure-s2-desk" else ex.FIGURE_S2_PAPER
    if trials is None:
        return base
    return ex.FigureS2Preset(base.m1, base.m2, base.n, base.alpha, trials, base.rho_points, base.theta)


def cmd_benchmark(params: dict, seed: int, ctx: Context):
    _check_keys(params, {"preset", "trials"}, "benchmark")
    preset = params["preset"]
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r}; expected one of {list(PRESETS)}")
    trials = params.get("trials")
    if trials is not None:
        _pos_int(trials, "trials")
    if preset.startswith("figure-s2"):
        rows = ex.run_figure_s2(_s2_preset(preset, trials), seed=seed, threads=ctx.threads,
                                progress=ctx.progress)
        series: dict[str, list] = {}
        for r in rows:
            series.setdefault(r["algorithm"], []).append((r["param_value"], r["mse"]))
        chart = dict(series=series, title=preset, xlabel="rho", ylabel="mean squared error",
                     logx=False, logy=True)
        return SIM_HEADER, rows, chart
    if preset == "figure-s1-sweep":
        rows = ex.run_figure_s1_sweep()
        return BOUNDS_HEADER, rows, _bounds_chart(rows, "n alpha^2")
    rows = ex.run_figure_s1(preset.rsplit("-", 1)[1])
    return BOUNDS_HEADER, rows, _bounds_chart(rows, "lambda")


AUDIT_HEADER = ("mechanism", "alpha", "parameter", "sensitivity", "exact_loss", "empirical_loss", "trials")


def cmd_audit(params: dict, seed: int, ctx: Context):
    _check_keys(params, {"alpha", "n", "m_tilde", "trials"}, "audit")
    alpha = _alpha(params["alpha"])
    n = _pos_int(params.get("n", 10_000), "n")
    m_tilde = _pos_int(params.get("m_tilde", 1), "m_tilde")
    trials = params.get("trials", 100_000)
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 0:
        raise ValidationError("trials must be a non-negative integer")
    if alpha > STRICT_ALPHA_MAX:
        ctx.progress(f"note: alpha={alpha} is above {STRICT_ALPHA_MAX:.6f}; the risk bounds do not cover it")
    pi = keep_probability(alpha)
    tau = compute_tau(m_tilde, n, alpha)
    sens = SENSITIVITY_FACTOR * tau
    scale = sens / alpha
    rr_emp = lap_emp = float("nan")
    if trials:
        rng = ex.trial_rng(seed, 0)
        bins = max(6, BinPartition(tau).bin_count)
        rr_emp = empirical_rr_audit(alpha, bins, trials, rng).composed
        lap_emp = empirical_laplace_audit(scale, sens, trials, rng)
    rows = [
        {"mechanism": "randomized_response", "alpha": alpha, "parameter": pi, "sensitivity": 6,
         "exact_loss": audit_rr_privacy(pi), "empirical_loss": rr_emp, "trials": trials},
        {"mechanism": "laplace", "alpha": alpha, "parameter": scale, "sensitivity": sens,
         "exact_loss": audit_laplace_privacy(scale, sens), "empirical_loss": lap_emp, "trials": trials},
    ]
    return AUDIT_HEADER, rows, None


HANDLERS: dict[str, Callable] = {
    "mtilde": cmd_mtilde,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
    "audit": cmd_audit,
}


def validate_config(config: Any) -> dict:
    if not isinstance(config, dict):
        raise ValidationError("config must be a JSON object")
    _check_keys(config, {"command", "params", "seed"}, "config")
    if config.get("command") not in COMMANDS:
        raise ValidationError(f"command must be one of {list(COMMANDS)}")
    if not isinstance(config.get("params"), dict):
        raise ValidationError("config params must be a JSON object")
    seed = config.get("seed", 0)
    try:
        ex._check_seed(seed)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    return {"command": config["command"], "params": config["params"], "seed": seed}


def dispatch(config: dict, ctx: Context) -> tuple[str, dict | None]:
    """Run a validated config; return the CSV text and an optional chart spec."""
    config = validate_config(config)
    try:
        header, rows, chart = HANDLERS[config["command"]](config["params"], config["seed"], ctx)
    except KeyError as exc:
        raise ValidationError(f"missing parameter {exc.args[0]!r}") from None
    return render_csv(header, rows, config), chart


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", help="CSV path (default: stdout)")
    p.add_argument("--svg", help="also render a chart to this SVG file")
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0; DAME_SEED overrides)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    p.add_argument("--quiet", action="store_true", help="no progress output on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dame", description="Distribution-aware private mean estimation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mtilde", help="solve for the effective maximum dataset size")
    p.add_argument("--dist", required=True, help="size distribution as JSON")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    _common(p)

    p = sub.add_parser("bounds", help="lower and upper risk bounds")
    p.add_argument("--dist", required=True, help="size distribution as JSON")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--grid", help="sweep one parameter: param=lo:hi:steps")
    p.add_argument("--a-max", type=int, default=None, help="largest a scanned by the lower bound")
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo risk of one scenario")
    p.add_argument("--scenario", required=True, help="scenario as JSON")
    p.add_argument("--dump-transcript", help="write the transcript of one DAME run to this JSON file")
    _common(p)

    p = sub.add_parser("benchmark", help="run a preset benchmark")
    p.add_argument("--preset", required=True, choices=PRESETS)
    p.add_argument("--trials", type=int, default=None, help="override the preset's trial count")
    _common(p)

    p = sub.add_parser("audit", help="exact and empirical privacy loss of both mechanisms")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--n", type=int, default=10_000, help="users, for the Laplace scale (default 10000)")
    p.add_argument("--m-tilde", type=int, default=1, help="m_tilde, for the Laplace scale (default 1)")
    p.add_argument("--trials", type=int, default=100_000, help="empirical audit draws; 0 skips it")
    p.add_argument("--format", choices=("csv", "table"), default="csv")
    _common(p)

    p = sub.add_parser("replay", help="rerun the config echoed in a CSV produced by dame")
    p.add_argument("csv", help="CSV file whose first line is a config comment")
    _common(p)
    return parser


def _resolve_seed(cli_seed: int | None, fallback: int = 0) -> int:
    env = os.environ.get("DAME_SEED")
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"DAME_SEED must be an integer, got {env!r}") from None
    return fallback if cli_seed is None else cli_seed


def config_from_args(args: argparse.Namespace) -> dict:
    cmd = args.command
    if cmd == "replay":
        with open(args.csv, encoding="utf-8") as fh:
            config, _, _ = parse_csv(fh.read())
        if config is None:
            raise ValidationError(f"{args.csv} has no config line")
        config = validate_config(config)
        config["seed"] = _resolve_seed(args.seed, config["seed"])
        return config
    if cmd in ("mtilde", "bounds"):
        params: dict[str, Any] = {"dist": _json_arg(args.dist, "--dist"), "n": args.n, "alpha": args.alpha}
        if cmd == "bounds":
            params["grid"] = parse_grid(args.grid) if args.grid else None
            params["a_max"] = args.a_max
        seed = _resolve_seed(args.seed)
    elif cmd == "simulate":
        scenario = _json_arg(args.scenario, "--scenario")
        scenario_seed = scenario.get("seed", 0) if isinstance(scenario, dict) else 0
        params = {"scenario": scenario}
        seed = _resolve_seed(args.seed, scenario_seed)
    elif cmd == "benchmark":
        params = {"preset": args.preset, "trials": args.trials}
        seed = _resolve_seed(args.seed)
    else:
        params = {"alpha": args.alpha, "n": args.n, "m_tilde": args.m_tilde, "trials": args.trials}
        seed = _resolve_seed(args.seed)
    return {"command": cmd, "params": params, "seed": seed}


def _table(text: str) -> str:
    _, header, rows = parse_csv(text)
    cells = [list(header)] + [[str(r[h]) for h in header] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    return "\n".join("  ".join(c[i].ljust(widths[i]) for i in range(len(header))).rstrip() for c in cells) + "\n"


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        config = config_from_args(args)
        ctx = Context(args.threads, args.quiet, getattr(args, "dump_transcript", None))
        text, chart = dispatch(config, ctx)
        if getattr(args, "format", "csv") == "table":
            text = _table(text)
        if args.output:
            write_text_atomic(args.output, text)
        else:
            sys.stdout.write(text)
        if args.svg:
            if chart is None:
                raise ValidationError(f"command {config['command']!r} has no chart")
            write_text_atomic(args.svg, render_svg(**chart))
    except (NumericError, ArithmeticError) as exc:
        return _fail("numeric", str(exc), EXIT_NUMERIC)
    except (ValueError, TypeError, OSError) as exc:
        return _fail("validation", str(exc), EXIT_INVALID)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
