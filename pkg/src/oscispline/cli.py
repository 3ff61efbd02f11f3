"""Command-line front end.

Every output starts with ``# {...}`` lines holding the resolved
configuration as JSON; CSV bodies use 17 significant digits.  Exit codes:
0 success, 1 invalid input, 2 solver failure (partial results are still
written and flagged).

Weights are given as ``exp:base,amplitude,rate``, ``const:c``,
``power:base,amplitude,p`` or ``tab:file.csv`` (columns t,w).  ``--f``
sets both envelopes; ``--f-minus``/``--f-plus`` override either side.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .calculus import build_calculus, segment_calculus
from .errors import NoConvergence, NumericalError, OscisplineError, PreconditionViolated, ValidationError
from .modulus import NormInverter, least_deviating_primitive, omega
from .oscillate import cn_curve, oscillate_halfline, oscillate_segment, worker_count
from .spline import spline_from_json
from .weights import Segment, check_assumptions, half_line_grid, make_weight
from .zerofit import ZeroFitProblem, fit_knots, residual


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma separated list of numbers, got {text!r}") from None


class Output:
    """Collects one result and writes it with its configuration header."""

    def __init__(self, args, config: dict):
        self.args = args
        self.config = config
        self.status = {"ok": True}

    def _open(self):
        path = getattr(self.args, "out", None)
        return open(path, "w", encoding="utf-8", newline="") if path else None

    def header(self) -> str:
        head = {"config": self.config, "status": self.status}
        return "# " + json.dumps(head, sort_keys=True, default=_json_default) + "\n"

    def write_csv(self, columns, rows):
        fh = self._open()
        out = fh or sys.stdout
        try:
            out.write(self.header())
            out.write(",".join(columns) + "\n")
            for row in rows:
                out.write(",".join(_fmt(v) for v in row) + "\n")
        finally:
            if fh:
                fh.close()

    def write_json(self, payload):
        fh = self._open()
        out = fh or sys.stdout
        try:
            out.write(self.header())
            out.write(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
        finally:
            if fh:
                fh.close()


def read_json(path):
    """JSON written by this tool: the ``#`` header lines are skipped."""
    try:
        with open(path, encoding="utf-8") as fh:
            body = "".join(line for line in fh if not line.startswith("#"))
        return json.loads(body)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if hasattr(o, "to_json"):
        return o.to_json()
    return str(o)


# --------------------------------------------------------------------------
# weights from arguments


def _weights(args, domain=None):
    g = make_weight(args.g, domain)
    f = getattr(args, "f", None)
    fm = getattr(args, "f_minus", None) or f
    fp = getattr(args, "f_plus", None) or f
    if fm is None or fp is None:
        if hasattr(args, "f"):
            raise UsageError("envelope weights are required: --f or both --f-minus and --f-plus")
        return None, None, g
    return make_weight(fm, domain), make_weight(fp, domain), g


def _weight_config(args) -> dict:
    return {k: getattr(args, k) for k in ("g", "f", "f_minus", "f_plus") if getattr(args, k, None)}


# --------------------------------------------------------------------------
# subcommands


def cmd_check(args) -> int:
    domain = Segment(args.A) if args.A else None
    fm, fp, g = _weights(args, domain)
    rep = check_assumptions(fm, fp, g, args.r)
    out = Output(args, {"subcommand": "check", "r": args.r, "A": args.A, **_weight_config(args)})
    out.status["all_pass"] = rep.all_pass
    out.write_json(rep.to_json())
    return 0


def cmd_pk_table(args) -> int:
    g = make_weight(args.g)
    calc = build_calculus(g, args.r)
    t = np.linspace(args.t_min, args.t_max, args.points)
    cols = ["t"] + [f"P_{k}" for k in range(args.r + 1)]
    vals = [t] + [np.atleast_1d(calc.P(k, t)) for k in range(args.r + 1)]
    out = Output(args, {"subcommand": "pk-table", "r": args.r, "g": args.g, "t_min": args.t_min,
                        "t_max": args.t_max, "points": args.points, "A_k": list(calc.A)})
    out.write_csv(cols, zip(*vals))
    return 0


def cmd_zerofit(args) -> int:
    A = math.inf if args.A is None else args.A
    g = make_weight(args.g, None if args.A is None else Segment(A))
    calc = build_calculus(g, args.r) if math.isinf(A) else segment_calculus(g, args.r, A)
    prob = ZeroFitProblem(args.r, A, _floats(args.zeros), calc)
    out = Output(args, {"subcommand": "zerofit", "r": args.r, "A": args.A, "zeros": args.zeros, "g": args.g})
    try:
        spl = fit_knots(prob)
    except NoConvergence as exc:
        out.status.update(ok=False, error=str(exc), residual=exc.residual)
        out.write_json({"best_knots": exc.best, "residual": exc.residual})
        return 2
    res = residual(prob, spl)
    out.write_json({"spline": spl.to_json(), "residual": res, "scale": prob.scale()})
    return 0


def _solution_samples(sol, points):
    spl = sol.spline
    if math.isfinite(spl.end):
        t = np.linspace(0.0, spl.end, points)
    else:
        t = half_line_grid(max(spl.calc.length_scale(), float(spl.knots[-1]) if spl.n else 1.0), points)
    cols = ["t"] + [f"G{j}" for j in range(spl.r)]
    data = [t] + [spl.eval(j, t) for j in range(spl.r)]
    return cols, list(zip(*data))


def cmd_oscillate(args) -> int:
    cfg = {"subcommand": "oscillate", "r": args.r, "n": args.n, "A": args.A, "alpha": args.alpha,
           "method": args.method, **_weight_config(args)}
    out = Output(args, cfg)
    if (args.A is None) == (args.alpha is None):
        raise UsageError("give exactly one of --A (segment) or --alpha (half-line)")
    if args.samples and not args.samples_out:
        raise UsageError("--samples needs --samples-out")
    try:
        if args.A is not None:
            fm, fp, g = _weights(args, Segment(args.A))
            sol = oscillate_segment(args.r, args.n, args.A, fm, fp, g)
        else:
            fm, fp, g = _weights(args)
            sol = oscillate_halfline(args.r, args.n, args.alpha, fm, fp, g, method=args.method)
    except NoConvergence as exc:
        out.status.update(ok=False, error=str(exc), residual=exc.residual)
        best = exc.best
        out.write_json({"best": getattr(best, "u", best), "residual": exc.residual})
        return 2
    out.write_json(sol.to_json())
    if args.samples:
        cols, rows = _solution_samples(sol, args.samples)
        Output(argparse.Namespace(out=args.samples_out), cfg).write_csv(cols, rows)
    return 0


def cmd_cn(args) -> int:
    fm, fp, g = _weights(args)
    grid = _floats(args.alpha_grid)
    curve = cn_curve(args.r, args.n, grid, fm, fp, g, warm_start=not args.no_warm_start,
                     workers=worker_count(args.workers or 1))
    out = Output(args, {"subcommand": "cn", "r": args.r, "n": args.n, "alpha_grid": grid,
                        "warm_start": not args.no_warm_start, **_weight_config(args)})
    failed = [p for p in curve.points if p.error]
    out.status.update(ok=not failed, warnings=curve.warnings, failures=len(failed))
    rows = [(p.alpha, p.C, ";".join(_fmt(t) for t in p.solution.knots) if p.solution else "",
             p.error or "") for p in curve.points]
    out.write_csv(["alpha", "C", "knots", "error"], rows)
    return 2 if failed else 0


def cmd_modulus(args) -> int:
    f = make_weight(args.f)
    g = make_weight(args.g)
    deltas = _floats(args.delta_grid)
    out = Output(args, {"subcommand": "modulus", "r": args.r, "k": args.k, "delta_grid": deltas,
                        "g": args.g, "f": args.f, "n_max": args.n_max})
    if args.r < 2:
        raise PreconditionViolated("modulus needs r >= 2")
    inv = NormInverter(args.r, f, g, n_max=args.n_max)
    rows, witnesses, truncated = [], [], False
    for d in deltas:
        res = omega(args.r, args.k, d, f, g, inverter=inv)
        truncated |= res.truncated
        rows.append((d, res.omega_value, res.regime.value, res.n if res.n is not None else 0, res.alpha,
                     res.truncated))
        witnesses.append(res.to_json())
    out.status.update(ok=not truncated, C0=inv.C0, truncated=truncated)
    out.write_csv(["delta", "omega", "regime", "n", "alpha", "truncated"], rows)
    if args.witness_out:
        Output(argparse.Namespace(out=args.witness_out), out.config).write_json(witnesses)
    return 2 if truncated else 0


def cmd_least_dev(args) -> int:
    f = make_weight(args.f)
    g = make_weight(args.g)
    grid = _floats(args.a_end)
    with ThreadPoolExecutor(max_workers=worker_count(args.workers or 1)) as pool:
        fits = list(pool.map(lambda a: least_deviating_primitive(args.r, a, f, g), grid))
    out = Output(args, {"subcommand": "least-dev", "r": args.r, "a_end": grid, "g": args.g, "f": args.f})
    cols = ["a_end", "phi", "lower"] + [f"coef_{j}" for j in range(args.r)]
    out.write_csv(cols, [(a, p.phi, p.lower, *p.coefficients) for a, p in zip(grid, fits)])
    return 0


def cmd_oracle_verify(args) -> int:
    from .oracle import BruteForceConfig, agreement_suite

    cfg = BruteForceConfig(knot_grid_resolution=args.knot_grid, sample_grid_resolution=args.sample_grid)
    rows = agreement_suite(cfg)
    out = Output(args, {"subcommand": "oracle-verify", "knot_grid": args.knot_grid,
                        "sample_grid": args.sample_grid, "tolerance": cfg.tolerance})
    ok = all(r.passed for r in rows)
    out.status["ok"] = ok
    out.write_csv(["case", "r", "n", "C_main", "C_oracle", "abs_diff", "result"],
                  [(r.case, r.r, r.n, r.C_main, r.C_oracle, abs(r.C_main - r.C_oracle),
                    "PASS" if r.passed else "FAIL") for r in rows])
    return 0 if ok else 2


def cmd_sample(args) -> int:
    data = read_json(args.spline)
    data = data.get("spline", data)
    dom = data["domain"]
    if dom == "halfline":
        g = make_weight(args.g)
        calc = build_calculus(g, data["r"])
    else:
        A = float(dom["segment"])
        g = make_weight(args.g, Segment(A))
        calc = segment_calculus(g, data["r"], A)
    spl = spline_from_json(data, calc)
    if math.isfinite(spl.end):
        t = np.linspace(0.0, spl.end, args.points)
    else:
        t = np.linspace(0.0, args.t_max, args.points) if args.t_max else half_line_grid(
            max(calc.length_scale(), float(spl.knots[-1]) if spl.n else 1.0), args.points)
    cols = ["t"] + [f"G{j}" for j in range(spl.r)]
    out = Output(args, {"subcommand": "sample", "spline": data, "g": args.g, "points": args.points})
    out.write_csv(cols, zip(t, *[spl.eval(j, t) for j in range(spl.r)]))
    return 0


# --------------------------------------------------------------------------
# grammar


def _add_weights(p, envelopes=True, split=True):
    p.add_argument("--g", required=True, help="weight g, e.g. exp:0,1,1")
    if envelopes:
        p.add_argument("--f", help="envelope weight for both sides")
        if split:
            p.add_argument("--f-minus", help="lower envelope f-")
            p.add_argument("--f-plus", help="upper envelope f+")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="oscispline", description="Oscillating perfect g-splines, C_n(alpha) and omega.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--config", help="JSON file whose keys provide defaults for the subcommand options")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("check", help="report the standing assumptions")
    _add_weights(p)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--A", type=float, help="segment length (default: half-line)")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("pk-table", help="CSV of t, P_0..P_r")
    _add_weights(p, envelopes=False)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--t-min", type=float, default=0.0)
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=101)
    common(p)
    p.set_defaults(func=cmd_pk_table)

    p = sub.add_parser("zerofit", help="knots of the spline with prescribed zeros")
    _add_weights(p, envelopes=False)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--A", type=float, help="segment length (default: half-line)")
    p.add_argument("--zeros", required=True, help="comma separated zeros")
    common(p)
    p.set_defaults(func=cmd_zerofit)

    p = sub.add_parser("oscillate", help="maximally oscillating spline (segment or half-line)")
    _add_weights(p)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--A", type=float, help="segment length")
    p.add_argument("--alpha", type=float, help="boundary ratio at infinity (half-line)")
    p.add_argument("--method", choices=("direct", "truncated"), default="direct")
    p.add_argument("--samples", type=int, default=0, help="also write this many spline samples as CSV")
    p.add_argument("--samples-out", help="file for the samples CSV (default: stdout)")
    common(p)
    p.set_defaults(func=cmd_oscillate)

    p = sub.add_parser("cn", help="table of C_n(alpha)")
    _add_weights(p)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha-grid", required=True)
    p.add_argument("--no-warm-start", action="store_true", help="solve grid points independently")
    p.add_argument("--workers", type=int, help="worker threads when not warm-starting")
    common(p)
    p.set_defaults(func=cmd_cn)

    p = sub.add_parser("modulus", help="omega(delta) for D^k")
    _add_weights(p, split=False)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--delta-grid", required=True)
    p.add_argument("--n-max", type=int, default=24)
    p.add_argument("--witness-out", help="JSON file for the witness splines")
    common(p)
    p.set_defaults(func=cmd_modulus)

    p = sub.add_parser("least-dev", help="least deviating primitive phi(a)")
    _add_weights(p, split=False)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--a-end", required=True, help="comma separated right ends")
    p.add_argument("--workers", type=int)
    common(p)
    p.set_defaults(func=cmd_least_dev)

    p = sub.add_parser("oracle-verify", help="brute force vs. solver agreement table")
    p.add_argument("--knot-grid", type=int, default=24)
    p.add_argument("--sample-grid", type=int, default=1200)
    common(p)
    p.set_defaults(func=cmd_oracle_verify)

    p = sub.add_parser("sample", help="CSV samples of a spline given as JSON")
    _add_weights(p, envelopes=False)
    p.add_argument("--spline", required=True, help="JSON file (output of oscillate or zerofit)")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--t-max", type=float, help="right end of the sample grid on the half-line")
    common(p)
    p.set_defaults(func=cmd_sample)
    return ap


def _apply_config(parser, argv):
    """Defaults from --config (JSON object with option names as keys)."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    data = read_json(known.config)
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    data = {k.replace("-", "_"): (",".join(map(str, v)) if isinstance(v, list) else v) for k, v in data.items()}
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.set_defaults(**data)
            for a in sp._actions:
                if a.dest in data:
                    a.required = False


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return int(args.func(args))
    except UsageError as exc:
        sys.stderr.write(str(exc) + "\n")
        return 1
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except NoConvergence as exc:
        sys.stderr.write(f"no convergence: {exc} (residual {exc.residual:.3g})\n")
        return 2
    except (NumericalError, OscisplineError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
