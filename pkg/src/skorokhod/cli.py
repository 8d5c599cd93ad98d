"""Command-line interface.

Every run prints one document (JSON by default, CSV with ``--csv``) that
embeds a manifest: subcommand, resolved configuration, seed, tool version
and SHA-256 digests of the input files.  Identical arguments and inputs give
byte-identical output.  Exit codes: 0 success, 2 invalid input, 3 numerical
failure.  An infinite bound is a result, not an error, and is written as the
string "inf".
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import certificate as cert
from . import convergence as conv
from . import diffusion as diff
from . import measure as meas
from . import simulate as sim
from . import varswap as vs
from .boundary import ay_boundary, perkins_boundary
from .errors import NumericalError, SkorokhodError, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
# resolution of the boundary root solves, reported as their error estimate
BOUNDARY_TOL = 1e-12


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# serialisation


def _clean(v):
    """JSON-safe copy with non-finite floats as strings and numpy scalars unwrapped."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return v


def _fmt(v) -> str:
    v = _clean(v)
    return repr(v) if isinstance(v, float) else str(v)


def dumps(doc: dict) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv_text(header, rows, manifest: dict) -> str:
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(_clean(manifest), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# manifest and inputs


def _digest(path: str) -> str:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e.strerror or e}") from None
    return "sha256:" + hashlib.sha256(data).hexdigest()


def manifest(args, inputs: dict) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    return {"subcommand": args.command, "config": cfg, "seed": args.seed, "tool_version": __version__,
            "inputs": {k: _digest(p) for k, p in sorted(inputs.items())}}


def _measure(args, *, validate: bool = True):
    """Measure from --measure FILE or --named NAME; returns (measure, inputs)."""
    if getattr(args, "measure", None):
        try:
            with open(args.measure) as fh:
                spec = json.load(fh)
        except OSError as e:
            raise ValidationError(f"cannot read measure file {args.measure}: {e.strerror or e}") from None
        except json.JSONDecodeError as e:
            raise ValidationError(f"measure file {args.measure} is not valid JSON: {e}") from None
        return meas.from_spec(spec, validate=validate), {"measure": args.measure}
    if getattr(args, "named", None):
        return meas.named(args.named), {}
    raise ValidationError("give a measure with --measure FILE or --named NAME")


def _family(text: str, what: str):
    name, _, rest = text.partition(":")
    name = name.strip().lower()
    try:
        c = float(rest) if rest else None
    except ValueError:
        raise ValidationError(f"cannot read the parameter of {what} {text!r}") from None
    return name, c


def parse_payoff(text: str) -> cert.Payoff:
    """'power:c' (s-w)^c, 'dom:c' (s-w)^2/s^c, 'reldd' (1-w/s)^2."""
    name, c = _family(text, "payoff")
    if name == "power":
        return cert.power(1.0 if c is None else c)
    if name == "dom":
        return cert.drawdown_over_max(0.0 if c is None else c)
    if name == "reldd":
        return cert.relative_drawdown()
    raise ValidationError(f"unknown payoff {text!r}; use power:c, dom:c or reldd")


def parse_running(text: str) -> cert.RunningCost:
    """'power:c' s^-c, 'shifted:c' 1/(c+s), 'constant:c'."""
    name, c = _family(text, "running cost")
    if name in ("power", "shifted", "constant"):
        return cert.RunningCost(name, 1.0 if c is None else c)
    raise ValidationError(f"unknown running cost {text!r}; use power:c, shifted:c or constant:c")


def _grid(text: str | None, hi: float) -> np.ndarray:
    if text is None:
        top = hi if math.isfinite(hi) else 10.0
        return np.linspace(0.0, top, 101)
    parts = text.split(":")
    try:
        if len(parts) == 3:
            lo, up, k = float(parts[0]), float(parts[1]), int(parts[2])
            if k < 1:
                raise ValueError
            return np.linspace(lo, up, k)
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise ValidationError(f"grid must be 'lo:hi:count' or a comma list, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise ValidationError(f"expected a list of integers, got {text!r}") from None


def _cfg(args) -> sim.SimConfig:
    return sim.SimConfig(num_paths=args.paths, dt=args.dt, seed=args.seed, level_cap=args.level_cap,
                         bridge_correction=not args.no_bridge)


# ---------------------------------------------------------------------------
# subcommands; each returns (json document, csv (header, rows) or None)


def cmd_boundary(args):
    m, inputs = _measure(args)
    s = _grid(args.grid, max(m.support_hi, -m.support_lo))
    if np.any(s < 0):
        raise ValidationError("boundary grid levels must be nonnegative")
    ay = ay_boundary(m)
    beta = np.asarray(ay.beta(s), dtype=float)
    b = np.asarray(ay.b(s), dtype=float)
    if m.zero_mass < 1.0:
        pk = perkins_boundary(m)
        ap = np.asarray(pk.alpha_plus(s), dtype=float)
        am = np.asarray(pk.alpha_minus(-s), dtype=float)
    else:  # pragma: no cover - a point mass at 0 is rejected on load
        ap = am = np.full(s.shape, np.nan)
    header = ["s", "beta", "alpha_plus", "alpha_minus", "b", "error_estimate"]
    rows = [[s[k], beta[k], ap[k], am[k], b[k], BOUNDARY_TOL] for k in range(s.size)]
    doc = {"columns": header, "rows": rows,
           "notes": "alpha_minus is evaluated at i = -s; b(s) = E[X | X > s]",
           "manifest": manifest(args, inputs)}
    return doc, (header, rows)


def cmd_bounds(args):
    m, inputs = _measure(args)
    if (args.payoff is None) == (args.running is None):
        raise ValidationError("give exactly one of --payoff and --running")
    whichs = ("ay", "perkins") if args.embedding == "both" else (args.embedding,)
    doc: dict = {}
    if args.payoff is not None:
        F = parse_payoff(args.payoff)
        doc["payoff"] = F.describe()
        for w in whichs:
            doc[w] = cert.bound_terminal(F, m, w, args.tol).to_dict()
    else:
        g = parse_running(args.running)
        doc["running_cost"] = g.describe()
        for w in whichs:
            doc[w] = cert.bound_running(g, m, w, args.tol).to_dict()
    doc["manifest"] = manifest(args, inputs)
    header = ["embedding", "value", "error_estimate", "direction", "classification"]
    rows = [[w, doc[w]["value"], doc[w]["error_estimate"], doc[w]["direction"], doc[w]["classification"]]
            for w in whichs]
    return doc, (header, rows)


def cmd_simulate(args):
    m, inputs = _measure(args)
    F = parse_payoff(args.payoff) if args.payoff else None
    g = parse_running(args.running) if args.running else None
    smp = sim.simulate(args.embedding, m, _cfg(args), g, backend=args.backend)
    rep = sim.mc_report(smp, F, g)
    rep.pop("backend", None)  # both backends give the same numbers
    doc = {"summary": rep, "manifest": manifest(args, inputs)}
    if args.samples:
        smp.to_csv(args.samples)
        doc["samples_csv"] = args.samples
    header = ["w_tau", "s_tau", "i_tau", "tau", "integral", "stopped_by"]
    labels = smp.stopped_by
    rows = [[smp.w_tau[k], smp.s_tau[k], smp.i_tau[k], smp.tau[k], smp.running_integral[k], labels[k]]
            for k in range(len(smp))]
    return doc, (header, rows)


_CONVERGE_COLS = ["n", "m", "sup_beta", "sup_alpha_plus", "sup_alpha_minus", "sup_potential",
                  "potential_at_zero", "distance_tol"]
_PROB_COLS = ["p_En", "p_Em", "p_En_not_Em", "p_tau_n_m_gt_eps", "p_tau_n_lim_gt_eps"]


def cmd_converge(args):
    ns = _int_list(args.n)
    if not ns:
        raise ValidationError("--n needs at least one index")
    seq = conv.sequence(args.fixture)
    grid = _grid(args.grid, 1.5) if args.grid else None
    cfg = _cfg(args) if args.paths > 0 else None
    header = list(_CONVERGE_COLS)
    if cfg is not None:
        for c in _PROB_COLS:
            header += [c, c + "_se"]
    rows, reports = [], []
    for n in ns:
        d = conv.boundary_distance(seq, n, grid)
        rep = {"distance": d}
        row = [n, args.m, d["sup_beta"], d["sup_alpha_plus"], d["sup_alpha_minus"], d["sup_potential"],
               d["potential_at_zero"], BOUNDARY_TOL]
        if cfg is not None:
            c = conv.coupled_stopping_diagnostic(seq, n, args.m, cfg, args.eps, backend=args.backend)
            rep["coupled"] = c
            for col in _PROB_COLS:
                row += [c.get(col, math.nan), c.get(col + "_se", math.nan)]
        rows.append(row)
        reports.append(rep)
    doc = {"fixture": args.fixture, "results": reports, "manifest": manifest(args, {})}
    return doc, (header, rows)


def cmd_varswap(args):
    if (args.measure is None) == (args.quotes is None):
        raise ValidationError("give exactly one of --measure and --quotes")
    if args.quotes is not None:
        q = vs.VarSwapQuote.from_quotes(args.spot, meas.read_quotes(args.quotes))
        inputs = {"quotes": args.quotes}
    else:
        # the file holds the law of the price X_T itself, not a centred law
        term, inputs = _measure(args, validate=False)
        q = vs.VarSwapQuote.from_terminal(args.spot, term)
    res = vs.varswap_bounds(q, args.tol)
    doc = res.to_dict()
    if args.mc_paths > 0:
        cfg = sim.SimConfig(num_paths=args.mc_paths, dt=args.dt, seed=args.seed)
        doc["diagnostics"]["mc_lower"] = vs.varswap_mc_check(q, cfg, "lower", backend=args.backend)
    doc["manifest"] = manifest(args, inputs)
    header = ["bound", "value", "error_estimate"]
    rows = [["lower", doc["lower"], doc["lower_error"]], ["upper", doc["upper"], doc["upper_error"]]]
    return doc, (header, rows)


def cmd_diffusion(args):
    d = diff.named_model(args.model, args.x0)
    m, inputs = _measure(args, validate=False)
    F = parse_payoff(args.payoff)
    res = diff.diffusion_bounds(F, d, m, args.tol)
    doc = {"model": args.model, "x0": d.x0, "payoff": F.describe(), **res, "manifest": manifest(args, inputs)}
    header = ["embedding", "value", "error_estimate", "direction"]
    rows = []
    for w, r in (res["bounds"] or {}).items():
        rows.append([w, r["value"], r["error_estimate"], r["direction"]])
    return doc, (header, rows)


def cmd_ingest(args):
    quotes = meas.read_quotes(args.quotes)
    m = meas.from_call_prices(quotes, args.spot)
    k = np.array([x for x, _ in quotes], dtype=float) - args.spot
    resid = float(np.max(np.abs(m.call(k) - np.array([p for _, p in quotes])))) if k.size else 0.0
    doc = {"spot": args.spot, "measure": m.to_spec(), "mean": m.mean(), "mean_error": abs(m.mean()),
           "max_quote_residual": resid, "manifest": manifest(args, {"quotes": args.quotes})}
    header = ["x", "p"]
    rows = [[x, p] for x, p in m.atoms]
    return doc, (header, rows)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    out = common.add_mutually_exclusive_group()
    out.add_argument("--json", dest="format", action="store_const", const="json", default=argparse.SUPPRESS,
                     help="write JSON (default)")
    out.add_argument("--csv", dest="format", action="store_const", const="csv", default=argparse.SUPPRESS,
                     help="write CSV")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--output", "-o", default=argparse.SUPPRESS, help="write to this file instead of stdout")

    p = _Parser(prog="skorokhod", description="Azema-Yor and Perkins embeddings: boundaries, bounds, simulation.",
                parents=[common])
    p.add_argument("--version", action="version", version=f"skorokhod {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_):
        q = sub.add_parser(name, help=help_, parents=[common], description=help_)
        q.set_defaults(func=func)
        return q

    def measure_args(q):
        g = q.add_mutually_exclusive_group()
        g.add_argument("--measure", help="measure JSON file")
        g.add_argument("--named", help=f"built-in measure: {', '.join(sorted(meas.NAMED))}")

    def sim_args(q, paths=10_000):
        q.add_argument("--paths", type=int, default=paths)
        q.add_argument("--dt", type=float, default=1e-4)
        q.add_argument("--level-cap", type=float, default=1e3)
        q.add_argument("--no-bridge", action="store_true", help="turn off Brownian-bridge extreme sampling")
        q.add_argument("--backend", choices=["cython", "python"], default=None)

    q = add("boundary", cmd_boundary, "tabulate beta, alpha+, alpha- and the barycentre on a grid")
    measure_args(q)
    q.add_argument("--grid", help="'lo:hi:count' or comma list of levels s >= 0")

    q = add("bounds", cmd_bounds, "AY and Perkins values of a terminal payoff or running cost")
    measure_args(q)
    q.add_argument("--payoff", help="power:c | dom:c | reldd")
    q.add_argument("--running", help="power:c | shifted:c | constant:c")
    q.add_argument("--embedding", choices=["ay", "perkins", "both"], default="both")
    q.add_argument("--tol", type=float, default=cert.QUAD_TOL)

    q = add("simulate", cmd_simulate, "Monte Carlo simulation of a stopping rule")
    measure_args(q)
    q.add_argument("--embedding", choices=["ay", "perkins", "cw"], default="ay")
    q.add_argument("--payoff")
    q.add_argument("--running")
    q.add_argument("--samples", help="also write per-path samples to this CSV file")
    sim_args(q)

    q = add("converge", cmd_converge, "boundary distances and coupled stopping diagnostics for a fixture")
    q.add_argument("--fixture", required=True, choices=list(conv.FIXTURES))
    q.add_argument("--n", required=True, help="indices, e.g. '2,4,8'")
    q.add_argument("--m", type=int, default=2, help="comparison index for the coupled diagnostic")
    q.add_argument("--eps", type=float, default=conv.DEFAULT_EPS)
    q.add_argument("--grid", help="'lo:hi:count' or comma list of levels")
    sim_args(q, paths=0)

    q = add("varswap", cmd_varswap, "model-independent bounds on an idealised variance swap")
    q.add_argument("--spot", type=float, required=True)
    q.add_argument("--measure", help="JSON law of the terminal price X_T")
    q.add_argument("--quotes", help="call quote CSV with header strike,price")
    q.add_argument("--tol", type=float, default=cert.QUAD_TOL)
    q.add_argument("--mc-paths", type=int, default=0, help="add a Monte Carlo check of the lower bound")
    q.add_argument("--dt", type=float, default=1e-4)
    q.add_argument("--backend", choices=["cython", "python"], default=None)

    q = add("diffusion", cmd_diffusion, "bounds for a diffusion through its natural scale")
    q.add_argument("--model", required=True, help="brownian | bessel3 | ou(theta)")
    q.add_argument("--x0", type=float, default=None)
    q.add_argument("--measure", required=True, help="JSON law of the stopped diffusion")
    q.add_argument("--payoff", required=True)
    q.add_argument("--tol", type=float, default=1e-9)

    q = add("ingest", cmd_ingest, "centred measure implied by call quotes")
    q.add_argument("--quotes", required=True)
    q.add_argument("--spot", type=float, required=True)
    return p


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_VALIDATION
    args.format = getattr(args, "format", "json")
    args.seed = getattr(args, "seed", 0)
    target = getattr(args, "output", None)
    args.output = target
    try:
        if not 0 <= args.seed < 2**64:
            raise ValidationError("--seed must be a 64-bit unsigned integer")
        doc, table = args.func(args)
        if args.format == "csv":
            text = _csv_text(table[0], table[1], doc["manifest"])
        else:
            text = dumps(doc)
    except ValidationError as e:
        print(f"skorokhod {args.command}: invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as e:
        print(f"skorokhod {args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (KeyError, TypeError) as e:
        # malformed measure files surface here
        print(f"skorokhod {args.command}: invalid input: {e!r}", file=sys.stderr)
        return EXIT_VALIDATION
    except SkorokhodError as e:  # pragma: no cover - every library error is one of the two above
        print(f"skorokhod {args.command}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    if target:
        Path(target).write_text(text)
    else:
        stdout.write(text)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
