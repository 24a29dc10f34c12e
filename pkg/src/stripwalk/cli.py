"""Command line interface: ``stripwalk <subcommand> [options]``.

Every run writes a header (tool version, subcommand, spec digest, seed and
parameters) followed by one or more tables, as tab-separated text
(``--format tsv``, header lines start with ``#``) or JSON. Timestamps are
added to the header only with ``--with-timestamps``, so identical inputs
give byte-identical output otherwise.

Exit codes: 0 success, 2 validation or precondition failure, 64 usage
error (including an unknown subcommand), 66 unreadable spec file.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from ._rng import env_seed
from .envgen import SpecError, sample_window, validate_condition_c2
from .lyap import classify_regime, lyapunov_estimate
from .potential import Valley, potential_profile, predict_b_t
from .selftest import run_selftest
from .specfile import SpecFileError, load_spec, shipped_spec_path, shipped_specs
from .walk.chain import reflected_window
from .walk.experiments import clt_experiment, sinai_experiment
from .walk.solvers import solve_window
from .zeta import WindowTooSmallError

EX_OK, EX_FAIL, EX_USAGE, EX_NOINPUT = 0, 2, 64, 66
SUBCOMMANDS = ("validate", "classify", "potential", "valley", "sinai", "clt", "hitting",
               "selftest")


class UsageError(Exception):
    pass


class Failure(Exception):
    pass


@dataclass
class Table:
    name: str
    columns: list
    rows: list = field(default_factory=list)


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _json_value(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else _fmt(v)
    return v


def render(header: dict, tables: list, fmt: str) -> str:
    if fmt == "json":
        doc = {"header": {k: _json_value(v) for k, v in header.items()},
               "tables": {t.name: [dict(zip(t.columns, map(_json_value, r))) for r in t.rows]
                          for t in tables}}
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"
    lines = [f"# {k}: {_fmt(v)}" for k, v in header.items()]
    for t in tables:
        lines.append(f"## {t.name}")
        lines.append("\t".join(t.columns))
        lines.extend("\t".join(_fmt(x) for x in r) for r in t.rows)
    return "\n".join(lines) + "\n"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stripwalk", description="Random walks in random environments on a strip.")
    p.add_argument("--version", action="version", version=f"stripwalk {__version__}")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)

    def common(sp, spec=True):
        if spec:
            sp.add_argument("--spec", required=True,
                            help="spec file, or builtin:NAME for a shipped spec")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default="-", help="output file (default stdout)")
        sp.add_argument("--format", choices=("tsv", "json"), default="tsv")
        sp.add_argument("--with-timestamps", action="store_true")
        return sp

    common(sub.add_parser("validate", help="Condition C2 report per support atom"))
    sp = common(sub.add_parser("classify", help="Lyapunov estimate and regime"))
    sp.add_argument("--n", type=int, default=10**6, help="number of layers")
    sp = common(sub.add_parser("potential", help="export Phi and its mirror"))
    sp.add_argument("--a", type=int, default=-1000)
    sp.add_argument("--b", type=int, default=1000)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp = common(sub.add_parser("valley", help="predicted localisation point b_t"))
    sp.add_argument("--t", type=float, action="append", required=True)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--gamma", type=float, default=0.3)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp = common(sub.add_parser("sinai", help="coverage of the valley by quenched walks"))
    sp.add_argument("--t", type=float, action="append", required=True)
    sp.add_argument("--envs", type=int, default=10)
    sp.add_argument("--walks", type=int, default=20)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--gamma", type=float, default=0.3)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--workers", type=int, default=1)
    sp = common(sub.add_parser("clt", help="normality of the zero-drift 1D walk"))
    sp.add_argument("--t", type=float, action="append", required=True)
    sp.add_argument("--walks", type=int, default=10**4)
    sp.add_argument("--envs", type=int, default=1, help="quenched environments")
    sp.add_argument("--workers", type=int, default=1)
    sp = common(sub.add_parser("hitting", help="exact h, e and pi on a reflected window"))
    sp.add_argument("--a", type=int, default=-10)
    sp.add_argument("--b", type=int, default=10)
    common(sub.add_parser("selftest", help="fast invariant suite"), spec=False)
    return p


def _load(arg: str):
    if arg.startswith("builtin:"):
        name = arg.split(":", 1)[1]
        if not name.endswith(".toml"):
            name += ".toml"
        if name not in shipped_specs():
            raise SpecFileError(f"no shipped spec {name!r}; have {', '.join(shipped_specs())}")
        return load_spec(shipped_spec_path(name))
    return load_spec(arg)


def _ints(ts):
    out = []
    for t in ts:
        if not t > 1 or t != int(t):
            raise UsageError(f"--t must be an integer > 1, got {t}")
        out.append(int(t))
    return out


def cmd_validate(args, ls):
    spec = ls.spec
    bad = dict(spec.validate())
    tab = Table("c2", ["atom", "prob", "epsilon", "l", "r_power_norm", "p_margin", "q_margin",
                       "ok", "failing"])
    if spec.kind == "dirichlet":
        tab.rows.append(["family", 1.0, spec.epsilon, spec.l, None, spec.epsilon, spec.epsilon,
                         not bad, ""])
    else:
        for k, (t, p) in enumerate(spec.support()):
            rep = validate_condition_c2(t, spec.epsilon, spec.l)
            tab.rows.append([k, float(p), spec.epsilon, spec.l, rep.r_power_norm, rep.p_margin,
                             rep.q_margin, rep.ok, ",".join(rep.failing_clauses())])
    fails = [r for r in tab.rows if not r[7]]
    msg = None
    if fails:
        msg = "; ".join(f"atom {r[0]} fails {r[8]}" for r in fails)
    return [tab], msg


def cmd_classify(args, ls):
    est = lyapunov_estimate(ls.spec, args.n, seed=args.seed)
    tab = Table("lyapunov", ["lambda_hat", "std_error", "n", "regime", "analytic_zero"])
    tab.rows.append([est.lambda_hat, est.std_error, est.n_steps, classify_regime(est),
                     est.analytic_zero])
    return [tab], None


def _profile(spec, seed, a, b, tol):
    if not a <= 0 <= b:
        raise UsageError("the range must contain layer 0")
    margin = 256
    while True:
        w = sample_window(spec, seed, a - margin, b + margin)
        try:
            return potential_profile(w, tol, a=a, b=b)
        except WindowTooSmallError as exc:
            margin = 2 * max(margin, exc.needed_left, exc.needed_right)


def cmd_potential(args, ls):
    prof = _profile(ls.spec, args.seed, args.a, args.b, args.tol)
    tab = Table("potential", ["n", "phi", "phi_minus"], [list(r) for r in prof.rows()])
    return [tab], None


def cmd_valley(args, ls):
    tab = Table("valley", ["t", "found", "reason", "a_t", "b_t", "c_t", "a", "c", "passed",
                           "est1", "est2", "est3", "est4", "est5", "est6"])
    for t in _ints(args.t):
        v, _ = predict_b_t(ls.spec, args.seed, t, args.delta, args.gamma, tol=args.tol)
        if isinstance(v, Valley):
            c = v.certificate
            tab.rows.append([t, True, "", v.a_t, v.b_t, v.c_t, v.a, v.c, v.passed]
                            + [c[f"est{i}"] for i in range(1, 7)])
        else:
            tab.rows.append([t, False, v.reason] + [None] * 12)
    return [tab], None


def cmd_sinai(args, ls):
    res = sinai_experiment(ls.spec, _ints(args.t), args.envs, args.walks, args.delta,
                           args.gamma, seed=args.seed, workers=args.workers, tol=args.tol)
    recs = Table("walks", ["env_seed", "t", "walk_id", "layer", "lane", "b_t", "in_gamma",
                           "in_valley"],
                 [[r.env_seed, r.t, r.walk_id, r.layer, r.lane, r.b_t, r.in_gamma, r.in_valley]
                  for r in res.records])
    envs = Table("envs", ["env", "env_seed", "t", "found", "reason", "a_t", "b_t", "c_t",
                          "passed", "oracle_b_t", "in_gamma", "in_valley", "walks"],
                 [[e.env_index, e.env_seed, e.t, e.found, e.reason, e.a_t, e.b_t, e.c_t,
                   e.passed, e.oracle_b_t, e.in_gamma, e.in_valley, e.n_walks]
                  for e in res.envs])
    summ = Table("summary", ["t", "envs", "walks", "no_valley", "pass_rate", "too_small_t",
                             "frac_gamma", "frac_valley", "frac_gamma_certified",
                             "oracle_agree"],
                 [[s.t, s.n_envs, s.n_walks, s.no_valley, s.pass_rate, s.too_small_t,
                   s.frac_gamma, s.frac_valley, s.frac_gamma_certified, s.oracle_agree]
                  for s in res.summary])
    for s in res.summary:
        if s.too_small_t:
            print(f"stripwalk: t={s.t} flagged too small (pass rate {s.pass_rate:.2f}); "
                  "no coverage claim", file=sys.stderr)
    return [summ, envs, recs], None


def cmd_clt(args, ls):
    if ls.spec.oned is None:
        raise Failure("clt needs a spec of kind 'oned'")
    tab = Table("clt", ["t", "mode", "env_seed", "walks", "ks", "ks_pvalue", "sigma2_hat",
                        "var_ratio", "cond_var_min", "cond_var_max", "cond_var_ok"])
    for t in _ints(args.t):
        runs = [("annealed", None)] + [("quenched", env_seed(args.seed, k))
                                       for k in range(args.envs)]
        for mode, es in runs:
            r = clt_experiment(ls.spec.oned, t, args.walks, seed=args.seed, mode=mode, env=es,
                               epsilon=ls.spec.epsilon, workers=args.workers)
            tab.rows.append([t, mode, r.env_seed, r.n_walks, r.ks, r.ks_pvalue, r.sigma2_hat,
                             r.var_ratio, r.cond_var_range[0], r.cond_var_range[1],
                             r.cond_var_ok])
    return [tab], None


def cmd_hitting(args, ls):
    if args.b - args.a < 2:
        raise UsageError("hitting needs b - a >= 2")
    w = sample_window(ls.spec, args.seed, args.a, args.b)
    sol = solve_window(reflected_window(w, args.a, args.b))
    tab = Table("hitting", ["layer", "lane", "h", "e", "pi"])
    for j in range(len(w)):
        for i in range(w.m):
            tab.rows.append([args.a + j, i + 1, sol.h[j, i], sol.e[j, i], sol.pi_ab[j, i]])
    return [tab], None


def cmd_selftest(args, ls):
    tab = Table("selftest", ["check", "passed", "value"],
                [list(r) for r in run_selftest()])
    bad = [r[0] for r in tab.rows if not r[1]]
    return [tab], ("failed checks: " + ", ".join(bad)) if bad else None


HANDLERS = {"validate": cmd_validate, "classify": cmd_classify, "potential": cmd_potential,
            "valley": cmd_valley, "sinai": cmd_sinai, "clt": cmd_clt, "hitting": cmd_hitting,
            "selftest": cmd_selftest}


def _header(args, ls) -> dict:
    h = {"tool": "stripwalk", "version": __version__, "command": args.command,
         "spec_digest": ls.digest if ls else "none",
         "spec_name": (ls.spec.name or ls.source) if ls else "none",
         "seed": args.seed}
    skip = {"command", "spec", "seed", "out", "format", "with_timestamps", "workers"}
    for k, v in sorted(vars(args).items()):
        if k not in skip:
            h[k] = ",".join(_fmt(x) for x in v) if isinstance(v, list) else v
    if args.with_timestamps:
        h["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return h


def run(argv=None) -> int:
    """Execute one subcommand and return its exit code."""
    parser = build_parser()
    try:
        argv = list(sys.argv[1:] if argv is None else argv)
        first = next((a for a in argv if not a.startswith("-")), None)
        if first is not None and first not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {first!r}; choose from {', '.join(SUBCOMMANDS)}")
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        print(f"stripwalk: usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    try:
        ls = _load(args.spec) if hasattr(args, "spec") else None
    except SpecFileError as exc:
        print(f"stripwalk: cannot read spec: {exc}", file=sys.stderr)
        return EX_NOINPUT
    except SpecError as exc:
        print(f"stripwalk: invalid spec: {exc}", file=sys.stderr)
        return EX_FAIL
    try:
        tables, failure = HANDLERS[args.command](args, ls)
    except UsageError as exc:
        print(f"stripwalk: usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    except (Failure, SpecError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"stripwalk: {args.command} failed: {exc}", file=sys.stderr)
        return EX_FAIL
    text = render(_header(args, ls), tables, args.format)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    if failure:
        print(f"stripwalk: {args.command}: {failure}", file=sys.stderr)
        return EX_FAIL
    return EX_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
