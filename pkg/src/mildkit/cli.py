"""``mildkit`` command line.

Exit codes: 0 when every check passes, 1 when a verification fails (negative
margin, coverage gap, inequality violated), 2 for usage or precondition errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import sys
import time
from datetime import datetime, timezone
from fractions import Fraction

import sympy

from mildkit import __version__, faadibruno, mildness, parametrize
from mildkit.mildness import GridSpec, MildCert
from mildkit.oracles import ExpPolyOracle
from mildkit.ratcalc import (
    DomainError,
    ExpPoly,
    PrecisionError,
    construct,
    derivative,
    evaluate,
    format_rational,
    parse_rational,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

COMMANDS = ("derive", "certify", "fit", "check-lemmas", "gf-check", "parametrize",
            "probe-nonuniform", "bench")


class UsageError(Exception):
    """Bad input discovered after argument parsing; maps to exit code 2."""


# ---------------------------------------------------------------------------
# argument types
# ---------------------------------------------------------------------------

def rational(text) -> Fraction:
    try:
        return parse_rational(text)
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def positive_rational(text) -> Fraction:
    q = rational(text)
    if q <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive rational, got {text!r}")
    return q


def rational_list(text) -> list[Fraction]:
    if isinstance(text, list):
        return text
    return [rational(t) for t in str(text).split(",") if t.strip()]


def int_list(text) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in str(text).split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _const(text: str) -> sympy.Expr:
    """A certificate constant: a rational, ``e``, or a product/power of them."""
    s = text.strip()
    if not s or "." in s:
        raise argparse.ArgumentTypeError(f"constants must be exact (p/q or e), got {text!r}")
    allowed = set("0123456789/*^+-()e ")
    if not set(s) <= allowed:
        raise argparse.ArgumentTypeError(f"unsupported constant {text!r}")
    try:
        expr = sympy.sympify(s.replace("^", "**"), locals={"e": sympy.E})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"cannot parse constant {text!r}") from exc
    if expr.free_symbols or not expr.is_positive:
        raise argparse.ArgumentTypeError(f"constant {text!r} must be a positive number")
    return expr


def cert_spec(text) -> MildCert:
    """``A=..,B=..,C=..[,kind=mild|weakly_mild]``."""
    fields = {}
    for part in str(text).split(","):
        key, sep, val = part.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected key=value in {text!r}")
        fields[key.strip()] = val.strip()
    if not {"A", "B", "C"} <= set(fields) or set(fields) - {"A", "B", "C", "kind"}:
        raise argparse.ArgumentTypeError("certificate needs exactly A, B, C (and optionally kind)")
    C = rational(fields["C"])
    kind = fields.get("kind", mildness.MILD)
    try:
        return MildCert(_const(fields["A"]), _const(fields["B"]), C, kind, label="user")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--alpha", type=positive_rational, default=Fraction(1), help="exponent alpha as p/q")
    p.add_argument("--nmax", type=int, default=15, help="highest derivative order")
    p.add_argument("--grid-points", type=int, default=512, dest="grid_points")
    p.add_argument("--precision", type=int, default=256, help="precision in bits")
    p.add_argument("--epsilon", type=rational_list, default=None, help="comma-separated p/q list")
    p.add_argument("--output", "-o", default=None, help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--config", default=None, help="INI file of key = value defaults")
    p.add_argument("--deterministic", action="store_true", help="omit the timestamp")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="mildkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mildkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("derive", parents=[common], help="exact derivatives of exp-monomials")
    p.add_argument("--kind", default="p_alpha",
                   choices=("p_alpha", "u_alpha", "monomial", "exp_of_linear", "constant"))
    p.add_argument("--arity", type=int, default=1)
    p.add_argument("--mu", type=rational_list, default=None)
    p.add_argument("--input", default=None, help="ExpPoly JSON file (overrides --kind)")
    p.add_argument("--nu", type=int_list, default=None, help="multi-index, e.g. 2,1")
    p.add_argument("--at", type=rational_list, default=None, help="evaluate at this point")
    p.add_argument("--faa", action="store_true", help="dump the Faa di Bruno index set")
    p.add_argument("--lambda", dest="lam", type=int_list, default=None)

    p = sub.add_parser("certify", parents=[common], help="verify a mildness certificate")
    p.add_argument("--function", choices=("p_alpha", "abm", "weak"), default="p_alpha")
    p.add_argument("--mu", type=rational_list, default=None, help="exponents for --function abm")
    p.add_argument("--cert", type=cert_spec, default=None, help="A=..,B=..,C=.. (default: derived)")

    p = sub.add_parser("fit", parents=[common], help="fit minimal constants for a given C")
    p.add_argument("--function", choices=("p_alpha", "naive"), default="p_alpha")
    p.add_argument("--C", dest="C", type=rational, default=None, help="default 1/alpha")

    p = sub.add_parser("check-lemmas", parents=[common], help="rising-factorial and exp-max lemmas")
    p.add_argument("--kmax", type=int, default=30)

    p = sub.add_parser("gf-check", parents=[common], help="generating-function identity")
    p.add_argument("--params", type=rational_list, default=None, help="Af,Bf,Ag,Bg (default: lattice)")

    p = sub.add_parser("parametrize", parents=[common], help="three-chart family of xy = eps^2")
    p.add_argument("--strategy", choices=("paper", "fit-largest", "fit-grid"), default="paper")
    p.add_argument("--held-out", type=rational_list, default=None, dest="held_out")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--csv", default=None, help="also write per-(eps, n) rows here")

    p = sub.add_parser("probe-nonuniform", parents=[common], help="fitted A0(eps) of naive charts")
    p.add_argument("--fixed-order", action="store_true", dest="fixed_order",
                   help="use --nmax for every eps instead of an order chosen per eps")

    p = sub.add_parser("bench", parents=[common], help="timing table")
    p.add_argument("--partitions", type=int, default=40)
    p.add_argument("--order", type=int, default=12, help="|nu| for enumerate_ps")
    p.add_argument("--diff", type=int, default=30, help="derivative order of P_alpha")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Load ``--config`` values as subparser defaults so explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cp = configparser.ConfigParser()
    with open(known.config, encoding="utf-8") as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[mildkit]\n" + text
    cp.read_string(text)
    values = {}
    for section in cp.sections():
        values.update(cp[section])
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in sub_action.choices.values():
        dests = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, raw in values.items():
            dest = key.replace("-", "_")
            if dest == "n_max":
                dest = "nmax"
            act = dests.get(dest)
            if act is None:
                continue
            if isinstance(act, argparse._StoreTrueAction):
                defaults[dest] = raw.strip().lower() in ("1", "true", "yes", "on")
            elif act.type is not None:
                try:
                    defaults[dest] = act.type(raw)
                except argparse.ArgumentTypeError as exc:
                    raise UsageError(f"config key {key}: {exc}") from None
            else:
                defaults[dest] = raw
        sp.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _grid(args, arity: int = 1) -> GridSpec:
    return GridSpec(points=args.grid_points) if arity == 1 else GridSpec(points=min(args.grid_points, 64))


def cmd_derive(args) -> tuple[dict, bool, list]:
    if args.faa:
        if args.nu is None or args.lam is None:
            raise UsageError("--faa needs --nu and --lambda")
        tuples = faadibruno.enumerate_ps(args.nu, args.lam)
        return ({"nu": list(args.nu), "lambda": list(args.lam),
                 "tuples": [t.to_json() for t in tuples]}, True, [])
    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            p = ExpPoly.from_json(json.load(fh))
    else:
        mu = args.mu
        if args.kind in ("monomial", "exp_of_linear") and mu is None:
            mu = [Fraction(1)] * args.arity
        p = construct(args.kind, args.arity, args.alpha, mu=mu)
    nu = args.nu if args.nu is not None else (args.nmax,) + (0,) * (p.arity - 1)
    if len(nu) != p.arity:
        raise UsageError(f"--nu has {len(nu)} entries, the function has arity {p.arity}")
    d = derivative(p, nu)
    out = {"function": p.to_json(), "nu": list(nu), "derivative": d.to_json(),
           "terms": len(d)}
    if args.at is not None:
        v = evaluate(d, args.at, args.precision)
        out["value"] = {"at": [format_rational(x) for x in args.at], "value": v.to_str(),
                        "abs_error": mildness._fmt(v.abs_error, 3),
                        "precision_bits": args.precision}
    return out, True, []


def _certify_target(args):
    alpha = args.alpha
    if args.function == "p_alpha":
        oracle = ExpPolyOracle(construct("p_alpha", 1, alpha), label=f"P_{alpha}")
        return oracle, mildness.p_alpha_cert(alpha)
    if args.function == "weak":
        # x^(1/2) o P_alpha = exp((1/2)(1 - x^-alpha))
        oracle = ExpPolyOracle(construct("exp_of_linear", 1, alpha, mu=[Fraction(1, 2)]),
                               label=f"sqrt o P_{alpha}")
        return oracle, mildness.weak_compose_cert(1, 1, alpha)
    mu = args.mu or [Fraction(1), Fraction(1)]
    oracle = ExpPolyOracle(construct("exp_of_linear", len(mu), alpha, mu=mu), label="x^mu o P")
    return oracle, mildness.abm_compose_cert(mu, len(mu), alpha)


def _record_rows(args, label, report) -> list[dict]:
    rows = []
    for rec in report.records:
        rows.append({"alpha": format_rational(args.alpha), "epsilon": "", "chart_id": label,
                     "component": "f", "n": "x".join(map(str, rec.nu)) if len(rec.nu) > 1 else rec.nu[0],
                     "sup": mildness._fmt(rec.sup, 17), "bound": mildness._fmt(rec.bound, 17),
                     "margin": mildness._fmt(rec.margin, 17)})
    return rows


def cmd_certify(args):
    oracle, derived = _certify_target(args)
    c = args.cert or derived
    report = mildness.verify_cert(oracle, c, args.nmax, _grid(args, oracle.arity), args.precision)
    return report.to_json(), report.passed, _record_rows(args, args.function, report)


def cmd_fit(args):
    C = args.C if args.C is not None else 1 / args.alpha
    if args.function == "naive":
        eps = (args.epsilon or [Fraction(1, 256)])[0]
        oracle = parametrize.naive_chart(eps, args.alpha)
    else:
        oracle = ExpPolyOracle(construct("p_alpha", 1, args.alpha))
    fit = mildness.fit_constants(oracle, C, args.nmax, _grid(args), args.precision)
    report = mildness.verify_cert(oracle, fit.cert(), args.nmax, _grid(args), args.precision)
    out = fit.to_json()
    out["reverify"] = report.passed
    return out, report.passed, []


def cmd_check_lemmas(args):
    um = mildness.check_umild(args.alpha, args.kmax)
    grid = [Fraction(1, 2), Fraction(1), Fraction(2), Fraction(4)]
    exps = [mildness.check_expmild(r, s, args.alpha) for r in grid for s in grid]
    ok = um.passed and all(e.passed for e in exps)
    out = {"alpha": format_rational(args.alpha), "umild": um.to_json(),
           "expmild": [e.to_json() for e in exps], "pass": ok}
    return out, ok, []


def cmd_gf_check(args):
    if args.params:
        if len(args.params) != 4:
            raise UsageError("--params needs exactly four values Af,Bf,Ag,Bg")
        lattice = [tuple(args.params)]
    else:
        vals = [Fraction(1, 2), Fraction(1), Fraction(2)]
        lattice = [(a, b, c, d) for a in vals for b in vals for c in vals for d in vals]
    reports = [mildness.gf_check(*ps, args.nmax) for ps in lattice]
    ok = all(r.passed for r in reports)
    return {"n_max": args.nmax, "checks": [r.to_json() for r in reports], "pass": ok}, ok, []


def cmd_parametrize(args):
    eps_list = args.epsilon or parametrize.default_epsilons()
    fam = parametrize.build_family(args.alpha, eps_list, args.strategy, n_max=args.nmax,
                                   grid=_grid(args), precision_bits=args.precision) \
        if args.strategy != "paper" else parametrize.build_family(args.alpha, eps_list)
    for e in args.held_out or []:
        fam = parametrize.with_member(fam, e)
    coverage = {r.epsilon: r for r in parametrize.verify_family(fam, args.samples)}
    uniform = parametrize.uniform_verify(fam, args.nmax, _grid(args), args.precision)
    members = []
    for eps in fam.params:
        members.append({
            "alpha": format_rational(fam.alpha),
            "epsilon": format_rational(eps),
            "charts": [c.to_json(args.precision) for c in fam.charts[eps]],
            "cert": fam.uniform_cert.to_json(args.precision),
            "coverage": coverage[eps].to_json(),
        })
    ok = uniform.passed and all(r.passed for r in coverage.values())
    out = {"alpha": format_rational(fam.alpha), "strategy": args.strategy,
           "cert": fam.uniform_cert.to_json(args.precision), "families": members,
           "uniform": {"pass": uniform.passed,
                       "min_relative_margin": f"{uniform.min_relative_margin():.6g}",
                       "failures": [{"epsilon": format_rational(p), "chart": c, "component": k,
                                     "nu": list(rec.nu)} for p, c, k, rec in uniform.failures()]},
           "pass": ok}
    rows = uniform.csv_rows()
    if args.csv:
        _write_csv(args.csv, rows)
    return out, ok, rows


def cmd_probe(args):
    n = args.nmax if args.fixed_order else None
    report = parametrize.nonuniformity_probe(args.epsilon, n, _grid(args), args.precision)
    return report.to_json(), report.passed, []


def cmd_bench(args):
    rows = []

    def timed(name, fn):
        faadibruno.clear_cache()
        t0 = time.perf_counter()
        result = fn()
        rows.append({"task": name, "seconds": round(time.perf_counter() - t0, 4), "result": result})

    timed(f"partitions_univariate({args.partitions})",
          lambda: len(faadibruno.partitions_univariate(args.partitions)))
    for e in (1, 2, 3):
        nu = tuple(args.order // e + (i < args.order % e) for i in range(e))
        timed(f"enumerate_ps(|nu|={args.order}, e={e}, d=1, all lambda)",
              lambda nu=nu: sum(len(faadibruno.enumerate_ps(nu, lam))
                                for lam in faadibruno.all_lambdas(1, sum(nu))))
    timed(f"{args.diff}-fold derivative of P_{args.alpha}",
          lambda: len(derivative(construct("p_alpha", 1, args.alpha), (args.diff,))))
    out = {"rows": rows}
    if args.deterministic:
        for r in rows:
            r.pop("seconds")
    return out, True, rows


HANDLERS = {
    "derive": cmd_derive, "certify": cmd_certify, "fit": cmd_fit,
    "check-lemmas": cmd_check_lemmas, "gf-check": cmd_gf_check,
    "parametrize": cmd_parametrize, "probe-nonuniform": cmd_probe, "bench": cmd_bench,
}

CSV_COLUMNS = ["alpha", "epsilon", "chart_id", "component", "n", "sup", "bound", "margin"]


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = CSV_COLUMNS if rows and set(CSV_COLUMNS) <= set(rows[0]) else (list(rows[0]) if rows else CSV_COLUMNS)
    w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _write_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_csv_text(rows))


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, configparser.Error, UsageError) as exc:
        print(f"mildkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.nmax < 0 or args.grid_points < 2 or args.precision < 64:
        print("mildkit: error: need --nmax >= 0, --grid-points >= 2, --precision >= 64",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        report, ok, rows = HANDLERS[args.command](args)
    except (UsageError, ValueError, IndexError, KeyError, DomainError, NotImplementedError) as exc:
        print(f"mildkit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PrecisionError as exc:
        print(f"mildkit {args.command}: precision exhausted: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"mildkit {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.format == "csv":
        text = _csv_text(rows)
    else:
        if not args.deterministic:
            report = {**report, "generated_at": datetime.now(timezone.utc).isoformat()}
        text = json.dumps(report, indent=2) + "\n"
    try:
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"mildkit: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if ok else EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
