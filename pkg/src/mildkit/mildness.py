"""Mildness certificates: explicit constants, composition rules and verification.

A certificate ``(A, B, C)`` claims ``|f^(nu)(x)| <= B * A**|nu| * (|nu|!)**(C+1)``
on the whole domain (``kind="mild"``), or the same bound divided by ``x**nu``
(``kind="weakly_mild"``).  Constants are kept as exact sympy expressions so that
``e``, rational roots and the composition formulas stay symbolic; they are
turned into MPFR numbers only when compared against derivative values.

Constant bookkeeping that is not spelled out in closed form elsewhere:

* product of certificates: by Leibniz,
  ``|(fg)^(n)| <= sum_k C(n,k) B1 A1^k (k!)^(C+1) B2 A2^(n-k) ((n-k)!)^(C+1)``
  and ``(k!(n-k)!)^C <= (n!)^C``, ``C(n,k) k!(n-k)! = n!``, so
  ``(A1 + A2, B1*B2, max C)`` is a certificate;
* composition for ``C > 0``: apply the ``C = 0`` formula to the
  ``(C+1)``-th roots of all four constants and raise the resulting ``A`` and
  ``B`` back to the power ``C + 1``;
* composition only bounds derivatives of order >= 1; the order-0 bound of a
  composite is ``sup |f|``, carried separately as ``B0``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import gmpy2
import sympy
from gmpy2 import mpfr

from mildkit import faadibruno
from mildkit.oracles import Oracle, _context, as_oracle, multi_indices
from mildkit.ratcalc import (
    DEFAULT_PRECISION,
    PrecisionError,
    _to_mpfr,
    as_alpha,
    format_rational,
)

MILD = "mild"
WEAKLY_MILD = "weakly_mild"


def _sym(x) -> sympy.Expr:
    if isinstance(x, sympy.Basic):
        return x
    if isinstance(x, Fraction):
        return sympy.Rational(x.numerator, x.denominator)
    if isinstance(x, int):
        return sympy.Integer(x)
    if isinstance(x, type(mpfr(0))):
        digits = max(20, int(x.precision * 0.30103) + 5)
        return sympy.Float(f"{x:.{digits}g}", digits)
    return sympy.nsimplify(x) if isinstance(x, str) else sympy.sympify(x)


def to_mpfr(expr, precision_bits: int = DEFAULT_PRECISION) -> mpfr:
    """Numeric value of a sympy constant at ``precision_bits``."""
    expr = _sym(expr)
    if expr.is_Rational:
        return _to_mpfr(Fraction(int(expr.p), int(expr.q)))
    digits = int(precision_bits * 0.30103) + 20
    return mpfr(str(sympy.N(expr, digits)), precision_bits + 32)


def _fmt(x, digits: int = 30) -> str:
    return f"{x:.{digits}g}"


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MildCert:
    A: sympy.Expr
    B: sympy.Expr
    C: Fraction
    kind: str = MILD
    B0: sympy.Expr | None = None
    label: str = ""
    _num: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "A", _sym(self.A))
        object.__setattr__(self, "B", _sym(self.B))
        object.__setattr__(self, "C", Fraction(self.C))
        if self.B0 is not None:
            object.__setattr__(self, "B0", _sym(self.B0))
        if self.kind not in (MILD, WEAKLY_MILD):
            raise ValueError(f"unknown certificate kind {self.kind!r}")
        if not (float(self.A) > 0 and float(self.B) > 0):
            raise ValueError(f"A and B must be positive, got A={self.A}, B={self.B}")
        if self.C < 0:
            raise ValueError(f"C must be nonnegative, got {self.C}")

    def numeric(self, precision_bits: int = DEFAULT_PRECISION):
        hit = self._num.get(precision_bits)
        if hit is None:
            b0 = self.B0 if self.B0 is not None else self.B
            hit = (to_mpfr(self.A, precision_bits), to_mpfr(self.B, precision_bits),
                   to_mpfr(b0, precision_bits))
            self._num[precision_bits] = hit
        return hit

    @property
    def order0_bound(self) -> sympy.Expr:
        return self.B0 if self.B0 is not None else self.B

    def bound(self, n: int, precision_bits: int = DEFAULT_PRECISION) -> mpfr:
        """``B A**n (n!)**(C+1)`` (``B0`` at order 0 when set)."""
        A, B, B0 = self.numeric(precision_bits)
        with _context(precision_bits + 32):
            if n == 0:
                return B0
            fact = mpfr(math.factorial(n))
            c1 = self.C + 1
            powf = fact ** int(c1) if c1.denominator == 1 else fact ** _to_mpfr(c1)
            return B * A ** n * powf

    def to_json(self, precision_bits: int = DEFAULT_PRECISION) -> dict:
        A, B, B0 = self.numeric(precision_bits)
        out = {
            "A": _fmt(A), "B": _fmt(B), "C": format_rational(self.C), "kind": self.kind,
            "A_exact": str(self.A), "B_exact": str(self.B),
            "precision_bits": precision_bits,
        }
        if self.B0 is not None:
            out["B0"] = _fmt(B0)
        return out


def cert(A, B, C=0, kind: str = MILD, **kw) -> MildCert:
    return MildCert(A, B, C, kind, **kw)


def p_alpha_cert(alpha) -> MildCert:
    """``(6 alpha, e, 1/alpha)`` for ``alpha >= 1``, ``(3 (2/alpha)**(1/alpha), e, 1/alpha)`` below."""
    alpha = as_alpha(alpha)
    a = _sym(alpha)
    if alpha >= 1:
        A = 6 * a
    else:
        A = 3 * (2 / a) ** (1 / a)
    return MildCert(A, sympy.E, 1 / alpha, label=f"P_{alpha}")


def _require_mild(*certs):
    for c in certs:
        if c.kind != MILD:
            raise ValueError("weakly mild certificates cannot be combined here; use weak_compose_cert")


def compose_certs(cf: MildCert, cg: MildCert) -> MildCert:
    """Certificate for ``f o g``.

    ``C = 0``: ``A = A_g (1 + A_f B_g)``, ``B = A_f B_f B_g / (1 + A_f B_g)``.
    Otherwise the same formula on ``(C+1)``-th roots, raised back to ``C+1``,
    with ``C = max(C_f, C_g)``.  ``B0`` records ``sup |f o g| <= B_f``.
    """
    _require_mild(cf, cg)
    C = max(cf.C, cg.C)
    # bounds needed for f at orders >= 0 and g at orders >= 1
    Af, Bf = cf.A, sympy.Max(cf.B, cf.order0_bound) if cf.B0 is not None else cf.B
    Ag, Bg = cg.A, cg.B
    if C == 0:
        A = Ag * (1 + Af * Bg)
        B = Af * Bf * Bg / (1 + Af * Bg)
    else:
        r = 1 / _sym(C + 1)
        af, bf, ag, bg = Af ** r, Bf ** r, Ag ** r, Bg ** r
        A = (ag * (1 + af * bg)) ** (_sym(C + 1))
        B = (af * bf * bg / (1 + af * bg)) ** (_sym(C + 1))
    return MildCert(sympy.simplify(A), sympy.simplify(B), C, B0=cf.order0_bound,
                    label=f"({cf.label})o({cg.label})")


def product_certs(c1: MildCert, c2: MildCert) -> MildCert:
    """``(A1 + A2, B1 B2, max C)`` from the Leibniz rule."""
    _require_mild(c1, c2)
    b1 = c1.B if c1.B0 is None else sympy.Max(c1.B, c1.B0)
    b2 = c2.B if c2.B0 is None else sympy.Max(c2.B, c2.B0)
    B0 = None
    if c1.B0 is not None or c2.B0 is not None:
        B0 = c1.order0_bound * c2.order0_bound
    return MildCert(c1.A + c2.A, b1 * b2, max(c1.C, c2.C), B0=B0,
                    label=f"({c1.label})*({c2.label})")


def scale_cert(c: MildCert, factor) -> MildCert:
    """Certificate of ``factor * f``; ``A`` is unchanged."""
    k = abs(_sym(factor))
    if k == 0:
        raise ValueError("scaling by zero gives the zero function; use any certificate")
    return replace(c, B=c.B * k, B0=None if c.B0 is None else c.B0 * k, _num={})


def weak_compose_cert(A, B, alpha) -> MildCert:
    """Certificate of ``f o P_alpha`` for ``f`` and ``f'`` weakly ``(A, B, 0)``-mild.

    ``A' = ((alpha+1)/alpha)**((alpha+1)/alpha) * 2 alpha (A + 1)``,
    ``B' = e B``, ``C' = 1 + 1/alpha``.  Only ``alpha >= 1`` is supported.
    """
    alpha = as_alpha(alpha)
    if alpha < 1:
        raise NotImplementedError("constants are only available for alpha >= 1")
    a = _sym(alpha)
    A, B = _sym(A), _sym(B)
    q = (a + 1) / a
    return MildCert(q ** q * 2 * a * (A + 1), sympy.E * B, 1 + 1 / alpha,
                    label=f"weak({A},{B})oP_{alpha}")


def compute_M(mu: Sequence) -> sympy.Expr:
    """Constant ``M`` bounding ``exp(-1/2 sum mu'_i x_i**-alpha)`` for ``b(x) = x**mu``.

    ``M = max_I (sup |d b / d x_I| / (|mu_I| e^{|mu'|}))**(1/2)`` with
    ``mu' = mu - e_I``; on the unit cube the sup is ``|mu_I|`` when ``mu' >= 0``.
    """
    mu = [Fraction(v) for v in mu]
    for j, v in enumerate(mu):
        if v < 0:
            raise ValueError(f"mu[{j}] = {v} < 0: b is unbounded on the unit cube")
    vals = []
    for I, v in enumerate(mu):
        if v == 0:
            continue
        if v < 1:
            raise ValueError(f"mu[{I}] = {v} < 1: d b / d x_{I} is unbounded near x_{I} = 0")
        rest = sum(mu) - 1
        vals.append(sympy.exp(-_sym(rest) / 2))
    if not vals:
        return sympy.Integer(1)
    return sympy.Max(*vals) if len(vals) > 1 else vals[0]


def abm_compose_cert(mu: Sequence, m: int | None = None, alpha=1, M=None) -> MildCert:
    """``(2 alpha (2 m N + 1), e**|mu| M**2, 1/alpha)`` for ``x**mu o P``."""
    alpha = as_alpha(alpha)
    if alpha < 1:
        raise NotImplementedError("constants are only available for alpha >= 1")
    mu = [Fraction(v) for v in mu]
    m = len(mu) if m is None else m
    if m != len(mu):
        raise ValueError("m must equal len(mu)")
    if M is None:
        M = compute_M(mu)
    N = max(abs(v) for v in mu)
    a = _sym(alpha)
    A = 2 * a * (2 * m * _sym(N) + 1)
    B = sympy.exp(_sym(sum(abs(v) for v in mu))) * _sym(M) ** 2
    return MildCert(A, sympy.simplify(B), 1 / alpha, label=f"x^{tuple(str(v) for v in mu)}oP")


# ---------------------------------------------------------------------------
# supremum estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """``points`` nodes per axis: half geometric in ``[2**-geometric_bits, 1]``,
    half uniform in ``[uniform_lo, 1]``.

    Around the ``local_top`` largest grid values the two neighbouring cells are
    resampled with ``local_points`` nodes each, which catches pairs of nearby
    extrema that leave no sign change between coarse nodes.
    """

    points: int = 512
    geometric_bits: int = 40
    uniform_lo: Fraction = Fraction(1, 4)
    bisection_steps: int = 64
    bisection_bits: int = 40
    refine: bool = True
    local_points: int = 32
    local_top: int = 3

    def axis(self, precision_bits: int = DEFAULT_PRECISION) -> list:
        g = self.points // 2
        u = self.points - g
        with _context(precision_bits + 32):
            nodes = {mpfr(1)}
            for i in range(g):
                nodes.add(mpfr(2) ** (-self.geometric_bits + self.geometric_bits * mpfr(i) / max(g - 1, 1)))
            lo = _to_mpfr(Fraction(self.uniform_lo))
            for i in range(u):
                nodes.add(lo + (1 - lo) * mpfr(i) / max(u - 1, 1))
        return sorted(nodes)


@dataclass
class OrderRecord:
    nu: tuple
    sup: mpfr
    sup_error: mpfr
    bound: mpfr
    margin: mpfr
    witness: tuple

    @property
    def passed(self) -> bool:
        return self.margin >= 0

    @property
    def resolved(self) -> bool:
        return self.margin >= self.sup_error

    def to_json(self) -> dict:
        return {
            "nu": list(self.nu),
            "sup": _fmt(self.sup),
            "sup_error": _fmt(self.sup_error, 3),
            "bound": _fmt(self.bound),
            "margin": _fmt(self.margin),
            "resolved": self.resolved,
            "witness": [_fmt(x, 20) for x in self.witness],
        }


@dataclass
class BoundReport:
    cert: MildCert
    records: list
    label: str = ""
    notes: list = field(default_factory=list)
    precision_bits: int = DEFAULT_PRECISION

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def first_failure(self):
        return next((r for r in self.records if not r.passed), None)

    def record(self, nu) -> OrderRecord:
        nu = (nu,) if isinstance(nu, int) else tuple(nu)
        return next(r for r in self.records if r.nu == nu)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "cert": self.cert.to_json(self.precision_bits),
            "orders": [r.to_json() for r in self.records],
            "notes": list(self.notes),
            "pass": self.passed,
        }


def _weighted(nu, point, v, err, weak: bool):
    if not weak:
        return v, err
    w = mpfr(1)
    for x, k in zip(point, nu):
        if k:
            w *= x ** k
    return v * w, err * w


def _weighted_slope(nu, i, point, vals, weak: bool):
    """d/dx_i of the (weighted) derivative ``f^(nu)``, from a jet."""
    up = tuple(k + (j == i) for j, k in enumerate(nu))
    d, derr = vals[up]
    if not weak:
        return d, derr
    v, verr = vals[tuple(nu)]
    w = mpfr(1)
    for x, k in zip(point, nu):
        if k:
            w *= x ** k
    slope = d * w
    err = derr * w
    if nu[i]:
        wi = w * nu[i] / point[i]
        slope += v * wi
        err += verr * wi
    return slope, err


def _sign(v, err) -> int:
    if abs(v) <= err:
        return 0
    return 1 if v > 0 else -1


class _Search:
    """Grid scan plus bisection on sign changes of the next derivative."""

    def __init__(self, oracle: Oracle, n_max: int, grid: GridSpec, precision_bits: int, weak: bool):
        self.oracle = oracle
        self.n_max = n_max
        self.grid = grid
        self.prec = precision_bits
        self.work = precision_bits + 32
        self.weak = weak
        self.notes: list = []
        self.m = oracle.arity
        self.axis = grid.axis(precision_bits)

    def _jet(self, point, nus):
        return self.oracle.jet(point, nus, self.work)

    def _bisect(self, nu, i, point, lo, hi, s_lo):
        """Track the largest |weighted f^(nu)| while bisecting a slope sign change
        along axis ``i`` between coordinates ``lo`` and ``hi``."""
        up = tuple(k + (j == i) for j, k in enumerate(nu))
        best = (mpfr(-1), mpfr(0), point)
        with _context(self.work):
            # a critical point located to relative 2**-b moves the value by ~2**-2b
            tol = mpfr(2) ** -self.grid.bisection_bits
            for _ in range(self.grid.bisection_steps):
                mid = (lo + hi) / 2
                if mid == lo or mid == hi or hi - lo <= tol * hi:
                    break
                pt = point[:i] + (mid,) + point[i + 1:]
                vals = self._jet(pt, [tuple(nu), up])
                v, err = _weighted(nu, pt, *vals[tuple(nu)], self.weak)
                if abs(v) > best[0]:
                    best = (abs(v), err, pt)
                s = _sign(*_weighted_slope(nu, i, pt, vals, self.weak))
                if s == 0:
                    break
                if s == s_lo:
                    lo = mid
                else:
                    hi = mid
        return best

    # -- univariate -------------------------------------------------------
    def univariate(self):
        orders = [(n,) for n in range(self.n_max + 2)]
        xs = self.axis
        table = [self._jet((x,), orders) for x in xs]
        out = []
        for n in range(self.n_max + 1):
            nu = (n,)
            qs = [_weighted(nu, (x,), *vals[nu], self.weak) for x, vals in zip(xs, table)]
            idx = max(range(len(xs)), key=lambda j: abs(qs[j][0]))
            best = (abs(qs[idx][0]), qs[idx][1], (xs[idx],))
            if self.grid.refine:
                slopes = [_sign(*_weighted_slope(nu, 0, (x,), vals, self.weak))
                          for x, vals in zip(xs, table)]
                for j in range(len(xs) - 1):
                    a, b = slopes[j], slopes[j + 1]
                    if a and b and a != b:
                        cand = self._bisect(nu, 0, (xs[j],), xs[j], xs[j + 1], a)
                        if cand[0] > best[0]:
                            best = cand
                top = sorted(range(len(xs)), key=lambda j: -abs(qs[j][0]))[:self.grid.local_top]
                if self.grid.local_points > 1 and qs[top[0]][0] != 0:
                    for j in top:
                        lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, len(xs) - 1)]
                        cand = self._densify(nu, 0, (xs[j],), lo, hi)
                        if cand[0] > best[0]:
                            best = cand
            out.append((nu,) + best)
        return out

    def _densify(self, nu, i, point, lo, hi):
        """Resample ``[lo, hi]`` along axis ``i`` and bisect every sign change."""
        k = self.grid.local_points
        with _context(self.work):
            nodes = [lo + (hi - lo) * mpfr(s) / k for s in range(k + 1)]
        best = (mpfr(-1), mpfr(0), point)
        signs = []
        for c in nodes:
            pt = point[:i] + (c,) + point[i + 1:]
            up = tuple(v + (j == i) for j, v in enumerate(nu))
            vals = self._jet(pt, [tuple(nu), up])
            v, err = _weighted(nu, pt, *vals[tuple(nu)], self.weak)
            if abs(v) > best[0]:
                best = (abs(v), err, pt)
            signs.append(_sign(*_weighted_slope(nu, i, pt, vals, self.weak)))
        for a in range(k):
            if signs[a] and signs[a + 1] and signs[a] != signs[a + 1]:
                pt = point[:i] + (nodes[a],) + point[i + 1:]
                cand = self._bisect(nu, i, pt, nodes[a], nodes[a + 1], signs[a])
                if cand[0] > best[0]:
                    best = cand
        return best

    # -- multivariate -----------------------------------------------------
    def multivariate(self, top: int = 3, sweeps: int = 2):
        import itertools

        nus = multi_indices(self.m, self.n_max)
        pts = list(itertools.product(self.axis, repeat=self.m))
        table = [self._jet(pt, nus) for pt in pts]
        out = []
        for nu in nus:
            qs = [_weighted(nu, pt, *vals[nu], self.weak) for pt, vals in zip(pts, table)]
            order = sorted(range(len(pts)), key=lambda j: -abs(qs[j][0]))[:top]
            best = (abs(qs[order[0]][0]), qs[order[0]][1], pts[order[0]])
            if self.grid.refine and any(abs(qs[j][0]) > 0 for j in order):
                for j in order:
                    cand = self._coordinate_refine(nu, pts[j], abs(qs[j][0]), qs[j][1], sweeps)
                    if cand[0] > best[0]:
                        best = cand
            out.append((nu,) + best)
        return out

    def _coordinate_refine(self, nu, point, val, err, sweeps):
        best = (val, err, point)
        for _ in range(sweeps):
            for i in range(self.m):
                cur = best[2]
                k = bisect.bisect_left(self.axis, cur[i])
                lo_j, hi_j = max(0, k - 1), min(len(self.axis) - 1, k + 1)
                cand = self._densify(nu, i, cur, self.axis[lo_j], self.axis[hi_j])
                if cand[0] > best[0]:
                    best = cand
        return best

    def run(self):
        return self.univariate() if self.m == 1 else self.multivariate()


def estimate_sups(oracle, n_max: int, grid: GridSpec | None = None,
                  precision_bits: int = DEFAULT_PRECISION, weak: bool = False):
    """List of ``(nu, sup, abs_error, witness)`` for every ``|nu| <= n_max``."""
    oracle = as_oracle(oracle)
    if grid is None:
        grid = GridSpec() if oracle.arity == 1 else GridSpec(points=64)
    search = _Search(oracle, n_max, grid, precision_bits, weak)
    rows = search.run()
    budget = mpfr(2) ** (8 - precision_bits)
    checked = []
    for nu, sup, err, wit in rows:
        if sup > 0 and err > budget * sup:
            v, err2 = oracle.value(nu, wit, precision_bits)
            v, err2 = _weighted(nu, wit, v, err2, weak)
            if err2 > budget * abs(v):
                raise PrecisionError(f"supremum of order {nu} not resolved at {precision_bits} bits")
            sup, err = abs(v), err2
        checked.append((nu, sup, err, wit))
    return checked


def verify_cert(oracle, cert: MildCert, n_max: int, grid: GridSpec | None = None,
                precision_bits: int = DEFAULT_PRECISION, label: str = "") -> BoundReport:
    """Check ``sup |f^(nu)| <= bound(|nu|)`` for all ``|nu| <= n_max``.

    ``margin = bound - sup``; the report passes iff every margin >= 0.  Each
    record also says whether the margin exceeds the evaluation error of the sup
    (``resolved``), which fails only for bounds attained with equality.
    Weakly mild certificates are checked on ``x**nu |f^(nu)(x)|``.
    """
    oracle = as_oracle(oracle)
    rows = estimate_sups(oracle, n_max, grid, precision_bits, weak=cert.kind == WEAKLY_MILD)
    records = []
    with _context(precision_bits + 32):
        for nu, sup, err, wit in rows:
            b = cert.bound(sum(nu), precision_bits)
            records.append(OrderRecord(nu, sup, err, b, b - sup, wit))
    return BoundReport(cert, records, label or getattr(oracle, "label", ""),
                       precision_bits=precision_bits)


def _round_up(x: mpfr, bits: int = 96) -> sympy.Rational:
    """Smallest dyadic rational with ``bits`` significant bits that is ``>= x``."""
    n, d = gmpy2.mpq(x).as_integer_ratio()
    q = Fraction(int(n), int(d))
    if q <= 0:
        return sympy.Integer(0)
    shift = bits - q.numerator.bit_length() + q.denominator.bit_length()
    scaled = q * Fraction(2) ** shift
    r = Fraction(math.ceil(scaled)) / Fraction(2) ** shift
    return sympy.Rational(r.numerator, r.denominator)


@dataclass
class FitResult:
    C_assumed: Fraction
    B_fitted: mpfr
    A_fitted: mpfr
    n_max: int
    sups: list

    def cert(self, safety=1, kind: str = MILD) -> MildCert:
        A = self.A_fitted if self.A_fitted > 0 else mpfr(1)
        safety = Fraction(safety)
        return MildCert(_round_up(A) * _sym(safety), _round_up(self.B_fitted) * _sym(safety),
                        self.C_assumed, kind)

    def to_json(self) -> dict:
        return {
            "C_assumed": format_rational(self.C_assumed),
            "A_fitted": _fmt(self.A_fitted),
            "B_fitted": _fmt(self.B_fitted),
            "n_max": self.n_max,
            "sups": [{"nu": list(nu), "sup": _fmt(s)} for nu, s, _, _ in self.sups],
        }


def fit_constants(oracle, C, n_max: int, grid: GridSpec | None = None,
                  precision_bits: int = DEFAULT_PRECISION, weak: bool = False) -> FitResult:
    """Smallest ``(A, B)`` consistent with the measured suprema for a given ``C``.

    ``B = max(1, sup_0)`` and ``A = max_n (sup_n / (B (n!)**(C+1)))**(1/n)``,
    rounded up by a few ulps so the fitted certificate re-verifies.
    """
    C = Fraction(C)
    rows = estimate_sups(oracle, n_max, grid, precision_bits, weak)
    with _context(precision_bits + 32):
        by_order: dict = {}
        for nu, sup, err, _ in rows:
            n = sum(nu)
            by_order[n] = max(by_order.get(n, mpfr(0)), sup + err)
        B = max(mpfr(1), by_order.get(0, mpfr(0)))
        A = mpfr(0)
        c1 = _to_mpfr(C + 1)
        for n in range(1, n_max + 1):
            s = by_order.get(n, mpfr(0))
            if s > 0:
                A = max(A, (s / (B * mpfr(math.factorial(n)) ** c1)) ** (mpfr(1) / n))
        A *= 1 + mpfr(2) ** (16 - precision_bits)
    return FitResult(C, B, A, n_max, rows)


# ---------------------------------------------------------------------------
# auxiliary lemmas
# ---------------------------------------------------------------------------

@dataclass
class LemmaReport:
    name: str
    rows: list
    passed: bool
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"name": self.name, "pass": self.passed, "notes": self.notes, "rows": self.rows}


def rising_factorial(alpha: Fraction, k: int) -> Fraction:
    out = Fraction(1)
    for j in range(k):
        out *= alpha + j
    return out


def check_umild(alpha, k_max: int) -> LemmaReport:
    """Compare ``alpha (alpha+1) ... (alpha+k-1)`` with ``alpha**k k!`` (or ``k!``
    when ``alpha < 1``) exactly, for ``1 <= k <= k_max``.

    ``x**(alpha+k) u_alpha^(k)(x)`` is the constant ``(-1)**(k+1)`` times the
    rising factorial, so this is the whole inequality.
    """
    alpha = as_alpha(alpha)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    rows = []
    ok = True
    for k in range(1, k_max + 1):
        rf = rising_factorial(alpha, k)
        bound = Fraction(math.factorial(k)) * (alpha ** k if alpha >= 1 else 1)
        holds = rf <= bound
        ok &= holds
        rows.append({"k": k, "rising": format_rational(rf), "bound": format_rational(bound),
                     "holds": holds, "tight": rf == bound})
    return LemmaReport(f"umild(alpha={alpha})", rows, ok,
                       ["x^(alpha+k) u_alpha^(k)(x) is constant in x"])


def expmild_closed_form(r, s, alpha, precision_bits: int = DEFAULT_PRECISION):
    """``(max, argmax)`` of ``x**-r exp(-s x**-alpha)`` on ``x > 0``."""
    r, s, alpha = Fraction(r), Fraction(s), as_alpha(alpha)
    with _context(precision_bits + 32):
        R, S, a = _to_mpfr(r), _to_mpfr(s), _to_mpfr(alpha)
        value = (R / (gmpy2.exp(1) * S * a)) ** (R / a)
        arg = (S * a / R) ** (1 / a)
    return value, arg


def golden_section_max(fn, lo, hi, tol, max_iter: int = 500):
    """Maximize a unimodal ``fn`` on ``[lo, hi]``; returns ``(max, argmax)``."""
    invphi = (gmpy2.sqrt(mpfr(5)) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    x = (a + b) / 2
    return fn(x), x


def check_expmild(r, s, alpha, precision_bits: int = 128, rel_tol: float = 1e-10) -> LemmaReport:
    """Closed-form maximum against golden-section search on a bracket around it."""
    r, s, alpha = Fraction(r), Fraction(s), as_alpha(alpha)
    if r <= 0 or s <= 0:
        raise ValueError("r and s must be positive")
    value, arg = expmild_closed_form(r, s, alpha, precision_bits)
    with _context(precision_bits + 32):
        R, S, a = _to_mpfr(r), _to_mpfr(s), _to_mpfr(alpha)

        def fn(x):
            return x ** (-R) * gmpy2.exp(-S * x ** (-a))

        found, at = golden_section_max(fn, arg / 4, arg * 4, arg * mpfr(2) ** (-precision_bits // 2))
        rel = abs(found - value) / value
    row = {"r": format_rational(r), "s": format_rational(s), "alpha": format_rational(alpha),
           "closed_form": _fmt(value, 20), "argmax": _fmt(arg, 20),
           "golden": _fmt(found, 20), "golden_argmax": _fmt(at, 20), "rel_diff": _fmt(rel, 3)}
    return LemmaReport(f"expmild(r={r}, s={s}, alpha={alpha})", [row], bool(rel <= rel_tol))


def gf_closed_form(Af, Bf, Ag, Bg, n: int) -> Fraction:
    Af, Bf, Ag, Bg = map(Fraction, (Af, Bf, Ag, Bg))
    return Af * Bf * Bg / (1 + Af * Bg) * (Ag * (1 + Af * Bg)) ** n * math.factorial(n)


def gf_check(Af, Bf, Ag, Bg, n_max: int) -> LemmaReport:
    """``(psi o phi)^(n)(0)`` by Faa di Bruno against its closed form, exactly.

    ``psi(y) = B_f / (1 - A_f (y - B_g))`` and ``phi(x) = B_g / (1 - A_g x)`` have
    ``psi^(k)(B_g) = B_f A_f**k k!`` and ``phi^(k)(0) = B_g A_g**k k!``.
    """
    Af, Bf, Ag, Bg = map(Fraction, (Af, Bf, Ag, Bg))

    def psi(lam, y):
        assert y == (Bg,)
        k = lam[0]
        return Bf * Af ** k * math.factorial(k)

    def phi(l, x):
        k = l[0]
        return (Bg * Ag ** k * math.factorial(k),)

    rows = []
    ok = True
    for n in range(1, n_max + 1):
        via_fdb = faadibruno.compose_derivative(psi, phi, (n,), d=1, point=(Fraction(0),))
        closed = gf_closed_form(Af, Bf, Ag, Bg, n)
        eq = via_fdb == closed
        ok &= eq
        rows.append({"n": n, "faa_di_bruno": format_rational(via_fdb),
                     "closed_form": format_rational(closed), "equal": eq})
    return LemmaReport(f"gf(Af={Af}, Bf={Bf}, Ag={Ag}, Bg={Bg})", rows, ok)
