"""Exact algebra for exp-monomial functions.

An :class:`ExpPoly` is a finite sum of terms

    coeff * e**epow * prod_i x_i**(a_i + b_i*alpha) * exp(s_i * (1 - x_i**(-alpha)))

with rational ``coeff``, ``a_i``, ``b_i``, ``s_i`` and a fixed positive rational
``alpha``.  The class is closed under addition, multiplication and partial
differentiation, so arbitrary-order derivatives of ``P_alpha(x) = exp(1 - x**-alpha)``
and its relatives are computed exactly.  Exponent pairs ``(a, b)`` are kept
separate (``alpha`` is treated as an indeterminate for canonical form) and only
collapse to numbers in :func:`evaluate`.

Numeric evaluation uses MPFR (through gmpy2) with an explicit error budget.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

import gmpy2
from gmpy2 import mpfr, mpq

DEFAULT_PRECISION = 256
# exp arguments below this are flushed to a zero term (|term| < 2**-(2**50))
_UNDERFLOW_ARG = -(2 ** 50)
_OVERFLOW_ARG = 2 ** 50


class DomainError(ValueError):
    """Evaluation point outside the domain of the function class."""


class PrecisionError(ArithmeticError):
    """The requested error budget could not be met within the precision cap."""


def parse_rational(text) -> Fraction:
    """Parse ``"p/q"`` or ``"p"`` into a Fraction.  Decimal strings are refused."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int) and not isinstance(text, bool):
        return Fraction(text)
    if not isinstance(text, str):
        raise TypeError(f"expected a rational string, got {type(text).__name__}")
    s = text.strip()
    if any(ch in s for ch in ".eE") or not s:
        raise ValueError(f"not an exact rational 'p/q': {text!r}")
    num, _, den = s.partition("/")
    try:
        return Fraction(int(num), int(den) if den else 1)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not an exact rational 'p/q': {text!r}") from exc


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def as_alpha(alpha) -> Fraction:
    a = parse_rational(alpha) if isinstance(alpha, str) else Fraction(alpha)
    if a <= 0:
        raise ValueError(f"alpha must be positive, got {a}")
    return a


class AlphaExponent(NamedTuple):
    """The exponent ``a + b*alpha`` of one variable."""

    a: Fraction
    b: Fraction

    def value(self, alpha: Fraction) -> Fraction:
        return self.a + self.b * alpha


_ZERO_EXP = AlphaExponent(Fraction(0), Fraction(0))


@dataclass(frozen=True)
class ExpTerm:
    coeff: Fraction
    epow: int
    pows: tuple[AlphaExponent, ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.pows) != len(self.weights):
            raise ValueError("pows and weights must have the same arity")

    @property
    def key(self):
        return _key(self.pows, self.weights, self.epow)


def _key(pows, weights, epow):
    flat = tuple(c for ab in pows for c in ab)
    return (flat, tuple(weights), epow)


class ExpPoly:
    """Canonical immutable sum of :class:`ExpTerm` objects.

    Terms are merged on ``(pows, weights, epow)`` and sorted lexicographically by
    the flattened exponent list, then the weights, then ``epow``.
    """

    __slots__ = ("arity", "alpha", "terms", "_hash", "_plan")

    def __init__(self, arity: int, alpha, terms: Iterable[ExpTerm] = ()):
        if arity < 1:
            raise ValueError(f"arity must be >= 1, got {arity}")
        alpha = as_alpha(alpha)
        acc: dict = {}
        for t in terms:
            if len(t.pows) != arity:
                raise ValueError(f"term arity {len(t.pows)} != {arity}")
            if t.epow < 0:
                raise ValueError("epow must be nonnegative")
            k = (t.pows, t.weights, t.epow)
            acc[k] = acc.get(k, 0) + Fraction(t.coeff)
        merged = [
            ExpTerm(c, k[2], k[0], k[1]) for k, c in acc.items() if c != 0
        ]
        merged.sort(key=lambda t: t.key)
        object.__setattr__(self, "arity", arity)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "terms", tuple(merged))
        object.__setattr__(self, "_hash", None)
        object.__setattr__(self, "_plan", None)

    def __setattr__(self, name, value):
        raise AttributeError("ExpPoly is immutable")

    # -- structural helpers -------------------------------------------------
    @classmethod
    def zero(cls, arity: int, alpha) -> ExpPoly:
        return cls(arity, alpha, ())

    def is_zero(self) -> bool:
        return not self.terms

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __eq__(self, other):
        if not isinstance(other, ExpPoly):
            return NotImplemented
        return (self.arity, self.alpha, self.terms) == (other.arity, other.alpha, other.terms)

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash((self.arity, self.alpha, self.terms)))
        return self._hash

    def __repr__(self):
        if not self.terms:
            return f"ExpPoly(arity={self.arity}, alpha={self.alpha}, 0)"
        return f"ExpPoly(arity={self.arity}, alpha={self.alpha}, {self.pretty()})"

    def pretty(self) -> str:
        parts = []
        for t in self.terms:
            s = str(t.coeff)
            if t.epow:
                s += f"*e^{t.epow}"
            for i, ((a, b), w) in enumerate(zip(t.pows, t.weights)):
                if a or b:
                    s += f"*x{i}^({a}{'+' if b >= 0 else ''}{b}a)"
                if w:
                    s += f"*E{i}^{w}"
            parts.append(s)
        return " + ".join(parts)

    def _check_compatible(self, other: ExpPoly):
        if self.arity != other.arity:
            raise ValueError(f"arity mismatch: {self.arity} vs {other.arity}")
        if self.alpha != other.alpha:
            raise ValueError(f"alpha mismatch: {self.alpha} vs {other.alpha}")

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = constant(other, self.arity, self.alpha)
        if not isinstance(other, ExpPoly):
            return NotImplemented
        self._check_compatible(other)
        return ExpPoly(self.arity, self.alpha, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = constant(other, self.arity, self.alpha)
        if not isinstance(other, ExpPoly):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> ExpPoly:
        c = Fraction(c)
        return ExpPoly(
            self.arity,
            self.alpha,
            (ExpTerm(t.coeff * c, t.epow, t.pows, t.weights) for t in self.terms),
        )

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        if not isinstance(other, ExpPoly):
            return NotImplemented
        self._check_compatible(other)
        out = []
        for s in self.terms:
            for t in other.terms:
                pows = tuple(
                    AlphaExponent(p.a + q.a, p.b + q.b) for p, q in zip(s.pows, t.pows)
                )
                weights = tuple(u + v for u, v in zip(s.weights, t.weights))
                out.append(ExpTerm(s.coeff * t.coeff, s.epow + t.epow, pows, weights))
        return ExpPoly(self.arity, self.alpha, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers are supported")
        result = constant(1, self.arity, self.alpha)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def diff(self, var: int = 0, times: int = 1) -> ExpPoly:
        p = self
        for _ in range(times):
            p = differentiate(p, var)
        return p

    def __call__(self, *point, precision_bits: int = DEFAULT_PRECISION):
        return evaluate(self, point, precision_bits)

    # -- serialization ------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "arity": self.arity,
            "alpha": format_rational(self.alpha),
            "terms": [
                {
                    "coeff": format_rational(t.coeff),
                    "epow": t.epow,
                    "pows": [[format_rational(a), format_rational(b)] for a, b in t.pows],
                    "weights": [format_rational(w) for w in t.weights],
                }
                for t in self.terms
            ],
        }

    @classmethod
    def from_json(cls, obj) -> ExpPoly:
        if isinstance(obj, str):
            obj = json.loads(obj)
        terms = [
            ExpTerm(
                parse_rational(t["coeff"]),
                int(t["epow"]),
                tuple(AlphaExponent(parse_rational(a), parse_rational(b)) for a, b in t["pows"]),
                tuple(parse_rational(w) for w in t["weights"]),
            )
            for t in obj["terms"]
        ]
        return cls(int(obj["arity"]), parse_rational(obj["alpha"]), terms)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def _unit_term(m, coeff=1, pows=None, weights=None, epow=0):
    pows = pows or {}
    weights = weights or {}
    return ExpTerm(
        Fraction(coeff),
        epow,
        tuple(pows.get(i, _ZERO_EXP) for i in range(m)),
        tuple(Fraction(weights.get(i, 0)) for i in range(m)),
    )


def constant(c, m: int = 1, alpha=1, epow: int = 0) -> ExpPoly:
    return ExpPoly(m, alpha, [_unit_term(m, c, epow=epow)])


def construct(kind: str, m: int = 1, alpha=1, *, mu: Sequence | None = None,
              c=None, var: int = 0) -> ExpPoly:
    """Build one of the named functions of arity ``m``.

    ``kind`` is one of ``p_alpha``, ``u_alpha`` (both acting on variable ``var``),
    ``monomial`` (``x**mu``), ``exp_of_linear`` (``exp(sum mu_i (1 - x_i**-alpha))``)
    or ``constant`` (``c``).
    """
    if not isinstance(m, int) or m < 1:
        raise ValueError(f"arity must be a positive integer, got {m!r}")
    alpha = as_alpha(alpha)
    if kind in ("p_alpha", "u_alpha") and not 0 <= var < m:
        raise IndexError(f"variable {var} out of range for arity {m}")
    if kind in ("monomial", "exp_of_linear"):
        if mu is None or len(mu) != m:
            raise ValueError(f"{kind} needs a length-{m} exponent vector")
        mu = [Fraction(v) for v in mu]

    if kind == "p_alpha":
        return ExpPoly(m, alpha, [_unit_term(m, weights={var: 1})])
    if kind == "u_alpha":
        minus = AlphaExponent(Fraction(0), Fraction(-1))
        return ExpPoly(m, alpha, [_unit_term(m), _unit_term(m, -1, pows={var: minus})])
    if kind == "monomial":
        pows = {i: AlphaExponent(v, Fraction(0)) for i, v in enumerate(mu)}
        return ExpPoly(m, alpha, [_unit_term(m, pows=pows)])
    if kind == "exp_of_linear":
        return ExpPoly(m, alpha, [_unit_term(m, weights=dict(enumerate(mu)))])
    if kind == "constant":
        return constant(Fraction(c if c is not None else 1), m, alpha)
    raise ValueError(f"unknown kind {kind!r}")


def p_alpha(alpha, m: int = 1, var: int = 0) -> ExpPoly:
    return construct("p_alpha", m, alpha, var=var)


def u_alpha(alpha, m: int = 1, var: int = 0) -> ExpPoly:
    return construct("u_alpha", m, alpha, var=var)


# ---------------------------------------------------------------------------
# calculus and arithmetic
# ---------------------------------------------------------------------------

def differentiate(p: ExpPoly, var: int = 0) -> ExpPoly:
    """Exact partial derivative with respect to ``x_var``.

    d/dx [x**(a+b*alpha) * E**s] = (a + b*alpha) x**(a-1+b*alpha) E**s
                                   + s*alpha x**(a-1+(b-1)*alpha) E**s
    """
    if not 0 <= var < p.arity:
        raise IndexError(f"variable {var} out of range for arity {p.arity}")
    alpha = p.alpha
    out = []
    for t in p.terms:
        a, b = t.pows[var]
        s = t.weights[var]
        c1 = a + b * alpha
        if c1:
            pows = t.pows[:var] + (AlphaExponent(a - 1, b),) + t.pows[var + 1:]
            out.append(ExpTerm(t.coeff * c1, t.epow, pows, t.weights))
        if s:
            pows = t.pows[:var] + (AlphaExponent(a - 1, b - 1),) + t.pows[var + 1:]
            out.append(ExpTerm(t.coeff * s * alpha, t.epow, pows, t.weights))
    return ExpPoly(p.arity, alpha, out)


def derivative(p: ExpPoly, nu: Sequence[int]) -> ExpPoly:
    """Mixed partial ``p^(nu)`` for a multi-index ``nu``."""
    if len(nu) != p.arity:
        raise ValueError(f"multi-index length {len(nu)} != arity {p.arity}")
    for var, k in enumerate(nu):
        for _ in range(k):
            p = differentiate(p, var)
    return p


def add(p: ExpPoly, q: ExpPoly) -> ExpPoly:
    return p + q


def mul(p: ExpPoly, q: ExpPoly) -> ExpPoly:
    return p * q


def scale(p: ExpPoly, c) -> ExpPoly:
    return p.scale(c)


def arith(p: ExpPoly, q: ExpPoly | None, op: str, c=None) -> ExpPoly:
    if op == "add":
        return p + q
    if op == "mul":
        return p * q
    if op == "scale":
        return p.scale(c)
    raise ValueError(f"unknown op {op!r}")


# ---------------------------------------------------------------------------
# numeric evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HPReal:
    """A binary floating value with a rigorous absolute error bound."""

    value: mpfr
    precision_bits: int
    abs_error: mpfr = field(default_factory=lambda: mpfr(0))

    @property
    def rel_error(self):
        if self.value == 0:
            return gmpy2.inf() if self.abs_error else mpfr(0)
        return self.abs_error / abs(self.value)

    @property
    def sign_known(self) -> bool:
        return abs(self.value) > self.abs_error

    def __float__(self):
        return float(self.value)

    def __abs__(self):
        return HPReal(abs(self.value), self.precision_bits, self.abs_error)

    def to_str(self, digits: int | None = None) -> str:
        digits = digits or max(17, int(self.precision_bits * 0.30103) - 3)
        return f"{self.value:.{digits}g}"


def _to_mpfr(x):
    if isinstance(x, Fraction):
        return mpfr(mpq(x.numerator, x.denominator))
    return mpfr(x)


class _PointCache:
    """Per-point factors shared by all terms evaluated at the same coordinates."""

    __slots__ = ("xa", "pow_cache", "exp_cache", "alpha_mp")

    def __init__(self, point, alpha):
        self.alpha_mp = _to_mpfr(alpha)
        self.xa = [None] * len(point)
        self.pow_cache = {}
        self.exp_cache = {}


class _Plan:
    """ExpPoly terms flattened into gmpy2 numbers and small-integer keys."""

    __slots__ = ("exps", "terms")

    def __init__(self, p: ExpPoly):
        exp_index: dict = {}
        self.exps = []
        self.terms = []
        for t in p.terms:
            ekey = (t.weights, t.epow)
            idx = exp_index.get(ekey)
            if idx is None:
                idx = exp_index[ekey] = len(self.exps)
                ws = tuple((i, mpq(w.numerator, w.denominator)) for i, w in enumerate(t.weights) if w)
                self.exps.append((ekey, t.epow, ws))
            mons = []
            for i, (a, b) in enumerate(t.pows):
                if not (a or b):
                    continue
                if a.denominator == 1 and b.denominator == 1:
                    mons.append((i, int(a), int(b)))
                else:
                    ex = a + b * p.alpha
                    mons.append((i, None, mpq(ex.numerator, ex.denominator)))
            self.terms.append((mpq(t.coeff.numerator, t.coeff.denominator), idx, tuple(mons)))


def _plan(p: ExpPoly) -> _Plan:
    plan = p._plan
    if plan is None:
        plan = _Plan(p)
        object.__setattr__(p, "_plan", plan)
    return plan


def _x_alpha(cache, point, i):
    xa = cache.xa[i]
    if xa is None:
        xa = point[i] ** cache.alpha_mp
        cache.xa[i] = xa
    return xa


def _monomial(cache, point, mon):
    v = cache.pow_cache.get(mon)
    if v is None:
        i, a, b = mon
        x = point[i]
        if a is None:
            v = x ** mpfr(b)
        elif b == 0:
            v = x ** a
        elif a == 0:
            v = _x_alpha(cache, point, i) ** b
        else:
            v = (x ** a) * _x_alpha(cache, point, i) ** b
        cache.pow_cache[mon] = v
    return v


def _exp_factor(cache, point, entry):
    """exp(epow + sum_i s_i (1 - x_i**-alpha)), or None when it underflows."""
    key, epow, ws = entry
    if key in cache.exp_cache:
        return cache.exp_cache[key]
    arg = mpfr(epow)
    for i, w in ws:
        arg += w * (1 - 1 / _x_alpha(cache, point, i))
    if arg < _UNDERFLOW_ARG:
        v = None
    elif arg > _OVERFLOW_ARG:
        raise DomainError("exponential factor overflows; point too close to 0 for a negative weight")
    else:
        v = gmpy2.exp(arg)
    cache.exp_cache[key] = v
    return v


def _eval_raw(p: ExpPoly, point, work_prec: int, cache=None):
    """Sum of terms at ``work_prec`` bits; returns (value, sum of |terms|, cache)."""
    ctx = gmpy2.get_context().copy()
    ctx.precision = work_prec
    ctx.emin = gmpy2.get_emin_min()
    ctx.emax = gmpy2.get_emax_max()
    plan = _plan(p)
    with gmpy2.context(ctx):
        pt = [_to_mpfr(x) for x in point]
        if cache is None:
            cache = _PointCache(pt, p.alpha)
        evals = [_exp_factor(cache, pt, entry) for entry in plan.exps]
        total = mpfr(0)
        mag = mpfr(0)
        for coeff, idx, mons in plan.terms:
            e = evals[idx]
            if e is None:
                continue
            v = coeff * e
            for mon in mons:
                v *= _monomial(cache, pt, mon)
            total += v
            mag += abs(v)
    return total, mag, cache


def _error_bound(p: ExpPoly, mag, work_prec: int):
    # each term: <= 2**6 ulps from the power/exp chain; summation adds len(terms) ulps
    n = len(p.terms)
    return mag * (64 + n) * mpfr(2) ** (-work_prec)


def _as_point(point) -> tuple:
    if isinstance(point, (tuple, list)):
        return tuple(point)
    return (point,)


def _check_point(p: ExpPoly, point):
    if len(point) != p.arity:
        raise ValueError(f"point has {len(point)} coordinates, arity is {p.arity}")
    for x in point:
        if x <= 0:
            raise DomainError(f"coordinate {x} is not positive")


def evaluate(p: ExpPoly, point, precision_bits: int = DEFAULT_PRECISION, *,
             strict: bool = False, max_extra_bits: int | None = None) -> HPReal:
    """Value of ``p`` at ``point`` with relative error at most ``2**(8-precision_bits)``.

    Working precision is raised adaptively when cancellation eats the budget.
    At (near-)zeros of ``p`` the relative budget cannot be met; the result then
    carries its absolute error, and ``strict=True`` raises :class:`PrecisionError`.
    """
    point = _as_point(point)
    _check_point(p, point)
    if precision_bits < 64:
        raise ValueError("precision_bits must be >= 64")
    if not p.terms:
        return HPReal(mpfr(0), precision_bits, mpfr(0))
    budget = mpfr(2) ** (8 - precision_bits)
    cap = precision_bits + (max_extra_bits if max_extra_bits is not None else 3 * precision_bits)
    w = precision_bits + 8
    while True:
        value, mag, _ = _eval_raw(p, point, w)
        err = _error_bound(p, mag, w)
        if err <= budget * abs(value):
            return HPReal(value, precision_bits, err)
        if w >= cap or mag == 0:
            if strict:
                raise PrecisionError(
                    f"relative error budget 2^{8 - precision_bits} not met at {w} bits"
                )
            return HPReal(value, precision_bits, err)
        if value == 0:
            w = min(cap, 2 * w)
        else:
            lost = int(gmpy2.ceil(gmpy2.log2(mag / abs(value)))) + 16
            w = min(cap, max(w + lost, w + 32))


def evaluate_fast(p: ExpPoly, point, work_prec: int = DEFAULT_PRECISION, cache=None):
    """Single-shot evaluation at fixed working precision; returns (value, abs_error)."""
    value, mag, _ = _eval_raw(p, _as_point(point), work_prec, cache)
    return value, _error_bound(p, mag, work_prec)


def p_alpha_inverse(y, alpha, precision_bits: int = DEFAULT_PRECISION):
    """Inverse of ``P_alpha`` on (0, 1): ``(1 - ln y)**(-1/alpha)``."""
    alpha = as_alpha(alpha)
    with gmpy2.context(gmpy2.get_context(), precision=precision_bits + 16):
        y = _to_mpfr(y)
        if not 0 < y <= 1:
            raise DomainError(f"P_alpha^-1 is defined on (0, 1], got {y}")
        return (1 - gmpy2.log(y)) ** (-1 / _to_mpfr(alpha))


def exponent_value(e: AlphaExponent, alpha) -> Fraction:
    return e.a + e.b * as_alpha(alpha)


def log2_magnitude(x) -> float:
    if x == 0:
        return -math.inf
    return float(gmpy2.log2(abs(x)))
