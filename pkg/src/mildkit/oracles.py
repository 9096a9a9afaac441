"""Derivative oracles: exact derivative sources evaluated on demand.

Every oracle exposes ``arity`` and ``jet(point, nus, work_prec)``, returning a
dict mapping each multi-index in ``nus`` to ``(value, abs_error)`` at ``point``.
The point lives in the oracle's parameter cube ``(0, 1]^m``.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Callable, Sequence

import gmpy2
from gmpy2 import mpfr

from mildkit import faadibruno
from mildkit.ratcalc import (
    DomainError,
    ExpPoly,
    PrecisionError,
    _eval_raw,
    _error_bound,
    _PointCache,
    _to_mpfr,
    differentiate,
)

_TINY = Fraction(1, 2 ** 64)


def _context(work_prec: int):
    ctx = gmpy2.get_context().copy()
    ctx.precision = work_prec
    ctx.emin = gmpy2.get_emin_min()
    ctx.emax = gmpy2.get_emax_max()
    return gmpy2.context(ctx)


def down_closure(nus) -> list[tuple[int, ...]]:
    """All multi-indices below some element of ``nus``, in graded order."""
    seen = set()
    for nu in nus:
        for beta in itertools.product(*(range(v + 1) for v in nu)):
            seen.add(beta)
    return sorted(seen, key=lambda b: (sum(b), b))


def multi_indices(m: int, n_max: int) -> list[tuple[int, ...]]:
    """All ``nu`` in ``N^m`` with ``|nu| <= n_max`` in graded order."""
    out = [nu for nu in itertools.product(range(n_max + 1), repeat=m) if sum(nu) <= n_max]
    out.sort(key=lambda b: (sum(b), b))
    return out


class Oracle:
    arity: int = 1
    label: str = ""

    def jet(self, point, nus, work_prec: int) -> dict:
        raise NotImplementedError

    def value(self, nu, point, precision_bits: int = 256):
        """Adaptively refined value of ``f^(nu)(point)``: ``(value, abs_error)``."""
        nu = tuple(nu)
        budget = mpfr(2) ** (8 - precision_bits)
        w = precision_bits + 16
        cap = 4 * precision_bits
        while True:
            v, err = self.jet(point, [nu], w)[nu]
            if err <= budget * abs(v) or w >= cap:
                return v, err
            w = min(cap, 2 * w)


class ExpPolyOracle(Oracle):
    """Derivatives of an :class:`ExpPoly` precomposed with a per-variable affine map.

    The chart parameter ``t`` maps to ``x_i = scale_i * t_i + offset_i`` and the
    ``nu``-th derivative picks up the factor ``prod scale_i**nu_i``; ``factor``
    multiplies the whole function.
    """

    def __init__(self, poly: ExpPoly, affine: Sequence | None = None, factor=1, label: str = ""):
        self.poly = poly
        self.arity = poly.arity
        self.affine = tuple(affine) if affine is not None else ((1, 0),) * poly.arity
        if len(self.affine) != self.arity:
            raise ValueError("one affine (scale, offset) pair per variable is required")
        self.factor = factor
        self.label = label
        self._derivs: dict = {(0,) * self.arity: poly}
        self._last = None
        for i, (_, offset) in enumerate(self.affine):
            if offset < _TINY and any(t.weights[i] < 0 for t in poly.terms):
                raise DomainError(
                    f"negative exp-weight in x{i} with the domain reaching 0; rejected in bound sweeps"
                )

    def derivative(self, nu) -> ExpPoly:
        nu = tuple(nu)
        p = self._derivs.get(nu)
        if p is None:
            i = max(j for j, v in enumerate(nu) if v)
            lower = nu[:i] + (nu[i] - 1,) + nu[i + 1:]
            p = differentiate(self.derivative(lower), i)
            self._derivs[nu] = p
        return p

    def map_point(self, point):
        return tuple(
            _to_mpfr(s) * _to_mpfr(t) + _to_mpfr(o) for t, (s, o) in zip(point, self.affine)
        )

    def jet(self, point, nus, work_prec: int) -> dict:
        # one-point cache: composite oracles query the same point repeatedly
        key = tuple(point)
        cached = self._last if self._last is not None and self._last[0] == key else None
        if cached is not None and cached[1] >= work_prec:
            have = cached[2]
            missing = [tuple(nu) for nu in nus if tuple(nu) not in have]
        else:
            have = {}
            missing = [tuple(nu) for nu in nus]
        if missing:
            prec = cached[1] if cached is not None and cached[1] >= work_prec else work_prec
            have.update(self._compute(point, missing, prec))
            self._last = (key, prec, have)
        return {tuple(nu): have[tuple(nu)] for nu in nus}

    def _compute(self, point, nus, work_prec: int) -> dict:
        out = {}
        with _context(work_prec):
            x = self.map_point(point)
            for xi in x:
                if xi <= 0:
                    raise DomainError(f"coordinate {xi} is not positive")
            cache = _PointCache(x, self.poly.alpha)
            factor = _to_mpfr(self.factor)
            scales = [_to_mpfr(s) for s, _ in self.affine]
            for nu in nus:
                p = self.derivative(nu)
                if p.is_zero():
                    out[nu] = (mpfr(0), mpfr(0))
                    continue
                v, mag, _ = _eval_raw(p, x, work_prec, cache)
                err = _error_bound(p, mag, work_prec)
                sc = factor
                for s, k in zip(scales, nu):
                    if k:
                        sc *= s ** k
                out[nu] = (v * sc, err * abs(sc) * (1 + mpfr(2) ** (8 - work_prec)))
        return out


class FunctionOracle(Oracle):
    """Oracle from a plain callable ``fn(nu, point) -> value`` (exact rationals or mpfr)."""

    def __init__(self, fn: Callable, arity: int = 1, label: str = ""):
        self.fn = fn
        self.arity = arity
        self.label = label

    def jet(self, point, nus, work_prec: int) -> dict:
        out = {}
        with _context(work_prec):
            for nu in nus:
                v = _to_mpfr(self.fn(tuple(nu), point))
                out[tuple(nu)] = (v, abs(v) * mpfr(2) ** (4 - work_prec))
        return out


class UnitFunction:
    """A univariate analytic unit ``F(y)`` with exact derivative formulas."""

    def __init__(self, name: str, deriv: Callable[[int, object], object], cert_AB, label: str = ""):
        self.name = name
        self.deriv = deriv
        self.cert_AB = cert_AB
        self.label = label or name

    def __call__(self, y):
        return self.deriv(0, y)


class ComposedOracle(Oracle):
    """``F o h`` for a unit ``F`` of one variable and a scalar oracle ``h``,
    evaluated with the multivariate Faa di Bruno formula.

    The index sets ``p_s(nu, lambda)`` are flattened once per ``nu`` into
    ``(|lambda|, [(coeff, ((l, k), ...)), ...])`` lists; each evaluation then
    only multiplies cached powers of the inner derivatives.
    """

    def __init__(self, unit: UnitFunction, inner: Oracle, label: str = ""):
        self.unit = unit
        self.inner = inner
        self.arity = inner.arity
        self.label = label or f"{unit.name}(inner)"
        self._plans: dict = {}

    def plan(self, nu):
        p = self._plans.get(nu)
        if p is None:
            p = []
            for lam in faadibruno.all_lambdas(1, sum(nu)):
                rows = [(gmpy2.mpq(t.coeff.numerator, t.coeff.denominator),
                         tuple((l, k[0]) for k, l in zip(t.ks, t.ls)))
                        for t in faadibruno.enumerate_ps(nu, lam)]
                if rows:
                    p.append((lam[0], rows))
            self._plans[nu] = p
        return p

    def jet(self, point, nus, work_prec: int) -> dict:
        nus = [tuple(nu) for nu in nus]
        w = work_prec + 32
        lower = down_closure(nus)
        hv = self.inner.jet(point, lower, work_prec)
        out = {}
        with _context(w):
            h0 = hv[(0,) * self.arity][0]
            fvals: dict = {}
            pows: dict = {}
            apows: dict = {}

            def fval(k):
                v = fvals.get(k)
                if v is None:
                    v = fvals[k] = _to_mpfr(self.unit.deriv(k, h0))
                return v

            def power(l, k):
                key = (l, k)
                v = pows.get(key)
                if v is None:
                    v = pows[key] = hv[l][0] ** k
                    apows[key] = (abs(hv[l][0]) + hv[l][1]) ** k
                return v

            # relative input errors propagate through products of <= 2|nu|+2 factors
            rel_in = max((hv[l][1] / abs(hv[l][0]) for l in lower if hv[l][0]), default=mpfr(0))
            for nu in nus:
                if not any(nu):
                    v = fval(0)
                    out[nu] = (v, abs(v) * (rel_in + mpfr(2) ** (4 - w)))
                    continue
                val = mpfr(0)
                mag = mpfr(0)
                for lam, rows in self.plan(nu):
                    inner = mpfr(0)
                    inner_mag = mpfr(0)
                    for coeff, factors in rows:
                        prod = coeff
                        aprod = coeff
                        for l, k in factors:
                            prod = prod * power(l, k)
                            aprod = aprod * apows[(l, k)]
                        inner += prod
                        inner_mag += aprod
                    fl = fval(lam)
                    val += fl * inner
                    mag += abs(fl) * inner_mag
                err = mag * ((2 * sum(nu) + 4) * (rel_in + mpfr(2) ** (4 - w)))
                out[nu] = (val, err)
        return out


class ProductOracle(Oracle):
    """Leibniz rule for the product of two oracles of equal arity."""

    def __init__(self, left: Oracle, right: Oracle, label: str = ""):
        if left.arity != right.arity:
            raise ValueError("arity mismatch")
        self.left, self.right = left, right
        self._leibniz: dict = {}
        self.arity = left.arity
        self.label = label or f"({left.label})*({right.label})"

    @staticmethod
    def _terms(nu):
        terms = []
        for beta in itertools.product(*(range(v + 1) for v in nu)):
            c = 1
            for a, b in zip(nu, beta):
                c *= math.comb(a, b)
            terms.append((beta, tuple(a - b for a, b in zip(nu, beta)), c))
        return terms

    def jet(self, point, nus, work_prec: int) -> dict:
        nus = [tuple(nu) for nu in nus]
        lower = down_closure(nus)
        w = work_prec + 16
        lv = self.left.jet(point, lower, w)
        rv = self.right.jet(point, lower, w)
        out = {}
        with _context(w):
            for nu in nus:
                terms = self._leibniz.get(nu)
                if terms is None:
                    terms = self._leibniz[nu] = self._terms(nu)
                total = mpfr(0)
                err = mpfr(0)
                size = mpfr(0)
                for beta, rest, c in terms:
                    (x, ex), (y, ey) = lv[beta], rv[rest]
                    total += c * x * y
                    ax, ay = abs(x), abs(y)
                    size += c * ax * ay
                    err += c * (ax * ey + ay * ex + ex * ey)
                out[nu] = (total, err + size * mpfr(2) ** (2 - work_prec))
        return out


def as_oracle(obj) -> Oracle:
    if isinstance(obj, Oracle):
        return obj
    if isinstance(obj, ExpPoly):
        return ExpPolyOracle(obj)
    raise TypeError(f"cannot build a derivative oracle from {type(obj).__name__}")


def require_precision(v, err, precision_bits: int, what: str):
    if v != 0 and err > abs(v) * mpfr(2) ** (8 - precision_bits):
        raise PrecisionError(f"{what}: value {v} carries error {err}")
