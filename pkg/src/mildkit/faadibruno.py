"""Index sets of the Faa di Bruno formula and derivatives of compositions.

Two forms are provided:

* the compact univariate form, a sum over integer partitions ``k`` of ``n``
  (``sum i*k_i = n``) weighted by ``n! / prod(k_i! (i!)**k_i)``;
* the multivariate form for ``(f o g)^(nu)`` with ``g: R^e -> R^d``, a sum over
  ``lambda`` in ``N^d`` and tuples ``(k_1..k_s; l_1..l_s)`` with
  ``sum k_j = lambda``, ``sum |k_j| l_j = nu`` and ``0 < l_1 < ... < l_s`` in the
  graded-lexicographic order.

Multi-index conventions: ``k!`` is the product of componentwise factorials and
``(l!)**k`` means ``prod_c (l!)**k_c``, i.e. ``(l!)**|k|``.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import gmpy2

from mildkit.ratcalc import ExpPoly, format_rational

MultiIndex = tuple[int, ...]


def order(nu: Sequence[int]) -> int:
    return sum(nu)


def precedes(l1: Sequence[int], l2: Sequence[int]) -> bool:
    """Strict graded-lexicographic comparison ``l1 < l2``."""
    return (sum(l1), tuple(l1)) < (sum(l2), tuple(l2))


def mfactorial(nu: Sequence[int]) -> int:
    out = 1
    for v in nu:
        out *= math.factorial(v)
    return out


# ---------------------------------------------------------------------------
# univariate compact form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionTerm:
    k: tuple[int, ...]
    coeff: int

    @property
    def k_total(self) -> int:
        return sum(self.k)


def coefficient_of_partition(n: int, k: Sequence[int]) -> int:
    """``n! / prod_i (k_i! (i!)**k_i)`` for a partition with ``sum i*k_i = n``."""
    if len(k) > n and any(k[n:]):
        raise ValueError("partition has parts larger than n")
    if any(v < 0 for v in k) or sum((i + 1) * v for i, v in enumerate(k)) != n:
        raise ValueError(f"k={tuple(k)} does not satisfy sum i*k_i = {n}")
    den = 1
    for i, v in enumerate(k, start=1):
        den *= math.factorial(v) * math.factorial(i) ** v
    q, r = divmod(math.factorial(n), den)
    assert r == 0
    return q


def _int_partitions(n: int, largest: int):
    """Partitions of n with parts <= largest, as multiplicity dicts."""
    if n == 0:
        yield {}
        return
    for part in range(min(n, largest), 0, -1):
        for rest in _int_partitions(n - part, part):
            out = dict(rest)
            out[part] = out.get(part, 0) + 1
            yield out


@lru_cache(maxsize=None)
def partitions_univariate(n: int) -> tuple[PartitionTerm, ...]:
    """All ``k = (k_1..k_n)`` with ``sum i*k_i = n`` and their Bell coefficients."""
    if n <= 0:
        raise ValueError("n must be positive (the order-0 sum is empty)")
    fact = [math.factorial(i) for i in range(n + 1)]
    out = []
    for mult in _int_partitions(n, n):
        k = tuple(mult.get(i, 0) for i in range(1, n + 1))
        den = 1
        for i, v in mult.items():
            den *= fact[v] * fact[i] ** v
        out.append(PartitionTerm(k, fact[n] // den))
    return tuple(out)


# ---------------------------------------------------------------------------
# multivariate index set p_s(nu, lambda)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PSTuple:
    ks: tuple[MultiIndex, ...]
    ls: tuple[MultiIndex, ...]
    coeff: Fraction

    @property
    def s(self) -> int:
        return len(self.ls)

    def to_json(self) -> dict:
        return {
            "s": self.s,
            "ks": [list(k) for k in self.ks],
            "ls": [list(l) for l in self.ls],
            "coeff": format_rational(self.coeff),
        }


def _compositions(total: int, bound: Sequence[int]):
    """Vectors k with sum(k) == total and 0 <= k <= bound componentwise."""
    d = len(bound)
    if d == 1:
        if total <= bound[0]:
            yield (total,)
        return
    rest_cap = sum(bound[1:])
    for first in range(min(total, bound[0]), max(0, total - rest_cap) - 1, -1):
        for tail in _compositions(total - first, bound[1:]):
            yield (first,) + tail


def _candidate_ls(nu: MultiIndex) -> list[MultiIndex]:
    cands = [l for l in itertools.product(*(range(v + 1) for v in nu)) if any(l)]
    cands.sort(key=lambda l: (sum(l), l))
    return cands


_ps_cache: dict = {}
_ps_lock = threading.Lock()


def enumerate_ps(nu: Sequence[int], lam: Sequence[int]) -> tuple[PSTuple, ...]:
    """The union over ``s`` of ``p_s(nu, lambda)`` with exact coefficients.

    Coefficient of a tuple: ``nu! * prod_j 1/(k_j! (l_j!)**|k_j|)``.  Results are
    memoized on ``(nu, lambda)``; an entry is published only once complete.
    """
    nu = tuple(int(v) for v in nu)
    lam = tuple(int(v) for v in lam)
    key = (nu, lam)
    hit = _ps_cache.get(key)
    if hit is not None:
        return hit
    result = _build_ps(nu, lam)
    with _ps_lock:
        return _ps_cache.setdefault(key, result)


def clear_cache():
    with _ps_lock:
        _ps_cache.clear()
    partitions_univariate.cache_clear()
    _vector_partitions.cache_clear()


@lru_cache(maxsize=None)
def _vector_partitions(nu: MultiIndex) -> dict:
    """Chains ``l_1 < ... < l_s`` with multiplicities ``m_j >= 1`` such that
    ``sum m_j l_j = nu``, grouped by ``sum m_j``."""
    cands = _candidate_ls(nu)
    groups: dict = {}
    ls: list = []
    ms: list = []

    def rec(start: int, rem: MultiIndex, r: int):
        if r == 0:
            groups.setdefault(sum(ms), []).append((tuple(ls), tuple(ms)))
            return
        for idx in range(start, len(cands)):
            l = cands[idx]
            gl = sum(l)
            if gl > r:
                break
            mult = 1
            left = tuple(b - a for a, b in zip(l, rem))
            while all(v >= 0 for v in left):
                ls.append(l)
                ms.append(mult)
                rec(idx + 1, left, r - mult * gl)
                ls.pop()
                ms.pop()
                mult += 1
                left = tuple(b - a for a, b in zip(l, left))

    rec(0, nu, sum(nu))
    return {k: tuple(v) for k, v in groups.items()}


def _build_ps(nu: MultiIndex, lam: MultiIndex) -> tuple[PSTuple, ...]:
    n, lam_total = sum(nu), sum(lam)
    if any(v < 0 for v in nu + lam) or lam_total == 0 or lam_total > n:
        return ()
    nu_fact = mfactorial(nu)
    out: list[PSTuple] = []
    ks: list[MultiIndex] = []

    for ls, ms in _vector_partitions(nu).get(lam_total, ()):
        lpows = [mfactorial(l) ** m for l, m in zip(ls, ms)]

        def split(j: int, lam_rem: MultiIndex, den: int):
            if j == len(ms):
                out.append(PSTuple(tuple(ks), ls, Fraction(nu_fact, den)))
                return
            for k in _compositions(ms[j], lam_rem):
                ks.append(k)
                split(j + 1, tuple(b - a for a, b in zip(k, lam_rem)),
                      den * mfactorial(k) * lpows[j])
                ks.pop()

        split(0, lam, 1)
    return tuple(out)


def all_lambdas(d: int, n: int):
    """All ``lambda`` in ``N^d`` with ``1 <= |lambda| <= n``."""
    for total in range(1, n + 1):
        yield from _compositions(total, (total,) * d)


# ---------------------------------------------------------------------------
# derivatives of compositions
# ---------------------------------------------------------------------------

def _power(cache: dict, base, k: int):
    # keyed by identity: bases are kept alive by the caller's derivative cache
    key = (id(base), k)
    v = cache.get(key)
    if v is None:
        v = base ** k
        cache[key] = v
    return v


def compose_derivative(f: Callable, g: Callable, nu: Sequence[int], *, d: int = 1,
                       point=None, precision_bits: int | None = None):
    """``(f o g)^(nu)`` by the multivariate Faa di Bruno formula.

    Symbolic mode (``point is None``): ``f(lam)`` returns ``f^(lam) o g`` and
    ``g(l)`` returns the ``d`` components of ``g^(l)``, all as :class:`ExpPoly`
    (or exact rationals); the result has the same type.

    Numeric mode: ``g(l, point)`` returns the ``d`` component values of
    ``g^(l)`` at ``point`` and ``f(lam, y)`` returns ``f^(lam)(y)`` where
    ``y = g(0, point)``.  Exact rationals stay exact; MPFR values are combined at
    ``precision_bits``.
    """
    nu = tuple(int(v) for v in nu)
    n = sum(nu)
    e = len(nu)
    zero_nu = (0,) * e
    zero_lam = (0,) * d
    if point is None:
        def g_at(l):
            vals = tuple(g(l))
            if len(vals) != d:
                raise ValueError(f"inner map returned {len(vals)} components, expected {d}")
            return vals

        def f_at(lam):
            return f(lam)
    else:
        def g_at(l):
            vals = tuple(g(l, point))
            if len(vals) != d:
                raise ValueError(f"inner map returned {len(vals)} components, expected {d}")
            return vals

        y = g_at(zero_nu)

        def f_at(lam):
            return f(lam, y)

    if n == 0:
        return f_at(zero_lam)

    ctx = None
    if precision_bits is not None:
        ctx = gmpy2.context(gmpy2.get_context(), precision=precision_bits)
        ctx.__enter__()
    try:
        g_cache: dict = {}
        pow_cache: dict = {}

        def g_val(l):
            v = g_cache.get(l)
            if v is None:
                v = g_at(l)
                g_cache[l] = v
            return v

        total = None
        for lam in all_lambdas(d, n):
            tuples = enumerate_ps(nu, lam)
            if not tuples:
                continue
            inner = None
            for tup in tuples:
                prod = None
                for k, l in zip(tup.ks, tup.ls):
                    comps = g_val(l)
                    for c, kc in enumerate(k):
                        if kc:
                            pw = _power(pow_cache, comps[c], kc) if kc > 1 else comps[c]
                            prod = pw if prod is None else prod * pw
                term = prod * tup.coeff if isinstance(prod, ExpPoly) else tup.coeff * prod
                inner = term if inner is None else inner + term
            fl = f_at(lam)
            contrib = fl * inner
            total = contrib if total is None else total + contrib
        if total is None:
            total = 0 * f_at(zero_lam)
        return total
    finally:
        if ctx is not None:
            ctx.__exit__(None, None, None)


def compose_univariate(f_derivs: Sequence, g_derivs: Sequence, n: int):
    """``(f o g)^(n)`` from ``f^(k)(g(x))`` (k=0..n) and ``g^(i)(x)`` (i=0..n)
    with the compact partition form."""
    if n == 0:
        return f_derivs[0]
    total = 0
    for term in partitions_univariate(n):
        prod = term.coeff
        for i, ki in enumerate(term.k, start=1):
            if ki:
                prod = prod * g_derivs[i] ** ki
        total = total + f_derivs[term.k_total] * prod
    return total
