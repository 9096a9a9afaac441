"""Chart families: the three-chart parametrization of ``xy = eps**2`` and a-b-m charts.

Curve charts live on ``t in (0, 1)``.  Each component is an :class:`ExpPoly` in
``u`` together with the affine pre-map ``u = (1 - delta) t + delta``; the pre-map
stays outside the algebra and order-``n`` derivatives pick up ``(1 - delta)**n``.

With ``delta = P_alpha^-1(eps)`` the main chart is

    t -> (P_alpha(u), eps**2 / P_alpha(u)) = (e^{1 - u^-a}, eps**2 e^{-(1 - u^-a)})

whose product is the constant ``eps**2`` exactly (the exp-weights cancel).  It
covers ``eps < x < 1``; the swapped chart exchanges the coordinates and covers
``eps**2 < x < eps``; the point chart is the constant ``(eps, eps)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import gmpy2
import sympy
from gmpy2 import mpfr

from mildkit.mildness import (
    DEFAULT_PRECISION,
    MILD,
    GridSpec,
    MildCert,
    _fmt,
    abm_compose_cert,
    cert,
    compose_certs,
    fit_constants,
    p_alpha_cert,
    product_certs,
    scale_cert,
    verify_cert,
)
from mildkit.oracles import (
    ComposedOracle,
    ExpPolyOracle,
    ProductOracle,
    UnitFunction,
    _context,
)
from mildkit.ratcalc import (
    ExpPoly,
    _to_mpfr,
    as_alpha,
    constant,
    construct,
    format_rational,
    p_alpha_inverse,
)

MAIN, SWAPPED, POINT = "main", "swapped", "point"


def default_epsilons() -> list[Fraction]:
    """``2**-2, 2**-4, ..., 2**-20``."""
    return [Fraction(1, 2 ** (2 * k)) for k in range(1, 11)]


HELD_OUT_EPSILON = Fraction(1, 2 ** 21)


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Chart:
    """One map from the parameter cube into the target space.

    ``polys[i]`` is the exact closed form of component ``i`` (``None`` when only a
    derivative oracle exists) and ``affine`` holds one ``(scale, offset)`` pair
    per parameter.
    """

    id: str
    alpha: Fraction
    components: tuple
    affine: tuple
    cert: MildCert | None = None
    polys: tuple = ()
    names: tuple = ()
    epsilon: Fraction | None = None
    delta: mpfr | None = None

    @property
    def arity(self) -> int:
        return len(self.affine)

    def component_name(self, i: int) -> str:
        return self.names[i] if i < len(self.names) else f"f{i}"

    def value(self, t, precision_bits: int = DEFAULT_PRECISION) -> tuple:
        t = tuple(t) if isinstance(t, (tuple, list)) else (t,)
        zero = (0,) * self.arity
        return tuple(c.jet(t, [zero], precision_bits + 32)[zero][0] for c in self.components)

    def to_json(self, precision_bits: int = DEFAULT_PRECISION) -> dict:
        out = {"id": self.id}
        if self.delta is not None:
            out["delta"] = _fmt(self.delta)
        out["components"] = [p.to_json() if p is not None else None for p in self.polys]
        scale, offset = self.affine[0] if self.arity == 1 else (None, None)
        if self.arity == 1:
            out["affine"] = {"scale": _fmt(_to_mpfr(scale)), "offset": _fmt(_to_mpfr(offset))}
        else:
            out["affine"] = [{"scale": _fmt(_to_mpfr(s)), "offset": _fmt(_to_mpfr(o))}
                             for s, o in self.affine]
        if self.cert is not None:
            out["cert"] = self.cert.to_json(precision_bits)
        return out


def _check_epsilon(eps) -> Fraction:
    eps = Fraction(eps)
    if not 0 < eps < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {eps}")
    return eps


def chart_delta(eps, alpha, precision_bits: int = DEFAULT_PRECISION) -> mpfr:
    """``P_alpha^-1(eps) = (1 - ln eps)**(-1/alpha)``."""
    return p_alpha_inverse(_check_epsilon(eps), alpha, precision_bits + 32)


def curve_components(eps, alpha) -> tuple[ExpPoly, ExpPoly]:
    """``(P_alpha(u), eps**2 e^{-(1 - u^-alpha)})`` as exact ExpPolys in ``u``."""
    eps = _check_epsilon(eps)
    alpha = as_alpha(alpha)
    x = construct("p_alpha", 1, alpha)
    y = construct("exp_of_linear", 1, alpha, mu=[-1]).scale(eps ** 2)
    return x, y


def yomdin_charts(eps, alpha, cert_: MildCert | None = None,
                  precision_bits: int = DEFAULT_PRECISION) -> list[Chart]:
    """The main, swapped and point charts of the hyperbola ``xy = eps**2``."""
    eps = _check_epsilon(eps)
    alpha = as_alpha(alpha)
    delta = chart_delta(eps, alpha, precision_bits)
    with _context(precision_bits + 32):
        affine = ((1 - delta, delta),)
    x, y = curve_components(eps, alpha)
    ox = ExpPolyOracle(x, affine, label=f"x(eps={eps})")
    oy = ExpPolyOracle(y, affine, label=f"y(eps={eps})")
    pt = constant(eps, 1, alpha)
    opt = ExpPolyOracle(pt, ((1, 0),), label="eps")
    common = dict(alpha=alpha, cert=cert_, epsilon=eps)
    return [
        Chart(MAIN, components=(ox, oy), affine=affine, polys=(x, y), names=("x", "y"),
              delta=delta, **common),
        Chart(SWAPPED, components=(oy, ox), affine=affine, polys=(y, x), names=("x", "y"),
              delta=delta, **common),
        Chart(POINT, components=(opt, opt), affine=((1, 0),), polys=(pt, pt), names=("x", "y"),
              **common),
    ]


def on_curve_residual(chart: Chart) -> ExpPoly:
    """``x(u) y(u) - eps**2``; the zero ExpPoly for every chart of the family."""
    x, y = chart.polys
    return x * y - constant(chart.epsilon ** 2, 1, chart.alpha)


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FamilyParam:
    """Charts for every family member, all sharing ``uniform_cert``."""

    alpha: Fraction
    params: tuple
    charts: dict
    uniform_cert: MildCert
    kind: str = "yomdin"
    notes: tuple = ()

    @property
    def epsilons(self) -> tuple:
        return self.params

    def to_json(self, precision_bits: int = DEFAULT_PRECISION) -> dict:
        return {
            "alpha": format_rational(self.alpha),
            "kind": self.kind,
            "params": [format_rational(p) for p in self.params],
            "cert": self.uniform_cert.to_json(precision_bits),
            "notes": list(self.notes),
        }


def select_uniform_cert(alpha, epsilons: Sequence | None = None, strategy: str = "paper",
                        n_max: int = 15, grid: GridSpec | None = None, safety=2,
                        precision_bits: int = DEFAULT_PRECISION) -> MildCert:
    """Shared ``(A, B, 1/alpha)`` for all curve charts.

    ``paper``: the constants of ``P_alpha`` itself.  The y-component
    ``eps**2 e^{-(1-u^-a)}`` is bounded by the same sum as ``P_alpha`` because
    ``eps**2 <= P_alpha(u)**2`` on the chart, and the affine factor is ``<= 1``.

    ``fit-largest``: fit both components at the largest ``eps`` and multiply
    ``A`` and ``B`` by ``safety``.

    ``fit-grid``: the same, maximizing the fitted constants over every ``eps``.
    """
    alpha = as_alpha(alpha)
    if strategy == "paper":
        c = p_alpha_cert(alpha)
        return MildCert(c.A, c.B, c.C, label=f"uniform P_{alpha}")
    if strategy not in ("fit-largest", "fit-grid"):
        raise ValueError(f"unknown strategy {strategy!r}")
    eps_list = [_check_epsilon(e) for e in (epsilons or default_epsilons())]
    if strategy == "fit-largest":
        eps_list = [max(eps_list)]
    C = 1 / alpha
    A = B = mpfr(0)
    for eps in eps_list:
        main = yomdin_charts(eps, alpha, precision_bits=precision_bits)[0]
        for comp in main.components:
            fit = fit_constants(comp, C, n_max, grid, precision_bits)
            A, B = max(A, fit.A_fitted), max(B, fit.B_fitted)
    c = MildCert(sympy.Float(_fmt(A * safety)), sympy.Float(_fmt(B * safety)), C,
                 label=f"fitted ({strategy}, safety {safety})")
    return c


def build_family(alpha, epsilons: Sequence | None = None, strategy: str = "paper",
                 uniform_cert: MildCert | None = None, **fit_kw) -> FamilyParam:
    alpha = as_alpha(alpha)
    eps_list = tuple(_check_epsilon(e) for e in (epsilons or default_epsilons()))
    if uniform_cert is None:
        uniform_cert = select_uniform_cert(alpha, eps_list, strategy, **fit_kw)
    charts = {eps: yomdin_charts(eps, alpha, uniform_cert) for eps in eps_list}
    return FamilyParam(alpha, eps_list, charts, uniform_cert, "yomdin",
                       (f"uniform cert strategy: {strategy}",))


def with_member(family: FamilyParam, eps) -> FamilyParam:
    """The same family and frozen cert with one more ``eps`` appended."""
    eps = _check_epsilon(eps)
    charts = dict(family.charts)
    charts[eps] = yomdin_charts(eps, family.alpha, family.uniform_cert)
    return FamilyParam(family.alpha, family.params + (eps,), charts, family.uniform_cert,
                       family.kind, family.notes + (f"added member {eps}",))


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------

@dataclass
class CoverageReport:
    epsilon: Fraction
    samples: int
    max_distance: mpfr
    tolerance: mpfr
    identity_exact: bool
    ranges: dict
    tiling_ok: bool
    uncovered: list = field(default_factory=list)
    multiply_covered: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (self.identity_exact and self.tiling_ok and not self.uncovered
                and not self.multiply_covered and self.max_distance <= self.tolerance)

    def to_json(self) -> dict:
        return {
            "epsilon": format_rational(self.epsilon),
            "samples": self.samples,
            "max_distance": _fmt(self.max_distance, 6),
            "tolerance": _fmt(self.tolerance, 3),
            "identity_exact": self.identity_exact,
            "tiling_ok": self.tiling_ok,
            "ranges": {k: [_fmt(v, 20) for v in r] for k, r in self.ranges.items()},
            "uncovered": [_fmt(x, 20) for x in self.uncovered[:10]],
            "multiply_covered": [_fmt(x, 20) for x in self.multiply_covered[:10]],
            "pass": self.passed,
        }


def _invert(chart: Chart, x, precision_bits: int):
    """Parameter ``t`` at which the chart's first coordinate equals ``x``."""
    eps, alpha = chart.epsilon, chart.alpha
    e = _to_mpfr(eps)
    if chart.id == POINT:
        return mpfr("0.5") if x == e else None
    # the open ranges (eps, 1) and (eps**2, eps) are decided exactly, before rounding
    if (x <= e) if chart.id == MAIN else (x >= e):
        return mpfr(-1)
    target = x if chart.id == MAIN else e ** 2 / x
    if not 0 < target <= 1:
        return mpfr(-1)
    u = p_alpha_inverse(target, alpha, precision_bits)
    return (u - chart.delta) / (1 - chart.delta)


def verify_coverage(charts: Sequence[Chart], samples: int = 10_000,
                    precision_bits: int = 128, tolerance=None) -> CoverageReport:
    """Exact on-curve identity, sampled coverage of ``(eps**2, 1)`` and tiling."""
    by_id = {c.id: c for c in charts}
    main, swapped, point = (by_id.get(k) for k in (MAIN, SWAPPED, POINT))
    eps = charts[0].epsilon
    identity = all(on_curve_residual(c).is_zero() for c in charts)
    with _context(precision_bits + 32):
        tol = mpfr(2) ** (16 - precision_bits) if tolerance is None else _to_mpfr(tolerance)
        e = _to_mpfr(eps)
        lo = 2 * gmpy2.log(e)
        xs = [gmpy2.exp(lo * (1 - mpfr(i) / (samples + 1))) for i in range(1, samples + 1)]
        xs.append(e)
        worst = mpfr(0)
        uncovered, multi = [], []
        t_ranges = {c.id: [mpfr(1), mpfr(0)] for c in charts}
        for x in xs:
            hits = []
            for c in charts:
                t = _invert(c, x, precision_bits)
                if t is not None and 0 < t < 1:
                    hits.append((c, t))
            if not hits:
                uncovered.append(x)
                continue
            if len(hits) > 1:
                multi.append(x)
            c, t = hits[0]
            r = t_ranges[c.id]
            r[0], r[1] = min(r[0], t), max(r[1], t)
            X, Y = c.value((t,), precision_bits)
            worst = max(worst, abs(X - x) / x, abs(Y - e * e / x) / (e * e / x))
        # chart images at the parameter ends
        tiny = mpfr(2) ** (-precision_bits)
        near = lambda a, b: abs(a - b) <= tol * abs(b)  # noqa: E731
        ranges = {}
        tiling = main is not None and swapped is not None and point is not None
        if main is not None:
            mx0, _ = main.value((tiny,), precision_bits)
            mx1, _ = main.value((mpfr(1),), precision_bits)
            ranges[MAIN] = (mx0, mx1)
            tiling = tiling and near(mx0, e) and near(mx1, mpfr(1))
        if swapped is not None:
            sx1, _ = swapped.value((mpfr(1),), precision_bits)
            sx0, _ = swapped.value((tiny,), precision_bits)
            ranges[SWAPPED] = (sx1, sx0)
            tiling = tiling and near(sx1, e * e) and near(sx0, e)
        if point is not None:
            px, py = point.value((mpfr("0.5"),), precision_bits)
            ranges[POINT] = (px, px)
            tiling = tiling and px == e and py == e
        ranges.update({f"{k}_t": tuple(v) for k, v in t_ranges.items()})
    return CoverageReport(eps, len(xs), worst, tol, identity, ranges, tiling, uncovered, multi)


def verify_family(family: FamilyParam, samples: int = 10_000,
                  precision_bits: int = 128) -> list[CoverageReport]:
    return [verify_coverage(family.charts[e], samples, precision_bits) for e in family.params]


# ---------------------------------------------------------------------------
# uniform verification
# ---------------------------------------------------------------------------

@dataclass
class FamilyReport:
    """Every (member, chart, component) bound report under one shared cert."""

    alpha: Fraction
    cert: MildCert
    entries: list
    precision_bits: int = DEFAULT_PRECISION

    @property
    def passed(self) -> bool:
        return all(r.passed for *_, r in self.entries)

    def failures(self) -> list:
        return [(p, cid, comp, r.first_failure()) for p, cid, comp, r in self.entries
                if not r.passed]

    def min_relative_margin(self) -> float:
        return min(float(rec.margin / rec.bound) for *_, r in self.entries for rec in r.records)

    def csv_rows(self) -> list[dict]:
        rows = []
        for p, cid, comp, r in self.entries:
            for rec in r.records:
                n = rec.nu[0] if len(rec.nu) == 1 else "x".join(map(str, rec.nu))
                rows.append({
                    "alpha": format_rational(self.alpha), "epsilon": format_rational(p),
                    "chart_id": cid, "component": comp, "n": n,
                    "sup": _fmt(rec.sup, 17), "bound": _fmt(rec.bound, 17),
                    "margin": _fmt(rec.margin, 17),
                })
        return rows

    def to_json(self) -> dict:
        return {
            "alpha": format_rational(self.alpha),
            "cert": self.cert.to_json(self.precision_bits),
            "members": [
                {"param": format_rational(p), "chart": cid, "component": comp,
                 **{k: v for k, v in r.to_json().items() if k != "cert"}}
                for p, cid, comp, r in self.entries
            ],
            "pass": self.passed,
        }


def uniform_verify(family: FamilyParam, n_max: int = 15, grid: GridSpec | None = None,
                   precision_bits: int = DEFAULT_PRECISION) -> FamilyReport:
    """``verify_cert`` with the shared cert on every component of every chart.

    Components shared between charts (the swapped chart reuses the main chart's
    oracles) are swept once and reported under each chart.
    """
    cert_ = family.uniform_cert
    done: dict = {}
    entries = []
    for p in family.params:
        for chart in family.charts[p]:
            for i, comp in enumerate(chart.components):
                r = done.get(id(comp))
                if r is None:
                    r = verify_cert(comp, cert_, n_max, grid, precision_bits,
                                    label=f"{chart.id}.{chart.component_name(i)}")
                    done[id(comp)] = r
                entries.append((p, chart.id, chart.component_name(i), r))
    return FamilyReport(family.alpha, cert_, entries, precision_bits)


# ---------------------------------------------------------------------------
# non-uniformity of affine charts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeRow:
    epsilon: Fraction
    A0: mpfr
    B0: mpfr
    threshold: Fraction

    @property
    def holds(self) -> bool:
        return self.A0 >= _to_mpfr(self.threshold)

    def to_json(self) -> dict:
        return {"epsilon": format_rational(self.epsilon), "A0": _fmt(self.A0, 17),
                "B0": _fmt(self.B0, 17), "half_over_eps": format_rational(self.threshold),
                "holds": self.holds}


@dataclass
class ProbeReport:
    rows: list
    n_max: int

    @property
    def monotone(self) -> bool:
        ordered = sorted(self.rows, key=lambda r: r.epsilon, reverse=True)
        return all(a.A0 < b.A0 for a, b in zip(ordered, ordered[1:]))

    @property
    def passed(self) -> bool:
        return self.monotone and all(r.holds for r in self.rows)

    def to_json(self) -> dict:
        return {"n_max": self.n_max, "rows": [r.to_json() for r in self.rows],
                "monotone": self.monotone, "pass": self.passed}


def naive_chart(eps, alpha=1) -> ExpPolyOracle:
    """``g(t) = eps**2 / ((1 - eps) t + eps)``, the graph of ``eps**2/x`` on ``(eps, 1)``."""
    eps = _check_epsilon(eps)
    g = construct("monomial", 1, alpha, mu=[-1]).scale(eps ** 2)
    return ExpPolyOracle(g, ((1 - eps, eps),), label=f"naive(eps={eps})")


def probe_order(eps) -> int:
    """Smallest order at which ``(1-eps) eps**(1/n) >= 1/2``, plus slack."""
    eps = Fraction(eps)
    n = math.ceil(math.log(float(eps)) / math.log(0.5 / (1 - float(eps)))) if eps < Fraction(1, 2) else 1
    return max(4, n + 3)


def nonuniformity_probe(epsilons: Sequence | None = None, n_max: int | None = None,
                        grid: GridSpec | None = None,
                        precision_bits: int = DEFAULT_PRECISION) -> ProbeReport:
    """Fitted ``A_0(eps)`` at ``C = 0`` for the naive affine chart.

    Near ``t = 0`` the ``n``-th derivative is ``n! (1-eps)**n eps**(1-n)``, so the
    fitted constant is about ``(1-eps) eps**(1/n) / eps``; reaching ``1/(2 eps)``
    takes ``n`` around ``log2(1/eps)``.  With ``n_max=None`` the order is chosen
    per ``eps`` from that estimate.
    """
    eps_list = [_check_epsilon(e) for e in (epsilons or default_epsilons())]
    rows = []
    used = 0
    for eps in eps_list:
        n = n_max if n_max is not None else probe_order(eps)
        used = max(used, n)
        fit = fit_constants(naive_chart(eps), 0, n, grid, precision_bits)
        rows.append(ProbeRow(eps, fit.A_fitted, fit.B_fitted, 1 / (2 * eps)))
    return ProbeReport(rows, used)


# ---------------------------------------------------------------------------
# a-b-m charts
# ---------------------------------------------------------------------------

def _poly_eval(coeffs, y):
    out = 0
    for c in reversed(coeffs):
        out = out * y + c
    return out


def _poly_deriv(coeffs, k):
    out = list(coeffs)
    for _ in range(k):
        out = [i * c for i, c in enumerate(out)][1:]
    return out


def _interval_poly(coeffs, lo: Fraction, hi: Fraction):
    """Exact interval Horner enclosure of a polynomial on ``[lo, hi]``."""
    a = b = Fraction(0)
    for c in reversed(coeffs):
        prods = (a * lo, a * hi, b * lo, b * hi)
        a, b = min(prods) + c, max(prods) + c
    return a, b


def certified_min_abs(coeffs, lo: Fraction, hi: Fraction, depth: int = 24):
    """Positive lower bound for ``|p|`` on ``[lo, hi]``, or ``None`` if a zero
    cannot be excluded by bisection."""
    a, b = _interval_poly(coeffs, lo, hi)
    if a > 0 or b < 0:
        return min(abs(a), abs(b))
    if depth == 0:
        return None
    mid = (lo + hi) / 2
    left = certified_min_abs(coeffs, lo, mid, depth - 1)
    right = certified_min_abs(coeffs, mid, hi, depth - 1) if left is not None else None
    return None if right is None else min(left, right)


def unit_constant(c) -> UnitFunction:
    c = Fraction(c)
    if c == 0:
        raise ValueError("a constant unit must be nonzero")
    return UnitFunction(f"const({c})", lambda k, y: c if k == 0 else 0,
                        lambda lo, hi: (1, abs(c)))


def unit_reciprocal() -> UnitFunction:
    """``F(y) = 1/(1+y)``; ``|F^(k)| = k!/(1+y)**(k+1) <= k!`` for ``y >= 0``."""

    def deriv(k, y):
        y = _to_mpfr(y) if not isinstance(y, Fraction) else y
        return (-1) ** k * math.factorial(k) / (1 + y) ** (k + 1)

    def cert_ab(lo, hi):
        if lo < 0:
            raise ValueError("1/(1+y) is only certified on images inside [0, oo)")
        return (1, 1)

    return UnitFunction("1/(1+y)", deriv, cert_ab)


def unit_polynomial(coeffs: Sequence) -> UnitFunction:
    """``F(y) = sum c_j y**j``.  On ``|y| <= R``:
    ``|F^(k)| <= k! sum_j C(j,k) |c_j| R**(j-k) <= k! sum_j |c_j| (R+1)**j``."""
    coeffs = [Fraction(c) for c in coeffs]
    if not any(coeffs):
        raise ValueError("the zero polynomial is not a unit")

    def deriv(k, y):
        d = _poly_deriv(coeffs, k)
        if isinstance(y, Fraction):
            return _poly_eval(d, y)
        return _poly_eval([_to_mpfr(c) for c in d], _to_mpfr(y))

    def cert_ab(lo, hi):
        m = certified_min_abs(coeffs, Fraction(lo), Fraction(hi))
        if m is None:
            raise ValueError(f"cannot certify that {coeffs} has no zero on [{lo}, {hi}]")
        R = max(abs(Fraction(lo)), abs(Fraction(hi)))
        return (1, sum(abs(c) * (R + 1) ** j for j, c in enumerate(coeffs)))

    return UnitFunction(f"poly({', '.join(map(str, coeffs))})", deriv, cert_ab)


UNITS: dict[str, Callable[..., UnitFunction]] = {
    "constant": unit_constant,
    "reciprocal": unit_reciprocal,
    "polynomial": unit_polynomial,
}


@dataclass(frozen=True)
class ABMSpec:
    """``f(x) = b_j(x) F(b_arg(x))`` with bounded monomials ``b_i(x) = x**mus[i]``."""

    mus: tuple
    unit: UnitFunction
    j: int = 0
    arg: int = 0

    def __post_init__(self):
        mus = tuple(tuple(Fraction(v) for v in mu) for mu in self.mus)
        if not mus or len({len(mu) for mu in mus}) != 1:
            raise ValueError("mus must be a nonempty list of equal-length exponent vectors")
        object.__setattr__(self, "mus", mus)
        for idx in (self.j, self.arg):
            if not 0 <= idx < len(mus):
                raise IndexError(f"component {idx} out of range")

    @classmethod
    def single(cls, mu, unit: UnitFunction | None = None) -> ABMSpec:
        return cls((tuple(mu),), unit or unit_constant(1))

    @property
    def m(self) -> int:
        return len(self.mus[0])

    def image_box(self) -> tuple[Fraction, Fraction]:
        """Closure of the image of ``b_arg`` on the unit cube."""
        mu = self.mus[self.arg]
        return (Fraction(1), Fraction(1)) if not any(mu) else (Fraction(0), Fraction(1))


def abm_chart(spec: ABMSpec, alpha) -> Chart:
    """``(b_j F(b_arg)) o P`` with ``P = (P_alpha, ..., P_alpha)``.

    Cert: ``product(cert(b_j o P), compose(cert(F), cert(b_arg o P)))``.
    """
    alpha = as_alpha(alpha)
    m = spec.m
    affine = ((1, 0),) * m
    bj = construct("exp_of_linear", m, alpha, mu=spec.mus[spec.j])
    barg = construct("exp_of_linear", m, alpha, mu=spec.mus[spec.arg])
    cj = abm_compose_cert(spec.mus[spec.j], m, alpha)
    carg = abm_compose_cert(spec.mus[spec.arg], m, alpha)
    lo, hi = spec.image_box()
    A_F, B_F = spec.unit.cert_AB(lo, hi)
    cF = cert(A_F, B_F, 0, label=spec.unit.name)
    c_unit = compose_certs(cF, carg)
    total = product_certs(cj, c_unit)
    oj = ExpPolyOracle(bj, affine, label="b_j o P")
    if spec.unit.name.startswith("const("):
        c = spec.unit.deriv(0, 0)
        poly = bj.scale(c)
        oracle = ExpPolyOracle(poly, affine, label=f"{c} b_j o P")
        total = scale_cert(cj, c)
    else:
        same = spec.mus[spec.arg] == spec.mus[spec.j]
        inner = oj if same else ExpPolyOracle(barg, affine, label="b o P")
        oracle = ProductOracle(oj, ComposedOracle(spec.unit, inner), label="f o P")
        poly = None
    return Chart("abm", alpha, (oracle,), affine, total, (poly,), ("f",))


@dataclass(frozen=True)
class BoundedCoefficient:
    """A family coefficient ``a(t)`` with a known bound of ``|a|`` on ``T = (0, 1)``."""

    name: str
    fn: Callable[[Fraction], Fraction]
    sup: Fraction


COEFFICIENTS = {
    "one": BoundedCoefficient("1", lambda t: Fraction(1), Fraction(1)),
    "t": BoundedCoefficient("t", lambda t: Fraction(t), Fraction(1)),
    "t^2": BoundedCoefficient("t^2", lambda t: Fraction(t) ** 2, Fraction(1)),
    "1-t": BoundedCoefficient("1-t", lambda t: 1 - Fraction(t), Fraction(1)),
}


def family_abm_charts(a: BoundedCoefficient | str, r, ts: Sequence, alpha,
                      wall: Callable[[Fraction], Fraction] | None = None) -> FamilyParam:
    """Charts ``s -> a(t) P_alpha(w(t) + (1 - w(t)) s)**r`` for each ``t``.

    All share ``abm_compose_cert((r,), 1, alpha)`` scaled by ``sup |a|``.  The
    wall ``w(t)`` defaults to 0; its affine factor ``(1 - w)**n <= 1`` leaves the
    cert unchanged.
    """
    if isinstance(a, str):
        a = COEFFICIENTS[a]
    alpha = as_alpha(alpha)
    r = Fraction(r)
    if r < 1:
        raise ValueError(f"r = {r} < 1: a(t) r x^(r-1) is unbounded near x = 0")
    if a.sup <= 0:
        raise ValueError("sup |a| must be positive")
    shared = scale_cert(abm_compose_cert((r,), 1, alpha), a.sup)
    shared = MildCert(shared.A, shared.B, shared.C, MILD, shared.B0,
                      label=f"{a.name} x^{r} o P_{alpha}")
    base = construct("exp_of_linear", 1, alpha, mu=[r])
    charts = {}
    params = []
    for t in ts:
        t = Fraction(t)
        at = Fraction(a.fn(t))
        if abs(at) > a.sup:
            raise ValueError(f"|a({t})| = {abs(at)} exceeds the declared bound {a.sup}")
        w = Fraction(wall(t)) if wall is not None else Fraction(0)
        if not 0 <= w < 1:
            raise ValueError(f"wall w({t}) = {w} must lie in [0, 1)")
        poly = base.scale(at) if at else ExpPoly.zero(1, alpha)
        affine = ((1 - w, w),)
        orc = ExpPolyOracle(poly, affine, label=f"a({t}) P^{r}")
        charts[t] = [Chart(f"t={t}", alpha, (orc,), affine, shared, (poly,), ("f",))]
        params.append(t)
    return FamilyParam(alpha, tuple(params), charts, shared, "abm",
                       (f"a(t) = {a.name}, r = {r}",))
