import math
from fractions import Fraction as F

import gmpy2
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from mildkit import parametrize as pz
from mildkit.mildness import GridSpec, abm_compose_cert, cert, verify_cert
from mildkit.ratcalc import p_alpha_inverse

SMALL = GridSpec(points=128)


def _f(x):
    return float(x)


# -- charts -------------------------------------------------------------------

def test_delta_example():
    assert _f(pz.chart_delta(F(1, 4), 1)) == pytest.approx(1 / (1 + math.log(4)), rel=1e-15)
    assert _f(pz.chart_delta(F(1, 4), 1)) == pytest.approx(0.4190598, abs=1e-7)


@given(st.integers(1, 40), st.sampled_from([F(1), F(3, 2), F(2), F(1, 2)]))
def test_delta_closed_form(k, alpha):
    eps = F(1, 2 ** k)
    want = (1 - math.log(float(eps))) ** (-1 / float(alpha))
    assert _f(pz.chart_delta(eps, alpha)) == pytest.approx(want, rel=1e-13)


@pytest.mark.parametrize("eps", [0, 1, F(3, 2), -F(1, 2)])
def test_epsilon_range(eps):
    with pytest.raises(ValueError):
        pz.yomdin_charts(eps, 1)


def test_chart_ids_and_limits():
    main, swapped, point = pz.yomdin_charts(F(1, 4), 1)
    assert (main.id, swapped.id, point.id) == (pz.MAIN, pz.SWAPPED, pz.POINT)
    x1, y1 = main.value(F(1))
    assert _f(x1) == pytest.approx(1, abs=1e-60) and _f(y1) == pytest.approx(1 / 16, rel=1e-60)
    x0, y0 = main.value(F(0))
    assert _f(x0) == pytest.approx(0.25, rel=1e-60) and _f(y0) == pytest.approx(0.25, rel=1e-60)
    xs, ys = swapped.value(F(1))
    assert _f(xs) == pytest.approx(1 / 16) and _f(ys) == pytest.approx(1)
    assert point.value(F(1, 3)) == (gmpy2.mpfr(0.25), gmpy2.mpfr(0.25))


@pytest.mark.parametrize("alpha", [1, 2])
@pytest.mark.parametrize("k", range(1, 11))
def test_on_curve_identity(alpha, k):
    for chart in pz.yomdin_charts(F(1, 4 ** k), alpha)[:2]:
        assert pz.on_curve_residual(chart).is_zero()


def test_ranges_of_charts():
    eps = F(1, 64)
    main, swapped, _ = pz.yomdin_charts(eps, 2)
    for t in (F(1, 1000), F(1, 2), F(999, 1000)):
        x, _ = main.value(t)
        assert eps < x < 1
        x, _ = swapped.value(t)
        assert eps ** 2 < x < eps


def test_chart_json():
    doc = pz.yomdin_charts(F(1, 4), 1, cert(6, sympy.E, 1))[0].to_json()
    assert doc["id"] == pz.MAIN
    assert float(doc["delta"]) == pytest.approx(0.4190598, rel=1e-6)
    assert len(doc["components"]) == 2 and doc["cert"]["C"] == "1/1"


# -- coverage -----------------------------------------------------------------

def test_inverse_example():
    eps = F(1, 4)
    delta = pz.chart_delta(eps, 1)
    u = p_alpha_inverse(F(1, 2), 1)
    assert _f(u) == pytest.approx(1 / (1 + math.log(2)), rel=1e-14)
    t = (u - delta) / (1 - delta)
    assert _f(t) == pytest.approx(0.2953081, abs=1e-7)
    assert 0 < t < 1


@pytest.mark.parametrize("alpha", [1, 2])
def test_coverage(alpha):
    charts = pz.yomdin_charts(F(1, 256), alpha)
    rep = pz.verify_coverage(charts, samples=500)
    assert rep.passed and rep.identity_exact and rep.tiling_ok
    assert not rep.uncovered and not rep.multiply_covered
    doc = rep.to_json()
    assert doc["pass"] is True


def test_coverage_point_chart_takes_epsilon():
    eps = F(1, 16)
    charts = pz.yomdin_charts(eps, 1)
    e = gmpy2.mpfr(eps.numerator) / eps.denominator
    assert 0 < pz._invert(charts[2], e, 128) < 1
    assert not 0 < pz._invert(charts[0], e, 128) < 1
    assert not 0 < pz._invert(charts[1], e, 128) < 1


def test_coverage_gap_is_reported():
    charts = pz.yomdin_charts(F(1, 16), 1)
    rep = pz.verify_coverage(charts[:2], samples=200)
    assert not rep.passed
    assert rep.uncovered and _f(rep.uncovered[0]) == pytest.approx(1 / 16)


def test_verify_family_per_member():
    fam = pz.build_family(1, [F(1, 4), F(1, 16)])
    reps = pz.verify_family(fam, samples=300)
    assert [r.epsilon for r in reps] == [F(1, 4), F(1, 16)]
    assert all(r.passed for r in reps)


# -- uniform certificate ------------------------------------------------------

def test_paper_strategy_cert():
    c = pz.select_uniform_cert(2)
    assert sympy.simplify(c.A - 12) == 0 and c.C == F(1, 2)
    with pytest.raises(ValueError):
        pz.select_uniform_cert(1, strategy="guess")


@pytest.mark.parametrize("alpha", [1, 2])
def test_uniform_small_scale(alpha):
    fam = pz.with_member(pz.build_family(alpha, [F(1, 4), F(1, 64)]), F(1, 2 ** 12))
    assert fam.epsilons == (F(1, 4), F(1, 64), F(1, 2 ** 12))
    rep = pz.uniform_verify(fam, n_max=8, grid=SMALL)
    assert rep.passed and not rep.failures()
    assert rep.min_relative_margin() > 0
    assert len(rep.entries) == 3 * 3 * 2
    rows = rep.csv_rows()
    assert rows and set(rows[0]) >= {"alpha", "epsilon", "chart_id", "component", "n", "sup", "bound", "margin"}


def test_point_chart_trivial():
    fam = pz.build_family(1, [F(1, 4)])
    point = fam.charts[F(1, 4)][2]
    rep = verify_cert(point.components[0], fam.uniform_cert, 6, SMALL)
    assert rep.passed and all(r.sup == 0 for r in rep.records[1:])


def test_fit_largest_fails_on_small_epsilon():
    # constants fitted at eps = 1/4 (times 2) do not cover eps = 2^-10
    c = pz.select_uniform_cert(1, [F(1, 4)], "fit-largest", n_max=8, grid=SMALL)
    fam = pz.build_family(1, [F(1, 2 ** 10)], uniform_cert=c)
    assert not pz.uniform_verify(fam, n_max=8, grid=SMALL).passed


def test_x_component_compose_cert():
    from mildkit.mildness import compose_certs, p_alpha_cert

    c = compose_certs(p_alpha_cert(1), cert(1, 1, 0))
    main = pz.yomdin_charts(F(1, 16), 1)[0]
    assert verify_cert(main.components[0], c, 8, SMALL).passed


def test_family_json():
    doc = pz.build_family(1, [F(1, 4)]).to_json()
    assert doc["alpha"] == "1/1" and doc["params"] == ["1/4"]


# -- naive charts -------------------------------------------------------------

def test_probe_examples():
    rep = pz.nonuniformity_probe([F(1, 16), F(1, 2 ** 16)], grid=SMALL)
    a = {r.epsilon: r.A0 for r in rep.rows}
    assert a[F(1, 16)] >= 8
    assert a[F(1, 2 ** 16)] >= 2 ** 15
    assert a[F(1, 2 ** 16)] / a[F(1, 16)] >= 2 ** 11
    assert rep.passed and rep.to_json()["monotone"]


def test_probe_order():
    assert pz.probe_order(F(1, 4)) == 7
    for k in (2, 4, 8, 16):
        eps = F(1, 2 ** k)
        n = pz.probe_order(eps)
        assert (1 - eps) * float(eps) ** (1 / (n - 3)) >= 0.5 * (1 - 1e-12)


def test_naive_derivative_closed_form():
    eps = F(1, 32)
    orc = pz.naive_chart(eps)
    for n in range(5):
        v, _ = orc.value((n,), (F(0),), 128)
        want = math.factorial(n) * float(eps) ** 2 * (1 - float(eps)) ** n / float(eps) ** (n + 1)
        assert abs(float(v)) == pytest.approx(want, rel=1e-12)


# -- analytic-bounded-monomial charts ----------------------------------------

def test_abm_constant_unit_values():
    chart = pz.abm_chart(pz.ABMSpec.single((1, 1)), 1)
    orc = chart.components[0]
    one = (F(1), F(1))
    assert _f(orc.value((0, 0), one, 128)[0]) == pytest.approx(1)
    assert _f(orc.value((1, 1), one, 128)[0]) == pytest.approx(1)


def test_abm_zero_exponent_variable():
    chart = pz.abm_chart(pz.ABMSpec.single((0, 2)), 1)
    orc = chart.components[0]
    for pt in [(F(1, 3), F(1, 2)), (F(1, 2), F(9, 10))]:
        assert orc.value((1, 0), pt, 128)[0] == 0
        assert orc.value((2, 1), pt, 128)[0] == 0


def test_abm_reciprocal_cert_passes():
    spec = pz.ABMSpec(((1, 2),), pz.unit_reciprocal())
    chart = pz.abm_chart(spec, 1)
    base = abm_compose_cert((1, 2), 2, 1)
    assert sympy.simplify(base.A - 18) == 0
    assert sympy.simplify(chart.cert.A - (18 + 18 * (1 + sympy.exp(F(1, 2))) ** 2)) == 0
    assert verify_cert(chart.components[0], chart.cert, 3, GridSpec(points=16)).passed


def test_unit_library():
    r = pz.unit_reciprocal()
    assert r.deriv(2, F(1)) == F(2, 8)
    with pytest.raises(ValueError):
        r.cert_AB(F(-1, 2), F(1))
    p = pz.unit_polynomial([2, 1])
    assert p.cert_AB(F(0), F(1)) == (1, 4)
    with pytest.raises(ValueError):
        pz.unit_polynomial([F(-1, 2), 1]).cert_AB(F(0), F(1))
    with pytest.raises(ValueError):
        pz.unit_constant(0)
    with pytest.raises(ValueError):
        pz.unit_polynomial([0, 0])


def test_abm_spec_validation():
    with pytest.raises(ValueError):
        pz.ABMSpec(((1, 1), (1,)), pz.unit_constant(1))
    with pytest.raises(IndexError):
        pz.ABMSpec(((1, 1),), pz.unit_constant(1), j=1)
    with pytest.raises(ValueError):
        pz.abm_chart(pz.ABMSpec.single((F(1, 2), 1)), 1)


@given(st.lists(st.fractions(min_value=-3, max_value=3, max_denominator=4), min_size=1, max_size=4),
       st.fractions(min_value=0, max_value=1, max_denominator=8))
def test_certified_min_abs_is_a_lower_bound(coeffs, y):
    m = pz.certified_min_abs(coeffs, F(0), F(1), depth=10)
    if m is not None:
        assert abs(pz._poly_eval(coeffs, y)) >= m


def test_family_abm_examples():
    fam = pz.family_abm_charts("t", 1, [F(1, 4), F(1, 2), F(3, 4)], 1)
    c = fam.uniform_cert
    base = abm_compose_cert((1,), 1, 1)
    assert sympy.simplify(c.A - base.A) == 0 and sympy.simplify(c.B - base.B) == 0
    rep = pz.uniform_verify(fam, n_max=8, grid=SMALL)
    assert rep.passed

    fam = pz.family_abm_charts("one", 2, [F(1, 2)], 1)
    poly = fam.charts[F(1, 2)][0].polys[0]
    assert poly.to_json() == pz.construct("exp_of_linear", 1, 1, mu=[2]).to_json()
    assert pz.uniform_verify(fam, n_max=8, grid=SMALL).passed


def test_family_abm_wall():
    fam = pz.family_abm_charts("1-t", 1, [F(1, 4), F(1, 2)], 2, wall=lambda t: t)
    assert fam.charts[F(1, 2)][0].affine == ((F(1, 2), F(1, 2)),)
    assert pz.uniform_verify(fam, n_max=8, grid=SMALL).passed


def test_family_abm_rejects_small_exponent():
    with pytest.raises(ValueError):
        pz.family_abm_charts("t", F(1, 2), [F(1, 2)], 1)
