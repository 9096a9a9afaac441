import math
from fractions import Fraction as F

import mpmath
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from mildkit.ratcalc import (
    AlphaExponent,
    DomainError,
    ExpPoly,
    ExpTerm,
    PrecisionError,
    add,
    arith,
    constant,
    construct,
    derivative,
    differentiate,
    evaluate,
    exponent_value,
    mul,
    p_alpha,
    p_alpha_inverse,
    parse_rational,
    scale,
    u_alpha,
)

from _reference import p_alpha_derivative_mp, p_alpha_mp


def mono(a, b, alpha=1, m=1, var=0, coeff=1):
    pows = [AlphaExponent(F(0), F(0))] * m
    pows[var] = AlphaExponent(F(a), F(b))
    return ExpPoly(m, alpha, [ExpTerm(F(coeff), 0, tuple(pows), (F(0),) * m)])


# -- construction -------------------------------------------------------------

def test_u_alpha_terms():
    u = construct("u_alpha", 1, 1)
    got = {(t.coeff, t.pows[0], t.weights[0]) for t in u.terms}
    assert got == {(F(1), (0, 0), 0), (F(-1), (0, -1), 0)}


def test_p_alpha_is_single_weight_one_term():
    p = construct("p_alpha", 1, 2)
    assert len(p) == 1
    (t,) = p.terms
    assert (t.coeff, t.epow, t.pows[0], t.weights[0]) == (1, 0, (0, 0), 1)


def test_exp_of_linear_is_product_of_p_alphas():
    e = construct("exp_of_linear", 2, 1, mu=[1, 1])
    assert e == p_alpha(1, 2, 0) * p_alpha(1, 2, 1)
    assert e.terms[0].weights == (1, 1)


def test_monomial_and_constant():
    assert construct("monomial", 2, 1, mu=[1, 2]).terms[0].pows == ((1, 0), (2, 0))
    assert construct("constant", 3, 1, c=F(5, 2)) == constant(F(5, 2), 3, 1)


@pytest.mark.parametrize("m", [0, -1])
def test_rejects_bad_arity(m):
    with pytest.raises(ValueError):
        construct("p_alpha", m, 1)


@pytest.mark.parametrize("alpha", [0, -1, F(-1, 2)])
def test_rejects_nonpositive_alpha(alpha):
    with pytest.raises(ValueError):
        construct("p_alpha", 1, alpha)


def test_rejects_wrong_mu_length():
    with pytest.raises(ValueError):
        construct("monomial", 2, 1, mu=[1])


# -- differentiation ----------------------------------------------------------

def test_first_derivative_of_p1():
    d = differentiate(p_alpha(1))
    assert len(d) == 1
    (t,) = d.terms
    assert t.coeff == 1 and t.weights == (1,)
    # canonical exponent keeps alpha symbolic: -1 - alpha, i.e. -2 at alpha = 1
    assert t.pows[0] == (-1, -1)
    assert exponent_value(t.pows[0], 1) == -2


def test_higher_derivatives_of_p1_at_one():
    p = p_alpha(1)
    assert evaluate(p.diff(0, 2), [1]).value == -1
    assert evaluate(p.diff(0, 3), [1]).value == 1


@pytest.mark.parametrize("x", [F(1, 5), F(1, 2), F(9, 10)])
def test_second_and_third_derivative_closed_forms(x):
    # hand application of the term rule
    e = math.exp(1 - 1 / float(x))
    xf = float(x)
    d2 = (xf ** -4 - 2 * xf ** -3) * e
    d3 = (xf ** -6 - 6 * xf ** -5 + 6 * xf ** -4) * e
    p = p_alpha(1)
    assert float(evaluate(p.diff(0, 2), [x]).value) == pytest.approx(d2, rel=1e-13)
    assert float(evaluate(p.diff(0, 3), [x]).value) == pytest.approx(d3, rel=1e-13)


@pytest.mark.parametrize("k", range(1, 13))
def test_u1_derivatives_are_single_terms(k):
    d = u_alpha(1).diff(0, k)
    assert len(d) == 1
    (t,) = d.terms
    assert t.coeff == (-1) ** (k + 1) * math.factorial(k)
    assert exponent_value(t.pows[0], 1) == -1 - k


@pytest.mark.parametrize("alpha", [F(1, 2), F(3, 2), F(2)])
def test_u_alpha_derivative_is_rising_factorial(alpha):
    for k in range(1, 8):
        (t,) = u_alpha(alpha).diff(0, k).terms
        rising = math.prod(alpha + j for j in range(k))
        assert t.coeff == (-1) ** (k + 1) * rising
        assert exponent_value(t.pows[0], alpha) == -(alpha + k)


def test_thirty_fold_derivative_term_count():
    d = p_alpha(1).diff(0, 30)
    assert len(d) == 30
    assert {exponent_value(t.pows[0], 1) for t in d.terms} == {-k - 30 for k in range(1, 31)}


@pytest.mark.parametrize("alpha,n,x", [(F(1), 5, F(1, 2)), (F(2), 4, F(3, 4)), (F(1, 2), 3, F(1, 3))])
def test_derivative_matches_mpmath(alpha, n, x):
    got = evaluate(p_alpha(alpha).diff(0, n), [x]).value
    want = p_alpha_derivative_mp(n, x, alpha)
    assert float(got) == pytest.approx(float(want), rel=1e-12)


def test_derivative_index_bounds():
    with pytest.raises(IndexError):
        differentiate(p_alpha(1), 1)
    with pytest.raises(ValueError):
        derivative(p_alpha(1), (1, 1))


# -- evaluation ---------------------------------------------------------------

def test_evaluate_simple_values():
    assert evaluate(mono(0, -1, alpha=2), [F(1, 2)]).value == 4
    assert evaluate(p_alpha(1), [1]).value == 1
    assert evaluate(differentiate(p_alpha(1)), [1]).value == 1


def test_evaluate_p1_prime_at_two_thirds():
    v = evaluate(differentiate(p_alpha(1)), [F(2, 3)], 256)
    with mpmath.workdps(80):
        want = mpmath.mpf(9) / 4 * mpmath.exp(mpmath.mpf(-1) / 2)
        assert abs(mpmath.mpf(str(v.value)) - want) / want < mpmath.mpf(2) ** -240
    assert float(v.value) == pytest.approx(1.3646939843534, abs=1e-12)


@pytest.mark.parametrize("prec", [64, 128, 256, 512])
def test_error_budget(prec):
    p = p_alpha(1).diff(0, 12)
    v = evaluate(p, [F(3, 7)], prec)
    assert v.rel_error <= 2.0 ** (8 - prec)
    want = p_alpha_derivative_mp(12, F(3, 7), 1, dps=200)
    with mpmath.workdps(200):
        assert abs(mpmath.mpf(str(v.value)) - want) <= abs(want) * mpmath.mpf(2) ** (10 - prec)


def test_cancellation_escalates_precision():
    # (1 + 2^-300) - 1 needs well over 256 bits
    p = constant(1, 1, 1) + mono(F(1), 0, coeff=F(1))
    q = p - mono(F(1), 0, coeff=F(1))
    assert q == constant(1, 1, 1)
    tiny = ExpPoly(1, 1, [ExpTerm(F(1), 0, ((F(300), F(0)),), (F(0),)),
                          ExpTerm(F(-1), 0, ((F(301), F(0)),), (F(0),))])
    v = evaluate(tiny, [F(1, 2)], 128)
    assert v.rel_error <= 2.0 ** -120
    assert v.value == pytest.approx(2.0 ** -301)


def test_domain_errors():
    with pytest.raises(DomainError):
        evaluate(p_alpha(1), [0])
    with pytest.raises(DomainError):
        evaluate(p_alpha(1), [F(-1, 2)])
    with pytest.raises(ValueError):
        evaluate(p_alpha(1), [1], precision_bits=32)


def test_underflow_near_zero_is_a_rigorous_zero():
    v = evaluate(p_alpha(1), [F(1, 2 ** 70)])
    assert v.value == 0 and v.abs_error == 0


def test_negative_weight_near_zero_rejected():
    with pytest.raises(DomainError):
        evaluate(construct("exp_of_linear", 1, 1, mu=[-1]), [F(1, 2 ** 70)])


def test_strict_mode_at_an_exact_zero():
    p = constant(1, 1, 1) - mono(1, 0)  # 1 - x vanishes at x = 1
    v = evaluate(p, [1])
    assert v.value == 0
    p2 = ExpPoly(1, 1, [ExpTerm(F(1), 0, ((F(0), F(0)),), (F(1),)),
                        ExpTerm(F(-1), 0, ((F(0), F(0)),), (F(0),))])
    # e^{1-1/x} - 1 at x = 1 is zero; evaluated with cancellation
    with pytest.raises(PrecisionError):
        evaluate(p2, [1], strict=True)


def test_p_alpha_inverse_round_trip():
    for alpha in (F(1), F(2), F(1, 2)):
        for y in (F(1, 4), F(1, 2 ** 20)):
            d = p_alpha_inverse(y, alpha, 128)
            assert float(d) == pytest.approx(float((1 - mpmath.log(float(y))) ** (-1 / float(alpha))))
            back = p_alpha_mp(mpmath.mpf(str(d)), alpha)
            assert float(back) == pytest.approx(float(y), rel=1e-25)


def test_delta_example_quarter():
    assert float(p_alpha_inverse(F(1, 4), 1)) == pytest.approx(1 / (1 + math.log(4)), rel=1e-15)


# -- arithmetic ---------------------------------------------------------------

def test_mul_adds_exponents():
    assert mul(mono(0, -1), mono(1, 0)) == mono(1, -1)


def test_add_u1_and_inverse_power_gives_one():
    assert add(u_alpha(1), mono(0, -1)) == constant(1, 1, 1)


def test_square_of_p1_has_weight_two():
    sq = mul(p_alpha(1), p_alpha(1))
    assert len(sq) == 1 and sq.terms[0].weights == (2,)


def test_arith_dispatch_and_mismatch():
    p = p_alpha(1)
    assert arith(p, p, "add") == p.scale(2)
    assert arith(p, None, "scale", 3) == scale(p, 3)
    with pytest.raises(ValueError):
        p + p_alpha(2)
    with pytest.raises(ValueError):
        p * p_alpha(1, 2)
    with pytest.raises(ValueError):
        arith(p, p, "div")


def test_immutability():
    p = p_alpha(1)
    with pytest.raises(AttributeError):
        p.arity = 2


def test_parse_rational_rejects_decimals():
    assert parse_rational("3/4") == F(3, 4)
    assert parse_rational("-2") == -2
    for bad in ("0.5", "1e3", "", "1/0", "a/b", "2E1"):
        with pytest.raises(ValueError):
            parse_rational(bad)


def test_json_format_and_round_trip():
    p = p_alpha(F(3, 2)).diff(0, 3)
    js = p.to_json()
    assert js["alpha"] == "3/2" and js["arity"] == 1
    t0 = js["terms"][0]
    assert set(t0) == {"coeff", "epow", "pows", "weights"}
    assert all("/" in s for pair in t0["pows"] for s in pair)
    assert ExpPoly.from_json(js) == p


# -- properties ---------------------------------------------------------------

ALPHAS = st.sampled_from([F(1), F(3, 2), F(2), F(1, 2)])
SMALL_Q = st.builds(F, st.integers(-6, 6), st.integers(1, 4))


@st.composite
def exp_polys(draw, m=None, max_terms=6, alpha=None):
    m = m or draw(st.integers(1, 3))
    alpha = alpha or draw(ALPHAS)
    n = draw(st.integers(0, max_terms))
    terms = []
    for _ in range(n):
        coeff = draw(SMALL_Q.filter(bool))
        epow = draw(st.integers(0, 2))
        pows = tuple(AlphaExponent(draw(st.builds(F, st.integers(-4, 4), st.sampled_from([1, 2]))),
                                   F(draw(st.integers(-2, 1)))) for _ in range(m))
        weights = tuple(draw(st.sampled_from([F(-1), F(0), F(1, 2), F(1), F(2)])) for _ in range(m))
        terms.append(ExpTerm(coeff, epow, pows, weights))
    return ExpPoly(m, alpha, terms)


@st.composite
def poly_pairs(draw):
    m = draw(st.integers(1, 3))
    alpha = draw(ALPHAS)
    return draw(exp_polys(m=m, alpha=alpha)), draw(exp_polys(m=m, alpha=alpha))


@given(exp_polys(), st.data())
def test_mixed_partials_commute(p, data):
    i = data.draw(st.integers(0, p.arity - 1))
    j = data.draw(st.integers(0, p.arity - 1))
    assert differentiate(differentiate(p, i), j) == differentiate(differentiate(p, j), i)


@given(poly_pairs())
def test_canonicalization(pq):
    p, q = pq
    assert add(p, scale(q, 0)) == p
    assert add(p, q) == add(q, p)
    assert mul(p, q) == mul(q, p)
    assert ExpPoly(p.arity, p.alpha, reversed(p.terms)) == p


@given(poly_pairs(), st.data())
def test_differentiation_is_linear(pq, data):
    p, q = pq
    i = data.draw(st.integers(0, p.arity - 1))
    assert differentiate(add(p, q), i) == add(differentiate(p, i), differentiate(q, i))


@given(poly_pairs(), st.data())
def test_product_rule(pq, data):
    p, q = pq
    i = data.draw(st.integers(0, p.arity - 1))
    lhs = differentiate(p * q, i)
    assert lhs == differentiate(p, i) * q + p * differentiate(q, i)


@given(exp_polys())
def test_json_round_trip(p):
    assert ExpPoly.from_json(p.to_json()) == p


@given(exp_polys(max_terms=4), st.data())
def test_finite_difference_consistency(p, data):
    m = p.arity
    point = [data.draw(st.builds(F, st.integers(16, 48), st.just(64))) for _ in range(m)]
    i = data.draw(st.integers(0, m - 1))
    h = F(1, 2 ** 20)
    up = list(point)
    dn = list(point)
    up[i] += h
    dn[i] -= h
    fd = (evaluate(p, up, 256).value - evaluate(p, dn, 256).value) / (2 * h.numerator / h.denominator)
    d = differentiate(p, i)
    exact = evaluate(d, point, 256).value
    # scale for the near-cancellation case: sum of |term| of the derivative
    mag = sum(abs(evaluate(ExpPoly(m, p.alpha, [t]), point, 64).value) for t in d.terms)
    assume(mag > 0 or exact == 0)
    assert abs(fd - exact) <= 1e-8 * max(abs(exact), 1e-6 * mag)
