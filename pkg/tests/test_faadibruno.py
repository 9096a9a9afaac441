import math
import threading
from collections import Counter
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mildkit import faadibruno as fdb
from mildkit.ratcalc import constant, construct, derivative, p_alpha, u_alpha

from _reference import bell_numbers, brute_force_k_vectors, brute_force_ps, partition_count


# -- univariate form ----------------------------------------------------------

def test_partitions_of_four():
    terms = fdb.partitions_univariate(4)
    assert len(terms) == 5
    by_k = {t.k: t.coeff for t in terms}
    assert by_k[(2, 1, 0, 0)] == 6
    assert sum(by_k.values()) == 15


@pytest.mark.parametrize("n", range(1, 16))
def test_coefficient_sum_is_bell_number(n):
    assert sum(t.coeff for t in fdb.partitions_univariate(n)) == bell_numbers(15)[n]


@pytest.mark.parametrize("n", range(1, 11))
def test_partitions_match_brute_force(n):
    got = {t.k for t in fdb.partitions_univariate(n)}
    assert got == set(brute_force_k_vectors(n))
    for t in fdb.partitions_univariate(n):
        assert t.k_total == sum(t.k)
        assert sum(i * v for i, v in enumerate(t.k, start=1)) == n


def test_partition_count_forty():
    assert len(fdb.partitions_univariate(40)) == partition_count(40) == 37338


def test_partitions_rejects_zero():
    with pytest.raises(ValueError):
        fdb.partitions_univariate(0)


@pytest.mark.parametrize("n,k,want", [(3, (1, 1, 0), 3), (3, (3, 0, 0), 1), (5, (1, 2, 0, 0, 0), 15)])
def test_coefficient_of_partition(n, k, want):
    assert fdb.coefficient_of_partition(n, k) == want


def test_coefficient_of_partition_validates():
    with pytest.raises(ValueError):
        fdb.coefficient_of_partition(3, (1, 0, 0))
    with pytest.raises(ValueError):
        fdb.coefficient_of_partition(2, (0, 0, 1))


# -- multivariate index sets --------------------------------------------------

def test_order_and_precedes():
    assert fdb.order((2, 1, 3)) == 6
    assert fdb.precedes((0, 1), (1, 0))
    assert fdb.precedes((2, 0), (0, 3))
    assert not fdb.precedes((1, 0), (1, 0))
    assert not fdb.precedes((0, 2), (1, 0))


def test_ps_univariate_order_four_lambda_two():
    # the two-block partitions of 4: {1,3} (4 ways) and {2,2} (3 ways)
    got = {(t.ls, t.ks, t.coeff) for t in fdb.enumerate_ps((4,), (2,))}
    assert got == {(((1,), (3,)), ((1,), (1,)), F(4)), (((2,),), ((2,),), F(3))}
    # the (2, 1) multiplicity tuple with coefficient 6 is the lambda = 3 term
    three = {(t.ls, t.ks, t.coeff) for t in fdb.enumerate_ps((4,), (3,))}
    assert three == {(((1,), (2,)), ((2,), (1,)), F(6))}


def test_ps_mixed_first_order():
    (t,) = fdb.enumerate_ps((1, 1), (1,))
    assert (t.s, t.ls, t.ks, t.coeff) == (1, ((1, 1),), ((1,),), 1)
    (t,) = fdb.enumerate_ps((1, 1), (2,))
    assert (t.s, t.ls, t.ks, t.coeff) == (2, ((0, 1), (1, 0)), ((1,), (1,)), 1)


@pytest.mark.parametrize("lam", [(0,), (5,), (0, 0)])
def test_ps_empty_cases(lam):
    nu = (2, 2) if len(lam) == 2 else (4,)
    assert fdb.enumerate_ps(nu, lam) == ()


def test_ps_json():
    (t,) = fdb.enumerate_ps((1, 1), (1,))
    assert t.to_json() == {"s": 1, "ks": [[1]], "ls": [[1, 1]], "coeff": "1/1"}


@pytest.mark.parametrize("nu,lam", [((3,), (2,)), ((2, 1), (2,)), ((2, 2), (1, 1)), ((1, 1, 1), (2, 1)),
                                    ((2, 1), (1, 2)), ((4,), (1, 1)), ((1, 2, 1), (3,))])
def test_ps_matches_brute_force(nu, lam):
    got = {(t.ks, t.ls, t.coeff) for t in fdb.enumerate_ps(nu, lam)}
    assert got == brute_force_ps(nu, lam)


@st.composite
def nu_lam(draw):
    e = draw(st.integers(1, 3))
    d = draw(st.integers(1, 2))
    nu = tuple(draw(st.lists(st.integers(0, 4), min_size=e, max_size=e)).copy())
    n = sum(nu)
    if n == 0 or n > 8:
        nu = (1,) * e
        n = e
    total = draw(st.integers(1, n))
    first = draw(st.integers(0, total)) if d == 2 else total
    lam = (first, total - first) if d == 2 else (total,)
    return nu, lam


@given(nu_lam())
def test_ps_invariants(case):
    nu, lam = case
    tuples = fdb.enumerate_ps(nu, lam)
    seen = set()
    for t in tuples:
        assert tuple(map(sum, zip(*t.ks))) == lam
        acc = [0] * len(nu)
        for k, l in zip(t.ks, t.ls):
            assert sum(k) > 0
            for c in range(len(nu)):
                acc[c] += sum(k) * l[c]
        assert tuple(acc) == nu
        assert all(fdb.precedes(a, b) for a, b in zip(t.ls, t.ls[1:]))
        assert t.coeff > 0
        key = (t.ks, t.ls)
        assert key not in seen
        seen.add(key)


@pytest.mark.parametrize("n", range(1, 11))
def test_specialization_to_univariate(n):
    uni = Counter()
    for t in fdb.partitions_univariate(n):
        uni[(t.k_total, F(t.coeff))] += 1
    multi = Counter()
    for lam in range(1, n + 1):
        for t in fdb.enumerate_ps((n,), (lam,)):
            multi[(lam, t.coeff)] += 1
    assert uni == multi


def test_cache_is_shared_and_thread_safe():
    fdb.clear_cache()
    results = []

    def work():
        results.append(fdb.enumerate_ps((3, 3), (2,)))

    threads = [threading.Thread(target=work) for _ in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert all(r is results[0] for r in results)


# -- derivatives of compositions ----------------------------------------------

def test_identity_composition():
    def f(lam, y):
        return y[0] if lam == (0,) else (1 if lam == (1,) else 0)

    def g(l, x):
        return (x[0] if l == (0,) else (1 if l == (1,) else 0),)

    assert fdb.compose_derivative(f, g, (1,), point=(F(1, 3),)) == 1
    assert fdb.compose_derivative(f, g, (2,), point=(F(1, 3),)) == 0
    assert fdb.compose_derivative(f, g, (0,), point=(F(1, 3),)) == F(1, 3)


@pytest.mark.parametrize("alpha", [F(1), F(3, 2), F(2)])
@pytest.mark.parametrize("n", [1, 2, 4, 7])
def test_exp_of_u_alpha_symbolic(alpha, n):
    P = p_alpha(alpha)
    u = u_alpha(alpha)
    got = fdb.compose_derivative(lambda lam: P, lambda l: (derivative(u, l),), (n,))
    assert got == P.diff(0, n)


def test_bivariate_composition_symbolic():
    # exp(mu1 u(x) + mu2 u(y)) via f = exp on R^1 and g = mu . u
    alpha = F(1)
    mu = (F(1), F(2))
    E = construct("exp_of_linear", 2, alpha, mu=list(mu))
    g0 = u_alpha(alpha, 2, 0).scale(mu[0]) + u_alpha(alpha, 2, 1).scale(mu[1])
    for nu in [(1, 1), (2, 1), (0, 3)]:
        got = fdb.compose_derivative(lambda lam: E, lambda l: (derivative(g0, l),), nu)
        assert got == derivative(E, nu)


def test_two_component_inner_map():
    # f(y1, y2) = y1 * y2 with g = (P(x), P(x)) gives P^2
    alpha = F(1)
    P = p_alpha(alpha)

    def f(lam):
        table = {(0, 0): P * P, (1, 0): P, (0, 1): P, (1, 1): constant(1, 1, alpha)}
        return table.get(lam, constant(0, 1, alpha))

    for n in (1, 2, 3):
        got = fdb.compose_derivative(f, lambda l: (P.diff(0, l[0]), P.diff(0, l[0])), (n,), d=2)
        assert got == (P * P).diff(0, n)


def test_inner_map_arity_mismatch():
    with pytest.raises(ValueError):
        fdb.compose_derivative(lambda lam, y: 1, lambda l, x: (1, 2), (1,), point=(0,))


def test_generating_function_example():
    def psi(lam, y):
        return math.factorial(lam[0])

    def phi(l, x):
        return (math.factorial(l[0]),)

    assert fdb.compose_derivative(psi, phi, (3,), point=(F(0),)) == 24


def test_compose_univariate_matches():
    f = [F(math.factorial(k)) for k in range(8)]
    g = [F(1)] + [F(math.factorial(i)) for i in range(1, 8)]
    for n in range(1, 8):
        a = fdb.compose_univariate(f, g, n)
        b = fdb.compose_derivative(lambda lam, y: f[lam[0]], lambda l, x: (g[l[0]],), (n,), point=(0,))
        assert a == b


def test_enumeration_speed():
    import time

    fdb.clear_cache()
    t0 = time.perf_counter()
    total = sum(len(fdb.enumerate_ps((6, 6), lam)) for lam in fdb.all_lambdas(1, 12))
    assert time.perf_counter() - t0 < 1.0
    assert total > 0
