import cmath
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from qborel.errors import BadDirection, InsufficientPoints, NearPole, NotCertified
from qborel.laplace import (
    BorelLaplaceSum,
    LaplaceTransform,
    ShiftedSpiral,
    SpiralFunction,
    TimesZeta,
    asymptotic_check,
    asymptotic_points,
    borel_sum_pipeline,
    continue_along_spiral,
    h_membership,
    pole_scan,
    q_laplace_eval,
    residual_check,
)
from qborel.operators import borel_conjugate, parse_operator, spiral_distance, summation_plan
from qborel.scalars import QExpScalar, QValue, qpow
from qborel.series import FormalSeries, q_borel, solve_formal
from qborel.theta import log_abs_theta_real, theta_eval

EULER = "z*s + 1"
TWO_LEVEL = "q^2*z^3*s^2 - z^2*s - z*s + 1"
LEVELS = [(1, 1), (Fraction(3, 2), 3), (3, 3), (2, 2)]


def euler_germ(qv, lam=1.0, K=1):
    """Borel side of the q-Euler solution: ``zeta / (1 + zeta)`` from its series."""
    seed = FormalSeries([0] + [(-1) ** l for l in range(40)])
    return SpiralFunction.from_series(seed, qv, lam, K, parse_operator("z + 1"), [0, 1])


def off_spiral(qv, lam, K, count, seed, lo=0.05, hi=5.0, eps=0.05):
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        z = math.exp(rng.uniform(math.log(lo), math.log(hi))) * cmath.exp(1j * rng.uniform(-math.pi, math.pi))
        if spiral_distance(z, -lam, qv, K) > eps:
            out.append(z)
    return out


def random_direction(rng):
    return cmath.exp(complex(rng.uniform(-0.5, 0.5), rng.uniform(-math.pi, math.pi)))


# continuation --------------------------------------------------------------------


def test_continuation_reproduces_closed_form(qv2):
    sf = continue_along_spiral(euler_germ(qv2), 40)
    for l in range(-10, 41):
        x = sf.point(l)
        assert abs(sf.value(l) - x / (1 + x)) <= 1e-10 * abs(x / (1 + x))


def test_continuation_on_fractional_lattice(qv):
    lam = cmath.exp(0.4j)
    sf = euler_germ(qv, lam, K=3)
    for l in range(-6, 30, 5):
        x = sf.point(l)
        assert abs(sf.value(l) - x / (1 + x)) <= 1e-10 * abs(x / (1 + x))


def test_continuation_rejects_forbidden_direction(qv2):
    sf = euler_germ(qv2, lam=-1.0)
    with pytest.raises(BadDirection):
        continue_along_spiral(sf, 10)


def test_polynomial_germ_matches_direct_evaluation(qv):
    sf = SpiralFunction.from_function(lambda x: 1 + 2 * x - x**3, qv, 0.7j, 2)
    for l in range(-5, 6):
        x = sf.point(l)
        assert sf.value(l) == 1 + 2 * x - x**3


def test_cached_values_agree_with_seed(qv2):
    sf = euler_germ(qv2)
    for l in range(-8, -1):
        x = sf.point(l)
        direct = sum((-1) ** k * x ** (k + 1) for k in range(200))
        assert abs(sf.value(l) - direct) <= 1e-9 * abs(direct)


# growth certificates -----------------------------------------------------------------


def _bound_holds(sf, cert, lo, hi):
    base = sf.qv.abs_log / float(cert.mu)
    for l in range(lo, hi + 1):
        x = abs(sf.point(l))
        bound = math.log(cert.L) + log_abs_theta_real(base, cert.M * x)
        if math.log(abs(sf.value(l))) > bound + 1e-9:
            return False
    return True


def test_bounded_function_is_certified(qv2):
    sf = euler_germ(qv2)
    cert = h_membership(sf, 1)
    assert cert.ok
    assert _bound_holds(sf, cert, 0, 20)


def test_constant_is_certified(qv2):
    sf = SpiralFunction.constant(1, qv2, 1, 1)
    cert = h_membership(sf, 1)
    assert cert.ok and cert.L <= 1
    assert _bound_holds(sf, cert, 0, 20)


@pytest.mark.parametrize("lam", [1, cmath.exp(0.7j), 0.5 + 0.3j, -0.4 + 1j, 1.7j])
def test_two_level_series_fails_single_level_growth(qv2, lam):
    P = parse_operator(TWO_LEVEL)
    g = q_borel(solve_formal(P, [1, 1], 64, qv2), 1)
    rhs = q_borel(FormalSeries.from_poly([1, 1], 64), 1)
    sf = SpiralFunction.from_series(g, qv2, lam, 1, borel_conjugate(P, 1), rhs)
    assert not h_membership(sf, 1).ok
    with pytest.raises(NotCertified):
        q_laplace_eval(sf, 1, 0.3 + 0.1j, certify=True)


# Laplace transform ---------------------------------------------------------------------


@pytest.mark.parametrize("mu,K", LEVELS)
def test_laplace_of_one(qv, mu, K):
    rng = random.Random(11)
    for _ in range(20):
        lam = random_direction(rng)
        (z,) = off_spiral(qv, lam, K, 1, rng.random())
        sf = SpiralFunction.constant(1, qv, lam, K)
        assert abs(q_laplace_eval(sf, mu, z) - 1) <= 1e-10


def test_dropping_prefactor_breaks_laplace_of_one(qv2):
    sf = SpiralFunction.constant(1, qv2, 1, 3)
    v = q_laplace_eval(sf, Fraction(3, 2), 0.4 + 0.3j, prefactor=False)
    assert abs(v - 2) <= 1e-10


@pytest.mark.parametrize("mu,K", LEVELS)
def test_laplace_inverts_borel_on_monomials(qv, mu, K):
    lam = cmath.exp(0.3j)
    z = 0.6 + 0.5j
    for l in range(9):
        c = qv.power(-Fraction(l * (l - 1), 2) / mu)
        sf = SpiralFunction.from_function(lambda x, c=c, l=l: c * x**l, qv, lam, K)
        v = q_laplace_eval(sf, mu, z)
        assert abs(v - z**l) <= 1e-10 * abs(z**l)


def test_near_pole_raises(qv2):
    sf = SpiralFunction.constant(1, qv2, 1, 1)
    with pytest.raises(NearPole):
        q_laplace_eval(sf, 1, -2.0 * (1 + 1e-12))


def test_lattice_mismatch_rejected(qv2):
    with pytest.raises(ValueError):
        q_laplace_eval(SpiralFunction.constant(1, qv2, 1, 2), 1, 0.5, K=3)
    with pytest.raises(ValueError):
        LaplaceTransform(SpiralFunction.constant(1, qv2, 1, 1), Fraction(3, 2))


def test_euler_sum_plus_intro_display_is_one(qv2):
    # E sums zeta/(1+zeta), T sums 1/(1+zeta); termwise they add to the constant 1
    E = euler_germ(qv2).transform(1)
    T = SpiralFunction.from_function(lambda x: 1 / (1 + x), qv2, 1, 1).transform(1)
    for z in off_spiral(qv2, 1, 1, 20, 12):
        assert abs(E(z) + T(z) - 1) <= 1e-9


def test_intro_display_solves_unit_rhs(qv2):
    T = SpiralFunction.from_function(lambda x: 1 / (1 + x), qv2, 1, 1).transform(1)
    for z in off_spiral(qv2, 1, 1, 10, 13, hi=1.0):
        assert abs(z * T(2 * z) + T(z) - 1) <= 1e-9


def test_dilation_rule(qv):
    sf = euler_germ(qv, cmath.exp(0.5j), K=2)
    L = sf.transform(1)
    Ls = ShiftedSpiral(sf, 1).transform(1)
    step = qv.power(Fraction(1, 2))
    for z in off_spiral(qv, cmath.exp(0.5j), 2, 20, 14, hi=2.0, eps=0.1):
        assert abs(Ls(z) - L(step * z)) <= 1e-8 * abs(L(step * z))


def test_zeta_multiplication_rule(qv):
    lam = cmath.exp(0.5j)
    sf = euler_germ(qv, lam, K=3)
    mu = Fraction(3, 2)
    L = sf.transform(mu)
    Lz = TimesZeta(sf).transform(mu)
    step = qv.power(1 / mu)
    for z in off_spiral(qv, lam, 3, 20, 15, hi=2.0, eps=0.1):
        ref = z * L(step * z)
        assert abs(Lz(z) - ref) <= 1e-8 * abs(ref)


# pipeline ---------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def euler_sum():
    qv = QValue.from_q(2.0)
    P = parse_operator(EULER)
    return BorelLaplaceSum(P, [0, 1], summation_plan(P, qv), 1.0)


def test_euler_pipeline_residual(euler_sum):
    qv = euler_sum.qv
    pts = off_spiral(qv, 1, 1, 20, 16, lo=0.05, hi=1.0)
    assert residual_check(euler_sum.P, euler_sum, [0, 1], pts, qv) <= 1e-8


def test_euler_pipeline_is_laplace_of_germ(euler_sum):
    E = euler_germ(euler_sum.qv).transform(1)
    for z in off_spiral(euler_sum.qv, 1, 1, 5, 17):
        assert abs(euler_sum(z) - E(z)) <= 1e-10 * abs(E(z))


def test_pipeline_function_matches_class(qv2):
    P = parse_operator(EULER)
    pts = [0.3 + 0.1j, 0.7j]
    out = borel_sum_pipeline(P, [0, 1], summation_plan(P, qv2), 1.0, pts)
    s = BorelLaplaceSum(P, [0, 1], summation_plan(P, qv2), 1.0)
    assert np.allclose(out, [s(z) for z in pts], rtol=0, atol=0)


def test_pipeline_rejects_forbidden_direction(qv2):
    P = parse_operator(EULER)
    with pytest.raises(BadDirection):
        BorelLaplaceSum(P, [0, 1], summation_plan(P, qv2), -4.0)


def test_two_level_pipeline_residual(qv2):
    P = parse_operator(TWO_LEVEL)
    plan = summation_plan(P, qv2)
    lam = cmath.exp(0.7j)
    S = BorelLaplaceSum(P, [1, 1], plan, lam)
    pts = off_spiral(qv2, lam, 2, 10, 18, lo=0.05, hi=1.0, eps=0.1)
    scale = max(1.0, max(abs(S(z)) for z in pts))
    assert residual_check(P, S, [1, 1], pts, qv2) <= 1e-6 * scale


def convergent_problem():
    # z(1-z)(1-qz) sigma + (1-z)(1-qz), solved by 1/(1-z)
    P = parse_operator("z*s - z^2*s - q*z^2*s + q*z^3*s + 1 - z - q*z + q*z^2")
    a = [QExpScalar.one(), QExpScalar.one() - qpow(1), QExpScalar.const(-1)]
    return P, a


def test_convergent_input_returns_the_function(qv):
    P, a = convergent_problem()
    plan = summation_plan(P, qv)
    lam = cmath.exp(0.4j)
    S = BorelLaplaceSum(P, a, plan, lam)
    for z in off_spiral(qv, lam, plan.n, 10, 19, lo=0.05, hi=0.9, eps=0.1):
        assert abs(S(z) - 1 / (1 - z)) <= 1e-9 * abs(1 / (1 - z))


def test_convergent_input_is_direction_free(qv2):
    P, a = convergent_problem()
    plan = summation_plan(P, qv2)
    S1 = BorelLaplaceSum(P, a, plan, cmath.exp(0.4j))
    S2 = BorelLaplaceSum(P, a, plan, cmath.exp(2.1j))
    for z in [0.2 + 0.1j, -0.3j, 0.5]:
        assert abs(S1(z) - S2(z)) <= 1e-8


@pytest.mark.parametrize("name", ["z", "1+z"])
def test_multiplying_by_polynomial_commutes_with_sum(qv2, name):
    # f*h solves the operator obtained by substituting h = (f*h)/f
    lam = cmath.exp(0.7j)
    base = BorelLaplaceSum(parse_operator(EULER), [0, 1], summation_plan(parse_operator(EULER), qv2), lam)
    if name == "z":
        P = parse_operator("z^2*s + q*z")
        a = [0, 0, 0, qpow(1)]
        f = lambda z: z
    else:
        P = parse_operator("z*s + z^2*s + 1 + q*z")
        a = [0, 1, qpow(1) + QExpScalar.one(), qpow(1)]
        f = lambda z: 1 + z
    plan = summation_plan(P, qv2)
    S = BorelLaplaceSum(P, a, plan, lam)
    for z in off_spiral(qv2, lam, plan.n, 8, 20, lo=0.05, hi=1.0, eps=0.1):
        ref = f(z) * base(z)
        assert abs(S(z) - ref) <= 1e-7 * abs(ref)


def test_linearity(qv2):
    P = parse_operator(TWO_LEVEL)
    plan = summation_plan(P, qv2)
    lam = cmath.exp(0.7j)
    alpha = 0.5 - 2j
    a1, a2 = [1, 1], [0, 0, 1]
    S1 = BorelLaplaceSum(P, a1, plan, lam)
    S2 = BorelLaplaceSum(P, a2, plan, lam)
    S3 = BorelLaplaceSum(P, [alpha * 1 + 0, alpha * 1 + 0, 1], plan, lam)
    for z in off_spiral(qv2, lam, 2, 5, 21, lo=0.05, hi=0.8, eps=0.1):
        ref = alpha * S1(z) + S2(z)
        assert abs(S3(z) - ref) <= 1e-8 * max(1, abs(ref))


# diagnostics ---------------------------------------------------------------------------------


def test_euler_asymptotic_report(euler_sum):
    qv = euler_sum.qv
    pts = asymptotic_points(qv, 1, 1)
    samples = [(z, euler_sum(z)) for z in pts]
    rep = asymptotic_check(samples, euler_sum.h, 1, 1, 1, qv)
    assert rep.ok and math.isfinite(rep.L) and math.isfinite(rep.M)
    k0, b0 = rep.per_k[0]
    assert k0 == 0 and b0 == pytest.approx(max(abs(v) for _, v in samples))


def test_asymptotic_convergent_case(qv2):
    # 1/(1-z) against its own series: the remainder after k terms is z^k/(1-z)
    h = FormalSeries([1] * 30)
    pts = asymptotic_points(qv2, 1, 1, R=0.2)
    rep = asymptotic_check([(z, 1 / (1 - z)) for z in pts], h, 1, 1, 1, qv2)
    for k, b in rep.per_k:
        expected = max(1 / abs(1 - z) for z in pts) / 2 ** (k * (k - 1) / 2)
        assert b == pytest.approx(expected, rel=1e-9)


def test_asymptotic_needs_points(qv2):
    with pytest.raises(InsufficientPoints):
        asymptotic_check([(0.1, 1.0)] * 5, FormalSeries([1, 1]), 1, 1, 1, qv2)


def test_pole_scan_finds_simple_poles_on_spiral(euler_sum):
    scan = pole_scan(euler_sum, 1, 1, euler_sum.qv, annulus=(0.2, 5.0), grid=(40, 48))
    assert len(scan.matched) >= 3
    assert not scan.unmatched
    for hit in scan.matched:
        assert hit.distance <= 1e-3
        assert abs(hit.order - 1) <= 0.1


def test_pole_scan_constant_has_no_spikes(qv2):
    scan = pole_scan(lambda z: 1.0, 1, 1, qv2, grid=(20, 24))
    assert not scan.matched and not scan.unmatched
