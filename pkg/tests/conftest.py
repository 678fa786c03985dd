import cmath
import math
import sys
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from qborel.operators import QDiffOperator
from qborel.scalars import QExpScalar, QValue
from qborel.series import FormalSeries

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

Q_REAL = 2.0
Q_ROTATED = 1.5 * cmath.exp(1j * math.pi / 7)


@pytest.fixture(params=[Q_REAL, Q_ROTATED], ids=["q=2", "q=rotated"])
def qv(request):
    return QValue.from_q(request.param)


@pytest.fixture
def qv2():
    return QValue.from_q(Q_REAL)


small_ints = st.integers(min_value=-4, max_value=4)

exponents = st.builds(
    Fraction, st.integers(min_value=-24, max_value=24), st.integers(min_value=1, max_value=12)
)

coeffs = st.builds(
    complex,
    st.integers(min_value=-5, max_value=5).map(float),
    st.integers(min_value=-5, max_value=5).map(float),
)

scalars = st.lists(st.tuples(coeffs, exponents), max_size=4).map(
    lambda ts: sum((QExpScalar.monomial(c, e) for c, e in ts), QExpScalar.zero())
)


def series_of(order: int):
    return st.lists(scalars, min_size=order + 1, max_size=order + 1).map(FormalSeries)


@st.composite
def operators(draw, denominator: int = 3, max_shift: int = 6, max_degree: int = 3):
    """Random nonzero operators with integer coefficients and shifts in (1/denominator)Z."""
    n_terms = draw(st.integers(min_value=1, max_value=4))
    triples = []
    for _ in range(n_terms):
        shift = Fraction(draw(st.integers(min_value=0, max_value=max_shift)), denominator)
        j = draw(st.integers(min_value=0, max_value=max_degree))
        c = draw(st.integers(min_value=1, max_value=4)) * draw(st.sampled_from([1, -1]))
        triples.append((shift, j, QExpScalar.const(c)))
    try:
        return QDiffOperator.from_triples(triples)
    except ValueError:
        return QDiffOperator.from_triples([(0, 0, QExpScalar.one())])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
