"""Truncated formal power series with exact q-power coefficients.

Includes the formal q-Borel and q-Laplace transforms of order ``mu`` and the
ascending-degree recurrence that produces a formal solution of ``P(h) = a``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Number
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .errors import NoPowerSeriesSolution, Resonance
from .scalars import QExpScalar, QValue, as_fraction

if TYPE_CHECKING:
    from .operators import QDiffOperator

DEFAULT_ORDER = 64
RESONANCE_TOL = 1e-10


def _as_scalar(c) -> QExpScalar:
    if isinstance(c, QExpScalar):
        return c
    return QExpScalar.const(c)


class FormalSeries:
    """``sum_{l=0}^{N} a_l z**l`` with :class:`QExpScalar` coefficients.

    Every coefficient up to the truncation order ``N`` is stored explicitly;
    nothing is known about degrees above ``N``.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        coeffs = tuple(_as_scalar(c) for c in coeffs)
        if not coeffs:
            raise ValueError("a FormalSeries needs at least the degree-0 coefficient")
        self.coeffs = coeffs

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @classmethod
    def zeros(cls, order: int) -> FormalSeries:
        return cls([QExpScalar.zero()] * (order + 1))

    @classmethod
    def monomial(cls, degree: int, order: int, coeff=1.0) -> FormalSeries:
        c = [QExpScalar.zero()] * (order + 1)
        if degree <= order:
            c[degree] = _as_scalar(coeff)
        return cls(c)

    @classmethod
    def from_poly(cls, coeffs, order: int) -> FormalSeries:
        """Pad (or cut) a polynomial's coefficient list to ``order``."""
        coeffs = [_as_scalar(c) for c in coeffs][: order + 1]
        coeffs += [QExpScalar.zero()] * (order + 1 - len(coeffs))
        return cls(coeffs)

    def __getitem__(self, degree):
        return self.coeffs[degree]

    def __len__(self):
        return len(self.coeffs)

    def __iter__(self):
        return iter(self.coeffs)

    def __eq__(self, other):
        if not isinstance(other, FormalSeries):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __repr__(self):
        return f"FormalSeries(order={self.order}, coeffs={list(self.coeffs)[:4]}...)"

    def truncate(self, order: int) -> FormalSeries:
        if order > self.order:
            raise ValueError("cannot extend a truncated series")
        return FormalSeries(self.coeffs[: order + 1])

    def __add__(self, other):
        if not isinstance(other, FormalSeries):
            return NotImplemented
        n = min(self.order, other.order)
        return FormalSeries([a + b for a, b in zip(self.coeffs[: n + 1], other.coeffs)])

    def __sub__(self, other):
        if not isinstance(other, FormalSeries):
            return NotImplemented
        return self + (-other)

    def __neg__(self):
        return FormalSeries([-c for c in self.coeffs])

    def __mul__(self, other):
        if isinstance(other, (Number, QExpScalar)):
            return FormalSeries([c * other for c in self.coeffs])
        if not isinstance(other, FormalSeries):
            return NotImplemented
        n = min(self.order, other.order)
        out = []
        for d in range(n + 1):
            acc = QExpScalar.zero()
            for i in range(d + 1):
                a, b = self.coeffs[i], other.coeffs[d - i]
                if a.terms and b.terms:
                    acc = acc + a * b
            out.append(acc)
        return FormalSeries(out)

    __rmul__ = __mul__

    def bind(self, qv: QValue) -> np.ndarray:
        return np.array([c.bind(qv) for c in self.coeffs], dtype=complex)

    def evaluate(self, qv: QValue, x) -> complex:
        """Horner evaluation of the truncated series at a numeric point."""
        acc = 0j
        for c in reversed(self.bind(qv)):
            acc = acc * x + c
        return acc

    def to_json(self):
        return {"order": self.order, "coeffs": [c.to_json() for c in self.coeffs]}

    @classmethod
    def from_json(cls, data) -> FormalSeries:
        coeffs = [QExpScalar.from_json(c) for c in data["coeffs"]]
        if len(coeffs) != data["order"] + 1:
            raise ValueError("order does not match the number of coefficients")
        return cls(coeffs)


def borel_weight(degree: int, mu) -> Fraction:
    """Exponent ``degree*(degree-1)/(2*mu)`` of the order-``mu`` q-Borel weight."""
    return Fraction(degree * (degree - 1), 2) / as_fraction(mu)


def q_borel(s: FormalSeries, mu) -> FormalSeries:
    """Formal q-Borel transform of order ``mu``: ``a_l -> a_l q**(-l(l-1)/(2 mu))``."""
    mu = as_fraction(mu)
    if mu <= 0:
        raise ValueError("the Borel order must be positive")
    return FormalSeries([c.shift(-borel_weight(l, mu)) for l, c in enumerate(s.coeffs)])


def formal_q_laplace(s: FormalSeries, mu) -> FormalSeries:
    """Formal q-Laplace transform of order ``mu``, the exact inverse of :func:`q_borel`."""
    mu = as_fraction(mu)
    if mu <= 0:
        raise ValueError("the Laplace order must be positive")
    return FormalSeries([c.shift(borel_weight(l, mu)) for l, c in enumerate(s.coeffs)])


def solve_formal(
    P: QDiffOperator,
    a,
    N: int = DEFAULT_ORDER,
    qv: QValue | None = None,
    initial: Mapping[int, QExpScalar] | None = None,
) -> FormalSeries:
    """Formal power series solution ``h`` of ``P(h) = a`` up to degree ``N``.

    ``a`` is the polynomial right-hand side (coefficient sequence or
    :class:`FormalSeries`; degrees it does not list are zero).  Coefficients are
    determined one degree at a time.  When the leading multiplier
    ``sum_i b_{i,v} q**(i m)`` is a single q-power the division is exact; otherwise
    ``q`` is bound numerically and the coefficient is stored as a constant.

    Raises
    ------
    NoPowerSeriesSolution
        if a low-degree constraint cannot be met.
    Resonance
        if the multiplier vanishes at some degree not covered by ``initial``.
    """
    initial = dict(initial or {})
    rhs = list(a.coeffs if isinstance(a, FormalSeries) else (_as_scalar(c) for c in a))

    def rhs_at(d):
        return rhs[d] if d < len(rhs) else QExpScalar.zero()

    # (shift, z-degree, coefficient) triples of P
    triples = [
        (shift, j, c)
        for shift, poly in P.terms.items()
        for j, c in enumerate(poly)
        if not c.is_zero()
    ]
    v = min(j for _, j, _ in triples)
    for d in range(v):
        if not rhs_at(d).is_zero():
            raise NoPowerSeriesSolution(f"P has valuation {v} but a has a degree-{d} term")
    lead = [(shift, c) for shift, j, c in triples if j == v]
    tail = [(shift, j, c) for shift, j, c in triples if j > v]

    h = []
    for m in range(N + 1):
        d = m + v
        num = rhs_at(d)
        for shift, j, c in tail:
            k = d - j
            if k < 0:
                continue
            hk = h[k]
            if hk.is_zero():
                continue
            num = num - hk * c.shift(shift * k)
        mult = QExpScalar.zero()
        for shift, c in lead:
            mult = mult + c.shift(shift * m)
        if _is_resonant(mult, qv):
            if m in initial:
                if qv is not None and abs(num.bind(qv)) > 1e-8 * (1 + _scale(num, qv)):
                    raise NoPowerSeriesSolution(f"inconsistent equation at resonant degree {m}")
                h.append(_as_scalar(initial[m]))
                continue
            raise Resonance(m, mult)
        if mult.is_monomial():
            (e, c), = mult.terms
            h.append(num.mul_monomial(1.0 / c, -e))
        else:
            if qv is None:
                raise ValueError("a numeric q is needed to divide by a non-monomial multiplier")
            h.append(QExpScalar.const(num.bind(qv) / mult.bind(qv)))
    return FormalSeries(h)


def _scale(x: QExpScalar, qv: QValue) -> float:
    return sum(abs(c) * math.exp(float(e) * qv.abs_log) for e, c in x.terms)


def _is_resonant(mult: QExpScalar, qv: QValue | None) -> bool:
    if mult.is_zero():
        return True
    if qv is None or mult.is_monomial():
        return False
    return abs(mult.bind(qv)) < RESONANCE_TOL * _scale(mult, qv)


def radius_estimate(s: FormalSeries, qv: QValue) -> float:
    """Root-test estimate of the convergence radius.

    Returns ``inf`` for an all-zero tail or super-geometric decay, and ``0.0``
    when ``|a_l|**(1/l)`` keeps growing over the available coefficients
    (the series looks divergent).
    """
    N = s.order
    logs = [(l, c.log_abs(qv)) for l, c in enumerate(s.coeffs) if l >= 1]
    nonzero = [(l, x) for l, x in logs if x > -math.inf]
    tail_start = max(1, N // 2)
    tail = [(l, x / l) for l, x in nonzero if l >= tail_start]
    if not tail:
        return math.inf
    if len(nonzero) < 8:
        raise ValueError("radius_estimate needs at least 8 nonzero coefficients")
    ls = np.array([t[0] for t in tail], dtype=float)
    rs = np.array([t[1] for t in tail])
    if len(ls) >= 2:
        slope = np.polyfit(ls, rs, 1)[0]
        spread = slope * (ls[-1] - ls[0])
        if slope > 0 and spread > 0.5:
            return 0.0
        if slope < 0 and spread < -0.5:
            return math.inf
    quarter = rs[len(rs) // 2:]
    return float(math.exp(-quarter.max()))


def seed_radius(s: FormalSeries, qv: QValue, tol: float = 1e-16) -> float:
    """Radius inside which the truncated series is trusted as a germ.

    Half the estimated convergence radius, further limited so the last
    retained coefficients contribute below ``tol`` relative to the leading ones.
    """
    R = radius_estimate(s, qv)
    if R == 0.0:
        return 0.0
    coeffs = np.abs(s.bind(qv))
    scale = max(1.0, float(coeffs[: min(3, len(coeffs))].max()))
    r_tail = math.inf
    for l in range(max(1, s.order - 3), s.order + 1):
        if coeffs[l] > 0:
            r_tail = min(r_tail, (tol * scale / coeffs[l]) ** (1.0 / l))
    return min(0.5 * R, r_tail)


def series_from_values(values: Sequence[complex]) -> FormalSeries:
    return FormalSeries([QExpScalar.const(v) for v in values])
