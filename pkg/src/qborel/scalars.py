"""Exact finite sums of rational powers of q, bound late to a numeric q.

A :class:`QExpScalar` is ``sum_k c_k q**e_k`` with complex ``c_k`` and rational
``e_k``.  All q-power bookkeeping (Borel weights, dilation factors, theta
reduction factors) happens here exactly; a :class:`QValue` turns the result
into a number through one fixed branch of ``log q``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Number, Rational

from .errors import TermCountError

MAX_TERMS = 10_000
_INT64 = 2**63


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        f = x
    elif isinstance(x, (int, Rational)):
        f = Fraction(x)
    elif isinstance(x, str):
        f = Fraction(x)
    elif isinstance(x, float):
        f = Fraction(x).limit_denominator(10**6)
        if abs(float(f) - x) > 1e-12 * max(1.0, abs(x)):
            raise ValueError(f"{x!r} is not a small-denominator rational")
    else:
        raise TypeError(f"cannot interpret {x!r} as a rational exponent")
    if abs(f.numerator) >= _INT64 or f.denominator >= _INT64:
        raise OverflowError(f"rational {f} exceeds 64-bit numerator/denominator")
    return f


class QExpScalar:
    """Immutable canonical sum of terms ``coeff * q**exponent``.

    Exponents are distinct, sorted ascending, and no stored coefficient is
    exactly zero; the empty sum is 0.
    """

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms=()):
        acc = {}
        for e, c in terms:
            e = as_fraction(e)
            acc[e] = acc.get(e, 0j) + complex(c)
        self._terms = _canonical(acc)
        self._hash = None

    @classmethod
    def _from_dict(cls, acc):
        obj = cls.__new__(cls)
        obj._terms = _canonical(acc)
        obj._hash = None
        return obj

    @classmethod
    def monomial(cls, coeff=1.0, exponent=0) -> QExpScalar:
        return cls(((exponent, coeff),))

    @classmethod
    def const(cls, c) -> QExpScalar:
        return cls(((0, c),))

    @classmethod
    def zero(cls) -> QExpScalar:
        return _ZERO

    @classmethod
    def one(cls) -> QExpScalar:
        return _ONE

    @property
    def terms(self):
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    def is_monomial(self) -> bool:
        return len(self._terms) == 1

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def __eq__(self, other):
        if isinstance(other, Number):
            other = QExpScalar.const(other)
        if not isinstance(other, QExpScalar):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self._terms)
        return self._hash

    def __repr__(self):
        if not self._terms:
            return "QExpScalar(0)"
        parts = [f"({c:g})*q^({e})" for e, c in self._terms]
        return "QExpScalar(" + " + ".join(parts) + ")"

    def _coerce(self, other):
        if isinstance(other, QExpScalar):
            return other
        if isinstance(other, Number):
            return QExpScalar.const(other)
        return None

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        if not other._terms:
            return self
        if not self._terms:
            return other
        acc = dict(self._terms)
        for e, c in other._terms:
            acc[e] = acc.get(e, 0j) + c
        return QExpScalar._from_dict(acc)

    __radd__ = __add__

    def __neg__(self):
        out = QExpScalar.__new__(QExpScalar)
        out._terms = tuple((e, -c) for e, c in self._terms)
        out._hash = None
        return out

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, Number) and not isinstance(other, QExpScalar):
            c = complex(other)
            if c == 0:
                return _ZERO
            out = QExpScalar.__new__(QExpScalar)
            out._terms = tuple((e, v * c) for e, v in self._terms)
            out._hash = None
            return out
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        if not self._terms or not other._terms:
            return _ZERO
        if len(other._terms) == 1:
            (e2, c2), = other._terms
            return self.mul_monomial(c2, e2)
        if len(self._terms) == 1:
            (e1, c1), = self._terms
            return other.mul_monomial(c1, e1)
        acc = {}
        for e1, c1 in self._terms:
            for e2, c2 in other._terms:
                e = e1 + e2
                acc[e] = acc.get(e, 0j) + c1 * c2
        return QExpScalar._from_dict(acc)

    __rmul__ = __mul__

    def mul_monomial(self, coeff, exponent) -> QExpScalar:
        """Multiply by ``coeff * q**exponent`` (exponent shift, no merging)."""
        coeff = complex(coeff)
        if coeff == 0 or not self._terms:
            return _ZERO
        exponent = as_fraction(exponent)
        out = QExpScalar.__new__(QExpScalar)
        terms = []
        for e, c in self._terms:
            ne = e + exponent
            _check64(ne)
            v = c * coeff
            if v != 0:
                terms.append((ne, v))
        out._terms = tuple(terms)
        out._hash = None
        return out

    def shift(self, exponent) -> QExpScalar:
        return self.mul_monomial(1.0, exponent)

    def bind(self, qv: QValue) -> complex:
        """Numeric value ``sum c_k exp(e_k log q)`` on the fixed branch."""
        lq = qv.log_q
        return sum((c * cmath.exp(float(e) * lq) for e, c in self._terms), 0j)

    def log_abs(self, qv: QValue) -> float:
        """``log|bind(qv)|`` without overflow; ``-inf`` for zero."""
        if not self._terms:
            return -math.inf
        lq = qv.log_q
        logs = [(float(e) * lq, c) for e, c in self._terms]
        top = max(x.real + math.log(abs(c)) for x, c in logs)
        s = sum((c * cmath.exp(x - top) for x, c in logs), 0j)
        if s == 0:
            return -math.inf
        return top + math.log(abs(s))

    def to_json(self):
        return [
            {"re": c.real, "im": c.imag, "e_num": e.numerator, "e_den": e.denominator}
            for e, c in self._terms
        ]

    @classmethod
    def from_json(cls, data) -> QExpScalar:
        return cls(
            (Fraction(t["e_num"], t["e_den"]), complex(t["re"], t["im"])) for t in data
        )


def _check64(e: Fraction):
    if abs(e.numerator) >= _INT64 or e.denominator >= _INT64:
        raise OverflowError(f"exponent {e} exceeds 64-bit numerator/denominator")


def _canonical(acc):
    items = [(e, c) for e, c in acc.items() if c != 0]
    if len(items) > MAX_TERMS:
        raise TermCountError(f"{len(items)} terms exceeds the limit of {MAX_TERMS}")
    for e, _ in items:
        _check64(e)
    items.sort(key=lambda t: t[0])
    return tuple(items)


_ZERO = QExpScalar()
_ONE = QExpScalar(((0, 1.0),))


def qpow(exponent, coeff=1.0) -> QExpScalar:
    """Shorthand for the monomial ``coeff * q**exponent``."""
    return QExpScalar.monomial(coeff, exponent)


@dataclass(frozen=True)
class QValue:
    """A numeric q with ``|q| > 1`` and its fixed logarithm branch."""

    q: complex
    log_q: complex

    def __post_init__(self):
        q = complex(self.q)
        lq = complex(self.log_q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "log_q", lq)
        if not abs(q) > 1:
            raise ValueError(f"|q| must exceed 1, got |q|={abs(q)}")
        if abs(cmath.exp(lq) - q) > 1e-12 * abs(q):
            raise ValueError("log_q does not reproduce q")

    @classmethod
    def from_q(cls, q) -> QValue:
        q = complex(q)
        if q == 0:
            raise ValueError("q must be nonzero")
        return cls(q, cmath.log(q))

    @property
    def abs_log(self) -> float:
        """``log|q|``, the real part of the branch value."""
        return self.log_q.real

    def power(self, exponent) -> complex:
        return cmath.exp(float(exponent) * self.log_q)

    def root(self, mu) -> QValue:
        """``q**(1/mu)`` on the same branch."""
        lq = self.log_q / float(mu)
        return QValue(cmath.exp(lq), lq)

    def modulus(self) -> QValue:
        """The real base ``|q|``."""
        return QValue(abs(self.q), complex(math.log(abs(self.q))))

    def to_json(self):
        return {"re": self.q.real, "im": self.q.imag}


def bind_numeric(a: QExpScalar, qv: QValue) -> complex:
    return a.bind(qv)


def scalar_arith(a: QExpScalar, b: QExpScalar | None, op: str) -> QExpScalar:
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "neg":
        return -a
    raise ValueError(f"unknown op {op!r}")
