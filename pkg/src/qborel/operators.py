"""Linear q-difference operators ``sum_i b_i(z) sigma_q**i`` with rational shifts.

Covers parsing from a small text DSL, action on formal series, the Newton
polygon, conjugation by the q-Borel transform, and the summation plan
(levels, lattice constants, forbidden directions).
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from .errors import NoPositiveSlope, OperatorSyntaxError, SlopeMismatch
from .scalars import QExpScalar, QValue, as_fraction
from .series import FormalSeries, borel_weight

FORBIDDEN_TOL = 1e-6


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _trim(poly):
    poly = list(poly)
    while poly and poly[-1].is_zero():
        poly.pop()
    return tuple(poly)


def poly_eval(coeffs: np.ndarray, x) -> complex:
    acc = 0j
    for c in coeffs[::-1]:
        acc = acc * x + c
    return acc


def poly_scale(coeffs: np.ndarray, x) -> float:
    """``sum |c_j| |x|**j``, the natural size of a polynomial value at ``x``."""
    ax = abs(x)
    acc = 0.0
    for c in coeffs[::-1]:
        acc = acc * ax + abs(c)
    return acc


class QDiffOperator:
    """Finite sum of ``b_i(z) * sigma_q**i`` with ``i`` rational.

    ``terms`` maps each shift (a :class:`~fractions.Fraction`) to the
    coefficient polynomial ``b_i`` stored as a tuple of :class:`QExpScalar`
    by ascending z-degree.  Zero polynomials are dropped; ``n`` is the least
    common denominator of the shifts.
    """

    __slots__ = ("terms", "n", "_bound")

    def __init__(self, terms):
        clean = {}
        for shift, poly in dict(terms).items():
            shift = as_fraction(shift)
            poly = _trim(c if isinstance(c, QExpScalar) else QExpScalar.const(c) for c in poly)
            if poly:
                clean[shift] = poly
        if not clean:
            raise ValueError("the zero operator is not allowed")
        self.terms = dict(sorted(clean.items()))
        self.n = reduce(_lcm, (s.denominator for s in self.terms), 1)
        self._bound = {}

    @classmethod
    def from_triples(cls, triples) -> QDiffOperator:
        """Build from ``(shift, z_degree, QExpScalar)`` triples, merging duplicates."""
        acc = {}
        for shift, j, c in triples:
            shift = as_fraction(shift)
            poly = acc.setdefault(shift, {})
            poly[j] = poly.get(j, QExpScalar.zero()) + c
        terms = {}
        for shift, poly in acc.items():
            deg = max(poly)
            terms[shift] = [poly.get(j, QExpScalar.zero()) for j in range(deg + 1)]
        return cls(terms)

    def triples(self):
        for shift, poly in self.terms.items():
            for j, c in enumerate(poly):
                if not c.is_zero():
                    yield shift, j, c

    @property
    def shifts(self):
        return list(self.terms)

    @property
    def top_shift(self) -> Fraction:
        return max(self.terms)

    @property
    def bottom_shift(self) -> Fraction:
        return min(self.terms)

    @property
    def max_degree(self) -> int:
        return max(len(p) - 1 for p in self.terms.values())

    def valuation(self, shift) -> int:
        poly = self.terms[shift]
        return next(j for j, c in enumerate(poly) if not c.is_zero())

    def degree(self, shift) -> int:
        return len(self.terms[shift]) - 1

    def __eq__(self, other):
        if not isinstance(other, QDiffOperator):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(tuple(self.terms.items()))

    def __repr__(self):
        return f"QDiffOperator({self.to_dsl()!r})"

    def bind(self, qv: QValue):
        """Numeric coefficient arrays, ``{shift: ndarray}``, cached per ``qv``."""
        key = (qv.q, qv.log_q)
        if key not in self._bound:
            self._bound[key] = {
                s: np.array([c.bind(qv) for c in poly], dtype=complex)
                for s, poly in self.terms.items()
            }
        return self._bound[key]

    def to_dsl(self) -> str:
        out = ""
        for shift, j, c in sorted(self.triples(), key=lambda t: (-t[0], -t[1])):
            for e, coeff in c.terms:
                sign = "+"
                if coeff.imag == 0 and coeff.real < 0:
                    sign, coeff = "-", -coeff
                factors = []
                if coeff != 1 or (e == 0 and j == 0 and shift == 0):
                    factors.append(_fmt_complex(coeff))
                if e != 0:
                    factors.append(f"q^({e})")
                if j:
                    factors.append("z" if j == 1 else f"z^{j}")
                if shift == 1:
                    factors.append("s")
                elif shift != 0:
                    factors.append(f"s^({shift})")
                term = "*".join(factors)
                if not out:
                    out = term if sign == "+" else "-" + term
                else:
                    out += f" {sign} {term}"
        return out

    def to_json(self):
        return {
            "n": self.n,
            "terms": [
                {
                    "shift_num": s.numerator,
                    "shift_den": s.denominator,
                    "poly": [c.to_json() for c in poly],
                }
                for s, poly in self.terms.items()
            ],
        }

    @classmethod
    def from_json(cls, data) -> QDiffOperator:
        terms = {}
        for t in data["terms"]:
            s = Fraction(t["shift_num"], t["shift_den"])
            terms[s] = [QExpScalar.from_json(c) for c in t["poly"]]
        op = cls(terms)
        if "n" in data and data["n"] != op.n:
            raise ValueError(f"declared n={data['n']} but shifts need n={op.n}")
        return op


def _fmt_complex(c: complex) -> str:
    if c.imag == 0:
        r = c.real
        return str(int(r)) if r == int(r) and abs(r) < 2**53 else repr(r)
    return f"({c.real!r}{c.imag:+}j)"


# --------------------------------------------------------------------------
# DSL parser

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<cplx>\((?:\s*[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?\s*[-+]\s*(?:\d+\.?\d*|\.\d+)?(?:[eE][-+]?\d+)?\s*[ij])\s*\))
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?[ij]?)
  | (?P<imag>[ij](?![a-z]))
  | (?P<sym>[qzs])
  | (?P<op>[-+*^/()])
    """,
    re.VERBOSE,
)


def _tokenize(text):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise OperatorSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, v, pos = self.take()
        if v != value:
            raise OperatorSyntaxError(f"expected {value!r}, found {v or 'end of input'!r}", pos)

    def parse(self):
        triples = []
        sign = 1
        kind, v, _ = self.peek()
        if v in "+-" and kind == "op":
            self.take()
            sign = -1 if v == "-" else 1
        triples.append(self.term(sign))
        while True:
            kind, v, pos = self.peek()
            if kind == "end":
                break
            if kind == "op" and v in "+-":
                self.take()
                triples.append(self.term(-1 if v == "-" else 1))
            else:
                raise OperatorSyntaxError(f"unexpected token {v!r}", pos)
        return triples

    def term(self, sign):
        coeff = complex(sign)
        qexp = Fraction(0)
        zdeg = Fraction(0)
        shift = Fraction(0)
        while True:
            kind, v, pos = self.take()
            if kind == "num":
                coeff *= complex(v.replace("i", "j")) if v[-1] in "ij" else float(v)
            elif kind == "cplx":
                coeff *= complex(v.replace("i", "j").replace(" ", ""))
            elif kind == "imag":
                coeff *= 1j
            elif kind == "sym":
                p = self.power()
                if v == "q":
                    qexp += p
                elif v == "z":
                    zdeg += p
                else:
                    shift += p
            else:
                raise OperatorSyntaxError(f"expected a factor, found {v or 'end of input'!r}", pos)
            kind, v, pos = self.peek()
            if kind == "op" and v == "*":
                self.take()
                continue
            break
        if zdeg.denominator != 1 or zdeg < 0:
            raise OperatorSyntaxError(f"z power must be a nonnegative integer, got {zdeg}", pos)
        return shift, int(zdeg), QExpScalar.monomial(coeff, qexp)

    def power(self):
        kind, v, pos = self.peek()
        if not (kind == "op" and v == "^"):
            return Fraction(1)
        self.take()
        paren = False
        kind, v, pos = self.peek()
        if kind == "op" and v == "(":
            self.take()
            paren = True
        value = self.rational()
        if paren:
            self.expect(")")
        return value

    def rational(self):
        sign = 1
        kind, v, pos = self.take()
        if kind == "op" and v in "+-":
            sign = -1 if v == "-" else 1
            kind, v, pos = self.take()
        if kind != "num" or not v.isdigit():
            raise OperatorSyntaxError(f"expected an integer exponent, found {v!r}", pos)
        value = Fraction(int(v))
        kind2, v2, pos2 = self.peek()
        if kind2 == "op" and v2 == "/":
            self.take()
            kind3, v3, pos3 = self.take()
            if kind3 != "num" or not v3.isdigit() or int(v3) == 0:
                raise OperatorSyntaxError(f"expected a positive denominator, found {v3!r}", pos3)
            value /= int(v3)
        return sign * value


def parse_operator(text: str) -> QDiffOperator:
    """Parse ``coeff * q^a * z^j * s^(p/r)`` sums; ``s`` stands for sigma_q.

    >>> parse_operator("z*s + 1").to_dsl()
    '1*z*s^(1) + 1'
    """
    triples = _Parser(text).parse()
    try:
        return QDiffOperator.from_triples(triples)
    except ValueError:
        raise OperatorSyntaxError("the operator is identically zero", 0) from None


def parse_poly(text: str):
    """Parse a polynomial in ``z`` (same DSL without ``s``) into QExpScalar coefficients."""
    triples = _Parser(text).parse()
    acc = {}
    for shift, j, c in triples:
        if shift != 0:
            raise OperatorSyntaxError("a polynomial may not contain s", 0)
        acc[j] = acc.get(j, QExpScalar.zero()) + c
    deg = max(acc) if acc else 0
    return [acc.get(j, QExpScalar.zero()) for j in range(deg + 1)]


# --------------------------------------------------------------------------
# action on series


def apply_operator(P: QDiffOperator, s: FormalSeries) -> FormalSeries:
    """``sum_i b_i(z) (sigma_q**i s)`` in exact arithmetic.

    The truncation order drops by the largest z-degree among the ``b_i``.
    """
    out_order = s.order - P.max_degree
    if out_order < 0:
        raise ValueError("series too short for this operator")
    triples = list(P.triples())
    out = []
    for d in range(out_order + 1):
        acc = QExpScalar.zero()
        for shift, j, c in triples:
            k = d - j
            if k < 0:
                continue
            sk = s.coeffs[k]
            if sk.is_zero():
                continue
            acc = acc + sk * c.shift(shift * k)
        out.append(acc)
    return FormalSeries(out)


def dilate(s: FormalSeries, shift) -> FormalSeries:
    """``sigma_q**shift`` applied to a series: degree ``l`` picks up ``q**(shift*l)``."""
    shift = as_fraction(shift)
    return FormalSeries([c.shift(shift * l) for l, c in enumerate(s.coeffs)])


def multiply_by_z(s: FormalSeries) -> FormalSeries:
    return FormalSeries([QExpScalar.zero()] + list(s.coeffs[:-1]))


# --------------------------------------------------------------------------
# Newton polygon


@dataclass(frozen=True)
class NewtonPolygon:
    vertices: tuple
    slopes: tuple  # ((slope, multiplicity), ...)

    def positive_slopes(self):
        return [s for s, _ in self.slopes if s > 0]

    def max_slope(self) -> Fraction:
        return max(s for s, _ in self.slopes)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def lower_hull(points):
    pts = sorted(set(points))
    hull = []
    for p in pts:
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) <= 0:
            hull.pop()
        hull.append(p)
    return hull


def newton_polygon(P: QDiffOperator) -> NewtonPolygon:
    """Lower boundary of the hull of ``{(i, j): j >= v_0(b_i)}``.

    A single-shift operator has the conventional unique slope 0 (multiplicity 0).
    """
    pts = [(s, Fraction(P.valuation(s))) for s in P.terms]
    hull = lower_hull(pts)
    # vertical rays upward mean only the lowest point per shift matters, and
    # a lower hull through sorted points is exactly the boundary we need
    if len(hull) == 1:
        return NewtonPolygon(tuple(hull), ((Fraction(0), Fraction(0)),))
    slopes = tuple(
        ((b[1] - a[1]) / (b[0] - a[0]), b[0] - a[0]) for a, b in zip(hull, hull[1:])
    )
    return NewtonPolygon(tuple(hull), slopes)


# --------------------------------------------------------------------------
# Borel conjugation


def borel_conjugate(P: QDiffOperator, mu) -> QDiffOperator:
    """Operator ``Q`` with ``Q(B_mu s) = B_mu(P s)`` for every series ``s``.

    Each ``z**j sigma**i`` becomes ``q**(-j(j-1)/(2 mu)) zeta**j sigma**(i - j/mu)``.
    """
    mu = as_fraction(mu)
    if mu <= 0:
        raise ValueError("mu must be positive")
    return QDiffOperator.from_triples(
        (shift - Fraction(j) / mu, j, c.shift(-borel_weight(j, mu)))
        for shift, j, c in P.triples()
    )


def expected_conjugate_slopes(slopes, mu):
    """Positive slopes predicted after conjugating by ``B_mu`` (``mu >= max slope``)."""
    mu = as_fraction(mu)
    pos = sorted(s for s in slopes if s > 0)
    if pos and mu < pos[-1]:
        raise ValueError(f"mu={mu} is below the largest positive slope {pos[-1]}")
    keep = pos[:-1] if pos and mu == pos[-1] else pos
    return [1 / (1 / s - 1 / mu) for s in keep]


def slope_shift_check(P: QDiffOperator, mu):
    """Slopes of ``borel_conjugate(P, mu)``, after checking the positive ones.

    Raises :class:`SlopeMismatch` when the conjugated positive slopes differ
    from ``(1/mu_i - 1/mu)**-1``.
    """
    expected = expected_conjugate_slopes(newton_polygon(P).positive_slopes(), mu)
    poly = newton_polygon(borel_conjugate(P, mu))
    got = poly.positive_slopes()
    if got != expected:
        raise SlopeMismatch(f"conjugated positive slopes {got} != predicted {expected}")
    return [s for s, _ in poly.slopes]


def degree_bound_check(Q: QDiffOperator, mu) -> bool:
    """Whether ``deg(b_i / b_top) <= (top - i) * mu`` for every shift ``i``."""
    mu = as_fraction(mu)
    top = Q.top_shift
    dtop = Q.degree(top)
    return all(Q.degree(i) - dtop <= (top - i) * mu for i in Q.terms)


# --------------------------------------------------------------------------
# summation plan


def spiral_representative(w: complex, qv: QValue, K: int) -> complex:
    """Representative of ``w q**(Z/K)`` in the annulus ``1 <= |w| < |q|**(1/K)``."""
    k = math.floor(K * math.log(abs(w)) / qv.abs_log)
    rep = w * cmath.exp(-k * qv.log_q / K)
    # guard the boundary against rounding
    if abs(rep) < 1:
        rep *= cmath.exp(qv.log_q / K)
    return rep


def spiral_distance(w: complex, c: complex, qv: QValue, K: int) -> float:
    """Smallest ``|w - c q**(k/K)| / |w|`` over integers ``k``."""
    k0 = round(K * math.log(abs(w / c)) / qv.abs_log)
    return min(
        abs(w - c * cmath.exp(k * qv.log_q / K)) / abs(w) for k in (k0 - 1, k0, k0 + 1)
    )


def leading_roots(Q: QDiffOperator, qv: QValue):
    """Nonzero roots of the top-shift coefficient (companion-matrix eigenvalues)."""
    coeffs = Q.bind(qv)[Q.top_shift]
    nz = np.flatnonzero(coeffs)
    coeffs = coeffs[nz[0]:] if nz.size else coeffs
    if len(coeffs) < 2:
        return []
    return [complex(r) for r in np.roots(coeffs[::-1]) if abs(r) > 0]


@dataclass
class SummationPlan:
    slopes: list
    kappas: list
    K: int
    n: int
    stage_operators: list  # after B_{kappa_r}, then B_{kappa_{r-1}}, ..., innermost last
    forbidden_directions: list = field(default_factory=list)
    tolerance: float = FORBIDDEN_TOL
    q: QValue | None = None

    @property
    def r(self) -> int:
        return len(self.kappas)

    def input_operator(self, stage: int) -> QDiffOperator:
        """Operator annihilating (up to rhs) the input of Laplace stage ``stage`` (1-based)."""
        return self.stage_operators[self.r - stage]

    def output_operator(self, stage: int, P: QDiffOperator) -> QDiffOperator:
        return P if stage == self.r else self.stage_operators[self.r - stage - 1]

    def is_admissible(self, lam: complex) -> bool:
        return all(
            spiral_distance(lam, f, self.q, self.K) > self.tolerance
            for f in self.forbidden_directions
        )

    def to_json(self):
        return {
            "slopes": [str(s) for s in self.slopes],
            "kappas": [str(k) for k in self.kappas],
            "K": self.K,
            "n": self.n,
            "stage_operators": [op.to_dsl() for op in self.stage_operators],
            "forbidden_directions": [
                {"re": f.real, "im": f.imag} for f in self.forbidden_directions
            ],
            "tolerance": self.tolerance,
        }


def levels(slopes):
    """``kappa_i**-1 = mu_i**-1 - mu_{i+1}**-1`` with ``mu_{r+1} = inf``."""
    slopes = sorted(as_fraction(s) for s in slopes)
    out = []
    for i, s in enumerate(slopes):
        nxt = Fraction(0) if i + 1 == len(slopes) else 1 / slopes[i + 1]
        out.append(1 / (1 / s - nxt))
    return out


def summation_plan(P: QDiffOperator, qv: QValue) -> SummationPlan:
    """Levels, lattice constants, stage operators and forbidden directions.

    ``K`` is the least integer with ``K/kappa_i`` integral for all ``i`` and
    ``n`` the least with ``n/kappa_r`` integral; both are also made multiples
    of the shift denominator of ``P`` so its dilations stay on the lattice.
    """
    slopes = newton_polygon(P).positive_slopes()
    if not slopes:
        raise NoPositiveSlope("the operator has no positive slope")
    kappas = levels(slopes)
    K = reduce(_lcm, (k.numerator for k in kappas), 1)
    n = kappas[-1].numerator
    K = _lcm(K, P.n)
    n = _lcm(n, P.n)
    ops = []
    cur = P
    for kappa in reversed(kappas):
        cur = borel_conjugate(cur, kappa)
        ops.append(cur)
    forbidden = []
    for op in ops:
        for root in leading_roots(op, qv):
            rep = spiral_representative(root, qv, K)
            if all(spiral_distance(rep, f, qv, K) > FORBIDDEN_TOL for f in forbidden):
                forbidden.append(rep)
    return SummationPlan(list(slopes), kappas, K, n, ops, forbidden, FORBIDDEN_TOL, qv)
