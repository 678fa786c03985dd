"""Spiral continuation, numerical q-Laplace transforms and the summation pipeline.

A function on the spiral ``lambda q**(Z/K)`` is represented by a
:class:`SpiralFunction`: a germ trusted near 0 plus the q-difference relation
it satisfies, which carries values outward.  :class:`LaplaceTransform` sums
the bilateral q-Laplace series against such a function, and
:class:`BorelLaplaceSum` chains Borel and Laplace stages to evaluate the
meromorphic sum of a formal solution.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .errors import (
    BadDirection,
    InsufficientPoints,
    NearPole,
    NotCertified,
    SeedTooShort,
    TruncationNotConverged,
)
from .operators import (
    QDiffOperator,
    SummationPlan,
    poly_eval,
    poly_scale,
    spiral_distance,
)
from .scalars import QValue, as_fraction
from .series import FormalSeries, q_borel, radius_estimate, seed_radius, solve_formal
from .theta import log_abs_theta_real, theta_log_many, theta_log_mp

TERM_TOL = 1e-17
STOP_RUN = 5
SIDE_CAP = 400
COND_MAX = 1e4
POLE_TOL = 1e-8
LEAD_TOL = 1e-8
GROWTH_MARGIN = 0.05
REFINE_COND = 1e3
REFINE_DPS = 34
CHUNK = 8


def _bind_poly(poly, qv: QValue) -> np.ndarray:
    if isinstance(poly, FormalSeries):
        poly = poly.coeffs
    out = []
    for c in poly:
        out.append(c.bind(qv) if hasattr(c, "bind") else complex(c))
    return np.array(out or [0j], dtype=complex)


def _unit(qv: QValue, exponent) -> complex:
    return cmath.exp(float(exponent) * qv.log_q)


class SpiralFunction:
    """Values of ``f`` at ``x_l = lambda q**(l/K)`` for integer ``l``.

    ``germ(l, x)`` returns ``(value, ok)``; it is used for ``l <= start`` and
    then upward for as long as it stays ok.  Past that frontier, values come
    from the relation ``sum_i b_i(x) f(q**i x) = rhs(x)`` solved for the top
    shift.  Below ``start`` a failing germ hands over to the same relation
    solved for the bottom shift.

    The value cache is mutable; confine an instance to one thread at a time.
    """

    def __init__(self, qv: QValue, lam, K: int, germ, start: int,
                 operator: QDiffOperator | None = None, rhs=None, radius: float = math.inf,
                 stage=None):
        self.qv = qv
        self.lam = complex(lam)
        if self.lam == 0:
            raise ValueError("lambda must be nonzero")
        self.K = int(K)
        self.germ = germ
        self.start = int(start)
        self.radius = radius
        self.stage = stage
        self.operator = operator
        self.cache: dict[int, complex] = {}
        self.exact = None  # closed form usable at extended precision, if known
        self.frontier = None  # last index served by the germ, once known
        self._hi = self.start
        self._lo = self.start
        self._transforms = {}
        if operator is not None:
            self._setup_relation(operator, rhs)

    def _setup_relation(self, operator, rhs):
        bound = operator.bind(self.qv)
        steps = {}
        for shift, coeffs in bound.items():
            st = shift * self.K
            if st.denominator != 1:
                raise ValueError(f"shift {shift} is not on the 1/{self.K} lattice")
            steps[int(st)] = coeffs
        self._steps = steps
        self._top = max(steps)
        self._bottom = min(steps)
        self._rhs = _bind_poly(rhs if rhs is not None else [0], self.qv)

    @classmethod
    def from_series(cls, s: FormalSeries, qv: QValue, lam, K: int,
                    operator=None, rhs=None, radius: float | None = None, stage=None):
        """Germ given by a truncated convergent series, trusted on ``|x| <= radius``."""
        coeffs = s.bind(qv)
        if radius is None:
            radius = seed_radius(s, qv)
        if radius <= 0:
            raise SeedTooShort("the series does not converge")
        lam = complex(lam)

        def germ(l, x):
            if abs(x) > radius:
                return 0j, False
            return poly_eval(coeffs, x), True

        ref = min(radius, 1.0)
        start = math.floor(K * (math.log(ref) - math.log(abs(lam))) / qv.abs_log)
        return cls(qv, lam, K, germ, start, operator, rhs, radius, stage)

    @classmethod
    def from_function(cls, f, qv: QValue, lam, K: int):
        """Closed-form ``f``, valid everywhere on the spiral.

        If ``f`` also accepts mpmath numbers, ill-conditioned Laplace sums
        re-evaluate it in extended precision.
        """
        sf = cls(qv, lam, K, lambda l, x: (complex(f(x)), True), 0)
        sf.exact = f
        return sf

    @classmethod
    def constant(cls, c, qv: QValue, lam, K: int):
        c = complex(c)
        return cls(qv, lam, K, lambda l, x: (c, True), 0)

    @classmethod
    def from_window(cls, values, qv: QValue, lam, K: int, operator, rhs=None):
        """Only the values at a window of indices are known; the relation does the rest."""
        values = {int(l): complex(v) for l, v in values.items()}

        def germ(l, x):
            if l in values:
                return values[l], True
            return 0j, False

        sf = cls(qv, lam, K, germ, max(values), operator, rhs)
        sf._lo = min(values)
        return sf

    def point(self, l) -> complex:
        return self.lam * cmath.exp(l * self.qv.log_q / self.K)

    def value(self, l: int) -> complex:
        l = int(l)
        v = self.cache.get(l)
        if v is not None:
            return v
        if l <= self.start:
            return self._below(l)
        return self._above(l)

    def values(self, ls) -> np.ndarray:
        return np.array([self.value(l) for l in ls], dtype=complex)

    def _germ(self, l):
        v, ok = self.germ(l, self.point(l))
        return complex(v), ok

    def _below(self, l):
        v, ok = self._germ(l)
        if ok:
            self.cache[l] = v
            return v
        if self.operator is None or self._top == self._bottom:
            raise SeedTooShort(f"germ not valid at spiral index {l}")
        # walk down from the lowest index the germ still covered
        j = self._lo
        while j > l:
            j -= 1
            if j in self.cache:
                continue
            gv, gok = self._germ(j)
            self.cache[j] = gv if gok else self._solve_down(j)
        self._lo = min(self._lo, l)
        return self.cache[l]

    def _above(self, l):
        with np.errstate(all="ignore"):
            return self._above_inner(l)

    def _above_inner(self, l):
        while self._hi < l:
            j = self._hi + 1
            if self.frontier is None:
                v, ok = self._germ(j)
                if ok:
                    self.cache[j] = v
                    self._hi = j
                    continue
                self.frontier = j - 1
                if self.operator is None:
                    raise SeedTooShort(f"germ not valid at spiral index {j} and no relation to continue")
            if self.operator is None:
                raise SeedTooShort(f"germ not valid at spiral index {j}")
            self.cache[j] = self._solve_up(j)
            self._hi = j
        return self.cache[l]

    def _lead_check(self, coeffs, y, l):
        b = poly_eval(coeffs, y)
        if abs(b) <= LEAD_TOL * poly_scale(coeffs, y):
            raise BadDirection(l, stage=self.stage)
        return b

    def _solve_up(self, l):
        if self._top == self._bottom:
            # single shift: the relation is pointwise
            y = self.point(l - self._top)
            b = self._lead_check(self._steps[self._top], y, l)
            return poly_eval(self._rhs, y) / b
        base = l - self._top
        y = self.point(base)
        acc = poly_eval(self._rhs, y)
        for st, coeffs in self._steps.items():
            if st != self._top:
                acc -= poly_eval(coeffs, y) * self.value(base + st)
        return acc / self._lead_check(self._steps[self._top], y, l)

    def _solve_down(self, l):
        base = l - self._bottom
        y = self.point(base)
        acc = poly_eval(self._rhs, y)
        for st, coeffs in self._steps.items():
            if st != self._bottom:
                acc -= poly_eval(coeffs, y) * self.cache[base + st]
        return acc / self._lead_check(self._steps[self._bottom], y, l)

    def transform(self, mu, prefactor: bool = True) -> LaplaceTransform:
        key = (as_fraction(mu), prefactor)
        if key not in self._transforms:
            self._transforms[key] = LaplaceTransform(self, mu, prefactor)
        return self._transforms[key]


class ShiftedSpiral:
    """``sigma_q**(k/K) f`` seen on the same spiral: index ``l`` reads ``f`` at ``l + k``."""

    def __init__(self, inner, k: int = 1):
        self.inner = inner
        self.k = k
        self.qv, self.lam, self.K = inner.qv, inner.lam, inner.K
        self._transforms = {}

    def point(self, l):
        return self.inner.point(l)

    def value(self, l):
        return self.inner.value(l + self.k)

    def values(self, ls):
        return np.array([self.value(l) for l in ls], dtype=complex)

    transform = SpiralFunction.transform


class TimesZeta(ShiftedSpiral):
    """``zeta * f`` on the same spiral."""

    def __init__(self, inner):
        super().__init__(inner, 0)

    def value(self, l):
        return self.point(l) * self.inner.value(l)


@dataclass
class SumResult:
    value: complex
    cond: float
    terms: int
    lo: int = 0
    hi: int = 0

    @property
    def ok(self) -> bool:
        return self.cond <= COND_MAX


def bilateral_sum(center: int, terms_at, tol: float = TERM_TOL) -> SumResult:
    """Sum ``terms_at(ms)`` over all integers, outward from ``center``.

    Each side stops after ``STOP_RUN`` consecutive terms below ``tol`` times
    the running maximum; more than ``SIDE_CAP`` terms on a side raises
    :class:`TruncationNotConverged`.
    """
    first = terms_at(np.array([center]))
    total = complex(first[0])
    run_max = abs(first[0])
    count = 1
    ends = {}
    for direction in (1, -1):
        quiet = 0
        taken = 0
        m = center
        while quiet < STOP_RUN:
            if taken >= SIDE_CAP:
                raise TruncationNotConverged(
                    f"bilateral sum not converged after {SIDE_CAP} terms (direction {direction:+d})"
                )
            ms = m + direction * np.arange(1, CHUNK + 1)
            vals = terms_at(ms)
            for t in vals:
                if quiet >= STOP_RUN:
                    break
                a = abs(t)
                if not math.isfinite(a):
                    raise TruncationNotConverged("non-finite term in bilateral sum")
                total += t
                taken += 1
                if a > run_max:
                    run_max = a
                quiet = quiet + 1 if a < tol * run_max else 0
            m = int(ms[-1])
        count += taken
        ends[direction] = center + direction * taken
    cond = run_max / abs(total) if total != 0 else (math.inf if run_max > 0 else 1.0)
    return SumResult(total, cond, count, ends[-1], ends[1])


class LaplaceTransform:
    """``(mu/K) sum_l f(lambda q**(l/K)) / Theta_{q^(1/mu)}(q**(1/mu + l/K) lambda / z)``.

    ``prefactor=False`` drops ``mu/K`` (a debugging hook that breaks ``L(1) = 1``).
    """

    def __init__(self, f, mu, prefactor: bool = True, tol: float = TERM_TOL,
                 refine: bool = True):
        self.f = f
        self.mu = as_fraction(mu)
        self.qv = f.qv
        self.K = f.K
        self.lam = f.lam
        if (self.K / self.mu).denominator != 1:
            raise ValueError(f"K={self.K} is not a multiple of mu={self.mu}")
        self.factor = float(self.mu) / self.K if prefactor else 1.0
        self.tol = tol
        self.refine = refine
        self._kernel = {}  # (d, c) -> log Theta on the lattice

    def pole_distance(self, z) -> float:
        return spiral_distance(complex(z), -self.lam, self.qv, self.K)

    def try_point(self, z) -> SumResult:
        """Raw sum at an arbitrary ``z`` (no pole check)."""
        z = complex(z)
        qv = self.qv
        inv_mu = 1 / self.mu
        center = round(self.K * (math.log(abs(z / self.lam)) / qv.abs_log - float(inv_mu)))
        lz = cmath.log(self.lam / z)

        def terms_at(ms):
            ws = np.exp((float(inv_mu) + ms / self.K) * qv.log_q + lz)
            logs, _ = theta_log_many(qv, ws, self.mu)
            with np.errstate(all="ignore"):
                return self.f.values(ms) * np.exp(-logs)

        res = bilateral_sum(center, terms_at, self.tol)
        if self.refine and res.cond > REFINE_COND:
            res.value = self._extended_sum(z, res.lo, res.hi)
        res.value *= self.factor
        return res

    def _extended_sum(self, z: complex, lo: int, hi: int) -> complex:
        """Re-sum indices ``lo..hi`` with the kernel in extended precision.

        Large cancelling terms make the double-precision kernel error grow
        with the condition number.  Germ values are kept as they are unless
        the spiral function carries a closed form that works in mpmath.
        """
        ms = np.arange(lo, hi + 1)
        vals = list(self.f.values(ms))
        exact = getattr(self.f, "exact", None)
        with mpmath.workdps(REFINE_DPS):
            log_q = mpmath.mpc(self.qv.log_q)
            log_p = log_q / mpmath.mpf(self.mu.numerator) * self.mu.denominator
            lz = mpmath.log(mpmath.mpc(self.lam) / mpmath.mpc(z))
            if exact is not None:
                lam = mpmath.mpc(self.lam)
                try:
                    vals = [exact(lam * mpmath.exp(log_q * int(m) / self.K)) for m in ms]
                except TypeError:
                    pass
            total = mpmath.mpc(0)
            for m, v in zip(ms, vals):
                if v == 0:
                    continue
                w = mpmath.exp(log_p + log_q * mpmath.mpf(int(m)) / self.K + lz)
                total += mpmath.mpc(v) * mpmath.exp(-theta_log_mp(log_p, w))
            return complex(total)

    def try_lattice(self, j: int, K_out: int) -> SumResult:
        """Sum at ``x_j = lambda q**(j/K_out)``, using a kernel cached by index difference."""
        c = self.K // K_out
        if c * K_out != self.K:
            raise ValueError(f"lattice {K_out} does not divide {self.K}")
        qv = self.qv
        inv_mu = float(1 / self.mu)
        center = c * j + round(-self.K * inv_mu)
        kernel = self._kernel

        def terms_at(ms):
            ds = ms - c * j
            missing = [int(d) for d in ds if int(d) not in kernel]
            if missing:
                arr = np.array(missing)
                ws = np.exp((inv_mu + arr / self.K) * qv.log_q)
                logs, _ = theta_log_many(qv, ws, self.mu)
                kernel.update(zip(missing, logs))
            logs = np.array([kernel[int(d)] for d in ds])
            with np.errstate(all="ignore"):
                return self.f.values(ms) * np.exp(-logs)

        res = bilateral_sum(center, terms_at, self.tol)
        res.value *= self.factor
        return res

    def __call__(self, z) -> complex:
        z = complex(z)
        if self.pole_distance(z) < POLE_TOL:
            raise NearPole(f"z={z} is within {POLE_TOL} of the pole spiral")
        return self.try_point(z).value


def q_laplace_eval(sf, mu, z, K: int | None = None, tol: float = TERM_TOL,
                   certify: bool = False, prefactor: bool = True) -> complex:
    """q-Laplace transform of order ``mu`` of the spiral function ``sf`` at ``z``.

    With ``certify=True`` a growth certificate is computed first and
    :class:`NotCertified` raised when it fails.
    """
    if K is not None and K != sf.K:
        raise ValueError(f"lattice mismatch: spiral has K={sf.K}, got {K}")
    if certify:
        cert = h_membership(sf, mu)
        if not cert.ok:
            raise NotCertified(f"growth exceeds order mu={mu} near index {cert.witness}")
    tr = sf.transform(mu, prefactor)
    tr.tol = tol
    return tr(z)


def continue_along_spiral(sf: SpiralFunction, l_max: int) -> SpiralFunction:
    sf.value(l_max)
    return sf


# --------------------------------------------------------------------------
# growth certificate


@dataclass
class GrowthCertificate:
    L: float
    M: float
    mu: Fraction
    ok: bool
    witness: int | None = None
    slope: float = math.nan


def h_membership(sf, mu, l_probe: int | None = None, l_low: int | None = None) -> GrowthCertificate:
    """Numerical check of ``|f(x_l)| <= L Theta_{|q|^(1/mu)}(M |x_l|)`` on a window.

    ``log|f|`` is regressed on ``log Theta_{|q|^(1/mu)}(|x|)``, ``log|x|`` and 1.
    A leading coefficient above ``1 + GROWTH_MARGIN`` means the required ``M``
    keeps growing with the window, so the certificate fails.
    """
    mu = as_fraction(mu)
    qv = sf.qv
    K = sf.K
    if l_low is None:
        # near 0 the bound holds trivially and only blurs the fit
        l_low = math.ceil(-K * math.log(abs(sf.lam)) / qv.abs_log)
    if l_probe is None:
        l_probe = l_low + 20 * K
    base = qv.abs_log / float(mu)
    rows, ys, ls = [], [], []
    witness = None
    for l in range(l_low, l_probe + 1):
        try:
            v = sf.value(l)
        except (BadDirection, OverflowError, ZeroDivisionError):
            witness = l
            break
        if not cmath.isfinite(v):
            witness = l
            break
        if v == 0:
            continue
        ax = abs(sf.point(l))
        rows.append((log_abs_theta_real(base, ax), math.log(ax), 1.0))
        ys.append(math.log(abs(v)))
        ls.append(l)
    if witness is not None:
        return GrowthCertificate(math.inf, math.inf, mu, False, witness)
    if not ys:
        # identically zero on the window
        return GrowthCertificate(0.0, 1e-12, mu, True)
    A = np.array(rows)
    y = np.array(ys)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    alpha, beta = float(coef[0]), float(coef[1])
    if alpha > 1 + GROWTH_MARGIN:
        excess = y - A[:, 0]
        return GrowthCertificate(math.inf, math.inf, mu, False, ls[int(np.argmax(excess))], alpha)
    M = float(np.clip(math.exp(beta * base), 1e-12, 1e12))
    bounds = np.array([log_abs_theta_real(base, M * math.exp(r[1])) for r in rows])
    L = float(np.exp(np.max(y - bounds)))
    return GrowthCertificate(L, M, mu, True, None, alpha)


# --------------------------------------------------------------------------
# the full pipeline


def _stage_germ(transform: LaplaceTransform, K_out: int):
    def germ(l, x):
        try:
            res = transform.try_lattice(l, K_out)
        except TruncationNotConverged:
            return 0j, False
        return res.value, res.ok

    return germ


def _start_index(qv: QValue, lam: complex, K: int, r: float) -> int:
    return math.floor(K * (math.log(r) - math.log(abs(lam))) / qv.abs_log)


class BorelLaplaceSum:
    """Meromorphic sum of the formal solution ``h`` of ``P(h) = a`` in direction ``lam``.

    The innermost series ``B_{kappa_1} ... B_{kappa_r}(h)`` seeds a spiral
    function; each Laplace stage is evaluated on the next stage's spiral and
    continued there with the intermediate operator, and the last stage is
    evaluated at arbitrary ``z``.  Where the last sum is not trustworthy the
    value is carried up from smaller ``|z|`` with ``P`` itself.
    """

    def __init__(self, P: QDiffOperator, a, plan: SummationPlan, lam, N: int = 64,
                 h: FormalSeries | None = None, prefactor: bool = True,
                 check_direction: bool = True):
        self.P = P
        self.plan = plan
        self.qv = qv = plan.q
        self.lam = complex(lam)
        if check_direction and not plan.is_admissible(self.lam):
            raise BadDirection(None, f"lambda={self.lam} lies on a forbidden spiral", stage=0)
        a_coeffs = a.coeffs if isinstance(a, FormalSeries) else list(a)
        self.a = a_coeffs
        self.h = h if h is not None else solve_formal(P, a_coeffs, N, qv)
        r = plan.r
        kappas = plan.kappas
        # Borel side: B_{kappa_r} first; the rhs follows the same chain
        g = self.h
        rhs = FormalSeries(a_coeffs) if not isinstance(a, FormalSeries) else a
        rhs_chain = []
        for kappa in reversed(kappas):
            g = q_borel(g, kappa)
            rhs = q_borel(rhs, kappa)
            rhs_chain.append(rhs)
        self.inner_series = g
        self.inner_radius = radius_estimate(g, qv)
        if self.inner_radius == 0.0:
            raise SeedTooShort("the innermost Borel transform does not look convergent")
        lattices = [plan.K] * (r - 1) + [plan.n]
        self.lattices = lattices
        sf = SpiralFunction.from_series(
            g, qv, self.lam, lattices[0], plan.input_operator(1), rhs_chain[-1], stage=1
        )
        self.stage_inputs = [sf]
        for i in range(1, r):
            tr = LaplaceTransform(sf, kappas[i - 1], prefactor)
            K_out = lattices[i]
            r0 = 1e-2 * min(1.0, sf.radius)
            op = plan.output_operator(i, P)
            sf = SpiralFunction(
                qv, self.lam, K_out, _stage_germ(tr, K_out),
                _start_index(qv, self.lam, K_out, r0),
                op, rhs_chain[r - i - 1], radius=r0, stage=i + 1,
            )
            self.stage_inputs.append(sf)
        self.final = LaplaceTransform(sf, kappas[-1], prefactor)
        self._bound = P.bind(qv)
        self._a_num = _bind_poly(a_coeffs, qv)
        self._memo: dict[complex, complex] = {}

    def __call__(self, z) -> complex:
        z = complex(z)
        if z in self._memo:
            return self._memo[z]
        if self.final.pole_distance(z) < POLE_TOL:
            raise NearPole(f"z={z} is within {POLE_TOL} of the pole spiral")
        v = self._sum_or_none(z)
        if v is None:
            v = self._carry_up(z)
        self._memo[z] = v
        return v

    def evaluate(self, zs) -> np.ndarray:
        return np.array([self(z) for z in zs], dtype=complex)

    def _sum_or_none(self, z):
        try:
            res = self.final.try_point(z)
        except TruncationNotConverged:
            return None
        except BadDirection as exc:
            if exc.stage is None:
                exc.stage = len(self.stage_inputs)
            raise
        return res.value if res.ok else None

    def _carry_up(self, z):
        """Solve ``P`` upward along ``z q**(-j/p)`` from a window where the sum is reliable."""
        p = self.P.n
        steps = {int(s * p): c for s, c in self._bound.items()}
        top = max(steps)
        width = top - min(steps)
        if width == 0:
            raise TruncationNotConverged("cannot continue with a single-shift operator")
        pts = {}
        run = 0
        j = 0
        while run < width:
            j += 1
            if j > 400 * p:
                raise TruncationNotConverged(f"no reliable window below z={z}")
            u = z * cmath.exp(-j * self.qv.log_q / p)
            v = self._sum_or_none(u)
            if v is None:
                run = 0
                continue
            pts[j] = v
            run += 1
        lowest_good = j - width + 1
        for jj in range(lowest_good - 1, -1, -1):
            base = jj + top
            y = z * cmath.exp(-base * self.qv.log_q / p)
            acc = poly_eval(self._a_num, y)
            for st, coeffs in steps.items():
                if st != top:
                    acc -= poly_eval(coeffs, y) * pts[jj + top - st]
            lead = steps[top]
            b = poly_eval(lead, y)
            if abs(b) <= LEAD_TOL * poly_scale(lead, y):
                raise BadDirection(jj, "top coefficient of P vanishes while continuing", stage="final")
            pts[jj] = acc / b
        return pts[0]

    def certificates(self):
        """Growth certificates of every stage input at its own level."""
        return [h_membership(sf, kappa) for sf, kappa in zip(self.stage_inputs, self.plan.kappas)]


def borel_sum_pipeline(P: QDiffOperator, a, plan: SummationPlan, lam, z_points, N: int = 64):
    """Values of the summed solution at ``z_points`` (array aligned with the input)."""
    s = BorelLaplaceSum(P, a, plan, lam, N)
    return s.evaluate(z_points)


# --------------------------------------------------------------------------
# diagnostics


def residual_check(P: QDiffOperator, S_eval, a, z_points, qv: QValue) -> float:
    """``max |sum_i b_i(z) S(q**i z) - a(z)|`` over the points."""
    bound = P.bind(qv)
    a_num = _bind_poly(a, qv)
    worst = 0.0
    for z in z_points:
        z = complex(z)
        acc = -poly_eval(a_num, z)
        for shift, coeffs in bound.items():
            acc += poly_eval(coeffs, z) * S_eval(z * _unit(qv, shift))
        worst = max(worst, abs(acc))
    return worst


@dataclass
class AsymptoticReport:
    mu: Fraction
    K: int
    per_k: list
    L: float
    M: float
    fit_residual: float
    ok: bool


def asymptotic_points(qv: QValue, lam, K: int, mu=1, k_max: int = 8, R: float | None = None,
                      count: int = 40, eps: float = 0.1, seed: int = 0):
    """Points with ``R/4 <= |z| <= R`` away from the disks around ``-lam q**(Z/K)``.

    The default ``R = |q|**(-k_max/mu)`` keeps every tested ``k`` before the
    smallest term of the divergent expansion, where the remainder is still
    governed by its first omitted term.
    """
    if R is None:
        R = min(0.2, math.exp(-k_max * qv.abs_log / float(as_fraction(mu))))
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < count:
        z = R * math.exp(-rng.uniform(0, math.log(4))) * cmath.exp(2j * math.pi * rng.uniform())
        if spiral_distance(z, -complex(lam), qv, K) > eps:
            pts.append(z)
    return pts


def asymptotic_check(samples, h: FormalSeries, mu, K: int, lam, qv: QValue,
                     eps: float = 0.1, k_max: int = 8, min_points: int = 30) -> AsymptoticReport:
    """Compare ``S`` near 0 with partial sums of ``h`` at Gevrey-type scale ``mu``.

    ``samples`` is a sequence of ``(z, S(z))``.  For each ``k`` the bound
    ``sup |S - sum_{l<k} h_l z**l| / (|q|**(k(k-1)/(2 mu)) |z|**k)`` is
    recorded; ``log10`` of the bounds is fitted by ``log L + k log M``.
    """
    mu = as_fraction(mu)
    pts = [(complex(z), complex(v)) for z, v in samples
           if spiral_distance(complex(z), -complex(lam), qv, K) > eps]
    if len(pts) < min_points:
        raise InsufficientPoints(f"{len(pts)} usable points, need {min_points}")
    coeffs = h.truncate(min(k_max, h.order)).bind(qv)
    per_k = []
    for k in range(k_max + 1):
        scale_log = k * (k - 1) / (2 * float(mu)) * qv.abs_log
        sup = 0.0
        for z, v in pts:
            partial = sum(coeffs[l] * z**l for l in range(k))
            ratio = abs(v - partial) / (math.exp(scale_log) * abs(z) ** k)
            sup = max(sup, ratio)
        per_k.append((k, sup))
    # below the valuation of h the bound only measures |S| itself, which is
    # not what the estimate constrains; those rows are reported but not fitted
    v = next((l for l, c in enumerate(h.coeffs) if not c.is_zero()), 0)
    rows = [(k, b) for k, b in per_k if k >= min(v, k_max - 1)]
    ks = np.array([k for k, _ in rows], dtype=float)
    logs = np.log10([max(b, 1e-300) for _, b in rows])
    slope, icpt = np.polyfit(ks, logs, 1)
    resid = float(np.max(np.abs(logs - (icpt + slope * ks))))
    return AsymptoticReport(mu, K, per_k, float(10**icpt), float(10**slope), resid,
                            bool(np.all(np.isfinite(logs)) and resid < 0.5))


@dataclass
class PoleHit:
    z: complex
    order: float
    index: int | None
    distance: float


@dataclass
class PoleScan:
    matched: list = field(default_factory=list)
    unmatched: list = field(default_factory=list)


def _nearest_on_spiral(z, c, qv: QValue, K: int):
    k0 = round(K * math.log(abs(z / c)) / qv.abs_log)
    best = None
    for k in range(k0 - 2, k0 + 3):
        p = c * cmath.exp(k * qv.log_q / K)
        d = abs(z - p) / abs(p)
        if best is None or d < best[1]:
            best = (k, d)
    return best


def _safe_abs(S_eval, z):
    try:
        return abs(S_eval(z))
    except NearPole:
        return math.inf
    except (TruncationNotConverged, BadDirection, OverflowError, ZeroDivisionError):
        return math.nan


def _refine_pole(S_eval, z0, iters: int = 40):
    z = complex(z0)
    for _ in range(iters):
        try:
            g = 1 / S_eval(z)
            dz = 1e-6 * abs(z)
            dg = (1 / S_eval(z + dz) - 1 / S_eval(z - dz)) / (2 * dz)
        except NearPole:
            return z
        if dg == 0 or not cmath.isfinite(dg):
            return None
        step = g / dg
        if abs(step) > 0.2 * abs(z):
            step *= 0.2 * abs(z) / abs(step)
        z -= step
        if abs(step) < 1e-13 * abs(z):
            return z
    return None


def _pole_order(S_eval, z):
    vals = []
    for delta in (1e-3, 1e-4):
        w = z * (1 + delta * cmath.exp(0.37j))
        try:
            vals.append(abs(S_eval(w)))
        except NearPole:
            return math.nan
    if vals[0] == 0:
        return math.nan
    return math.log10(vals[1] / vals[0])


def pole_scan(S_eval, lam, K: int, qv: QValue, annulus=(0.1, 10.0), grid=(60, 72),
              match_tol: float = 1e-3) -> PoleScan:
    """Locate poles of ``S`` in an annulus and match them against ``-lam q**(Z/K)``.

    Grid local maxima of ``|S|`` are refined by Newton's method on ``1/S``;
    the order is read off from ``|S|`` at two distances from the refined point.
    """
    r_in, r_out = annulus
    n_r, n_t = grid
    rs = np.exp(np.linspace(math.log(r_in), math.log(r_out), n_r))
    ts = np.linspace(-math.pi, math.pi, n_t, endpoint=False)
    Z = rs[:, None] * np.exp(1j * ts)[None, :]
    A = np.array([[_safe_abs(S_eval, z) for z in row] for row in Z])
    finite = A[np.isfinite(A)]
    thresh = 10 * (np.median(finite) if finite.size else 1.0)
    out = PoleScan()
    found = []
    for i in range(n_r):
        for j in range(n_t):
            v = A[i, j]
            if math.isnan(v) or v <= thresh:
                continue
            nb = [A[ii, (j + dj) % n_t] for ii in (i - 1, i, i + 1) for dj in (-1, 0, 1)
                  if 0 <= ii < n_r and (ii, dj) != (i, 0)]
            if any(x > v for x in nb if not math.isnan(x)):
                continue
            z = _refine_pole(S_eval, Z[i, j])
            if z is None or not (r_in / 2 <= abs(z) <= 2 * r_out):
                continue
            if any(abs(z - f) < 1e-6 * abs(z) for f in found):
                continue
            found.append(z)
            k, d = _nearest_on_spiral(z, -complex(lam), qv, K)
            hit = PoleHit(z, _pole_order(S_eval, z), k, d)
            (out.matched if d <= match_tol else out.unmatched).append(hit)
    return out
