"""Matrix constructions for q-difference systems ``sigma_q Y = B Y``.

Covers the special matrices ``Lambda_C`` and ``E_{n,d,a}`` that carry the
formal monodromy and slopes, gauge transformations, the two-slope block
equation ``z^n2 sigma_q(H) C2 = z^n1 C1 H - U`` for the off-diagonal part of a
block upper-triangular normal form, and fundamental solutions assembled from
an entrywise summed gauge.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateGauge, ResonantSpectrum, SingularGauge
from .laplace import BorelLaplaceSum
from .operators import QDiffOperator, parse_operator, spiral_distance, summation_plan
from .scalars import QExpScalar, QValue
from .series import FormalSeries
from .theta import NEAR_ZERO_REL, lambda_c_eval, lq_eval, theta_log
from .errors import NearZeroTheta

COND_LIMIT = 1e8
SINGULAR_COND = 1e12


def _cplx(x) -> complex:
    if isinstance(x, dict):
        return complex(x["re"], x.get("im", 0.0))
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(x[0], x[1])
    return complex(x)


def _matrix(rows) -> np.ndarray:
    return np.array([[_cplx(v) for v in row] for row in rows], dtype=complex)


def _nilpotent_series(X: np.ndarray, coeff) -> np.ndarray:
    """``sum_k coeff(k) X**k`` for nilpotent ``X`` (the sum stops at ``X**m = 0``)."""
    m = X.shape[0]
    out = np.zeros_like(X)
    power = np.eye(m, dtype=complex)
    for k in range(m + 1):
        c = coeff(k)
        if c:
            out = out + c * power
        power = power @ X
    return out


def unipotent_log(N: np.ndarray) -> np.ndarray:
    """``log N = sum_{k>=1} (-1)**(k+1) (N - I)**k / k``, exact for unipotent ``N``."""
    X = N - np.eye(N.shape[0])
    return _nilpotent_series(X, lambda k: 0 if k == 0 else (-1) ** (k + 1) / k)


def nilpotent_exp(X: np.ndarray) -> np.ndarray:
    return _nilpotent_series(X, lambda k: 1 / math.factorial(k))


@dataclass
class JordanData:
    """``C = P diag(D) N P**-1`` with ``N`` unipotent upper triangular and ``DN = ND``."""

    P: np.ndarray
    D: np.ndarray
    N: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=complex)
        self.D = np.asarray(self.D, dtype=complex).ravel()
        self.N = np.asarray(self.N, dtype=complex)
        m = len(self.D)
        if self.P.shape != (m, m) or self.N.shape != (m, m):
            raise ValueError("P, D and N sizes disagree")
        if np.any(self.D == 0):
            raise ValueError("diagonal entries must be nonzero")
        X = self.N - np.eye(m)
        if np.max(np.abs(np.tril(X))) > 1e-12:
            raise ValueError("N must be upper triangular with unit diagonal")
        Dm = np.diag(self.D)
        if np.max(np.abs(Dm @ self.N - self.N @ Dm)) > 1e-12 * max(1.0, np.abs(Dm).max()):
            raise ValueError("D and N do not commute")

    @property
    def size(self) -> int:
        return len(self.D)

    def matrix(self) -> np.ndarray:
        return self.P @ np.diag(self.D) @ self.N @ np.linalg.inv(self.P)

    @classmethod
    def from_diagonalizable(cls, C) -> JordanData:
        """Eigendecomposition of ``C``; refuses when the eigenvector matrix is ill-conditioned."""
        C = np.asarray(C, dtype=complex)
        w, V = np.linalg.eig(C)
        if np.linalg.cond(V) >= COND_LIMIT:
            raise ValueError("C is not safely diagonalizable; supply JordanData explicitly")
        return cls(V, w, np.eye(len(w)))

    @classmethod
    def jordan_block(cls, c, m: int) -> JordanData:
        c = complex(c)
        return cls(np.eye(m), np.full(m, c), np.eye(m) + np.eye(m, k=1) / c)

    @classmethod
    def scalar(cls, c) -> JordanData:
        return cls(np.eye(1), [complex(c)], np.eye(1))

    def to_json(self):
        def enc(M):
            return [[{"re": v.real, "im": v.imag} for v in row] for row in M]

        return {"P": enc(self.P), "D": [{"re": v.real, "im": v.imag} for v in self.D],
                "N": enc(self.N)}

    @classmethod
    def from_json(cls, data) -> JordanData:
        return cls(_matrix(data["P"]), [_cplx(v) for v in data["D"]], _matrix(data["N"]))


@dataclass
class BlockSpec:
    n: int
    d: int
    a: complex
    C: JordanData

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.n != 0 and math.gcd(self.n, self.d) != 1:
            raise ValueError("n and d must be coprime")
        self.a = complex(self.a)
        if self.a == 0:
            raise ValueError("a must be nonzero")

    @property
    def dim(self) -> int:
        return self.C.size * self.d

    @classmethod
    def from_json(cls, data) -> BlockSpec:
        return cls(int(data["n"]), int(data["d"]), _cplx(data["a"]), JordanData.from_json(data["C"]))


def lambda_C_eval(jd: JordanData, qv: QValue, z) -> np.ndarray:
    """``P diag(Lambda_{d_i}(z)) exp(log(N) l_q(z)) P**-1``, so ``Lambda_C(qz) = C Lambda_C(z)``."""
    z = complex(z)
    diag = np.diag([lambda_c_eval(qv, d, z) for d in jd.D])
    logN = unipotent_log(jd.N)
    if np.any(logN):
        inner = diag @ nilpotent_exp(logN * lq_eval(qv, z))
    else:
        inner = diag
    return jd.P @ inner @ np.linalg.inv(jd.P)


def e_block_eval(n: int, d: int, a, qv: QValue, z) -> np.ndarray:
    """``diag(Theta_{q^d}(a z)**n, ..., Theta_{q^d}(q**(d-1) a z)**n)``."""
    z = complex(z)
    a = complex(a)
    mu = Fraction(1, d)
    out = []
    for k in range(d):
        w = cmath.exp(k * qv.log_q) * a * z
        lg, rel = theta_log(qv, w, mu)
        if n < 0 and rel < NEAR_ZERO_REL:
            raise NearZeroTheta(f"Theta_(q^{d}) vanishes near {w}")
        out.append(0j if (n > 0 and rel == 0) else cmath.exp(n * lg))
    return np.diag(out)


def block_eval(block: BlockSpec, qv: QValue, z) -> np.ndarray:
    return np.kron(lambda_C_eval(block.C, qv, z), e_block_eval(block.n, block.d, block.a, qv, z))


def block_diag_eval(blocks, qv: QValue, z) -> np.ndarray:
    mats = [block_eval(b, qv, z) for b in blocks]
    m = sum(M.shape[0] for M in mats)
    out = np.zeros((m, m), dtype=complex)
    i = 0
    for M in mats:
        k = M.shape[0]
        out[i:i + k, i:i + k] = M
        i += k
    return out


def gauge_transform_eval(P_eval, A_eval, qv: QValue, z) -> np.ndarray:
    """``P(qz) A(z) P(z)**-1``."""
    z = complex(z)
    Pz = np.atleast_2d(np.asarray(P_eval(z), dtype=complex))
    if np.linalg.cond(Pz) > SINGULAR_COND:
        raise SingularGauge(f"gauge matrix is singular at z={z}")
    Pq = np.atleast_2d(np.asarray(P_eval(qv.q * z), dtype=complex))
    A = np.atleast_2d(np.asarray(A_eval(z), dtype=complex))
    return Pq @ A @ np.linalg.inv(Pz)


# --------------------------------------------------------------------------
# gauge entries and fundamental solutions


class GaugeEntry:
    """One entry of a formal gauge matrix together with a way to evaluate its sum."""

    def __init__(self, series: FormalSeries, evaluator, summed: BorelLaplaceSum | None = None):
        self.series = series
        self.evaluator = evaluator
        self.summed = summed

    def __call__(self, z) -> complex:
        return complex(self.evaluator(complex(z)))

    @classmethod
    def polynomial(cls, coeffs, order: int = 16) -> GaugeEntry:
        """A polynomial is its own sum."""
        coeffs = [complex(c) for c in (coeffs if isinstance(coeffs, (list, tuple)) else [coeffs])]
        arr = np.array(coeffs, dtype=complex)

        def ev(z):
            acc = 0j
            for c in arr[::-1]:
                acc = acc * z + c
            return acc

        return cls(FormalSeries.from_poly(coeffs, max(order, len(coeffs) - 1)), ev)

    @classmethod
    def summed_solution(cls, P, a, qv: QValue, lam, N: int = 64, h=None) -> GaugeEntry:
        """Sum of the formal solution of ``P(h) = a`` in direction ``lam``."""
        if isinstance(P, str):
            P = parse_operator(P)
        plan = summation_plan(P, qv)
        s = BorelLaplaceSum(P, a, plan, lam, N, h=h)
        return cls(s.h, s, s)

    @classmethod
    def combination(cls, parts) -> GaugeEntry:
        """``sum c_k e_k`` over ``(c_k, entry_k)`` pairs."""
        parts = [(complex(c), e) for c, e in parts if c != 0]
        if not parts:
            return cls.polynomial([0])
        order = min(e.series.order for _, e in parts)
        series = parts[0][1].series.truncate(order) * parts[0][0]
        for c, e in parts[1:]:
            series = series + e.series.truncate(order) * c
        return cls(series, lambda z: sum(c * e(z) for c, e in parts))


def _series_matrix_det(entries, qv: QValue, order: int = 8) -> np.ndarray:
    """Leading coefficients of ``det`` of a matrix of formal series."""
    m = len(entries)
    cols = [[np.array([c.bind(qv) for c in e.series.coeffs[: order + 1]], dtype=complex)
             for e in row] for row in entries]
    total = np.zeros(order + 1, dtype=complex)
    for perm in permutations(range(m)):
        sign = np.linalg.det(np.eye(m)[list(perm)])
        prod = np.zeros(order + 1, dtype=complex)
        prod[0] = 1
        for i, j in enumerate(perm):
            prod = np.convolve(prod, cols[i][j])[: order + 1]
        total += sign * prod
    return total


class FundamentalEvaluator:
    """``Y(z) = S(H)(z) Diag(Lambda_{C_i} (x) E_{n_i,d_i,a_i})(z)``."""

    def __init__(self, blocks, gauge, qv: QValue, lam):
        self.blocks = list(blocks)
        self.gauge = gauge
        self.qv = qv
        self.lam = complex(lam)
        m = sum(b.dim for b in self.blocks)
        if len(gauge) != m or any(len(row) != m for row in gauge):
            raise ValueError(f"gauge must be {m}x{m}")

    def gauge_eval(self, z) -> np.ndarray:
        return np.array([[e(z) for e in row] for row in self.gauge], dtype=complex)

    def diag_eval(self, z) -> np.ndarray:
        return block_diag_eval(self.blocks, self.qv, z)

    def __call__(self, z) -> np.ndarray:
        return self.gauge_eval(z) @ self.diag_eval(z)

    def residual(self, B_eval, z) -> float:
        """``||Y(qz) - B(z) Y(z)|| / ||Y(qz)||`` (Frobenius)."""
        z = complex(z)
        Yq = self(self.qv.q * z)
        R = Yq - np.asarray(B_eval(z), dtype=complex) @ self(z)
        return float(np.linalg.norm(R) / np.linalg.norm(Yq))

    def certify_invertible(self, probes=None, tol: float = 0.1):
        """Compare ``det S(H)`` with the leading terms of ``det H`` near 0."""
        det_series = _series_matrix_det(self.gauge, self.qv)
        nz = np.flatnonzero(np.abs(det_series) > 0)
        if nz.size == 0:
            raise DegenerateGauge("det of the formal gauge vanishes to the checked order")
        v = int(nz[0])
        if probes is None:
            probes = [r * cmath.exp(1j * (0.4 + 1.3 * k)) * self.lam
                      for k, r in enumerate((2e-3, 3e-3, 5e-3))]
        worst = 0.0
        for z in probes:
            approx = sum(det_series[k] * z**k for k in range(v, min(v + 3, len(det_series))))
            got = np.linalg.det(self.gauge_eval(z))
            if got == 0:
                raise DegenerateGauge(f"det S(H) vanishes at z={z}")
            worst = max(worst, abs(got / approx - 1))
        if worst > tol:
            raise DegenerateGauge(f"det S(H) departs from det H near 0 (relative {worst:.2e})")
        return worst


def fundamental_solution(blocks, H_hat, qv: QValue, lam, certify: bool = True) -> FundamentalEvaluator:
    """Fundamental solution from block data and an entrywise summable formal gauge."""
    ev = FundamentalEvaluator(blocks, H_hat, qv, lam)
    if certify:
        ev.certify_invertible()
    return ev


# --------------------------------------------------------------------------
# the two-slope block equation


def _as_square(C) -> np.ndarray:
    return np.atleast_2d(np.asarray(C, dtype=complex))


def _u_coeffs(U, n1: int, n2: int, shape):
    """``U`` as ``{power: matrix}`` with powers in ``[n1, n2)``."""
    out = {}
    for p, M in dict(U).items():
        p = int(p)
        if not n1 <= p < n2:
            raise ValueError(f"U has power {p} outside [{n1}, {n2})")
        M = np.atleast_2d(np.asarray(M, dtype=complex))
        if M.shape != shape:
            raise ValueError(f"U block has shape {M.shape}, expected {shape}")
        out[p] = M
    return out


def formal_gauge_solver(n1: int, n2: int, C1, C2, U, N: int = 64):
    """Formal ``H`` with ``z**n2 sigma_q(H) C2 = z**n1 C1 H - U`` to order ``N``.

    Degree by degree, ``C1 H_f = q**(f - D) H_{f-D} C2 + U_{f+n1}`` with
    ``D = n2 - n1``, so only ``C1`` has to be invertible.  Entries are returned
    as a nested list of :class:`FormalSeries` with exact q-power coefficients.
    """
    if n1 >= n2:
        raise ValueError("need n1 < n2")
    C1 = _as_square(C1)
    C2 = _as_square(C2)
    m1, m2 = C1.shape[0], C2.shape[0]
    if np.linalg.cond(C1) > SINGULAR_COND:
        raise ResonantSpectrum("C1 is singular, so the degree-wise map is not invertible")
    C1inv = np.linalg.inv(C1)
    Us = _u_coeffs(U, n1, n2, (m1, m2))
    D = n2 - n1
    zero = QExpScalar.zero()
    H = []
    for f in range(N + 1):
        rhs = [[zero] * m2 for _ in range(m1)]
        if f - D >= 0:
            prev = H[f - D]
            shift = Fraction(f - D)
            # prev * C2, then the q-power
            for i in range(m1):
                for j in range(m2):
                    acc = zero
                    for k in range(m2):
                        if C2[k, j] != 0 and not prev[i][k].is_zero():
                            acc = acc + prev[i][k] * complex(C2[k, j])
                    rhs[i][j] = acc.shift(shift) if not acc.is_zero() else zero
        Uf = Us.get(f + n1)
        if Uf is not None:
            for i in range(m1):
                for j in range(m2):
                    if Uf[i, j] != 0:
                        rhs[i][j] = rhs[i][j] + complex(Uf[i, j])
        Hf = [[zero] * m2 for _ in range(m1)]
        for i in range(m1):
            for j in range(m2):
                acc = zero
                for k in range(m1):
                    if C1inv[i, k] != 0 and not rhs[k][j].is_zero():
                        acc = acc + rhs[k][j] * complex(C1inv[i, k])
                Hf[i][j] = acc
        H.append(Hf)
    return [[FormalSeries([H[f][i][j] for f in range(N + 1)]) for j in range(m2)] for i in range(m1)]


def resonant_directions(n1: int, n2: int, C1, C2, qv: QValue):
    """Representatives of directions ``lam`` with ``lam**D q**(-(D-1)/2)`` in ``(a1/a2) q**Z``."""
    D = n2 - n1
    a1 = np.linalg.eigvals(_as_square(C1))
    a2 = np.linalg.eigvals(_as_square(C2))
    out = []
    for x in a1:
        for y in a2:
            base = cmath.log(x / y) + (D - 1) / 2 * qv.log_q
            for k in range(D):
                out.append(cmath.exp((base + 2j * math.pi * k) / D))
    return out


def in_resonant_set(lam, n1: int, n2: int, C1, C2, qv: QValue, tol: float = 1e-8) -> bool:
    D = n2 - n1
    lam = complex(lam)
    for x in np.linalg.eigvals(_as_square(C1)):
        for y in np.linalg.eigvals(_as_square(C2)):
            r = lam**D * cmath.exp(-(D - 1) / 2 * qv.log_q) / (x / y)
            k = round(math.log(abs(r)) / qv.abs_log)
            if abs(r * cmath.exp(-k * qv.log_q) - 1) < tol:
                return True
    return False


def borel_block_eval(n1: int, n2: int, C1, C2, U, qv: QValue, zeta) -> np.ndarray:
    """Closed form of ``B_D(H)`` at ``zeta``, ``D = n2 - n1``.

    After the Borel transform the block equation is algebraic,
    ``C1 X - q**(-(D-1)/2) zeta**D X C2 = B_D(z**-n1 U)``, and is solved as a
    Sylvester system.
    """
    C1 = _as_square(C1)
    C2 = _as_square(C2)
    m1, m2 = C1.shape[0], C2.shape[0]
    D = n2 - n1
    zeta = complex(zeta)
    rhs = np.zeros((m1, m2), dtype=complex)
    for p, M in _u_coeffs(U, n1, n2, (m1, m2)).items():
        l = p - n1
        rhs += M * cmath.exp(-Fraction(l * (l - 1), 2 * D) * qv.log_q) * zeta**l
    s = cmath.exp(-(D - 1) / 2 * qv.log_q) * zeta**D
    A = np.kron(np.eye(m2), C1) - s * np.kron(C2.T, np.eye(m1))
    x = np.linalg.solve(A, rhs.reshape(-1, order="F"))
    return x.reshape((m1, m2), order="F")


@dataclass
class TwoSlopeGauge:
    n1: int
    n2: int
    C1: np.ndarray
    C2: np.ndarray
    U: dict
    H_formal: list
    entries: list  # m1 x m2 GaugeEntry

    def H12_eval(self, z) -> np.ndarray:
        return np.array([[e(z) for e in row] for row in self.entries], dtype=complex)

    def block_residual(self, qv: QValue, z) -> float:
        """Absolute residual of ``z**n2 H(qz) C2 - z**n1 C1 H(z) + U(z)``."""
        z = complex(z)
        Uz = sum(M * z**p for p, M in self.U.items())
        R = z**self.n2 * self.H12_eval(qv.q * z) @ self.C2 - z**self.n1 * self.C1 @ self.H12_eval(z) + Uz
        return float(np.max(np.abs(R)))

    def system_matrix(self, z) -> np.ndarray:
        """``[[z**n1 C1, -U], [0, z**n2 C2]]``: the system this gauge normalizes."""
        z = complex(z)
        m1, m2 = self.C1.shape[0], self.C2.shape[0]
        Uz = sum(M * z**p for p, M in self.U.items())
        out = np.zeros((m1 + m2, m1 + m2), dtype=complex)
        out[:m1, :m1] = z**self.n1 * self.C1
        out[:m1, m1:] = -Uz
        out[m1:, m1:] = z**self.n2 * self.C2
        return out

    def full_gauge(self):
        """Entries of ``[[I, H12], [0, I]]`` for :func:`fundamental_solution`."""
        m1, m2 = self.C1.shape[0], self.C2.shape[0]
        one, zero = GaugeEntry.polynomial([1]), GaugeEntry.polynomial([0])
        rows = []
        for i in range(m1):
            rows.append([one if i == j else zero for j in range(m1)] + list(self.entries[i]))
        for i in range(m2):
            rows.append([zero] * m1 + [one if i == j else zero for j in range(m2)])
        return rows

    def blocks(self):
        return [BlockSpec(self.n1, 1, 1, JordanData.from_diagonalizable(self.C1)),
                BlockSpec(self.n2, 1, 1, JordanData.from_diagonalizable(self.C2))]


def entry_operators(n1: int, n2: int, C1, C2, U):
    """Scalar equations for the entries of ``G = P1**-1 H P2`` (``C_i = P_i D_i P_i**-1``).

    Entry ``(i, j)`` solves ``(beta_j z**D sigma_q - alpha_i) g = -z**(-n1) V_ij``
    with ``V = P1**-1 U P2``; returns ``(P1, P2, [[(operator, rhs), ...]])``.
    """
    C1 = _as_square(C1)
    C2 = _as_square(C2)
    jd1 = JordanData.from_diagonalizable(C1)
    jd2 = JordanData.from_diagonalizable(C2)
    P1, P2 = jd1.P, jd2.P
    P1inv = np.linalg.inv(P1)
    D = n2 - n1
    Us = _u_coeffs(U, n1, n2, (C1.shape[0], C2.shape[0]))
    V = {p: P1inv @ M @ P2 for p, M in Us.items()}
    ops = []
    for i, alpha in enumerate(jd1.D):
        row = []
        for j, beta in enumerate(jd2.D):
            P = QDiffOperator.from_triples([
                (1, D, QExpScalar.const(beta)),
                (0, 0, QExpScalar.const(-alpha)),
            ])
            rhs = [0j] * D
            for p, M in V.items():
                rhs[p - n1] = -M[i, j]
            row.append((P, rhs))
        ops.append(row)
    return P1, P2, ops


def two_slope_gauge(n1: int, n2: int, C1, C2, U, qv: QValue, lam, N: int = 64) -> TwoSlopeGauge:
    """Formal and summed off-diagonal block of the gauge for a two-slope normal form.

    Raises :class:`ResonantSpectrum` when ``lam`` lies in the resonant set.
    """
    C1 = _as_square(C1)
    C2 = _as_square(C2)
    if in_resonant_set(lam, n1, n2, C1, C2, qv):
        raise ResonantSpectrum(f"lambda={lam} is resonant for the spectra of C1, C2")
    Us = _u_coeffs(U, n1, n2, (C1.shape[0], C2.shape[0]))
    H = formal_gauge_solver(n1, n2, C1, C2, Us, N)
    P1, P2, ops = entry_operators(n1, n2, C1, C2, Us)
    P2inv = np.linalg.inv(P2)
    g = [[GaugeEntry.summed_solution(P, rhs, qv, lam, N) for P, rhs in row] for row in ops]
    m1, m2 = C1.shape[0], C2.shape[0]
    entries = []
    for i in range(m1):
        row = []
        for j in range(m2):
            parts = [(P1[i, k] * P2inv[l, j], g[k][l]) for k in range(m1) for l in range(m2)]
            row.append(GaugeEntry.combination(parts))
        entries.append(row)
    return TwoSlopeGauge(n1, n2, C1, C2, Us, H, entries)


# --------------------------------------------------------------------------
# spectrum of X -> C1^-1 X C2


def sylvester_spectrum(C1, C2):
    """Eigenvalues of ``X -> C1**-1 X C2``, by quotients and by brute force.

    Returns ``(quotients, brute)``: all ``beta/alpha`` for ``alpha`` in
    spec(C1), ``beta`` in spec(C2), and the eigenvalues of ``C2.T (x) C1**-1``.
    """
    C1 = _as_square(C1)
    C2 = _as_square(C2)
    a = np.linalg.eigvals(C1)
    b = np.linalg.eigvals(C2)
    quotients = np.array([y / x for x in a for y in b])
    brute = np.linalg.eigvals(np.kron(C2.T, np.linalg.inv(C1)))
    return quotients, brute


def multiset_distance(a, b) -> float:
    """Largest gap under the best one-to-one matching of two equal-size multisets."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return math.inf
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max()) if len(r) else 0.0


def pole_spiral_distance(z, lam, qv: QValue, K: int) -> float:
    return spiral_distance(complex(z), -complex(lam), qv, K)
