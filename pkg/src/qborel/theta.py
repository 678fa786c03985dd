"""Jacobi theta function ``Theta_q(z) = sum_l q**(-l(l+1)/2) z**l`` and relatives.

Arguments are always reduced to the annulus ``1 <= |z| < |q|`` first; the
factor ``q**(k(k-1)/2) z0**k`` picked up by the reduction is carried in log
form so huge or tiny values do not overflow.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from . import _kernels
from .errors import EmptyDomain, NearZeroTheta
from .scalars import QValue, as_fraction

NEAR_ZERO_REL = 1e-10


@dataclass(frozen=True)
class ThetaEvalConfig:
    tol: float = 1e-16
    max_terms: int = 64

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.max_terms < 16:
            raise ValueError("max_terms must be at least 16")


DEFAULT_CONFIG = ThetaEvalConfig()


def _base(qv: QValue, mu=1) -> complex:
    return qv.log_q if mu == 1 else qv.log_q / float(as_fraction(mu))


def theta_log(qv: QValue, z, mu=1, config: ThetaEvalConfig = DEFAULT_CONFIG):
    """``(log Theta_{q^(1/mu)}(z), rel)``; ``rel`` near 0 flags a nearby zero."""
    z = complex(z)
    if z == 0:
        raise ValueError("theta is not defined at 0")
    lg, _, rel = _kernels.theta_log(_base(qv, mu), z, config.tol, config.max_terms)
    return lg, rel


def theta_log_many(qv: QValue, zs, mu=1, config: ThetaEvalConfig = DEFAULT_CONFIG):
    return _kernels.theta_log_many(_base(qv, mu), zs, config.tol, config.max_terms)


def theta_eval(qv: QValue, z, mu=1, config: ThetaEvalConfig = DEFAULT_CONFIG) -> complex:
    """Value of ``Theta_{q^(1/mu)}(z)``; exactly 0 only if the reduced sum cancels."""
    lg, _ = theta_log(qv, z, mu, config)
    if lg.real == -math.inf:
        return 0j
    return cmath.exp(lg)


def theta_log_mp(log_p, w):
    """``log Theta_p(w)`` in mpmath arithmetic at the caller's working precision.

    ``log_p`` and ``w`` are mpmath numbers.  Uses the Poisson-dual sum after
    reducing ``w`` to ``1 <= |w| < |p|``, so the cost does not grow as
    ``|p| -> 1``.
    """
    mp = mpmath
    k = int(mp.floor(mp.log(abs(w)) / mp.re(log_p)))
    w0 = w * mp.exp(-k * log_p)
    a = log_p / 2
    b = mp.log(w0) - a
    c = 1 / (4 * a)
    mc = int(mp.nint(mp.im(b * c) / (2 * mp.pi * mp.re(c))))
    eps = mp.mpf(2) ** (-mp.mp.prec - 8)
    d = b - 2j * mp.pi * mc
    emax = d * d * c
    total = mp.mpc(1)
    j = 1
    while True:
        big = 0
        for m in (mc + j, mc - j):
            d = b - 2j * mp.pi * m
            t = mp.exp(d * d * c - emax)
            total += t
            big = max(big, abs(t))
        if big < eps:
            break
        j += 1
    return (k * (k - 1) / 2) * log_p + k * mp.log(w0) + mp.log(mp.pi / a) / 2 + emax + mp.log(total)


def theta_product(qv: QValue, z, mu=1, factors: int = 200) -> complex:
    """Triple-product form, ``prod_{l>=0} (1-p^(l+1)) (1+p^(l+1) z) (1+p^l / z)`` with ``p = 1/q``.

    Only accurate for ``|z|`` of moderate size; serves as an independent check.
    """
    z = complex(z)
    p = cmath.exp(-_base(qv, mu))
    acc = 1 + 0j
    pl = 1 + 0j
    for _ in range(factors):
        acc *= (1 - pl * p) * (1 + pl * p * z) * (1 + pl / z)
        pl *= p
        if abs(pl) < 1e-300:
            break
    return acc


def log_abs_theta_real(base_abs_log: float, x: float) -> float:
    """``log Theta_b(x)`` for real ``b = exp(base_abs_log) > 1`` and ``x > 0``."""
    lg, _, _ = _kernels.theta_log(complex(base_abs_log), complex(x), 1e-16, 64)
    return lg.real


def theta_quasi_periodicity(qv: QValue, mu, k: int, z) -> float:
    """Relative residual of ``Theta(p**k z) = p**(k(k-1)/2) z**k Theta(z)``, ``p = q**(1/mu)``."""
    mu = as_fraction(mu)
    z = complex(z)
    lhs = theta_eval(qv, qv.power(Fraction(k) / mu) * z, mu)
    rhs = qv.power(Fraction(k * (k - 1), 2) / mu) * z**k * theta_eval(qv, z, mu)
    if rhs == 0:
        raise NearZeroTheta("z lies on the zero spiral")
    return abs(lhs - rhs) / abs(rhs)


def lq_eval(qv: QValue, z, config: ThetaEvalConfig = DEFAULT_CONFIG) -> complex:
    """Logarithmic derivative ``z Theta_q'(z) / Theta_q(z)``, so ``l_q(qz) = l_q(z) + 1``."""
    z = complex(z)
    lg, lq, rel = _kernels.theta_log(qv.log_q, z, config.tol, config.max_terms)
    if rel < NEAR_ZERO_REL:
        raise NearZeroTheta(f"Theta_q vanishes near z={z}")
    return lq


def lambda_c_eval(qv: QValue, c, z) -> complex:
    """``Theta_q(z) / Theta_q(z/c)``, which satisfies ``Lambda_c(qz) = c Lambda_c(z)``."""
    c = complex(c)
    z = complex(z)
    if c == 0:
        raise ValueError("c must be nonzero")
    num, rn = theta_log(qv, z)
    den, rd = theta_log(qv, z / c)
    if rd < NEAR_ZERO_REL:
        raise NearZeroTheta(f"Theta_q vanishes near z/c={z / c}")
    if rn == 0:
        return 0j
    return cmath.exp(num - den)


def on_spiral_distance(z, qv: QValue, step) -> float:
    """Relative distance from ``z`` to the spiral ``-q**(step Z)``."""
    z = complex(z)
    step = float(step)
    k0 = round(math.log(abs(z)) / (step * qv.abs_log))
    return min(abs(z + cmath.exp(k * step * qv.log_q)) / abs(cmath.exp(k * step * qv.log_q))
               for k in (k0 - 1, k0, k0 + 1))


def comparison_constant(qv: QValue, mu, K: int, eps: float, n_radii: int = 200,
                        n_angles: int = 200) -> float:
    """Grid minimum of ``|Theta_{q^(1/mu)}(z)| / Theta_{|q|^(1/mu)}(|z|)``.

    The grid covers ``1 <= |z| <= |q|**(1/mu)`` minus the disks
    ``|z + q**l| < eps |q**l|``, ``l`` in ``Z/K``.  The ratio is invariant under
    ``z -> q**(1/mu) z``, so this annulus sees every value.
    """
    mu = as_fraction(mu)
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if n_radii * n_angles < 10_000:
        raise ValueError("the grid needs at least 10^4 points")
    top = qv.abs_log / float(mu)
    logs = np.linspace(0.0, top, n_radii)
    angles = np.linspace(-math.pi, math.pi, n_angles, endpoint=False)
    zs = (np.exp(logs)[:, None] * np.exp(1j * angles)[None, :]).ravel()
    keep = np.ones(zs.shape, dtype=bool)
    # spiral points -q^(l/K) with modulus within reach of the annulus
    kmin = math.floor(-1 - K * math.log(1 + eps) / qv.abs_log)
    kmax = math.ceil(K * top / qv.abs_log + 1 + K * math.log(1 + eps) / qv.abs_log)
    for k in range(kmin, kmax + 1):
        c = cmath.exp(k * qv.log_q / K)
        keep &= np.abs(zs + c) >= eps * abs(c)
    zs = zs[keep]
    if zs.size == 0:
        raise EmptyDomain(f"eps={eps} removes the whole annulus")
    num, _ = theta_log_many(qv, zs, mu)
    den, _ = theta_log_many(qv.modulus(), np.abs(zs).astype(complex), mu)
    return float(np.exp((num.real - den.real).min()))
