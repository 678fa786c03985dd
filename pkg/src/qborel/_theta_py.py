"""Pure-Python theta kernels, used when the compiled extension is unavailable.

Both kernels take the branch value ``log_q`` of the theta base directly, so a
base ``q**(1/mu)`` is passed as ``log_q / mu``.

Two evaluations of the reduced sum are available.  The direct one sums
``q**(-l(l+1)/2) w**l``; it cancels badly when ``|log q|`` is small.  The dual
one is its Poisson resummation

    Theta(w) = sqrt(pi/a) sum_m exp((b - 2 pi i m)**2 / (4a)),
    a = log(q)/2,  b = log(w) - a,

whose terms decay like ``exp(-pi**2 Re(1/a) m**2)``.  ``theta_log`` uses
whichever decays faster.
"""

import cmath
import math

import numpy as np


def theta_reduced(log_q, w, tol=1e-16, max_terms=64):
    """Sums for ``w`` already in the annulus ``1 <= |w| < |q|``.

    Returns ``(S0, S1, scale)`` with ``S0 = sum t_l``, ``S1 = sum l t_l`` and
    ``scale = sum |t_l|`` where ``t_l = q**(-l(l+1)/2) w**l``.
    """
    qinv = cmath.exp(-log_q)
    winv = 1.0 / w
    s0 = 1.0 + 0j
    s1 = 0j
    scale = 1.0
    run_max = 1.0
    tp = 1.0 + 0j  # t_l for l >= 0
    tm = 1.0 + 0j  # t_{-l}
    fp = qinv  # q**-(l+1)
    fm = 1.0 + 0j  # q**-l
    quiet = 0
    for l in range(1, max_terms + 1):
        tp = tp * w * fp
        fp = fp * qinv
        tm = tm * fm * winv
        fm = fm * qinv
        s0 += tp + tm
        s1 += l * (tp - tm)
        a, b = abs(tp), abs(tm)
        scale += a + b
        run_max = max(run_max, a, b)
        if a < tol * run_max and b < tol * run_max:
            quiet += 1
            if quiet >= 3:
                break
        else:
            quiet = 0
    return s0, s1, scale


def use_dual(log_q) -> bool:
    a = 0.5 * log_q
    return math.pi**2 * (1 / a).real > a.real


def theta_dual_reduced(log_q, w, tol=1e-16, max_terms=64):
    """Dual sum for reduced ``w``: ``(log Theta(w), w Theta'(w) / Theta(w), rel)``.

    ``rel = |sum| / sum |terms|``, as in the direct kernel.
    """
    a = 0.5 * log_q
    b = cmath.log(w) - a
    c = 0.25 / a
    bc = b * c
    mc = round(bc.imag / (2 * math.pi * c.real))
    d = b - 2j * math.pi * mc
    emax = d * d * c
    s0 = 1.0 + 0j
    s1 = 2 * d * c
    scale = 1.0
    run_max = 1.0
    quiet = 0
    for j in range(1, max_terms + 1):
        big = 0.0
        for m in (mc + j, mc - j):
            d = b - 2j * math.pi * m
            t = cmath.exp(d * d * c - emax)
            s0 += t
            s1 += t * 2 * d * c
            at = abs(t)
            scale += at
            big = max(big, at)
        run_max = max(run_max, big)
        if big < tol * run_max:
            quiet += 1
            if quiet >= 3:
                break
        else:
            quiet = 0
    if s0 == 0:
        return complex(-math.inf, 0.0), complex(math.nan, math.nan), 0.0
    lg = 0.5 * cmath.log(math.pi / a) + emax + cmath.log(s0)
    return lg, s1 / s0, abs(s0) / scale


def reduce_arg(log_q, w):
    """``(k, w0)`` with ``w = q**k w0`` and ``1 <= |w0| < |q|``."""
    k = math.floor(math.log(abs(w)) / log_q.real)
    w0 = w * cmath.exp(-k * log_q)
    a = abs(w0)
    if a < 1.0:
        k -= 1
        w0 = w0 * cmath.exp(log_q)
    elif a >= math.exp(log_q.real):
        k += 1
        w0 = w0 * cmath.exp(-log_q)
    return k, w0


def theta_log(log_q, w, tol=1e-16, max_terms=64):
    """``(log Theta(w), l_q(w), rel)`` for any nonzero ``w``.

    ``rel = |S0| / scale`` measures how close ``w`` sits to a zero; the log
    is ``-inf`` real part when the reduced sum vanishes exactly.
    """
    k, w0 = reduce_arg(log_q, w)
    if use_dual(log_q):
        lg0, ratio, rel = theta_dual_reduced(log_q, w0, tol, max_terms)
        if rel == 0:
            return lg0, ratio, rel
        return 0.5 * k * (k - 1) * log_q + k * cmath.log(w0) + lg0, k + ratio, rel
    s0, s1, scale = theta_reduced(log_q, w0, tol, max_terms)
    rel = abs(s0) / scale
    if s0 == 0:
        return complex(-math.inf, 0.0), complex(math.nan, math.nan), 0.0
    lg = 0.5 * k * (k - 1) * log_q + k * cmath.log(w0) + cmath.log(s0)
    return lg, k + s1 / s0, rel


def theta_log_many(log_q, ws, tol=1e-16, max_terms=64):
    """Vector of ``log Theta`` values and their ``rel`` closeness measures."""
    ws = np.asarray(ws, dtype=complex)
    out = np.empty(ws.shape, dtype=complex)
    rel = np.empty(ws.shape, dtype=float)
    for i, w in enumerate(ws.flat):
        lg, _, r = theta_log(log_q, complex(w), tol, max_terms)
        out.flat[i] = lg
        rel.flat[i] = r
    return out, rel
