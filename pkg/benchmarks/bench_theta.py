"""Time the compiled theta kernels against the pure-Python fallback.

Usage: ``python benchmarks/bench_theta.py [--points N] [--repeat R]``.
The end-to-end row runs a small summation in a subprocess per backend so
the backend switch happens at import, as it does for users.
"""

import argparse
import cmath
import math
import os
import subprocess
import sys
import timeit

import numpy as np

from qborel import _theta_py

try:
    from qborel import _theta_ext
except ImportError:
    _theta_ext = None

BASES = {"q=2": cmath.log(2.0), "q=1.5e^(i pi/7)": cmath.log(1.5) + 1j * math.pi / 7,
         "q=2, base q^(1/3)": cmath.log(2.0) / 3}

END_TO_END = """
import cmath, time
from qborel import BorelLaplaceSum, QValue, parse_operator, summation_plan
from qborel._kernels import BACKEND
qv = QValue.from_q(2.0)
P = parse_operator("z^4*s^4 + z*s^2 + s")
t = time.perf_counter()
S = BorelLaplaceSum(P, [1], summation_plan(P, qv), cmath.exp(0.7j))
for k in range(10):
    S(0.05 * (k + 1) * cmath.exp(0.3j * k))
print(BACKEND, time.perf_counter() - t)
"""


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=20_000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--skip-end-to-end", action="store_true")
    args = p.parse_args(argv)
    if _theta_ext is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    ws = np.exp(rng.uniform(-8, 8, args.points) + 1j * rng.uniform(-math.pi, math.pi, args.points))
    print(f"{'kernel':34s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, log_q in BASES.items():
        t_py = best_of(lambda: _theta_py.theta_log_many(log_q, ws), args.repeat)
        t_c = best_of(lambda: _theta_ext.theta_log_many(log_q, ws), args.repeat)
        print(f"{'theta_log_many ' + name:34s} {t_py:11.4f} {t_c:11.4f} {t_py / t_c:8.1f}")
    few = ws[:2000]
    t_py = best_of(lambda: [_theta_py.theta_log(BASES["q=2"], w) for w in few], args.repeat)
    t_c = best_of(lambda: [_theta_ext.theta_log(BASES["q=2"], w) for w in few], args.repeat)
    print(f"{'theta_log x2000 (scalar calls)':34s} {t_py:11.4f} {t_c:11.4f} {t_py / t_c:8.1f}")
    if not args.skip_end_to_end:
        times = {}
        for pure in ("1", ""):
            env = dict(os.environ, QBOREL_PURE_PYTHON=pure)
            out = subprocess.run([sys.executable, "-c", END_TO_END], env=env,
                                 capture_output=True, text=True, check=True)
            backend, secs = out.stdout.split()
            times[backend] = float(secs)
        t_py, t_c = times["python"], times["cython"]
        print(f"{'two-level sum, 10 points':34s} {t_py:11.4f} {t_c:11.4f} {t_py / t_c:8.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
