"""Command-line front end.

Each invocation runs one job described by a JSON file and writes
``report.json`` (and ``points.csv`` for pointwise commands) to ``--out``.

Exit codes: 0 success, 1 verification failure, 2 parse or input error,
3 no positive slope, 4 bad direction, 5 internal error.
"""

from __future__ import annotations

import argparse
import cmath
import csv
import json
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .errors import (
    BadDirection,
    NearPole,
    NearZeroTheta,
    NoPositiveSlope,
    OperatorSyntaxError,
    ResonantSpectrum,
)
from .laplace import (
    BorelLaplaceSum,
    ShiftedSpiral,
    SpiralFunction,
    TimesZeta,
    asymptotic_check,
    asymptotic_points,
    pole_scan,
    q_laplace_eval,
)
from .operators import QDiffOperator, newton_polygon, parse_operator, summation_plan
from .scalars import QValue, as_fraction
from .series import FormalSeries, q_borel, solve_formal
from .systems import two_slope_gauge, fundamental_solution
from .theta import theta_eval, theta_product, theta_quasi_periodicity

log = logging.getLogger("qborel")

EXIT_OK, EXIT_VERIFY, EXIT_PARSE, EXIT_PLAN, EXIT_DIRECTION, EXIT_INTERNAL = range(6)
COMMANDS = ("analyze", "solve", "sum", "verify", "theta", "fundamental")


class SpecError(ValueError):
    """Malformed or incomplete job description."""


def _cplx(x) -> complex:
    if isinstance(x, dict):
        return complex(float(x["re"]), float(x.get("im", 0.0)))
    if isinstance(x, str):
        return complex(x.replace(" ", "").replace("i", "j"))
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    return complex(x)


def _enc(z) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def _clean(x):
    """Make a value JSON-safe: non-finite floats become None."""
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, complex):
        return _clean(_enc(x))
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return _clean(x.item())
    return x


def _require(spec: dict, *keys):
    missing = [k for k in keys if k not in spec]
    if missing:
        raise SpecError(f"missing field(s) for '{spec.get('command')}': {', '.join(missing)}")


def _qvalue(spec) -> QValue:
    q = _cplx(spec.get("q", 2))
    if abs(q) <= 1:
        raise SpecError("|q| must exceed 1")
    return QValue.from_q(q)


def _operator(spec) -> QDiffOperator:
    op = spec["operator"]
    if isinstance(op, str):
        return parse_operator(op)
    try:
        return QDiffOperator.from_json(op)
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"bad operator JSON: {exc}") from exc


def _rhs(spec) -> list:
    return [_cplx(c) for c in spec.get("rhs", [1])]


def _points(spec) -> list[complex]:
    pts = spec.get("points")
    if pts is None:
        raise SpecError("points are required")
    if isinstance(pts, dict):
        _require(pts, "annulus", "grid")
        r0, r1 = (float(r) for r in pts["annulus"])
        nr, na = (int(n) for n in pts["grid"])
        if not 0 < r0 < r1 or nr < 1 or na < 1:
            raise SpecError("annulus needs 0 < r0 < r1 and a positive grid")
        rs = np.exp(np.linspace(math.log(r0), math.log(r1), nr))
        phase = float(pts.get("phase", 0.0))
        ts = phase + np.linspace(-math.pi, math.pi, na, endpoint=False)
        return [complex(r * cmath.exp(1j * t)) for r in rs for t in ts]
    return [_cplx(p) for p in pts]


def _write_csv(path: Path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z_re", "z_im", "S_re", "S_im", "residual_abs", "flag"])
        for z, s, res, flag in rows:
            w.writerow([repr(z.real), repr(z.imag),
                        repr(s.real) if s is not None else "nan",
                        repr(s.imag) if s is not None else "nan",
                        repr(res) if res is not None else "nan", flag])


def _pointwise_residual(P: QDiffOperator, S, a_num, qv: QValue, z: complex) -> float:
    acc = -sum(c * z**j for j, c in enumerate(a_num))
    for shift, coeffs in P.bind(qv).items():
        acc += sum(c * z**j for j, c in enumerate(coeffs)) * S(z * cmath.exp(float(shift) * qv.log_q))
    return abs(acc)


# --------------------------------------------------------------------------
# commands


def _polygon_json(P: QDiffOperator) -> dict:
    poly = newton_polygon(P)
    edges = []
    for (x0, y0), (x1, y1) in zip(poly.vertices, poly.vertices[1:]):
        edges.append({"slope": str(Fraction(y1 - y0) / Fraction(x1 - x0)),
                      "multiplicity": str(Fraction(x1 - x0))})
    return {"vertices": [[str(x), str(y)] for x, y in poly.vertices], "edges": edges}


def run_analyze(spec, args) -> tuple[dict, list | None]:
    _require(spec, "operator")
    P = _operator(spec)
    qv = _qvalue(spec)
    report = {"operator": P.to_dsl(), "newton_polygon": _polygon_json(P)}
    try:
        report["plan"] = summation_plan(P, qv).to_json()
    except NoPositiveSlope:
        # the polygon is still worth reporting; the exit code carries the verdict
        report["plan"] = None
    return report, None


def run_solve(spec, args):
    _require(spec, "operator")
    P = _operator(spec)
    qv = _qvalue(spec)
    N = int(spec.get("N", 32))
    h = solve_formal(P, _rhs(spec), N, qv)
    coeffs = []
    for c in h.coeffs:
        la = c.log_abs(qv) if not c.is_zero() else -math.inf
        entry = {"log_abs": la, "terms": len(c)}
        if la < 700:
            entry["value"] = _enc(c.bind(qv))
        coeffs.append(entry)
    return {"operator": P.to_dsl(), "order": N, "coefficients": coeffs}, None


def run_sum(spec, args):
    _require(spec, "operator", "lambda", "points")
    P = _operator(spec)
    qv = _qvalue(spec)
    lam = _cplx(spec["lambda"])
    a = _rhs(spec)
    pts = _points(spec)
    plan = summation_plan(P, qv)
    S = BorelLaplaceSum(P, a, plan, lam, int(spec.get("N", 64)),
                        prefactor=not args.debug_drop_prefactor)
    a_num = [complex(c) for c in a]
    rows = []
    worst = 0.0
    n_pole = 0
    for z in pts:
        try:
            val = S(z)
            res = _pointwise_residual(P, S, a_num, qv, z)
            worst = max(worst, res)
            rows.append((z, val, res, "ok"))
        except (NearPole, NearZeroTheta):
            n_pole += 1
            rows.append((z, None, None, "near_pole"))
    report = {
        "operator": P.to_dsl(),
        "lambda": _enc(lam),
        "plan": plan.to_json(),
        "points": len(pts),
        "near_pole_points": n_pole,
        "max_residual": worst,
        "tolerance": args.tol,
        "residual_ok": worst <= args.tol,
    }
    if spec.get("asymptotic", True):
        mu = max(plan.slopes)
        zs = asymptotic_points(qv, lam, plan.n, mu)
        try:
            rep = asymptotic_check([(z, S(z)) for z in zs], S.h, mu, plan.n, lam, qv)
            report["asymptotic"] = {"L": rep.L, "M": rep.M, "fit_residual": rep.fit_residual,
                                    "ok": rep.ok}
        except Exception as exc:  # diagnostics must not sink the job
            report["asymptotic"] = {"error": f"{type(exc).__name__}: {exc}"}
    if "poles" in spec:
        pspec = spec["poles"]
        scan = pole_scan(S, lam, plan.n, qv, tuple(pspec.get("annulus", (0.1, 10.0))),
                         tuple(pspec.get("grid", (60, 72))))
        report["poles"] = {
            "matched": [{"z": _enc(p.z), "order": p.order, "distance": p.distance}
                        for p in scan.matched],
            "unmatched": [{"z": _enc(p.z), "order": p.order, "distance": p.distance}
                          for p in scan.unmatched],
        }
    return report, rows


def verify_battery(qv: QValue, drop_prefactor: bool = False, tol: float = 1e-10):
    """Identity checks: ``L(1) = 1``, ``L B (z**l) = z**l``, theta quasi-periodicity, shift rules."""
    checks = []
    rng = np.random.default_rng(12345)
    lam = cmath.exp(0.5j)

    def record(name, err, limit=tol):
        checks.append({"name": name, "error": float(err), "tolerance": limit,
                       "passed": bool(err <= limit)})

    zs = [complex(r * cmath.exp(1j * t)) for r, t in
          zip(np.exp(rng.uniform(-1.0, 1.0, 6)), rng.uniform(-math.pi, math.pi, 6))]
    for mu, K in ((1, 1), (Fraction(3, 2), 3), (3, 3), (2, 2)):
        one = SpiralFunction.constant(1.0, qv, lam, K)
        err = 0.0
        for z in zs:
            err = max(err, abs(q_laplace_eval(one, mu, z, prefactor=not drop_prefactor) - 1))
        record(f"laplace_of_one mu={mu} K={K}", err)
    for mu, K in ((1, 1), (Fraction(3, 2), 3)):
        err = 0.0
        for l in range(9):
            c = q_borel(FormalSeries.monomial(l, l), mu).coeffs[l].bind(qv)
            sf = SpiralFunction.from_function(lambda x, c=c, l=l: c * x**l, qv, lam, K)
            for z in zs[:3]:
                v = q_laplace_eval(sf, mu, z, prefactor=not drop_prefactor)
                err = max(err, abs(v - z**l) / abs(z**l))
        record(f"laplace_borel_monomials mu={mu} K={K}", err)
    err = 0.0
    for mu in (1, Fraction(3, 2), 3):
        for k in range(-5, 6):
            err = max(err, theta_quasi_periodicity(qv, mu, k, zs[k % len(zs)]))
    record("theta_quasi_periodicity", err)
    err = 0.0
    for z in zs:
        t = theta_eval(qv, z)
        err = max(err, abs(t - theta_product(qv, z)) / abs(t))
    record("theta_series_vs_product", err, 1e-12)
    # shift rules of the transform on the germ zeta/(1+zeta)
    g = SpiralFunction.from_function(lambda x: x / (1 + x), qv, lam, 1)
    e_shift = e_zeta = 0.0
    for z in zs:
        lhs = q_laplace_eval(ShiftedSpiral(g, 1), 1, z, prefactor=not drop_prefactor)
        rhs = q_laplace_eval(g, 1, qv.q * z, prefactor=not drop_prefactor)
        e_shift = max(e_shift, abs(lhs - rhs) / abs(rhs))
        lhs = q_laplace_eval(TimesZeta(g), 1, z, prefactor=not drop_prefactor)
        rhs = z * q_laplace_eval(g, 1, qv.q * z, prefactor=not drop_prefactor)
        e_zeta = max(e_zeta, abs(lhs - rhs) / abs(rhs))
    record("laplace_shift_rule", e_shift, 1e-8)
    record("laplace_zeta_rule", e_zeta, 1e-8)
    return checks


def run_verify(spec, args):
    qv = _qvalue(spec)
    checks = verify_battery(qv, args.debug_drop_prefactor, float(spec.get("tol", 1e-10)))
    report = {"q": _enc(qv.q), "checks": checks, "all_passed": all(c["passed"] for c in checks)}
    return report, None


def run_theta(spec, args):
    _require(spec, "points")
    qv = _qvalue(spec)
    mu = as_fraction(spec.get("mu", 1))
    rows = []
    for z in _points(spec):
        try:
            v = theta_eval(qv, z, mu)
            rows.append((z, v, 0.0, "ok"))
        except ValueError:
            rows.append((z, None, None, "undefined"))
    return {"q": _enc(qv.q), "mu": str(mu), "points": len(rows)}, rows


def run_fundamental(spec, args):
    _require(spec, "n1", "n2", "C1", "C2", "U", "lambda", "points")
    qv = _qvalue(spec)
    lam = _cplx(spec["lambda"])
    C1 = np.array([[_cplx(v) for v in row] for row in spec["C1"]])
    C2 = np.array([[_cplx(v) for v in row] for row in spec["C2"]])
    U = {int(p): np.array([[_cplx(v) for v in row] for row in M]) for p, M in spec["U"].items()}
    gauge = two_slope_gauge(int(spec["n1"]), int(spec["n2"]), C1, C2, U, qv, lam,
                            int(spec.get("N", 64)))
    Y = fundamental_solution(gauge.blocks(), gauge.full_gauge(), qv, lam)
    rows = []
    worst_sys = worst_block = 0.0
    for z in _points(spec):
        try:
            r_sys = Y.residual(gauge.system_matrix, z)
            r_blk = gauge.block_residual(qv, z)
            worst_sys, worst_block = max(worst_sys, r_sys), max(worst_block, r_blk)
            rows.append((z, complex(np.linalg.det(Y.gauge_eval(z))), r_sys, "ok"))
        except (NearPole, NearZeroTheta):
            rows.append((z, None, None, "near_pole"))
    report = {"lambda": _enc(lam), "K": int(spec["n2"]) - int(spec["n1"]),
              "max_system_residual": worst_sys, "max_block_residual": worst_block,
              "points": len(rows)}
    return report, rows


RUNNERS = {
    "analyze": run_analyze,
    "solve": run_solve,
    "sum": run_sum,
    "verify": run_verify,
    "theta": run_theta,
    "fundamental": run_fundamental,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qborel", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=COMMANDS,
                   help="overrides the command field of the spec")
    p.add_argument("--spec", type=Path, help="JSON job description")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--tol", type=float, default=1e-8, help="residual tolerance for 'sum'")
    p.add_argument("--debug-drop-prefactor", action="store_true",
                   help="omit the mu/K factor of the Laplace sum (self-test hook)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def run(spec: dict, args) -> int:
    command = args.command or spec.get("command")
    if command not in RUNNERS:
        raise SpecError(f"unknown command {command!r}")
    spec = dict(spec, command=command)
    report, rows = RUNNERS[command](spec, args)
    report = {"command": command, "version": __version__, "backend": BACKEND, **report}
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "report.json", "w") as fh:
        json.dump(_clean(report), fh, sort_keys=True, indent=2)
        fh.write("\n")
    if rows is not None:
        _write_csv(args.out / "points.csv", rows)
    if command == "verify" and not report["all_passed"]:
        return EXIT_VERIFY
    if command == "analyze" and report["plan"] is None:
        return EXIT_PLAN
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = {}
        if args.spec is not None:
            spec = json.loads(args.spec.read_text())
            if not isinstance(spec, dict):
                raise SpecError("the spec must be a JSON object")
        return run(spec, args)
    except (OperatorSyntaxError, SpecError, json.JSONDecodeError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except NoPositiveSlope as exc:
        log.error("%s", exc)
        return EXIT_PLAN
    except (BadDirection, ResonantSpectrum) as exc:
        log.error("%s", exc)
        return EXIT_DIRECTION
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.error("internal error: %s: %s", type(exc).__name__, exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
