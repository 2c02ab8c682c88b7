"""Command-line frontend: basis tables, cavity eigenvalues, magnetostatic
solves, multipole analysis, and control-point optimization.

Exit codes: 0 success, 2 validation error, 3 solver failure, 4 I/O error.
Errors appear as a single machine-parsable line on stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from fractions import Fraction
from importlib import resources

import numpy as np

from . import postprocess
from .errors import PointLocationError, SolverError, ValidationError
from .geometry import load_geometry
from .optimize import (
    DesignVector,
    Objective,
    minimize_bounded,
    worst_case_direct,
    worst_case_linear,
)
from .solve import PhysicalConstants, maxwell_eigs_2d, maxwell_eigs_3d, solve_poisson
from .spaces import couple_scalar_multipatch
from .splines import KnotVector, collocation

BUNDLED = ("line", "square", "disc", "annulus", "cube", "two_square")
_TOL_KEYS = ("kernel",)


def _parse_number(token: str) -> float:
    token = token.strip()
    if "/" in token:
        return float(Fraction(token))
    return float(token)


def _parse_floats(text: str) -> list[float]:
    return [_parse_number(t) for t in text.split(",") if t.strip()]


def _parse_ints(text: str, n: int) -> tuple[int, ...]:
    vals = [int(t) for t in text.split(",") if t.strip()]
    if len(vals) == 1:
        vals = vals * n
    if len(vals) != n:
        raise ValidationError(f"expected 1 or {n} comma-separated integers, got {text!r}")
    return tuple(vals)


def _parse_tols(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ValidationError(f"--tol expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        if key not in _TOL_KEYS:
            raise ValidationError(f"unknown tolerance key {key!r} (known: {', '.join(_TOL_KEYS)})")
        out[key] = float(val)
    return out


def _resolve_geometry(name_or_path: str):
    name = name_or_path.replace("-", "_")
    if name in BUNDLED:
        ref = resources.files("igaem").joinpath(f"geometries/{name}.json")
        with resources.as_file(ref) as path:
            return load_geometry(path)
    try:
        return load_geometry(name_or_path)
    except FileNotFoundError as exc:
        raise ValidationError(
            f"geometry {name_or_path!r} is neither bundled ({', '.join(BUNDLED)}) nor a readable file"
        ) from exc


@contextlib.contextmanager
def _deterministic(enabled: bool):
    if not enabled:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=1):
        yield


def _coeff_spec(text: str, npatches: int):
    vals = _parse_floats(text)
    if len(vals) == 1:
        return vals[0]
    if len(vals) != npatches:
        raise ValidationError(f"expected 1 or {npatches} coefficients, got {len(vals)}")
    return vals


def cmd_basis(args) -> int:
    knots = _parse_floats(args.knots)
    kv = KnotVector(np.asarray(knots), args.degree)
    xs = np.linspace(0.0, 1.0, args.samples)
    table = collocation(kv, xs, 0)[0]
    header = ["xi"] + [f"B{i + 1}" for i in range(kv.n)]
    rows = [[x, *table[q]] for q, x in enumerate(xs)]
    postprocess.write_csv(args.out, header, rows)
    return 0


def cmd_eigs(args) -> int:
    geometry = _resolve_geometry(args.geometry)
    nd = 3 if args.formulation == "curl3d" else 2
    degrees = _parse_ints(args.degree, nd)
    refine = _parse_ints(args.refine, nd)
    tols = _parse_tols(args.tol)
    kw = {}
    if "kernel" in tols:
        kw["tau_kernel"] = tols["kernel"]
    constants = length = None
    if args.length_scale is not None:
        constants = PhysicalConstants()
        length = args.length_scale
    with _deterministic(args.deterministic):
        if args.formulation == "te2d":
            res = maxwell_eigs_2d(geometry, "te", degrees, refine, args.count,
                                  constants, length, **kw)
        elif args.formulation == "tm2d":
            res = maxwell_eigs_2d(geometry, "tm", degrees, refine, args.count,
                                  constants, length, **kw)
        elif args.formulation == "curl3d":
            res = maxwell_eigs_3d(geometry, degrees, refine, args.count,
                                  constants, length, **kw)
        else:
            raise ValidationError("formulation must be te2d, tm2d or curl3d")
    header = ["index", "eigenvalue", "residual"]
    rows = []
    for i, (lam, r) in enumerate(zip(res.eigenvalues, res.residuals)):
        rows.append([i, lam, r])
    if res.frequencies is not None:
        header.append("frequency_hz")
        for row, f in zip(rows, res.frequencies):
            row.append(f)
    postprocess.write_csv(args.out, header, rows)
    print(f"eigenvalues written to {args.out} (kernel modes excluded: {res.kernel_count})")
    return 0


def cmd_poisson(args) -> int:
    geometry = _resolve_geometry(args.geometry)
    degrees = _parse_ints(args.degree, geometry.ndim)
    refine = _parse_ints(args.refine, geometry.ndim)
    nu = _coeff_spec(args.nu, len(geometry.patches))
    source = _coeff_spec(args.source, len(geometry.patches))
    if args.dirichlet.startswith("all"):
        value = 0.0
        if ":" in args.dirichlet:
            value = _parse_number(args.dirichlet.split(":", 1)[1])
        dirichlet = {"all": value}
    else:
        raise ValidationError("--dirichlet supports 'all' or 'all:<value>'")
    with _deterministic(args.deterministic):
        mp_space = couple_scalar_multipatch(geometry, degrees, refine)
        sol = solve_poisson(mp_space, nu, source, dirichlet)
        written = postprocess.export(sol, args.format, args.out, samples=args.samples_per_patch)
    print(f"solution written to {', '.join(written)}")
    return 0


def _analytic_field(spec: str):
    name, _, value = spec.partition(":")
    try:
        strength = float(value) if value else 1.0
    except ValueError as exc:
        raise ValidationError(f"bad analytic field strength {value!r}") from exc
    if name == "dipole":
        return lambda pts: np.column_stack([np.zeros(len(pts)), np.full(len(pts), strength)])
    if name == "quadrupole":
        return lambda pts: strength * np.column_stack([pts[:, 1], pts[:, 0]])
    raise ValidationError("analytic field must be dipole[:B0] or quadrupole[:g]")


def cmd_multipole(args) -> int:
    if (args.analytic is None) == (args.geometry is None):
        raise ValidationError("provide exactly one of --analytic or --geometry")
    with _deterministic(args.deterministic):
        if args.analytic:
            field = _analytic_field(args.analytic)
        else:
            geometry = _resolve_geometry(args.geometry)
            degrees = _parse_ints(args.degree, geometry.ndim)
            refine = _parse_ints(args.refine, geometry.ndim)
            nu = _coeff_spec(args.nu, len(geometry.patches))
            source = _coeff_spec(args.source, len(geometry.patches))
            mp_space = couple_scalar_multipatch(geometry, degrees, refine)
            sol = solve_poisson(mp_space, nu, source, {"all": 0.0})
            field = postprocess.FieldSampler(sol)
        mset = postprocess.multipole_coeffs(field, args.r0, args.order,
                                            center=tuple(_parse_floats(args.center)))
        g = postprocess.quadrupole_gradient(mset) if args.order >= 2 else float("nan")
    header = ["n", "B_n"]
    rows = [[n + 1, c] for n, c in enumerate(mset.coeffs)]
    postprocess.write_csv(args.out, header, rows)
    print(f"multipoles written to {args.out}; quadrupole gradient g={g:.12g}")
    return 0


def _load_design(path, geometry) -> DesignVector:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = set(data) - {"entries"}
    if unknown:
        raise ValidationError(f"unknown design keys: {sorted(unknown)}")
    raw = []
    for e in data["entries"]:
        bad = set(e) - {"patch", "index", "axis", "lo", "hi"}
        if bad:
            raise ValidationError(f"unknown design entry keys: {sorted(bad)}")
        raw.append((int(e["patch"]), int(e["index"]), e["axis"], float(e["lo"]), float(e["hi"])))
    return DesignVector.from_geometry(geometry, raw)


def _objective_by_name(name: str, geometry, degrees, refine):
    if name == "quadratic":
        return lambda mp: float(
            sum(np.sum((p.control_points - 0.25) ** 2) for p in mp.patches)
        )
    if name == "tm-lambda1":
        def run(mp):
            res = maxwell_eigs_2d(mp, "tm", degrees, refine, count=1)
            return float(res.eigenvalues[0])
        return run
    raise ValidationError("objective must be 'quadratic' or 'tm-lambda1'")


def cmd_optimize(args) -> int:
    geometry = _resolve_geometry(args.geometry)
    degrees = _parse_ints(args.degree, geometry.ndim)
    refine = _parse_ints(args.refine, geometry.ndim)
    design = _load_design(args.design, geometry)
    evaluator = _objective_by_name(args.objective, geometry, degrees, refine)
    obj = Objective(geometry, design, evaluator)
    with _deterministic(args.deterministic):
        if args.worst_case is not None:
            wcs_l = worst_case_linear(obj, design.x, args.worst_case)
            wcs_d, x_star = worst_case_direct(obj, design.x, args.worst_case)
            header = ["s", "wcs_linear", "wcs_direct"] + [f"argmax_{i}" for i in range(len(x_star))]
            postprocess.write_csv(args.out, header, [[args.worst_case, wcs_l, wcs_d, *x_star]])
            print(f"worst case written to {args.out}")
            return 0
        x_best, f_best, trace = minimize_bounded(
            obj, design.x, design.bounds, {"maxiter": args.maxiter}
        )
    header = ["iteration"] + [f"x{i}" for i in range(len(design.x))] + ["f"]
    rows = [[k, *x, f] for k, (x, f) in enumerate(trace)]
    postprocess.write_csv(args.out, header, rows)
    if args.geometry_out:
        from .geometry import save_geometry

        save_geometry(design.apply(geometry, x_best), args.geometry_out)
    print(f"optimum f={f_best:.12g} after {len(trace)} evaluations")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="igaem", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--deterministic", action="store_true",
                       help="single-threaded, bitwise-reproducible run")
        p.add_argument("--tol", action="append", metavar="KEY=VALUE",
                       help="tolerance override (known: kernel)")

    b = sub.add_parser("basis", help="tabulate a univariate basis to CSV")
    b.add_argument("--knots", required=True, help="comma list; fractions like 1/3 allowed")
    b.add_argument("--degree", type=int, required=True)
    b.add_argument("--samples", type=int, default=201)
    b.add_argument("--out", required=True)
    common(b)
    b.set_defaults(func=cmd_basis)

    e = sub.add_parser("eigs", help="cavity eigenvalues")
    e.add_argument("--geometry", required=True)
    e.add_argument("--formulation", required=True, choices=["te2d", "tm2d", "curl3d"])
    e.add_argument("--degree", default="2")
    e.add_argument("--refine", default="4")
    e.add_argument("--count", type=int, default=5)
    e.add_argument("--length-scale", type=float, default=None,
                   help="physical size of one geometry unit in metres; enables frequencies")
    e.add_argument("--out", required=True)
    common(e)
    e.set_defaults(func=cmd_eigs)

    p = sub.add_parser("poisson", help="scalar magnetostatic solve")
    p.add_argument("--geometry", required=True)
    p.add_argument("--degree", default="2")
    p.add_argument("--refine", default="4")
    p.add_argument("--nu", default="1.0", help="scalar or one value per patch")
    p.add_argument("--source", default="1.0", help="scalar or one value per patch")
    p.add_argument("--dirichlet", default="all", help="'all' or 'all:<value>'")
    p.add_argument("--format", default="csv", choices=["csv", "vtk"])
    p.add_argument("--samples-per-patch", type=int, default=8)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_poisson)

    m = sub.add_parser("multipole", help="multipole coefficients on a circle")
    m.add_argument("--analytic", default=None, help="dipole[:B0] or quadrupole[:g]")
    m.add_argument("--geometry", default=None)
    m.add_argument("--degree", default="2")
    m.add_argument("--refine", default="4")
    m.add_argument("--nu", default="1.0")
    m.add_argument("--source", default="1.0")
    m.add_argument("--r0", type=float, required=True)
    m.add_argument("--order", type=int, default=6)
    m.add_argument("--center", default="0,0")
    m.add_argument("--out", required=True)
    common(m)
    m.set_defaults(func=cmd_multipole)

    o = sub.add_parser("optimize", help="bounded control-point optimization")
    o.add_argument("--geometry", required=True)
    o.add_argument("--design", required=True, help="JSON design-vector file")
    o.add_argument("--objective", default="tm-lambda1")
    o.add_argument("--degree", default="2")
    o.add_argument("--refine", default="2")
    o.add_argument("--maxiter", type=int, default=200)
    o.add_argument("--worst-case", type=float, default=None, metavar="S",
                   help="skip descent; report worst-case estimates for |dx| <= S")
    o.add_argument("--out", required=True)
    o.add_argument("--geometry-out", default=None)
    common(o)
    o.set_defaults(func=cmd_optimize)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ValidationError, PointLocationError) as exc:
        _print_error(2, "validation", exc)
        return 2
    except SolverError as exc:
        _print_error(3, "solver", exc)
        return 3
    except OSError as exc:
        _print_error(4, "io", exc)
        return 4


def _print_error(code: int, kind: str, exc: Exception) -> None:
    msg = " ".join(str(exc).split())
    print(f"error:{code}:{kind}: {msg}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
