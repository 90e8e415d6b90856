"""Command-line surface: simulation batches, verification suites, and
figure/CSV emission.

Exit codes: 0 all checks passed, 1 a verification failed, 2 bad usage or
configuration.  Every command is deterministic under a fixed seed; numbers
are serialized with 17 significant digits.  BILLIARDS_THREADS caps the
worker count for trajectory batches.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__, curve as curve_mod, elliptic, ndim, spiral, svgplot
from .errors import ConstructionError, ConvexityFailure, DomainError, ReplayFailure
from .spiral import SpiralParams, SpiralTrajectory

SCHEMA_VERSION = 1


def _g17(x: float) -> str:
    return f"{float(x):.17g}"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BILLIARDS_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class RunReport:
    command: str
    config: dict
    passed: bool
    checks: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    schema_version: int = SCHEMA_VERSION

    def dump(self, out: Optional[str]) -> None:
        text = json.dumps(asdict(self), indent=2, default=float) + "\n"
        if out:
            Path(out).write_text(text)
        else:
            sys.stdout.write(text)


def _fail(msg: str) -> "SystemExit":
    print(f"error: {msg}", file=sys.stderr)
    return SystemExit(2)


# ---------------------------------------------------------------------------
# elliptic
# ---------------------------------------------------------------------------

def _one_trajectory(args):
    cone, seed, index = args
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))
    log = elliptic.run_random(cone, rng)
    pair0 = log.integrals[0]
    th = log.thetas()
    d1, d2 = log.integral_drift()
    if pair0.I2 > 0.0:
        bound = elliptic.reflection_bound(cone, pair0.I1, pair0.I2)
    else:
        bound = -1
    return {
        "index": index,
        "seed": seed,
        "c1": pair0.I1,
        "c2": pair0.I2,
        "reflections": log.reflection_count,
        "bound": bound,
        "max_theta": float(th.max()) if th.size else 0.0,
        "sum_theta": float(th.sum()),
        "drift_i1": d1,
        "drift_i2": d2,
    }


def cmd_elliptic_simulate(args) -> int:
    if not args.semi_a > args.semi_b > 0:
        raise _fail(f"need --semi-a > --semi-b > 0, got {args.semi_a}, {args.semi_b}")
    cone = elliptic.EllipticCone(args.semi_a, args.semi_b)
    t0 = time.monotonic()
    jobs = [(cone, args.seed, i) for i in range(args.count)]
    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_one_trajectory, jobs))
    else:
        rows = [_one_trajectory(j) for j in jobs]

    violations = [r for r in rows if r["bound"] >= 0 and r["reflections"] > r["bound"]]
    bad_sum = [r for r in rows if r["sum_theta"] >= math.pi]
    max_drift = max(max(r["drift_i1"], r["drift_i2"]) for r in rows)

    if args.out:
        cols = ["index", "seed", "c1", "c2", "reflections", "bound",
                "max_theta", "sum_theta", "drift_i1", "drift_i2"]
        if args.format == "csv":
            lines = [",".join(cols)]
            for r in rows:
                lines.append(",".join(
                    str(r[c]) if isinstance(r[c], int) else _g17(r[c]) for c in cols
                ))
            Path(args.out).write_text("\n".join(lines) + "\n")
        else:
            Path(args.out).write_text(json.dumps(rows, indent=1, default=float) + "\n")

    report = RunReport(
        command="elliptic simulate",
        config={"semi_a": args.semi_a, "semi_b": args.semi_b, "count": args.count,
                "seed": args.seed, "out": args.out, "format": args.format},
        passed=not violations and not bad_sum,
        checks={
            "bound_violations": len(violations),
            "sum_theta_ge_pi": len(bad_sum),
        },
        measured={"max_integral_drift": max_drift,
                  "trajectories": len(rows)},
        wall_time_s=time.monotonic() - t0,
    )
    report.dump(args.report)
    return 0 if report.passed else 1


def cmd_elliptic_bound(args) -> int:
    if not args.semi_a > args.semi_b > 0:
        raise _fail(f"need --semi-a > --semi-b > 0, got {args.semi_a}, {args.semi_b}")
    if args.c1 <= 0 or args.c2 <= 0:
        raise _fail("need --c1 > 0 and --c2 > 0")
    cone = elliptic.EllipticCone(args.semi_a, args.semi_b)
    angle = elliptic.min_vertex_angle(cone, args.c1, args.c2)
    bound = elliptic.reflection_bound(cone, args.c1, args.c2)
    print(f"min vertex angle: {_g17(angle)} rad")
    print(f"reflection bound N: {bound}")
    return 0


# ---------------------------------------------------------------------------
# spiral
# ---------------------------------------------------------------------------

def cmd_spiral_verify(args) -> int:
    try:
        params = SpiralParams(a=args.a)
    except DomainError as exc:
        raise _fail(str(exc))
    t0 = time.monotonic()
    kmax = args.kmax
    traj = SpiralTrajectory(params.a, kmax=kmax + 1)
    ks = np.unique(np.concatenate([
        np.arange(traj.k0, min(traj.k0 + 64, kmax)),
        np.geomspace(max(traj.k0, 1), kmax - 1, 256).astype(int),
    ]))
    ks = ks[(ks >= traj.k0) & (ks < kmax)]

    first_fail = None
    worst = {"dist": 0.0, "equal_angles": 0.0, "alpha_rec": 0.0}
    for k in ks:
        k = int(k)
        dist_dev = abs(traj.verify_distance(k))
        worst["dist"] = max(worst["dist"], dist_dev)
        # the residual floor scales like eps |tan(a - S_k)| when t_k blows
        # up near the admissibility boundary; the flat tol binds elsewhere
        tol_eff = max(args.tol, 1e-13 * abs(math.tan(traj.tilt(k))))
        if dist_dev > tol_eff and first_fail is None:
            first_fail = ("dist", k)
        if k > traj.k0:
            al, be = traj.verify_equal_angles(k)
            dev = abs(al - be)
            worst["equal_angles"] = max(worst["equal_angles"], dev)
            if dev > 1e-11 and first_fail is None:
                first_fail = ("equal_angles", k)
        if k + 1 < kmax:
            al = float(traj.alpha_closed(k))
            al_next = float(traj.alpha_closed(k + 1))
            th = float(spiral.theta(k))
            dev = abs(al_next - (al - th))
            worst["alpha_rec"] = max(worst["alpha_rec"], dev)
            if dev > 1e-11 and first_fail is None:
                first_fail = ("alpha_recurrence", k)

    total = traj.total_length()
    length_infinite = math.isinf(total)
    length_dev = None
    if not length_infinite:
        k_hi = min(kmax - 1, traj.table.kmax - 1)
        partial = float(traj.partial_length(traj.k0, k_hi))
        chords = float(np.sum(traj.chord_length(np.arange(traj.k0, k_hi + 1))))
        length_dev = abs(partial - chords)
        # scale-aware band: near the admissibility boundary the first chord
        # is ~1/margin long and the comparison floor is eps * total
        if length_dev > max(1e-8, 1e-12 * total) and first_fail is None:
            first_fail = ("length", k_hi)

    k_sig = min(kmax, 10_000)
    b_k = float(spiral.sigma(k_sig)) * k_sig**2.5
    sigma_ok = abs(b_k - 3.0 / 16.0) <= 0.01 * (3.0 / 16.0)
    if not sigma_ok and first_fail is None:
        first_fail = ("sigma_asymptotics", k_sig)

    report = RunReport(
        command="spiral verify",
        config={"a": args.a, "kmax": kmax, "tol": args.tol},
        passed=first_fail is None,
        checks={
            "first_failure": list(first_fail) if first_fail else None,
            "length_infinite": length_infinite,
        },
        measured={
            "k0": traj.k0,
            "worst_distance_deviation": worst["dist"],
            "worst_equal_angle_deviation": worst["equal_angles"],
            "worst_alpha_recurrence": worst["alpha_rec"],
            "partial_vs_chord_sum": length_dev,
            "total_length": None if length_infinite else total,
            "sigma_b_at_k": {"k": k_sig, "b": b_k},
        },
        wall_time_s=time.monotonic() - t0,
    )
    report.dump(args.report)
    if first_fail is not None:
        print(f"FAIL at k={first_fail[1]}: {first_fail[0]}", file=sys.stderr)
        return 1
    return 0


def cmd_spiral_vertices(args) -> int:
    try:
        params = SpiralParams(a=args.a)
    except DomainError as exc:
        raise _fail(str(exc))
    traj = SpiralTrajectory(params.a, kmax=args.kmax + 1)
    ks = np.arange(traj.k0, args.kmax + 1)
    pts = traj.vertex(ks)
    rows = [{"k": int(k), "x1": p[0], "x2": p[1], "x3": p[2]} for k, p in zip(ks, pts)]
    text = (
        "\n".join(["k,x1,x2,x3"] + [f"{r['k']},{_g17(r['x1'])},{_g17(r['x2'])},{_g17(r['x3'])}" for r in rows])
        + "\n"
        if args.format == "csv"
        else json.dumps(rows, indent=1, default=float) + "\n"
    )
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# curve
# ---------------------------------------------------------------------------

def _build_curve_from_args(args):
    params = SpiralParams(a=args.a)
    return curve_mod.build_curve(params, kmax=args.kmax, k1_min=args.k1_min)


def _curve_table(curve, grid: int) -> dict:
    xs = np.concatenate([
        np.linspace(-math.pi + 1e-9, 0.0, grid // 4),
        np.geomspace(1e-6, 1.0, grid // 2),
        np.linspace(1.0 + 1e-9, math.pi, grid // 4),
    ])
    r, r1, r2 = curve.polar(xs)
    kap = curve.curvature(xs)
    return {
        "schema_version": SCHEMA_VERSION,
        "k1": curve.k1,
        "kmax": curve.kmax,
        "xi": xs.tolist(),
        "rho": np.asarray(r).tolist(),
        "drho": np.asarray(r1).tolist(),
        "d2rho": np.asarray(r2).tolist(),
        "kappa": np.asarray(kap).tolist(),
    }


def _curve_svg(curve) -> str:
    # main panel: gamma vs the unit circle with q_k markers
    main = svgplot.SvgCanvas(560, 560, (-1.25, 1.25), (-1.25, 1.25))
    ang = np.linspace(-math.pi, math.pi, 2048)
    main.polyline(np.stack([np.cos(ang), np.sin(ang)], axis=-1), stroke="#999999", dashed=True)
    r = np.asarray(curve.polar(ang)[0])
    main.polyline(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1), stroke="#1f77b4")
    for k in range(max(2, curve.k1 - 3), min(curve.kmax, 40)):
        x = float(spiral.xi(k))
        rho_k = float(curve.polar(x)[0])
        main.circle_marker(rho_k * math.cos(x), rho_k * math.sin(x), r=2.0)
    main.text(-1.2, 1.15, "section curve vs unit circle", size=14)

    # zoom panel: deviation rho - 1 near xi = 0, log-x
    zoom = svgplot.SvgCanvas(560, 280, (math.log10(1e-3), 0.0), (-1.0, 1.0))
    xs = np.geomspace(1e-3, 1.0, 4000)
    dev = curve.deviation(xs)[0]
    mx = np.abs(dev).max()
    scale = mx if mx > 0 else 1.0
    zoom.polyline(np.stack([np.log10(xs), dev / scale], axis=-1), stroke="#1f77b4")
    zoom.polyline([(-3.0, 0.0), (0.0, 0.0)], stroke="#999999", dashed=True)
    zoom.text(-2.95, 0.85, f"(rho-1)/{scale:.3e} vs log10 xi", size=12)
    return svgplot.document([(main, (0.0, 0.0)), (zoom, (0.0, 570.0))], 560, 860)


def cmd_curve_build(args) -> int:
    t0 = time.monotonic()
    try:
        curve = _build_curve_from_args(args)
    except (ConstructionError, DomainError) as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "curve.json").write_text(json.dumps(_curve_table(curve, args.grid)) + "\n")
    (out_dir / "curve.svg").write_text(_curve_svg(curve))

    ks = np.unique(np.geomspace(max(curve.k1 + 1, 100), min(curve.kmax - 2, 50_000), 24).astype(int))
    kap_min = math.inf
    for k in ks:
        kap_min = min(kap_min, float(np.min(curve.curvature(curve.window_samples(int(k), 96)))))
    census = curve_mod.sign_change_census(curve, curve.k1 + 1, min(curve.k1 + 2000, curve.kmax - 2))

    report = RunReport(
        command="curve build",
        config={"a": args.a, "kmax": args.kmax, "k1_min": args.k1_min, "grid": args.grid,
                "out": str(out_dir)},
        passed=kap_min > 0.5,
        checks={"kappa_min_sampled": kap_min,
                "sign_changes_first_2000": census},
        measured={"k1": curve.k1, "bump_constant": curve_mod.bump_constant()},
        wall_time_s=time.monotonic() - t0,
    )
    report.dump(args.report)
    return 0 if report.passed else 1


def cmd_curve_export(args) -> int:
    try:
        curve = _build_curve_from_args(args)
    except (ConstructionError, DomainError) as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return 1
    table = _curve_table(curve, args.grid)
    if args.format == "csv":
        lines = ["xi,rho,drho,d2rho,kappa"]
        for i in range(len(table["xi"])):
            lines.append(",".join(_g17(table[c][i]) for c in ("xi", "rho", "drho", "d2rho", "kappa")))
        text = "\n".join(lines) + "\n"
    else:
        text = json.dumps(table) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_replay(args) -> int:
    t0 = time.monotonic()
    try:
        params = SpiralParams(a=args.a)
        curve = _build_curve_from_args(args)
    except (ConstructionError, DomainError) as exc:
        print(f"setup failed: {exc}", file=sys.stderr)
        return 2
    try:
        rep = curve_mod.replay(curve, params, steps=args.steps, strict=True)
    except ReplayFailure as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return 1
    report = RunReport(
        command="replay",
        config={"a": args.a, "steps": args.steps, "kmax": args.kmax, "k1_min": args.k1_min},
        passed=True,
        checks={
            "max_vertex_rel_error": rep.max_vertex_rel_error,
            "max_distance_sq_error": rep.max_distance_sq_error,
        },
        measured={
            "start_k": rep.start_k,
            "flight_length": rep.simulated_length,
            "flight_time_unit_speed": rep.simulated_length,
            "prefix_length": rep.prefix_length,
            "closed_form_length": rep.closed_form_length,
            "remaining_length": rep.tail_length,
            "total_length": rep.total_length,
        },
        wall_time_s=time.monotonic() - t0,
    )
    report.dump(args.report)
    return 0


def cmd_ndim_check(args) -> int:
    t0 = time.monotonic()
    try:
        curve = _build_curve_from_args(args)
        section = ndim.LiftedSection(curve, n=args.n)
    except (ConstructionError, DomainError) as exc:
        print(f"setup failed: {exc}", file=sys.stderr)
        return 2
    try:
        rep = ndim.negdef_check(section, grid_target=args.grid, strict=True)
    except ConvexityFailure as exc:
        print(f"convexity failed: {exc}", file=sys.stderr)
        return 1
    traj = SpiralTrajectory(args.a, kmax=max(curve.kmax, 10_000))
    emb = ndim.embedded_reflection_check(section, traj, count=args.steps)
    passed = emb.max_tangential_residual < 1e-10 and emb.max_perpendicular_residual == 0.0
    report = RunReport(
        command="ndim check",
        config={"n": args.n, "grid": args.grid, "a": args.a, "steps": args.steps},
        passed=passed,
        checks=rep.to_dict(),
        measured={
            "embedded_max_tangential_residual": emb.max_tangential_residual,
            "embedded_max_perpendicular_residual": emb.max_perpendicular_residual,
        },
        wall_time_s=time.monotonic() - t0,
    )
    report.dump(args.report)
    return 0 if passed else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("--report", default=None, help="write the JSON run report here")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--seed", type=int, default=20250801)
    p.add_argument("--tol", type=float, default=1e-10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="billiards",
        description="billiard dynamics inside cones: simulation and verification",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("elliptic", help="elliptic-cone billiard")
    se = pe.add_subparsers(dest="subcommand", required=True)
    sim = se.add_parser("simulate", help="random trajectory batch with bound checks")
    sim.add_argument("--semi-a", type=float, default=2.0)
    sim.add_argument("--semi-b", type=float, default=1.0)
    sim.add_argument("--count", type=int, default=1000)
    _add_common(sim)
    sim.set_defaults(func=cmd_elliptic_simulate)
    bnd = se.add_parser("bound", help="print the reflection bound for (c1, c2)")
    bnd.add_argument("--semi-a", type=float, default=2.0)
    bnd.add_argument("--semi-b", type=float, default=1.0)
    bnd.add_argument("--c1", type=float, required=True)
    bnd.add_argument("--c2", type=float, required=True)
    bnd.set_defaults(func=cmd_elliptic_bound)

    ps = sub.add_parser("spiral", help="closed-form trajectory checks")
    ss = ps.add_subparsers(dest="subcommand", required=True)
    ver = ss.add_parser("verify", help="distance/angle/length/sigma suites")
    ver.add_argument("--a", type=float, default=0.0)
    ver.add_argument("--kmax", type=int, default=100_000)
    _add_common(ver)
    ver.set_defaults(func=cmd_spiral_verify)
    vtx = ss.add_parser("vertices", help="emit the vertex table")
    vtx.add_argument("--a", type=float, default=0.0)
    vtx.add_argument("--kmax", type=int, default=1000)
    _add_common(vtx)
    vtx.set_defaults(func=cmd_spiral_vertices)

    pc = sub.add_parser("curve", help="build/export the C2 section curve")
    sc = pc.add_subparsers(dest="subcommand", required=True)
    bld = sc.add_parser("build", help="build the curve, write JSON table + SVG")
    bld.add_argument("--a", type=float, default=0.0)
    bld.add_argument("--kmax", type=int, default=130_000)
    bld.add_argument("--k1-min", type=int, default=9)
    bld.add_argument("--grid", type=int, default=2000)
    _add_common(bld)
    bld.set_defaults(func=cmd_curve_build)
    exp = sc.add_parser("export", help="emit the curve table")
    exp.add_argument("--a", type=float, default=0.0)
    exp.add_argument("--kmax", type=int, default=130_000)
    exp.add_argument("--k1-min", type=int, default=9)
    exp.add_argument("--grid", type=int, default=2000)
    _add_common(exp)
    exp.set_defaults(func=cmd_curve_export)

    pr = sub.add_parser("replay", help="simulate on the built cone vs closed form")
    pr.add_argument("--a", type=float, default=0.0)
    pr.add_argument("--steps", type=int, default=1000)
    pr.add_argument("--kmax", type=int, default=130_000)
    pr.add_argument("--k1-min", type=int, default=9)
    _add_common(pr)
    pr.set_defaults(func=cmd_replay)

    pn = sub.add_parser("ndim", help="R^n convexity and embedding checks")
    sn = pn.add_subparsers(dest="subcommand", required=True)
    chk = sn.add_parser("check", help="Hessian sweep + embedded reflections")
    chk.add_argument("--n", type=int, default=4)
    chk.add_argument("--grid", type=int, default=10_000)
    chk.add_argument("--a", type=float, default=0.0)
    chk.add_argument("--steps", type=int, default=1000)
    chk.add_argument("--kmax", type=int, default=130_000)
    chk.add_argument("--k1-min", type=int, default=9)
    _add_common(chk)
    chk.set_defaults(func=cmd_ndim_check)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
