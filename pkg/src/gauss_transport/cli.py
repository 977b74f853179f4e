"""Command-line driver: solve, verify, prelimit, analyze, levelsets.

One JSON config describes a problem (body, densities, grid, seeds); the
subcommands write CSV and JSON artifacts into an output directory.
Identical config and seeds produce byte-identical artifacts: timing is
printed to the console and never written into files.

Exit codes: 0 success, 2 operational error (bad input, solver abort),
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, discrete_ot, fields, geometry, pma, transport
from .errors import ConfigError, GaussTransportError

EXIT_OK = 0
EXIT_OPERATIONAL = 2
EXIT_VERIFICATION = 3

VERIFY_CHECKS = ("cov", "pushforward", "chart", "gaussmap", "roundtrip")
ANALYZE_CHECKS = ("maxprin", "sector", "sobolev", "iso")


def worker_cap() -> int:
    """Worker count cap from GTRANS_THREADS (all work is serial today)."""
    raw = os.environ.get("GTRANS_THREADS", "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"GTRANS_THREADS must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError("GTRANS_THREADS must be >= 1")
    return value


def build_body(spec: dict) -> geometry.ConvexBody:
    kind = spec.get("kind")
    n_theta = int(spec.get("n_theta", 256))
    if kind == "disk":
        body = geometry.body_from_disk(float(spec["radius"]), n_theta)
    elif kind == "ellipse":
        body = geometry.body_from_ellipse(float(spec["a"]), float(spec["b"]), n_theta)
    elif kind == "polygon":
        body = geometry.body_from_polygon(spec["vertices"], n_theta)
    elif kind == "smoothed_polygon":
        base = geometry.body_from_polygon(spec["vertices"], n_theta)
        body = geometry.rounded_body(base, float(spec.get("rounding", 0.1)))
    elif kind == "smoothed_square":
        body = geometry.smoothed_square(
            float(spec.get("side", 2.0)), float(spec.get("rounding", 0.1)), n_theta
        )
    else:
        raise ConfigError(f"unknown body kind {spec.get('kind')!r}")
    mode = spec.get("diff_mode")
    if mode is not None:
        if mode == geometry.SPECTRAL and body.diff_mode == geometry.FD:
            raise ConfigError("kinked bodies cannot use spectral differentiation")
        body = geometry.ConvexBody(h=body.h, diff_mode=mode)
    return body


class Problem:
    """Configured problem: body, densities, grid, seeds, output paths."""

    def __init__(self, config: dict):
        try:
            self.body = build_body(config["body"])
            self.rho0 = fields.field_from_spec(config["rho0"], body=self.body)
            self.rho1 = fields.field_from_spec(config["rho1"])
            grid = config.get("grid", {})
            self.n_r = int(grid.get("n_r", 256))
            self.n_theta = self.body.n_theta
            if grid.get("n_theta") is not None and int(grid["n_theta"]) != self.n_theta:
                raise ConfigError("grid n_theta must match the body resolution")
            self.r_stop = grid.get("r_stop")
            if self.r_stop is not None:
                self.r_stop = float(self.r_stop)
            self.seed = int(config.get("seed", 20240711))
            self.seeds = [int(s) for s in config.get("seeds", [1, 2, 3, 4, 5])]
            self.out_dir = Path(config.get("out_dir", "."))
            self.analysis = config.get("analysis", {})
            self.r_list = config.get("r_list")
        except KeyError as exc:
            raise ConfigError(f"missing config key: {exc}") from exc
        if self.rho1.ball_radius is None:
            raise ConfigError("rho1 must live on a ball")

    def solve(self) -> pma.SupportField:
        return pma.solve_2d(
            self.body, self.rho0, self.rho1, n_r=self.n_r, r_stop=self.r_stop
        )

    def field_path(self, out: Path) -> Path:
        return out / "h_field.csv"

    def load_or_solve(self, out: Path) -> tuple[pma.SupportField, dict]:
        """Reuse a stored H-field when present (its digest is not kept)."""
        path = self.field_path(out)
        if path.exists():
            return pma.load_field(path), {"source": "loaded", "file": path.name}
        fld = self.solve()
        return fld, {"source": "solved"}


def load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(value: float) -> str:
    return f"{value:.17g}"


# -- subcommands ---------------------------------------------------------


def cmd_solve(problem: Problem, out: Path, quiet: bool) -> int:
    t0 = time.perf_counter()
    fld = problem.solve()
    elapsed = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    pma.save_field(fld, problem.field_path(out))
    stats = fld.stats
    g = fld.H + geometry.periodic_second_derivative(fld.H, fld.diff_mode)
    log = {
        "steps": stats.steps,
        "substeps": stats.substeps,
        "retries": stats.retries,
        "clamp_count": stats.clamp_count,
        "min_radius_of_curvature": stats.min_radius_of_curvature,
        "final_min_radius_of_curvature": float(g.min()),
        "grid": {
            "n_r": fld.n_r,
            "n_theta": fld.n_theta,
            "R": fld.R,
            "r_stop": fld.r_stop,
        },
        "rho_digest": fld.rho_digest,
        "threads": worker_cap(),
    }
    write_json(out / "solve_log.json", log)
    if not quiet:
        print(f"solved {fld.n_r}x{fld.n_theta} in {elapsed:.2f}s", file=sys.stderr)
    return EXIT_OK


def _verify_one(problem: Problem, tmap: transport.TransportMap, name: str) -> dict:
    fld = tmap.field
    if name == "cov":
        pts = problem.rho0.sample(2000, problem.seed)
        lv = tmap.phi_or_nan(pts)
        keep = np.isfinite(lv) & (lv > fld.r_stop + 2 * fld.dr) & (lv < fld.R - 2 * fld.dr)
        res = tmap.cov_residual(pts[keep][:1000], on_degenerate="nan")
        n_degenerate = int(np.isnan(res).sum())
        res = res[np.isfinite(res)]
        median = float(np.median(res))
        worst = float(res.max())
        # the max guard catches localized corruption the median misses
        return {"median_residual": median, "max_residual": worst,
                "n": int(res.size), "n_degenerate": n_degenerate,
                "pass": bool(median <= 2e-3 and worst <= 0.05)}
    if name == "pushforward":
        report = tmap.pushforward_test(100_000, problem.seed)
        return report
    if name == "chart":
        z_list = np.linspace(-2.0, 2.0, 9)
        r_list = fld.r_stop + (fld.R - fld.r_stop) * np.array([0.25, 0.5, 0.75])
        chart = [pma.chart_identity_residual(fld, z, r) for z in z_list for r in r_list]
        ma1 = [
            pma.ma1_residual(fld, problem.rho0, problem.rho1, z, r)
            for z in z_list
            for r in r_list
        ]
        return {
            "chart_median": float(np.median(chart)),
            "chart_max": float(np.max(chart)),
            "ma1_median": float(np.median(ma1)),
            "ma1_max": float(np.max(ma1)),
            "pass": bool(np.median(chart) <= 1e-3 and np.median(ma1) <= 1e-3),
        }
    if name == "gaussmap":
        reports = {
            "one": analysis.gaussmap_pushforward(problem.body, lambda th: np.ones_like(th)),
            "cos": analysis.gaussmap_pushforward(problem.body, np.cos),
            "cos2": analysis.gaussmap_pushforward(problem.body, lambda th: np.cos(th) ** 2),
        }
        ok = all(r["pass"] for r in reports.values())
        return {"functions": reports, "pass": ok}
    if name == "roundtrip":
        err = transport.roundtrip_error(tmap, 1000, problem.seed)
        return {"max_error": err, "pass": bool(err <= transport.RT_TOL)}
    raise ConfigError(f"unknown verify check {name!r}")


def cmd_verify(problem: Problem, out: Path, which, quiet: bool) -> int:
    fld, source = problem.load_or_solve(out)
    tmap = transport.TransportMap(fld, problem.rho0, problem.rho1)
    checks = {}
    for name in which:
        checks[name] = _verify_one(problem, tmap, name)
        if not quiet:
            print(f"verify {name}: {'pass' if checks[name]['pass'] else 'FAIL'}",
                  file=sys.stderr)
    report = {"field": source, "checks": checks,
              "pass": bool(all(c["pass"] for c in checks.values()))}
    write_json(out / "verify_report.json", report)
    return EXIT_OK if report["pass"] else EXIT_VERIFICATION


def cmd_prelimit(problem: Problem, out: Path, t_list, n: int, quiet: bool) -> int:
    fld, _ = problem.load_or_solve(out)
    tmap = transport.TransportMap(fld, problem.rho0, problem.rho1)
    lines = ["t,mean_disp,median_disp,max_disp,n,seed"]
    for seed in problem.seeds:
        report = discrete_ot.convergence_experiment(tmap, n, seed, t_list)
        lines.append(f"# same_law_floor={_fmt(report['floor'])} seed={seed}")
        for row in report["rows"]:
            lines.append(
                f"{_fmt(row['t'])},{_fmt(row['mean_disp'])},{_fmt(row['median_disp'])},"
                f"{_fmt(row['max_disp'])},{n},{seed}"
            )
        if not quiet:
            print(f"prelimit seed {seed} done", file=sys.stderr)
    out.mkdir(parents=True, exist_ok=True)
    (out / "prelimit.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _analyze_one(problem: Problem, name: str, out: Path) -> dict:
    if name == "maxprin":
        field_name = problem.analysis.get("maxprin", {}).get("field", "paraboloid_cap")
        v = analysis.scalar_field(problem.body, field_name)
        report = analysis.maxprin_euclidean(v)
        cloud = analysis.contact_set(v, levels=24)
        rows = ["x,y,level,curvature,grad_norm"]
        for p, lv, k, g in zip(
            cloud["points"], cloud["level"], cloud["curvature"], cloud["grad_norm"]
        ):
            rows.append(f"{_fmt(p[0])},{_fmt(p[1])},{_fmt(lv)},{_fmt(k)},{_fmt(g)}")
        (out / "contact_points.csv").write_text("\n".join(rows) + "\n")
        report["field"] = field_name
        return report
    if name == "sector":
        spec = problem.analysis.get("sector", {})
        f = analysis.sector_field(spec.get("field", "bump"), **spec.get("params", {}))
        cloud = analysis.sector_gamma_cloud(f, n_r=128, n_theta=128)
        rows = ["r,theta"]
        rows.extend(f"{_fmt(r)},{_fmt(th)}" for r, th in cloud)
        (out / "sector_gamma.csv").write_text("\n".join(rows) + "\n")
        return analysis.maxprin_sector(f)
    if name == "sobolev":
        p = float(problem.analysis.get("sobolev", {}).get("p", 1.0))
        fld, _ = problem.load_or_solve(out)
        tmap = transport.TransportMap(fld, problem.rho0, problem.rho1)
        return analysis.sobolev_check(tmap, p)
    if name == "iso":
        return analysis.isoperimetric_check(problem.body, n_r=problem.n_r, seed=problem.seed)
    raise ConfigError(f"unknown analyze check {name!r}")


def cmd_analyze(problem: Problem, out: Path, which, quiet: bool) -> int:
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    for name in which:
        report = _analyze_one(problem, name, out)
        write_json(out / f"analyze_{name}.json", report)
        passed = bool(report.get("pass", True))
        ok = ok and passed
        if not quiet:
            print(f"analyze {name}: {'pass' if passed else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VERIFICATION


def cmd_levelsets(problem: Problem, out: Path, r_list, quiet: bool) -> int:
    fld, _ = problem.load_or_solve(out)
    out.mkdir(parents=True, exist_ok=True)
    tol = 1e-9 * fld.R
    for index, r in enumerate(r_list):
        if r > fld.R + tol or r < fld.r_stop - tol:
            raise ConfigError(f"level {r} outside [{fld.r_stop}, {fld.R}]")
        k, w = pma._row_weights(fld, float(r))
        row = (1.0 - w) * fld.H[k] + w * fld.H[k + 1]
        body = geometry.ConvexBody(h=row, diff_mode=fld.diff_mode)
        pts = geometry.boundary_points(body)
        radii = np.linalg.norm(pts, axis=1)
        roundness = float(radii.max() / radii.min())
        lines = [
            f"# level r={_fmt(float(r))}, roundness_ratio={_fmt(roundness)}",
            "x,y",
        ]
        closed = np.vstack([pts, pts[:1]])
        lines.extend(f"{_fmt(p[0])},{_fmt(p[1])}" for p in closed)
        (out / f"levelset_{index:03d}.csv").write_text("\n".join(lines) + "\n")
        if not quiet:
            print(f"levelset r={r}: roundness {roundness:.6f}", file=sys.stderr)
    return EXIT_OK


# -- entry point ---------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gtrans",
        description="Level-set mass transport solver and verification suites",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="problem config JSON")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override base seed")
        p.add_argument("--quiet", action="store_true")

    common(sub.add_parser("solve", help="march the support field, write CSV + log"))

    p = sub.add_parser("verify", help="run map verification checks")
    common(p)
    p.add_argument("--which", default=",".join(VERIFY_CHECKS))

    p = sub.add_parser("prelimit", help="discrete pre-limit convergence table")
    common(p)
    p.add_argument("--t-list", default="1,3,10,30,100")
    p.add_argument("--n", type=int, default=256)

    p = sub.add_parser("analyze", help="inequality checkers")
    common(p)
    p.add_argument("--which", default=",".join(ANALYZE_CHECKS))

    p = sub.add_parser("levelsets", help="emit level-set polylines")
    common(p)
    p.add_argument("--r", default=None, help="comma-separated level values")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        problem = Problem(config)
        out = Path(args.out) if args.out else problem.out_dir
        if args.command == "solve":
            code = cmd_solve(problem, out, args.quiet)
        elif args.command == "verify":
            which = [w for w in args.which.split(",") if w]
            unknown = set(which) - set(VERIFY_CHECKS)
            if unknown:
                raise ConfigError(f"unknown verify checks: {sorted(unknown)}")
            code = cmd_verify(problem, out, which, args.quiet)
        elif args.command == "prelimit":
            t_list = tuple(float(t) for t in args.t_list.split(","))
            code = cmd_prelimit(problem, out, t_list, args.n, args.quiet)
        elif args.command == "analyze":
            which = [w for w in args.which.split(",") if w]
            unknown = set(which) - set(ANALYZE_CHECKS)
            if unknown:
                raise ConfigError(f"unknown analyze checks: {sorted(unknown)}")
            code = cmd_analyze(problem, out, which, args.quiet)
        elif args.command == "levelsets":
            if args.r is not None:
                r_list = [float(r) for r in args.r.split(",")]
            elif problem.r_list:
                r_list = [float(r) for r in problem.r_list]
            else:
                raise ConfigError("levelsets needs --r or config r_list")
            code = cmd_levelsets(problem, out, r_list, args.quiet)
        else:  # pragma: no cover
            raise ConfigError(f"unknown command {args.command!r}")
    except GaussTransportError as exc:
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        try:
            out_dir = Path(args.out) if args.out else Path(".")
            write_json(out_dir / f"{args.command}_error.json", payload)
        except OSError:
            pass
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPERATIONAL
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPERATIONAL
    return code


if __name__ == "__main__":
    sys.exit(main())
