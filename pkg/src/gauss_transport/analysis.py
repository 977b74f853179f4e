"""Numerical verification of the transport-driven inequalities.

Checkers for the two parabolic maximum principles (Euclidean contact
form and spherical-sector form), the Sobolev bound for the level
function against a 1/r^{d-1} target, the Gauss-map pushforward
identity, and the transport proof of the isoperimetric inequality.
Each checker returns a plain dict report with every computed quantity,
ready for JSON serialization.

Derivations of the implementation constants used by the sector and
Sobolev checkers live in docs/derivations.md.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull
from skimage import measure as sk_measure

from . import geometry
from .errors import (
    EmptyLevelError,
    SectorGeometryError,
    WrongTargetDensityError,
)
from .fields import gauss_legendre, make_field
from .geometry import ConvexBody
from .pma import solve_2d
from .transport import TransportMap

TOL_MP = 0.02
TOL_ISO = 0.01
HULL_TOL_CELLS = 2.0


# -- scalar test fields -------------------------------------------------


@dataclass(frozen=True)
class ScalarFieldOnBody:
    """Test function on a convex body with a closed-form gradient.

    `value` and `grad` take (N, 2) arrays.  The checkers require
    `twice_differentiable`; every catalog member satisfies it.
    """

    body: ConvexBody
    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    twice_differentiable: bool = True


def scalar_field(body: ConvexBody, name: str, **params) -> ScalarFieldOnBody:
    """Catalog of test functions for the Euclidean maximum principle."""
    if name == "paraboloid_cap":

        def value(p):
            return 1.0 - (p**2).sum(axis=1)

        def grad(p):
            return -2.0 * p

    elif name == "quartic_cap":

        def value(p):
            return 1.0 - (p**2).sum(axis=1) ** 2

        def grad(p):
            return -4.0 * (p**2).sum(axis=1)[:, None] * p

    elif name == "two_bumps":
        sep = params.get("separation", 0.45)
        width = params.get("width", 0.22)
        centers = np.array([[sep, 0.0], [-sep, 0.0]])

        def value(p):
            out = np.zeros(p.shape[0])
            for c in centers:
                out += np.exp(-((p - c) ** 2).sum(axis=1) / (2.0 * width**2))
            return out

        def grad(p):
            out = np.zeros_like(p)
            for c in centers:
                e = np.exp(-((p - c) ** 2).sum(axis=1) / (2.0 * width**2))
                out += -e[:, None] * (p - c) / width**2
            return out

    elif name == "constant":
        level = params.get("level", 1.0)

        def value(p):
            return np.full(p.shape[0], level)

        def grad(p):
            return np.zeros_like(p)

    else:
        raise ValueError(f"unknown scalar field {name!r}")
    return ScalarFieldOnBody(body=body, name=name, value=value, grad=grad)


# -- contact sets and the Euclidean maximum principle -------------------


def _body_grid(body: ConvexBody, n: int):
    pad = 1.02
    r = float(body.h.max()) * pad
    xs = np.linspace(-r, r, n)
    ys = np.linspace(-r, r, n)
    return xs, ys


def _grid_eval(fn, xs, ys):
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return fn(pts).reshape(X.shape), pts


def _contours_xy(F, xs, ys, level):
    """Marching-squares contours of F at a level, in xy coordinates."""
    loops = []
    for contour in sk_measure.find_contours(F, level):
        closed = np.allclose(contour[0], contour[-1])
        pts = contour[:-1] if closed and contour.shape[0] > 1 else contour
        x = np.interp(pts[:, 0], np.arange(xs.size), xs)
        y = np.interp(pts[:, 1], np.arange(ys.size), ys)
        loops.append(np.column_stack([x, y]))
    return loops


def _resample_loop(loop: np.ndarray, n: int) -> np.ndarray:
    """Equal-arclength resampling of a closed polyline."""
    closed = np.vstack([loop, loop[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0.0:
        return loop[:1].repeat(n, axis=0)
    targets = np.linspace(0.0, total, n, endpoint=False)
    x = np.interp(targets, s, closed[:, 0])
    y = np.interp(targets, s, closed[:, 1])
    return np.column_stack([x, y])


def _hull_vertices_ccw(points: np.ndarray) -> np.ndarray:
    hull = ConvexHull(points)
    return points[hull.vertices]


def _hull_normals(verts: np.ndarray) -> np.ndarray:
    """Outward vertex normals of a CCW convex polygon."""
    edges = np.roll(verts, -1, axis=0) - verts
    edge_n = np.column_stack([edges[:, 1], -edges[:, 0]])
    edge_n /= np.maximum(np.linalg.norm(edge_n, axis=1), 1e-300)[:, None]
    vert_n = edge_n + np.roll(edge_n, 1, axis=0)
    vert_n /= np.maximum(np.linalg.norm(vert_n, axis=1), 1e-300)[:, None]
    return vert_n


def _cone_coverage(verts: np.ndarray, contact: np.ndarray, bins: int) -> bool:
    """Do the normal cones at contact vertices cover all angle bins?

    The Gauss image of a convex polygon vertex is the arc between its
    adjacent edge normals; counting whole cones (not single normals)
    matches the set-valued normal of the convex envelope.
    """
    edges = np.roll(verts, -1, axis=0) - verts
    phi = np.mod(np.arctan2(-edges[:, 0], edges[:, 1]), 2.0 * np.pi)
    phi_prev = np.roll(phi, 1)
    covered = np.zeros(bins, dtype=bool)
    width = 2.0 * np.pi / bins
    for k in np.nonzero(contact)[0]:
        a, b = phi_prev[k], phi[k]
        span = np.mod(b - a, 2.0 * np.pi)
        first = int(np.floor(a / width))
        last = int(np.floor((a + span) / width))
        for idx in range(first, last + 1):
            covered[idx % bins] = True
    return bool(covered.all())


def contact_set(
    v: ScalarFieldOnBody,
    levels: int,
    fine_grid: int = 512,
    n_boundary: int = 256,
) -> dict:
    """Contact points of the sublevel sets of -v, per level.

    Each sublevel boundary is extracted by marching squares, its convex
    hull taken, and hull-adjacent boundary points marked as contact
    points.  Per point the report carries the level, the hull curvature
    (three-point circumradius) and |grad v|.
    """
    if not v.twice_differentiable:
        raise ValueError("contact sets require a twice differentiable field")
    xs, ys = _body_grid(v.body, fine_grid)
    F, pts = _grid_eval(lambda p: -v.value(p), xs, ys)
    inside = geometry.contains(v.body, pts).reshape(F.shape)
    interior_min = float(F[inside].min())
    bnd = geometry.boundary_points(v.body)
    boundary_inf = float((-v.value(bnd)).min())
    if not boundary_inf - interior_min > 1e-12 * max(1.0, abs(boundary_inf)):
        raise EmptyLevelError("no admissible levels: -v has no interior sublevel set")
    F = np.where(inside, F, boundary_inf + 10.0 * max(1.0, abs(boundary_inf)))
    dt = (boundary_inf - interior_min) / levels
    level_values = interior_min + (np.arange(levels) + 0.5) * dt
    hull_tol = HULL_TOL_CELLS * (xs[1] - xs[0])
    out_points, out_levels, out_curv, out_grad = [], [], [], []
    fractions = []
    for level in level_values:
        loops = _contours_xy(F, xs, ys, level)
        if not loops:
            raise EmptyLevelError(f"level {level:.6g} produced no contour")
        cloud = np.vstack([_resample_loop(lp, n_boundary) for lp in loops])
        hull = _hull_vertices_ccw(cloud)
        hull_curv, _ = geometry.polyline_curvature(hull)
        dists = np.min(
            np.linalg.norm(cloud[:, None, :] - hull[None, :, :], axis=2), axis=1
        )
        contact = dists <= hull_tol
        fractions.append(float(contact.mean()))
        cpts = cloud[contact]
        nearest = np.argmin(
            np.linalg.norm(cpts[:, None, :] - hull[None, :, :], axis=2), axis=1
        )
        out_points.append(cpts)
        out_levels.append(np.full(cpts.shape[0], level))
        out_curv.append(hull_curv[nearest])
        out_grad.append(np.linalg.norm(v.grad(cpts), axis=1))
    return {
        "points": np.vstack(out_points),
        "level": np.concatenate(out_levels),
        "curvature": np.concatenate(out_curv),
        "grad_norm": np.concatenate(out_grad),
        "level_values": level_values,
        "contact_fraction": np.array(fractions),
    }


def maxprin_euclidean(
    v: ScalarFieldOnBody,
    levels: int = 64,
    fine_grid: int = 512,
    n_boundary: int = 256,
    cover_bins: int = 32,
    cover_margin: float = 0.05,
) -> dict:
    """Sharp contact-set form of the parabolic maximum principle.

    With f = (M - v)^(1/d), M the interior maximum, the image of the
    contact set under f n covers the ball of radius inf_boundary f, so
    the coarea integral of f^(d-1) K over contact levels dominates the
    unit-ball volume times (inf_boundary f)^d.  In the plane the levels
    contribute t * (sum of contact turning) dt.
    """
    if not v.twice_differentiable:
        raise ValueError("the maximum principle checker requires a C2 field")
    xs, ys = _body_grid(v.body, fine_grid)
    V, pts = _grid_eval(v.value, xs, ys)
    inside = geometry.contains(v.body, pts).reshape(V.shape)
    M = float(V[inside].max())
    bnd = geometry.boundary_points(v.body)
    sup_boundary_v = float(v.value(bnd).max())
    lhs = M - sup_boundary_v

    def f_fn(p):
        return np.sqrt(np.maximum(M - v.value(p), 0.0))

    inf_boundary_f = float(f_fn(bnd).min())
    if inf_boundary_f <= 1e-12 * max(1.0, abs(M)):
        # the maximum sits on the boundary; the inequality is 0 <= 0
        return {
            "lhs": lhs,
            "sup_interior": M,
            "sup_boundary": sup_boundary_v,
            "inf_boundary_f": inf_boundary_f,
            "integral": 0.0,
            "target": 0.0,
            "ratio": 1.0,
            "pass": bool(lhs <= 1e-12 * max(1.0, abs(M))),
            "covering_ok": True,
            "covering_fraction": 1.0,
            "levels": levels,
            "fine_grid": fine_grid,
        }
    F = np.where(inside, np.sqrt(np.maximum(M - V, 0.0)), inf_boundary_f * 2.0 + 1.0)
    dt = inf_boundary_f / levels
    level_values = (np.arange(levels) + 0.5) * dt
    hull_tol = HULL_TOL_CELLS * (xs[1] - xs[0])
    integral = 0.0
    covered = []
    for t in level_values:
        loops = _contours_xy(F, xs, ys, t)
        if not loops:
            covered.append(False)
            continue
        cloud = np.vstack([_resample_loop(lp, n_boundary) for lp in loops])
        hull = _hull_vertices_ccw(cloud)
        curv, ds = geometry.polyline_curvature(hull)
        dists = np.min(
            np.linalg.norm(hull[:, None, :] - cloud[None, :, :], axis=2), axis=1
        )
        contact = dists <= hull_tol
        integral += t * float((curv[contact] * ds[contact]).sum()) * dt
        covered.append(_cone_coverage(hull, contact, cover_bins))
    c_d = math.pi  # unit-ball volume, d = 2
    target = c_d * inf_boundary_f**2
    ncover = int(round((1.0 - cover_margin) * levels))
    return {
        "lhs": lhs,
        "sup_interior": M,
        "sup_boundary": sup_boundary_v,
        "inf_boundary_f": inf_boundary_f,
        "integral": integral,
        "target": target,
        "ratio": integral / target if target > 0 else math.inf,
        "pass": bool(integral >= target * (1.0 - TOL_MP)),
        "covering_ok": bool(all(covered[:ncover])),
        "covering_fraction": float(np.mean(covered)),
        "levels": levels,
        "fine_grid": fine_grid,
    }


# -- sector maximum principle -------------------------------------------


@dataclass(frozen=True)
class SectorField:
    """Twice differentiable function on a polar sector of the upper half.

    The sector is [R1, R2] x Q with Q = [theta_a, theta_b] strictly
    inside (0, pi).  Closed-form radial and angular derivatives are
    supplied by the catalog.
    """

    R1: float
    R2: float
    theta_a: float
    theta_b: float
    name: str
    value: Callable
    f_r: Callable
    f_tt: Callable

    def __post_init__(self):
        if not (0.0 < self.R1 < self.R2):
            raise SectorGeometryError("need 0 < R1 < R2")
        if not (0.0 < self.theta_a < self.theta_b < math.pi):
            raise SectorGeometryError("sector must lie strictly in the upper half-circle")
        if min(self.theta_a, math.pi - self.theta_b) <= 0.0:
            raise SectorGeometryError("sector touches the equator")
        if self.theta_b - self.theta_a >= math.pi / 2.0:
            raise SectorGeometryError(
                "catalog sectors keep angular width below pi/2 so the "
                "aperture constant 1/cos(width) is finite"
            )

    @property
    def width(self) -> float:
        return self.theta_b - self.theta_a


def sector_field(name: str, R1=0.5, R2=2.0, theta_a=None, theta_b=None, **params) -> SectorField:
    """Catalog of sector test functions with closed-form derivatives."""
    if theta_a is None:
        theta_a = math.pi / 2.0 - 0.5
    if theta_b is None:
        theta_b = math.pi / 2.0 + 0.5

    if name == "constant":
        c = params.get("level", 1.0)
        value = lambda r, th: np.full(np.broadcast(r, th).shape, c)
        f_r = lambda r, th: np.zeros(np.broadcast(r, th).shape)
        f_tt = lambda r, th: np.zeros(np.broadcast(r, th).shape)
    elif name == "bump":
        # (R2 - r) b(theta), b = (1 - s^2)^3 a C2 bump strictly inside Q
        center = 0.5 * (theta_a + theta_b)
        half = params.get("support_fraction", 0.8) * 0.5 * (theta_b - theta_a)

        def _b(th, order=0):
            s = (np.asarray(th) - center) / half
            base = np.where(np.abs(s) < 1.0, 1.0 - s**2, 0.0)
            if order == 0:
                return base**3
            if order == 2:
                return (24.0 * s**2 * base - 6.0 * base**2) / half**2
            raise ValueError(order)

        value = lambda r, th: (R2 - np.asarray(r)) * _b(th)
        f_r = lambda r, th: -_b(th) * np.ones(np.broadcast(r, th).shape)
        f_tt = lambda r, th: (R2 - np.asarray(r)) * _b(th, 2)
    elif name == "radial_increase":
        c = params.get("slope", 1.0)
        value = lambda r, th: c * (np.asarray(r) - R1) * np.ones(np.broadcast(r, th).shape)
        f_r = lambda r, th: c * np.ones(np.broadcast(r, th).shape)
        f_tt = lambda r, th: np.zeros(np.broadcast(r, th).shape)
    else:
        raise ValueError(f"unknown sector field {name!r}")
    return SectorField(
        R1=R1, R2=R2, theta_a=theta_a, theta_b=theta_b, name=name,
        value=value, f_r=f_r, f_tt=f_tt,
    )


def sector_gamma_cloud(f: SectorField, n_r: int = 256, n_theta: int = 256) -> np.ndarray:
    """Midpoint grid nodes (r, theta) where both sign conditions hold."""
    r_mid = f.R1 + (np.arange(n_r) + 0.5) * (f.R2 - f.R1) / n_r
    th_mid = f.theta_a + (np.arange(n_theta) + 0.5) * f.width / n_theta
    R, TH = np.meshgrid(r_mid, th_mid, indexing="ij")
    vals = f.value(R, TH)
    gamma = (f.f_r(R, TH) <= 0.0) & (vals + f.f_tt(R, TH) <= 0.0)
    return np.column_stack([R[gamma], TH[gamma]])


def maxprin_sector(f: SectorField, n_r: int = 256, n_theta: int = 256) -> dict:
    """Sector form of the parabolic maximum principle, d = 2.

    J integrates |f_r (f + f_tt)| over the region where both factors
    are nonpositive (in dr dtheta, absorbing the polar Jacobian against
    the 1/r weight).  The reachable-vector region B is a polar box
    {C(Q) m < r < M} x Q with C(Q) = 1/cos(width); its Lebesgue area
    must not exceed J, and the maximum obeys
    sup f <= C(Q) m + sqrt(2/width) sqrt(J).
    """
    r_mid = f.R1 + (np.arange(n_r) + 0.5) * (f.R2 - f.R1) / n_r
    th_mid = f.theta_a + (np.arange(n_theta) + 0.5) * f.width / n_theta
    dr = (f.R2 - f.R1) / n_r
    dth = f.width / n_theta
    R, TH = np.meshgrid(r_mid, th_mid, indexing="ij")
    vals = f.value(R, TH)
    fr = f.f_r(R, TH)
    radii = vals + f.f_tt(R, TH)
    gamma = (fr <= 0.0) & (radii <= 0.0)
    J = float(np.abs(fr[gamma] * radii[gamma]).sum() * dr * dth)
    sup_f = float(vals.max())
    # parabolic boundary: outer radial face plus the two lateral sides
    th_dense = np.linspace(f.theta_a, f.theta_b, 4 * n_theta)
    r_dense = np.linspace(f.R1, f.R2, 4 * n_r)
    sup_pb = max(
        float(f.value(np.full_like(th_dense, f.R2), th_dense).max()),
        float(f.value(r_dense, np.full_like(r_dense, f.theta_a)).max()),
        float(f.value(r_dense, np.full_like(r_dense, f.theta_b)).max()),
    )
    if sup_pb < 0.0:
        raise ValueError("checker requires sup f >= 0 on the parabolic boundary")
    c_q = 1.0 / math.cos(f.width)
    c2 = math.sqrt(2.0 / f.width)
    lower = c_q * sup_pb
    area_b = f.width * max(sup_f**2 - lower**2, 0.0) / 2.0 if sup_f > lower else 0.0
    bound = c_q * sup_pb + c2 * math.sqrt(max(J, 0.0))
    return {
        "sup_f": sup_f,
        "sup_parabolic_boundary": sup_pb,
        "J": J,
        "area_B": area_b,
        "area_check": bool(area_b <= J * (1.0 + TOL_MP) + 1e-14),
        "C1": c_q,
        "C2": c2,
        "sup_bound": bound,
        "sup_check": bool(sup_f <= bound * (1.0 + TOL_MP) + 1e-14),
        "gamma_fraction": float(gamma.mean()),
        "grid": [n_r, n_theta],
    }


# -- Sobolev estimate ----------------------------------------------------


def sobolev_constant(p: float, R: float, d: int = 2) -> float:
    """Implementation constant for the Sobolev pass threshold.

    Derived by re-tracing the divergence/Young chain (docs/derivations.md):
    the gradient integral is bounded by M(p, R) times the sum of the two
    right-hand integrals with
    M = R^(p+1) max(2 sigma_d^p, 2^(p+1) (p+1)^(p+1)),
    sigma_d the unit-sphere surface.  The pass threshold is 1/C = M.
    """
    sigma_d = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    return R ** (p + 1) * max(2.0 * sigma_d**p, 2.0 ** (p + 1) * (p + 1) ** (p + 1))


def sobolev_check(
    tmap: TransportMap,
    p: float,
    n_radial: int = 48,
    margin: float = 1e-9,
) -> dict:
    """Check the gradient-power bound for a 1/r^(d-1) target density.

    LHS integrates |grad phi|^(p+1) against the source measure over the
    solved annulus; RHS1 the logarithmic gradient of the source density;
    RHS2 the boundary integral K^-p rho0^(p+1).  Passes when the ratio
    LHS / (RHS1 + RHS2) stays below the documented constant.
    """
    rho0, rho1 = tmap.rho0, tmap.rho1
    if rho1.kind != "radial_power" or not math.isclose(
        float(rho1.params["alpha"]), -(tmap.field.d - 1)
    ):
        raise WrongTargetDensityError(
            "the estimate is specific to the 1/r^(d-1) target density"
        )
    if p <= 0.0:
        raise ValueError("exponent p must be positive")
    body = rho0.body
    fld = tmap.field
    n_ang = body.n_theta
    ang = geometry.grid_angles(n_ang)
    inner_body = fld.row_body(fld.n_r)
    rho_out = geometry.radial_gauge(body, ang)
    rho_in = geometry.radial_gauge(inner_body, ang)
    nodes, weights = gauss_legendre(n_radial)
    lhs = 0.0
    rhs1 = 0.0
    dth = 2.0 * np.pi / n_ang
    for i, psi in enumerate(ang):
        a = rho_in[i] * (1.0 + margin)
        b = rho_out[i] * (1.0 - margin)
        radii = a + 0.5 * (b - a) * (nodes + 1.0)
        w = 0.5 * (b - a) * weights
        pts = radii[:, None] * np.array([math.cos(psi), math.sin(psi)])[None, :]
        _, grads = tmap.normal_and_grad(pts)
        dens = rho0.eval_raw(pts)
        lhs += float(np.sum(w * grads ** (p + 1) * dens * radii)) * dth
        glog = np.linalg.norm(rho0.grad_log(pts), axis=1)
        rhs1 += float(np.sum(w * glog ** (p + 1) * dens * radii)) * dth
    radii_of_curv = body.curvature_radii()
    dens_boundary = rho0.eval_raw(geometry.boundary_points(body))
    rhs2 = float(np.sum(radii_of_curv ** (p + 1) * dens_boundary ** (p + 1)) * dth)
    c_hat = lhs / (rhs1 + rhs2)
    limit = sobolev_constant(p, fld.R, fld.d)
    return {
        "p": p,
        "LHS": lhs,
        "RHS1": rhs1,
        "RHS2": rhs2,
        "c_hat": c_hat,
        "c_limit": limit,
        "pass": bool(c_hat <= limit),
        "annulus": [float(fld.r_stop), float(fld.R)],
    }


# -- Gauss-map pushforward and Gauss-Bonnet ------------------------------


def gaussmap_pushforward(body: ConvexBody, test_fn: Callable) -> dict:
    """Both sides of the Gauss-map change of variables for one test function.

    The boundary side integrates f(normal angle) K ds along the
    boundary polyline with three-point circumradius curvature and
    polyline arclength, fully independent of the support-function
    identity K ds = dtheta; the sphere side integrates f over the circle
    of normals by the periodic trapezoid rule.
    """
    geometry.curvature_profile(body)  # strict convexity required
    pts = geometry.boundary_points(body)
    curv, ds = geometry.polyline_curvature(pts)
    th = body.angles
    fvals = np.asarray(test_fn(th), dtype=float)
    left = float((fvals * curv * ds).sum())
    dtheta = 2.0 * np.pi / body.n_theta
    right = float(fvals.sum() * dtheta)
    scale = max(abs(right), float(np.abs(fvals).sum() * dtheta))
    return {
        "boundary_integral": left,
        "sphere_integral": right,
        "relative_error": abs(left - right) / scale,
        "tolerance": 10.0 * dtheta**2,
        "pass": bool(abs(left - right) / scale <= 10.0 * dtheta**2),
    }


def gauss_bonnet_defect(body: ConvexBody) -> float:
    """Relative defect of the total-curvature identity (value 2 pi)."""
    report = gaussmap_pushforward(body, lambda th: np.ones_like(th))
    return abs(report["boundary_integral"] - 2.0 * math.pi) / (2.0 * math.pi)


# -- isoperimetric check -------------------------------------------------


def isoperimetric_check(
    body: ConvexBody,
    n_r: int = 256,
    n_samples: int = 256,
    seed: int = 20240711,
    fd_step: float = 1e-2,
) -> dict:
    """Transport proof of the isoperimetric inequality, run numerically.

    Solves the uniform-to-uniform transport onto the equal-area disk,
    checks det DT = 1 and the mean-of-eigenvalues bound pointwise, then
    integrates div T by the boundary flux.  The sharp constant is 1/d
    (the disk is the equality case); the report also carries the looser
    1/(d-1) variant for comparison.

    The level sets of a mass-preserving uniform-to-uniform transport
    enclose the same area as the target balls (their volume grows at
    the total-curvature rate), so area(A_r) = pi r^2 row by row; the
    report carries the worst defect of that identity, normalized by the
    total area, as an independent conservation diagnostic.
    """
    d = 2
    area = geometry.support_area(body)
    perimeter = geometry.support_perimeter(body)
    R = math.sqrt(area / math.pi)
    rho0 = make_field("uniform", body=body)
    rho1 = make_field("uniform", ball_radius=R)
    fld = solve_2d(body, rho0, rho1, n_r=n_r)
    tmap = TransportMap(fld, rho0, rho1)
    pts = rho0.sample(6 * n_samples, seed)
    # keep the finite-difference stencils clear of both annulus edges;
    # near a rounded corner the level sets bunch into a thin spatial
    # layer (|grad phi| is large there), so kinked bodies additionally
    # retreat to levels where the flow has smoothed the support function
    spatial = 2.5 * fd_step
    span = fld.R - fld.r_stop
    level_hi = fld.R - (0.2 * span if fld.diff_mode == geometry.FD else 2.0 * fld.dr)
    level_lo = fld.r_stop + max(2.0 * fld.dr, 0.02 * span)
    outer_gap = geometry.support_gap(body, pts)
    inner_gap = geometry.support_gap(fld.row_body(fld.n_r), pts)
    keep = (outer_gap <= -spatial) & (inner_gap >= spatial)
    levels = tmap.phi_or_nan(pts[keep])
    keep2 = np.isfinite(levels) & (levels > level_lo) & (levels < level_hi)
    pts = pts[keep][keep2][:n_samples]
    det, trace = tmap.jacobian_matrix_fd(pts, fd_step)
    amgm_defect = d * np.sqrt(np.abs(det)) - trace
    violations = int((amgm_defect > 1e-6).sum())
    # divergence integral via boundary flux of the solved map
    bnd = geometry.boundary_points(body)
    images = tmap.forward(bnd)
    normals = geometry.grid_normals(body.n_theta)
    _, ds = geometry.polyline_curvature(bnd)
    flux = float((np.einsum("ij,ij->i", images, normals) * ds).sum())
    bound = R * perimeter / d
    # enclosed-area identity area(A_r) = pi r^2, checked on stored rows
    # and normalized by the total mass scale pi R^2
    rows = range(0, fld.n_r + 1, max(1, fld.n_r // 32))
    level_defect = max(
        abs(geometry.support_area(fld.row_body(k)) - math.pi * fld.r_grid[k] ** 2)
        for k in rows
    ) / (math.pi * R**2)
    return {
        "area": area,
        "perimeter": perimeter,
        "R_equal_area": R,
        "bound": bound,
        "ratio": bound / area,
        "printed_variant_bound": R * perimeter / (d - 1),
        "det_median": float(np.median(det)),
        "det_ok": bool(abs(float(np.median(det)) - 1.0) <= 0.01),
        "amgm_violations": violations,
        "amgm_max_defect": float(amgm_defect.max()),
        "det_positive": bool(np.all(det > 0.0)),
        "div_integral": flux / d,
        "div_check": bool(area <= flux / d * (1.0 + TOL_ISO)),
        "level_area_max_defect": level_defect,
        "pass": bool(bound >= area * (1.0 - TOL_ISO) and violations == 0),
        "n_samples": int(pts.shape[0]),
    }
