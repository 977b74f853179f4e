"""Support-function geometry of planar convex bodies.

A convex body containing the origin is stored by sampling its support
function h on a uniform angular grid theta_j = 2*pi*j/n.  Boundary
points, curvature and arclength all come from h and its angular
derivatives.  Smooth bodies use spectral (FFT) differentiation; bodies
whose support function has kinks (polygons and their disk-roundings)
use central differences, which stay local and sum exactly in the
periodic trapezoid rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    ChartRangeError,
    DegenerateCurvatureError,
    OriginNotInteriorError,
)

TOL_CONVEX_REL = 1e-8
TOL_CONTAIN_REL = 1e-10
FLOOR_DET_REL = 1e-6

SPECTRAL = "spectral"
FD = "fd"


@lru_cache(maxsize=32)
def grid_angles(n_theta: int) -> np.ndarray:
    """Uniform angles theta_j = 2*pi*j/n_theta, read-only."""
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    th.setflags(write=False)
    return th


@lru_cache(maxsize=32)
def grid_normals(n_theta: int) -> np.ndarray:
    """Unit normals n(theta_j) as an (n_theta, 2) array, read-only."""
    th = grid_angles(n_theta)
    nm = np.column_stack([np.cos(th), np.sin(th)])
    nm.setflags(write=False)
    return nm


@lru_cache(maxsize=32)
def grid_tangents(n_theta: int) -> np.ndarray:
    """Unit tangents v(theta_j) = (-sin, cos), read-only."""
    th = grid_angles(n_theta)
    tg = np.column_stack([-np.sin(th), np.cos(th)])
    tg.setflags(write=False)
    return tg


def periodic_derivative(values: np.ndarray, order: int, mode: str = SPECTRAL) -> np.ndarray:
    """Differentiate samples of a 2*pi-periodic function on a uniform grid.

    `values` may be 1-D or 2-D; differentiation acts along the last axis.
    Spectral mode zeroes the Nyquist mode for odd orders (it carries no
    sign information on an even grid).
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if mode == SPECTRAL:
        coef = np.fft.rfft(values, axis=-1)
        k = np.arange(n // 2 + 1, dtype=float)
        fac = (1j * k) ** order
        if order % 2 == 1 and n % 2 == 0:
            fac = fac.copy()
            fac[-1] = 0.0
        return np.fft.irfft(coef * fac, n, axis=-1)
    if mode == FD:
        dtheta = 2.0 * np.pi / n
        if order == 1:
            return (np.roll(values, -1, axis=-1) - np.roll(values, 1, axis=-1)) / (2.0 * dtheta)
        if order == 2:
            return (
                np.roll(values, -1, axis=-1) - 2.0 * values + np.roll(values, 1, axis=-1)
            ) / dtheta**2
        raise ValueError(f"fd mode supports orders 1 and 2, got {order}")
    raise ValueError(f"unknown differentiation mode {mode!r}")


@lru_cache(maxsize=32)
def _spectral_multipliers(n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(n // 2 + 1, dtype=float)
    fac1 = 1j * k
    if n % 2 == 0:
        fac1 = fac1.copy()
        fac1[-1] = 0.0
    fac2 = -(k**2)
    fac1.setflags(write=False)
    fac2.setflags(write=False)
    return fac1, fac2


def periodic_derivatives_12(values: np.ndarray, mode: str = SPECTRAL):
    """First and second periodic derivatives, sharing one transform."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if mode == SPECTRAL:
        coef = np.fft.rfft(values, axis=-1)
        fac1, fac2 = _spectral_multipliers(n)
        return (
            np.fft.irfft(coef * fac1, n, axis=-1),
            np.fft.irfft(coef * fac2, n, axis=-1),
        )
    return periodic_derivative(values, 1, mode), periodic_derivative(values, 2, mode)


def periodic_second_derivative(values: np.ndarray, mode: str = SPECTRAL) -> np.ndarray:
    """Second periodic derivative with a single transform pair."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if mode == SPECTRAL:
        coef = np.fft.rfft(values, axis=-1)
        _, fac2 = _spectral_multipliers(n)
        return np.fft.irfft(coef * fac2, n, axis=-1)
    return periodic_derivative(values, 2, mode)


def trig_coefficients(values: np.ndarray) -> np.ndarray:
    """rfft coefficients of grid samples, for off-grid evaluation."""
    return np.fft.rfft(np.asarray(values, dtype=float), axis=-1)


def trig_eval(coef: np.ndarray, n: int, theta, order: int = 0):
    """Evaluate the trigonometric interpolant (or a derivative) off-grid.

    `coef` is rfft of the grid samples (possibly a batch, modes on the
    last axis); `theta` is a scalar or 1-D array.  With a batch of
    coefficient rows and matching batch of angles, row i is evaluated at
    theta[i]; a single coefficient row broadcasts over all angles.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    m = np.arange(coef.shape[-1], dtype=float)
    fac = (1j * m) ** order
    if order % 2 == 1 and n % 2 == 0:
        fac = fac.copy()
        fac[-1] = 0.0
    weights = np.full(coef.shape[-1], 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    c = coef * (fac * weights)
    phase = np.exp(1j * theta[..., None] * m)
    if c.ndim == 1:
        return (phase @ c).real / n
    # batched: row-wise evaluation
    return np.einsum("...m,...m->...", phase, c).real / n


def _as_points(x) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        return pts[None, :], True
    return pts, False


@dataclass(frozen=True)
class ConvexBody:
    """Planar convex body with interior origin, in support-function form.

    h[j] is the support value in direction theta_j = 2*pi*j/n_theta.
    `diff_mode` selects the angular differentiation rule; polygon-like
    bodies must use "fd" because their support functions have kinks.
    """

    h: np.ndarray
    diff_mode: str = SPECTRAL

    def __post_init__(self):
        h = np.ascontiguousarray(np.asarray(self.h, dtype=float))
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        n = h.size
        if n < 8 or (n & (n - 1)) != 0:
            raise ValueError(f"n_theta must be a power of two >= 8, got {n}")
        if not np.all(np.isfinite(h)):
            raise ValueError("support values must be finite")
        if np.any(h <= 0.0):
            raise OriginNotInteriorError(
                f"min support value {h.min():.3e} <= 0; origin must be interior"
            )
        dtheta = 2.0 * np.pi / n
        second = np.roll(h, -1) - 2.0 * h + np.roll(h, 1)
        if (second + dtheta**2 * h).min() < -self.tol_convex:
            raise ValueError(
                "support samples violate discrete convexity: "
                f"min defect = {(second + dtheta**2 * h).min():.3e}"
            )
        if self.diff_mode not in (SPECTRAL, FD):
            raise ValueError(f"unknown diff_mode {self.diff_mode!r}")

    @property
    def n_theta(self) -> int:
        return self.h.size

    @property
    def tol_convex(self) -> float:
        return TOL_CONVEX_REL * float(self.h.max())

    @property
    def tol_contain(self) -> float:
        return TOL_CONTAIN_REL * float(self.h.max())

    @property
    def floor_det(self) -> float:
        # central differences carry O(dtheta^2) truncation in h + h_tt,
        # so in fd mode the degeneracy floor must sit above it: a
        # polygon fan arc evaluates to h dtheta^2 / 12, not to zero
        rel = FLOOR_DET_REL
        if self.diff_mode == FD:
            rel = max(rel, (2.0 * np.pi / self.n_theta) ** 2 / 6.0)
        return rel * float(self.h.max())

    @property
    def angles(self) -> np.ndarray:
        return grid_angles(self.n_theta)

    def h_theta(self) -> np.ndarray:
        return periodic_derivative(self.h, 1, self.diff_mode)

    def h_thetatheta(self) -> np.ndarray:
        return periodic_derivative(self.h, 2, self.diff_mode)

    def curvature_radii(self) -> np.ndarray:
        """h + h_tt at every grid angle (the radius-of-curvature profile)."""
        return self.h + self.h_thetatheta()


def body_from_polygon(vertices, n_theta: int = 256) -> ConvexBody:
    """Support samples of the convex hull of `vertices`.

    The polygon must enclose the origin.  The resulting body uses
    finite-difference angular derivatives (its support function has
    kinks at edge normals).
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
        raise ValueError("need at least 3 planar vertices")
    normals = grid_normals(n_theta)
    h = (verts @ normals.T).max(axis=0)
    if np.any(h <= 0.0):
        raise OriginNotInteriorError("polygon does not contain the origin in its interior")
    return ConvexBody(h=h, diff_mode=FD)


def body_from_ellipse(a: float, b: float, n_theta: int = 256) -> ConvexBody:
    """Axis-aligned ellipse with semi-axes a, b centered at the origin."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("semi-axes must be positive")
    th = grid_angles(n_theta)
    h = np.sqrt(a**2 * np.cos(th) ** 2 + b**2 * np.sin(th) ** 2)
    return ConvexBody(h=h)


def body_from_disk(radius: float, n_theta: int = 256) -> ConvexBody:
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    return ConvexBody(h=np.full(n_theta, float(radius)))


def rounded_body(body: ConvexBody, rounding: float) -> ConvexBody:
    """Minkowski sum with a disk of the given radius (adds a constant to h)."""
    if rounding < 0.0:
        raise ValueError("rounding radius must be nonnegative")
    return ConvexBody(h=body.h + rounding, diff_mode=body.diff_mode)


def smoothed_square(side: float = 2.0, rounding: float = 0.1, n_theta: int = 256) -> ConvexBody:
    """Square of the given side, corners rounded with the given radius."""
    s = side / 2.0
    square = body_from_polygon([(-s, -s), (s, -s), (s, s), (-s, s)], n_theta)
    return rounded_body(square, rounding)


def boundary_points(body: ConvexBody) -> np.ndarray:
    """All boundary points x(theta_j) = h n + h_theta v, shape (n_theta, 2)."""
    n = grid_normals(body.n_theta)
    v = grid_tangents(body.n_theta)
    ht = body.h_theta()
    return body.h[:, None] * n + ht[:, None] * v


def boundary_point(body: ConvexBody, j: int) -> np.ndarray:
    """Boundary point touching the supporting line of direction theta_j."""
    return boundary_points(body)[j % body.n_theta]


def curvature_from_support(body: ConvexBody, j: int) -> float:
    """Gauss curvature K = 1/(h + h_tt) at angle index j.

    Raises DegenerateCurvatureError on flat spots (polygon edge normals),
    where the curvature is not a function.
    """
    radius = body.curvature_radii()[j % body.n_theta]
    if radius <= body.floor_det:
        raise DegenerateCurvatureError(
            f"h + h_tt = {radius:.3e} at index {j} is at or below the floor"
        )
    return 1.0 / radius


def curvature_profile(body: ConvexBody) -> np.ndarray:
    """K at every grid angle; raises if any node is degenerate."""
    radii = body.curvature_radii()
    if radii.min() <= body.floor_det:
        j = int(np.argmin(radii))
        raise DegenerateCurvatureError(
            f"h + h_tt = {radii[j]:.3e} at index {j} is at or below the floor"
        )
    return 1.0 / radii


def support_gap(body: ConvexBody, x) -> np.ndarray:
    """max_j(<x, n_j> - h_j); nonpositive iff x lies in the body."""
    pts, single = _as_points(x)
    gaps = (pts @ grid_normals(body.n_theta).T - body.h).max(axis=1)
    return gaps[0] if single else gaps


def contains(body: ConvexBody, x) -> bool | np.ndarray:
    """Half-plane containment test against every sampled support line."""
    return support_gap(body, x) <= body.tol_contain


def radial_gauge(body: ConvexBody, angles) -> np.ndarray:
    """Distance from the origin to the boundary along given directions.

    Smooth (spectral) bodies solve the boundary-angle equation
    alpha(theta) = theta + atan(h_theta / h) = psi by Newton on the
    trigonometric interpolant, then return |x(theta)| =
    sqrt(h^2 + h_theta^2); alpha is strictly increasing for strictly
    convex bodies.  Kinked bodies fall back to the half-plane gauge
    rho(u) = min_j h_j / <u, n_j>, exact for the sampled polygon.
    """
    ang = np.atleast_1d(np.asarray(angles, dtype=float))
    if body.diff_mode == SPECTRAL:
        coef = trig_coefficients(body.h)
        n = body.n_theta
        # alpha is monotone for strictly convex bodies: invert it on a
        # dense presampled grid, then polish with two Newton steps
        dense = np.linspace(0.0, 2.0 * np.pi, 8 * n, endpoint=False)
        h_d = trig_eval(coef, n, dense)
        ht_d = trig_eval(coef, n, dense, order=1)
        alpha_d = dense + np.arctan2(ht_d, h_d)
        order = np.argsort(alpha_d)
        alpha_sorted = alpha_d[order]
        theta_sorted = dense[order]
        psi = np.mod(ang, 2.0 * np.pi)
        wrap_lo = np.concatenate([[alpha_sorted[-1] - 2.0 * np.pi], alpha_sorted])
        wrap_th = np.concatenate([[theta_sorted[-1] - 2.0 * np.pi], theta_sorted])
        theta = np.interp(psi, wrap_lo, wrap_th)
        for _ in range(3):
            h = trig_eval(coef, n, theta)
            ht = trig_eval(coef, n, theta, order=1)
            htt = trig_eval(coef, n, theta, order=2)
            alpha = theta + np.arctan2(ht, h)
            slope = h * (h + htt) / (h**2 + ht**2)
            delta = np.mod(psi - alpha + np.pi, 2.0 * np.pi) - np.pi
            theta = theta + np.clip(delta / np.maximum(slope, 1e-12), -0.1, 0.1)
        h = trig_eval(coef, n, theta)
        ht = trig_eval(coef, n, theta, order=1)
        return np.sqrt(h**2 + ht**2)
    u = np.column_stack([np.cos(ang), np.sin(ang)])
    dots = u @ grid_normals(body.n_theta).T
    with np.errstate(divide="ignore"):
        ratios = np.where(dots > 1e-12, body.h / np.maximum(dots, 1e-300), np.inf)
    return ratios.min(axis=1)


def support_line_vertices(body: ConvexBody) -> np.ndarray:
    """Vertices of the intersection of the sampled supporting half-planes.

    Vertex j is the crossing of the support lines at theta_j and
    theta_{j+1}; the polygon through them is the exact body represented
    by the samples (circumscribed about the underlying smooth set).
    """
    n = grid_normals(body.n_theta)
    n_next = np.roll(n, -1, axis=0)
    h = body.h
    h_next = np.roll(h, -1)
    c = math.cos(2.0 * np.pi / body.n_theta)
    a = (h - h_next * c) / (1.0 - c * c)
    b = (h_next - h * c) / (1.0 - c * c)
    return a[:, None] * n + b[:, None] * n_next


def support_area(body: ConvexBody) -> float:
    """Enclosed area.

    Smooth bodies use 0.5 * integral of (h^2 - h_theta^2), spectrally
    exact; kinked bodies (fd mode) use the shoelace area of the
    half-plane intersection polygon, since squaring a finite-difference
    h_theta smears the kinks and inflates the area at O(dtheta).
    """
    if body.diff_mode == FD:
        v = support_line_vertices(body)
        nxt = np.roll(v, -1, axis=0)
        return 0.5 * float(np.sum(v[:, 0] * nxt[:, 1] - v[:, 1] * nxt[:, 0]))
    dtheta = 2.0 * np.pi / body.n_theta
    ht = body.h_theta()
    return 0.5 * float(np.sum(body.h**2 - ht**2)) * dtheta


def support_perimeter(body: ConvexBody) -> float:
    """Perimeter via the Cauchy formula, the integral of h over all normals."""
    dtheta = 2.0 * np.pi / body.n_theta
    return float(body.h.sum()) * dtheta


@dataclass(frozen=True)
class GraphFunction:
    """Convex function of one variable sampled on a uniform grid."""

    grid: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        grid = np.ascontiguousarray(np.asarray(self.grid, dtype=float))
        w = np.ascontiguousarray(np.asarray(self.w, dtype=float))
        if grid.ndim != 1 or grid.size < 3 or grid.shape != w.shape:
            raise ValueError("grid and values must be matching 1-D arrays, length >= 3")
        steps = np.diff(grid)
        if steps.min() <= 0 or not np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
            raise ValueError("grid must be uniform and increasing")
        scale = max(1.0, float(np.abs(w).max()))
        second = w[:-2] - 2.0 * w[1:-1] + w[2:]
        if second.min() < -TOL_CONVEX_REL * scale:
            raise ValueError(f"values violate discrete convexity: {second.min():.3e}")
        grid.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "w", w)

    @property
    def dz(self) -> float:
        return float(self.grid[1] - self.grid[0])


def legendre(w: GraphFunction, grid=None) -> GraphFunction:
    """Exact discrete convex conjugate w*(p) = max_z (p z - w(z)).

    By default the conjugate is sampled on the slope range of w (the
    interval where the discrete conjugate is exact); pass `grid` to
    evaluate elsewhere, e.g. the original grid for a biconjugate.
    """
    if grid is None:
        slopes = np.diff(w.w) / w.dz
        grid = np.linspace(slopes.min(), slopes.max(), w.grid.size)
    p = np.asarray(grid, dtype=float)
    values = (p[:, None] * w.grid[None, :] - w.w[None, :]).max(axis=1)
    return GraphFunction(grid=p, w=values)


def support_from_graph(w: GraphFunction, components, margin: float = 1e-3) -> np.ndarray:
    """Support values of the epigraph body at downward normals.

    The boundary piece is the graph x2 = w(x1).  A downward unit normal
    is n = (t, -sqrt(1-t^2)) with horizontal component t; its support
    value is max_z (t z - sqrt(1-t^2) w(z)), the conjugate identity in a
    stable product form.  Components with |t| > 1 - margin are rejected:
    the chart degenerates at the equator.
    """
    t = np.atleast_1d(np.asarray(components, dtype=float))
    if np.any(np.abs(t) > 1.0 - margin):
        raise ChartRangeError(
            f"normal component beyond chart range |t| <= {1.0 - margin}"
        )
    drop = np.sqrt(1.0 - t**2)
    vals = (t[:, None] * w.grid[None, :] - drop[:, None] * w.w[None, :]).max(axis=1)
    return vals if np.ndim(components) else float(vals[0])


def polyline_curvature(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Three-point circumradius curvature and arclength weights.

    `points` is a closed loop given without repetition of the first
    point.  Returns (K, ds) per vertex, with ds the half-sum of adjacent
    edge lengths.  Collinear triples get K = 0.
    """
    pts = np.asarray(points, dtype=float)
    prev = np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0)
    a = np.linalg.norm(pts - prev, axis=1)
    b = np.linalg.norm(nxt - pts, axis=1)
    c = np.linalg.norm(nxt - prev, axis=1)
    cross = (pts[:, 0] - prev[:, 0]) * (nxt[:, 1] - prev[:, 1]) - (
        pts[:, 1] - prev[:, 1]
    ) * (nxt[:, 0] - prev[:, 0])
    area2 = np.abs(cross)
    denom = a * b * c
    with np.errstate(divide="ignore", invalid="ignore"):
        curv = np.where(denom > 0.0, 2.0 * area2 / np.maximum(denom, 1e-300), 0.0)
    ds = 0.5 * (a + b)
    return curv, ds


def convex_position_defect(points: np.ndarray) -> float:
    """Largest inward cross-product turn of a closed polyline.

    Zero (up to sign convention) for points in convex position traversed
    counterclockwise; used to validate boundary parametrizations.
    """
    pts = np.asarray(points, dtype=float)
    prev = np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0)
    e1 = pts - prev
    e2 = nxt - pts
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    return float(-cross.min())
