"""Marching solver for the support-function evolution of the level sets.

The nested family A_r = {phi <= r} is encoded by its support values
H(r, theta).  H satisfies the marching equation

    dH/dr = rho1(r n) r^(d-1) / (rho0(Hn + H_theta v) (H + H_thetatheta))

in the plane, integrated from the outer datum H(R, .) = h_A down to a
small inner cutoff.  The right-hand side is the curvature-flow velocity
written in support form, so explicit stepping is parabolic-stiff: a
mode-m ripple decays at rate ~ nu m^2 with nu = rhs / (H + H_tt).  Each
output interval is therefore split into equal substeps sized by the
classical RK4 real-axis stability bound; without this the march blows
up from roundoff ripples at any practical output resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geometry
from .errors import (
    ConvexityLossError,
    DegenerateCurvatureError,
    DomainEscapeError,
    NotRadialError,
    OutOfRangeError,
)
from .fields import DensityField
from .geometry import FD, SPECTRAL, ConvexBody

RK4_STABILITY = 2.785
DEFAULT_SAFETY = 0.7
FRAC_DEGENERATE = 0.01
R_STOP_FRACTION = 0.05


@dataclass
class SolveStats:
    """Diagnostics accumulated during a march."""

    steps: int = 0
    substeps: int = 0
    retries: int = 0
    clamp_count: int = 0
    min_radius_of_curvature: float = math.inf


@dataclass(frozen=True)
class SupportField:
    """Solved support values H[k][j] = H(r_k, theta_j), r_0 = R outermost.

    Rows shrink strictly (H_r > 0), each row is a valid convex body, and
    row 0 is the boundary datum.  `rho_digest` records which densities
    produced the field; it is None for fields loaded from CSV.
    """

    d: int
    R: float
    r_stop: float
    H: np.ndarray
    diff_mode: str = SPECTRAL
    rho_digest: Optional[str] = None
    stats: Optional[SolveStats] = None

    def __post_init__(self):
        H = np.ascontiguousarray(np.asarray(self.H, dtype=float))
        H.setflags(write=False)
        object.__setattr__(self, "H", H)
        if H.ndim != 2:
            raise ValueError("H must be a (n_r+1, n_theta) matrix")
        if not (0.0 < self.r_stop < self.R):
            raise ValueError("need 0 < r_stop < R")

    @property
    def n_r(self) -> int:
        return self.H.shape[0] - 1

    @property
    def n_theta(self) -> int:
        return self.H.shape[1]

    @property
    def r_grid(self) -> np.ndarray:
        return np.linspace(self.R, self.r_stop, self.n_r + 1)

    @property
    def dr(self) -> float:
        return (self.R - self.r_stop) / self.n_r

    def row_body(self, k: int) -> ConvexBody:
        return ConvexBody(h=self.H[k], diff_mode=self.diff_mode)

    def validate(self) -> None:
        """Check nesting and per-row convexity; raises on violation."""
        if not np.all(np.diff(self.H, axis=0) < 0.0):
            raise ValueError("rows must shrink strictly monotonically")
        for k in (0, self.n_r // 2, self.n_r):
            self.row_body(k)


class _March:
    """State for one solve; keeps the hot loop free of reallocation."""

    def __init__(self, body, rho0, rho1, n_r, r_stop, safety):
        self.body = body
        self.rho0 = rho0
        self.rho1 = rho1
        self.mode = body.diff_mode
        self.n = body.n_theta
        self.normals = geometry.grid_normals(self.n)
        self.tangents = geometry.grid_tangents(self.n)
        self.R = float(rho1.ball_radius)
        self.r_stop = r_stop if r_stop is not None else R_STOP_FRACTION * self.R
        self.n_r = n_r
        self.safety = safety
        self.floor = body.floor_det
        self.escape_tol = 10.0 * body.tol_contain
        self.stats = SolveStats()
        dtheta = 2.0 * np.pi / self.n
        if self.mode == SPECTRAL:
            self.symbol_max = (self.n / 2) ** 2
        else:
            self.symbol_max = 4.0 / dtheta**2 + 1.0
        self.d = 2
        self.retry_floor = -math.inf
        # fast paths for the hot loop: constant rho0, radial rho1
        self.rho0_const = rho0.Z if rho0.kind == "uniform" else None
        self.rho1_radial = rho1.is_radial()

    def _pressure(self, r: float):
        """rho1 at the target circle of radius r, times r^(d-1)."""
        if self.rho1_radial:
            return float(self.rho1.Z * self.rho1._radial_shape(np.array([r]))[0]) * r ** (
                self.d - 1
            )
        return self.rho1.eval_raw(r * self.normals) * r ** (self.d - 1)

    def _checked_radii(self, g: np.ndarray, r: float) -> np.ndarray:
        gmin = float(g.min())
        if gmin < self.stats.min_radius_of_curvature:
            self.stats.min_radius_of_curvature = gmin
        if gmin < self.retry_floor:
            raise _RetryStep
        if gmin < self.floor:
            n_below = int((g < self.floor).sum())
            if n_below > FRAC_DEGENERATE * self.n:
                raise ConvexityLossError(
                    f"{n_below}/{self.n} nodes below the curvature floor at r = {r:.6g}"
                )
            self.stats.clamp_count += n_below
            return np.maximum(g, self.floor)
        return g

    def rhs(self, r: float, H: np.ndarray) -> np.ndarray:
        if self.rho0_const is not None:
            g = self._checked_radii(
                H + geometry.periodic_second_derivative(H, self.mode), r
            )
            return self._pressure(r) / (self.rho0_const * g)
        ht, htt = geometry.periodic_derivatives_12(H, self.mode)
        g = self._checked_radii(H + htt, r)
        points = H[:, None] * self.normals + ht[:, None] * self.tangents
        rho0_vals = self.rho0.eval_raw(points)
        return self._pressure(r) / (rho0_vals * g)

    def rk4_step(self, r: float, H: np.ndarray, h: float) -> np.ndarray:
        k1 = self.rhs(r, H)
        k2 = self.rhs(r - 0.5 * h, H - 0.5 * h * k1)
        k3 = self.rhs(r - 0.5 * h, H - 0.5 * h * k2)
        k4 = self.rhs(r - h, H - h * k3)
        return H - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def advance(self, r0: float, H: np.ndarray, span: float) -> np.ndarray:
        """March one output interval, substepping for explicit stability."""
        g = np.maximum(
            H + geometry.periodic_derivative(H, 2, self.mode), self.floor
        )
        # the degeneracy trigger fires only on drift below where we started
        start_min = float(g.min())
        self.retry_floor = 4.0 * self.floor if start_min >= 4.0 * self.floor else -math.inf
        f0 = self.rhs(r0, H)
        nu_max = float((f0 / g).max())
        stable = RK4_STABILITY * self.safety / (nu_max * self.symbol_max)
        n_sub = max(1, int(math.ceil(span / stable)))
        while True:
            h = span / n_sub
            r = r0
            Hc = H
            try:
                for _ in range(n_sub):
                    Hc = self.rk4_step(r, Hc, h)
                    r -= h
            except _RetryStep:
                self.stats.retries += 1
                n_sub *= 2
                if n_sub > 2**18:
                    raise ConvexityLossError(
                        f"step refinement exhausted near r = {r0:.6g}"
                    ) from None
                continue
            self.stats.substeps += n_sub
            return Hc

    def check_escape(self, H_row: np.ndarray) -> None:
        ht = geometry.periodic_derivative(H_row, 1, self.mode)
        points = H_row[:, None] * self.normals + ht[:, None] * self.tangents
        gap = float(geometry.support_gap(self.body, points).max())
        if gap > self.escape_tol:
            raise DomainEscapeError(
                f"inverse-map points leave the source body by {gap:.3e}"
            )


class _RetryStep(Exception):
    """Internal: a stage hit the degeneracy trigger; halve and redo."""


def solve_2d(
    body: ConvexBody,
    rho0: DensityField,
    rho1: DensityField,
    n_r: int = 256,
    r_stop: Optional[float] = None,
    safety: float = DEFAULT_SAFETY,
) -> SupportField:
    """March the level-set support function from the boundary inward.

    `rho0` must live on `body`, `rho1` on a ball B_R; both normalized.
    Returns the full H(r, theta) grid from r = R down to r_stop (default
    5 percent of R, keeping clear of the shrink-to-point regime).
    """
    if rho1.ball_radius is None:
        raise ValueError("target density must live on a ball")
    if rho0.body is None or rho0.body.n_theta != body.n_theta:
        raise ValueError("source density must live on the solve body")
    if not np.array_equal(rho0.body.h, body.h):
        raise ValueError("source density body differs from the solve body")
    geometry.curvature_profile(body)  # strict convexity at every node
    march = _March(body, rho0, rho1, n_r, r_stop, safety)
    if not (0.0 < march.r_stop < march.R):
        raise ValueError("need 0 < r_stop < R")
    r_grid = np.linspace(march.R, march.r_stop, n_r + 1)
    H = np.empty((n_r + 1, body.n_theta))
    H[0] = body.h
    row = body.h.copy()
    for k in range(n_r):
        row = march.advance(r_grid[k], row, r_grid[k] - r_grid[k + 1])
        H[k + 1] = row
        march.check_escape(row)
    march.stats.steps = n_r
    fld = SupportField(
        d=2,
        R=march.R,
        r_stop=march.r_stop,
        H=H,
        diff_mode=body.diff_mode,
        rho_digest=rho0.digest() + ":" + rho1.digest(),
        stats=march.stats,
    )
    fld.validate()
    return fld


@dataclass(frozen=True)
class RadialProfile:
    """Monotone level map q(s) for radially symmetric transport in d dims.

    q matches cumulative masses: F_target(q(s)) = F_source(s).  Arrays
    `s` and `q` sample the map on a fine grid; calls interpolate.
    """

    d: int
    s: np.ndarray
    q: np.ndarray

    def __call__(self, s) -> np.ndarray:
        return np.interp(s, self.s, self.q)

    def inverse(self, t) -> np.ndarray:
        return np.interp(t, self.q, self.s)

    @property
    def s_max(self) -> float:
        return float(self.s[-1])

    @property
    def R(self) -> float:
        return float(self.q[-1])


def solve_radial(
    d: int, rho0: DensityField, rho1: DensityField, n_grid: int = 8192
) -> RadialProfile:
    """Exact radial transport by monotone CDF inversion, any dimension."""
    if not rho0.is_radial() or not rho1.is_radial():
        raise NotRadialError("both densities must be radially symmetric")
    if rho0.d != d or rho1.d != d:
        raise NotRadialError(f"densities are not normalized for dimension {d}")
    if n_grid < 1024:
        raise ValueError("radial grid must have at least 1024 nodes")
    s_max = rho0.outer_radius
    s = np.linspace(0.0, s_max, n_grid)
    q = np.asarray(rho1.radial_cdf_inv(rho0.radial_cdf(s)), dtype=float)
    if not np.all(np.diff(q) > 0.0):
        raise NotRadialError("level map is not strictly increasing (degenerate density)")
    return RadialProfile(d=d, s=s, q=q)


# -- off-grid evaluation helpers --------------------------------------


def _row_weights(field_: SupportField, r: float) -> tuple[int, float]:
    """Bracketing row index k and fraction w, r between rows k and k+1."""
    tol = 1e-9 * field_.R
    if r > field_.R + tol or r < field_.r_stop - tol:
        raise OutOfRangeError(f"r = {r:.6g} outside [{field_.r_stop:.6g}, {field_.R:.6g}]")
    pos = (field_.R - r) / field_.dr
    k = int(min(max(math.floor(pos), 0), field_.n_r - 1))
    return k, pos - k


def support_value(field_: SupportField, r: float, theta, order: int = 0):
    """H (or an angular derivative) at level r, spectral in theta.

    Linear interpolation between the bracketing rows; fd-mode fields
    fall back to finite differences on each row before interpolating.
    """
    k, w = _row_weights(field_, r)
    row = (1.0 - w) * field_.H[k] + w * field_.H[k + 1]
    if field_.diff_mode == SPECTRAL:
        coef = geometry.trig_coefficients(row)
        vals = geometry.trig_eval(coef, field_.n_theta, theta, order)
        return float(vals[0]) if np.ndim(theta) == 0 else vals
    vals = row if order == 0 else geometry.periodic_derivative(row, order, FD)
    grid = np.append(geometry.grid_angles(field_.n_theta), 2.0 * np.pi)
    closed = np.append(vals, vals[0])
    theta_arr = np.mod(np.atleast_1d(theta), 2.0 * np.pi)
    out = np.interp(theta_arr, grid, closed)
    return out if np.ndim(theta) else float(out[0])


def chart_angle(z) -> np.ndarray:
    """Angle of the downward normal (z, -1)/sqrt(1+z^2), in (pi, 2pi)."""
    return np.arctan2(-1.0, np.asarray(z, dtype=float)) + 2.0 * np.pi


def chart_u_from_H(field_: SupportField, z_grid) -> np.ndarray:
    """Graph-chart potential u(z, r) = sqrt(1+z^2) H(r, theta(z)).

    Returns a (n_r+1, n_z) matrix aligned with the field rows; u is
    convex in z and increases with r.
    """
    z = np.asarray(z_grid, dtype=float)
    theta = chart_angle(z)
    coef = geometry.trig_coefficients(field_.H)
    m = np.arange(coef.shape[-1])
    weights = np.full(coef.shape[-1], 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    phase = np.exp(1j * np.outer(theta, m))
    vals = (phase @ (coef * weights).T).real.T / field_.n_theta
    return np.sqrt(1.0 + z**2)[None, :] * vals


def _u_point(field_: SupportField, z: float, r: float) -> float:
    return math.sqrt(1.0 + z * z) * float(support_value(field_, r, chart_angle(z)))


def _u_stencil(field_: SupportField, z: float, r: float):
    """Chart value and z-derivatives by fourth-order differences.

    A five-point stencil with a step well above sqrt(eps) keeps both
    the truncation and the roundoff of the second derivative near 1e-9;
    three-point differences cannot get below ~1e-7 at |z| ~ 2.
    """
    dz = 0.004 * (1.0 + abs(z))
    u = [_u_point(field_, z + k * dz, r) for k in (-2, -1, 0, 1, 2)]
    u_z = (u[0] - 8.0 * u[1] + 8.0 * u[3] - u[4]) / (12.0 * dz)
    u_zz = (-u[0] + 16.0 * u[1] - 30.0 * u[2] + 16.0 * u[3] - u[4]) / (12.0 * dz**2)
    return u[2], u_z, u_zz


def chart_identity_residual(field_: SupportField, z: float, r: float) -> float:
    """Relative defect of (H + H_tt) = (1+z^2)^{3/2} u_zz at one node.

    u_zz comes from finite differences of the chart potential, an
    evaluation path independent of the spectral angular derivative.
    """
    theta = float(chart_angle(z))
    g = float(support_value(field_, r, theta)) + float(
        support_value(field_, r, theta, order=2)
    )
    floor = geometry.FLOOR_DET_REL * float(field_.H[0].max())
    if g <= floor:
        raise DegenerateCurvatureError(f"h + h_tt = {g:.3e} at (z, r) = ({z}, {r})")
    _, _, u_zz = _u_stencil(field_, z, r)
    return abs(g - (1.0 + z * z) ** 1.5 * u_zz) / abs(g)


def ma1_residual(
    field_: SupportField,
    rho0: DensityField,
    rho1: DensityField,
    z: float,
    r: float,
) -> float:
    """Relative defect of the chart equation u_r u_zz = RHS at one node.

    RHS = [r / (1+z^2)] rho1(V(z, r)) / rho0(u_z, z u_z - u) with V the
    polar chart point r (z, -1)/sqrt(1+z^2); all derivatives by finite
    differences of the chart potential.
    """
    dr = field_.dr
    r_lo = max(field_.r_stop, r - dr)
    r_hi = min(field_.R, r + dr)
    u0, u_z, u_zz = _u_stencil(field_, z, r)
    u_r = (_u_point(field_, z, r_hi) - _u_point(field_, z, r_lo)) / (r_hi - r_lo)
    lhs = u_r * u_zz
    source_point = np.array([u_z, z * u_z - u0])
    root = math.sqrt(1.0 + z * z)
    target_point = np.array([r * z / root, -r / root])
    rhs = (
        r
        / (1.0 + z * z)
        * float(rho1.eval_raw(target_point))
        / float(rho0.eval_raw(source_point))
    )
    return abs(lhs - rhs) / abs(rhs)


def marching_residual(
    field_: SupportField, rho0: DensityField, rho1: DensityField
) -> np.ndarray:
    """Pointwise defect of rho1 r^{d-1} = rho0(T^{-1}) H_r (H + H_tt).

    H_r uses five-point fourth-order radial stencils on interior rows
    (three-point differences cannot resolve 1e-6 residuals near the
    inner cutoff); returns the relative defect on rows 2..n_r-2.
    """
    H = field_.H
    n_r = field_.n_r
    if n_r < 8:
        raise ValueError("need at least 8 radial steps")
    dr = field_.dr
    rows = np.arange(2, n_r - 1)
    # rows shrink as the index grows, so d/dr = -d/d(index) / dr
    H_r = (-H[rows - 2] + 8 * H[rows - 1] - 8 * H[rows + 1] + H[rows + 2]) / (12.0 * dr)
    mode = field_.diff_mode
    g = H[rows] + geometry.periodic_derivative(H[rows], 2, mode)
    ht = geometry.periodic_derivative(H[rows], 1, mode)
    normals = geometry.grid_normals(field_.n_theta)
    tangents = geometry.grid_tangents(field_.n_theta)
    r_vals = field_.r_grid[rows]
    res = np.empty_like(g)
    for i, r in enumerate(r_vals):
        points = H[rows[i], :, None] * normals + ht[i][:, None] * tangents
        lhs = rho1.eval_raw(r * normals) * r ** (field_.d - 1)
        rhs = rho0.eval_raw(points) * H_r[i] * g[i]
        res[i] = np.abs(lhs - rhs) / np.abs(lhs)
    return res


# -- serialization ------------------------------------------------------

CSV_HEADER_PREFIX = "# gauss-transport H-field v1"


def save_field(field_: SupportField, path) -> None:
    """Write the H grid as CSV with a self-describing header line."""
    header = (
        f"{CSV_HEADER_PREFIX}, d={field_.d}, R={field_.R:.17g}, "
        f"r_stop={field_.r_stop:.17g}, n_r={field_.n_r}, n_theta={field_.n_theta}"
    )
    lines = [header]
    for row in field_.H:
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_field(path) -> SupportField:
    """Read a field written by save_field; digest metadata is not kept."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith(CSV_HEADER_PREFIX):
            raise ValueError(f"unrecognized header: {header!r}")
        meta = {}
        for part in header[len(CSV_HEADER_PREFIX) :].split(","):
            if "=" in part:
                key, val = part.split("=")
                meta[key.strip()] = val.strip()
        rows = [np.array(line.split(","), dtype=float) for line in fh if line.strip()]
    H = np.vstack(rows)
    if H.shape != (int(meta["n_r"]) + 1, int(meta["n_theta"])):
        raise ValueError(
            f"grid {H.shape} does not match the header "
            f"({meta['n_r']} steps, {meta['n_theta']} angles)"
        )
    return SupportField(
        d=int(meta["d"]),
        R=float(meta["R"]),
        r_stop=float(meta["r_stop"]),
        H=H,
    )
