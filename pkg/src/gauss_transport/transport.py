"""Evaluation of the level-set transport map from a solved support field.

The map sends x to phi(x) n(x), where phi is the level of x in the
nested family encoded by H(r, theta) and n is the outward normal of
that level set at x.  The level is found by bisection over the stored
rows (nesting makes containment monotone); the normal angle maximizes
<x, n(theta)> - H(r, theta), located by a grid argmax plus Newton
refinement on the trigonometric interpolant.  All operations accept a
single point (2,) or a batch (N, 2) and are evaluated in fixed-size
chunks to bound memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sp_stats

from . import geometry
from .errors import (
    AmbiguousNormalError,
    DegenerateCurvatureError,
    OutOfRangeError,
)
from .fields import DensityField
from .pma import SupportField

CHUNK = 8192
RT_TOL = 1e-4


def _weights_and_modes(n: int):
    m = np.arange(n // 2 + 1, dtype=float)
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    fac1 = (1j * m).copy()
    if n % 2 == 0:
        fac1[-1] = 0.0
    fac2 = -(m**2)
    return m, w, fac1, fac2


@dataclass(frozen=True)
class TransportMap:
    """Solved support field bundled with the densities it transports."""

    field: SupportField
    rho0: DensityField
    rho1: DensityField

    def __post_init__(self):
        if self.field.rho_digest is not None:
            expected = self.rho0.digest() + ":" + self.rho1.digest()
            if self.field.rho_digest != expected:
                raise ValueError(
                    "support field was solved for different densities "
                    f"({self.field.rho_digest} != {expected})"
                )
        n = self.field.n_theta
        coef = geometry.trig_coefficients(self.field.H)
        m, w, fac1, fac2 = _weights_and_modes(n)
        object.__setattr__(self, "_coef", coef * w)  # weights folded in
        object.__setattr__(self, "_modes", m)
        object.__setattr__(self, "_fac1", fac1)
        object.__setattr__(self, "_fac2", fac2)
        object.__setattr__(self, "_normals", geometry.grid_normals(n))
        object.__setattr__(self, "_scale", float(self.field.H[0].max()))

    # -- low-level helpers ----------------------------------------------

    def _phase(self, theta: np.ndarray) -> np.ndarray:
        return np.exp(1j * theta[:, None] * self._modes)

    def _eval_rows(self, coef_rows: np.ndarray, theta: np.ndarray, fac=None, phase=None):
        """Evaluate per-point coefficient rows at per-point angles."""
        if phase is None:
            phase = self._phase(theta)
        c = coef_rows if fac is None else coef_rows * fac
        return np.einsum("im,im->i", phase, c).real / self.field.n_theta

    def _phi_chunk(self, pts: np.ndarray):
        """Grid-level bisection for the level value of each point.

        Returns (phi, bracket_row, valid).  The grid gap max_j(<x, n_j>
        - H[k][j]) sees the body as an intersection of sampled
        half-planes, so this phi carries an O(dtheta^2) bias; callers
        refine it through `_resolve_chunk`.
        """
        fld = self.field
        H = fld.H
        n_r = fld.n_r
        dots = pts @ self._normals.T
        tol = 1e-9 * self._scale
        s_outer = (dots - H[0]).max(axis=1)
        s_inner = (dots - H[n_r]).max(axis=1)
        valid = (s_outer <= tol) & (s_inner >= -tol)
        phi = np.full(pts.shape[0], np.nan)
        bracket = np.zeros(pts.shape[0], dtype=int)
        on_inner = valid & (s_inner <= 0.0)
        phi[on_inner] = fld.r_stop
        bracket[on_inner] = n_r - 1
        active = valid & ~on_inner
        if np.any(active):
            idx = np.nonzero(active)[0]
            lo = np.zeros(idx.size, dtype=int)
            hi = np.full(idx.size, n_r, dtype=int)
            s_lo = s_outer[idx]
            s_hi = s_inner[idx]
            d = dots[idx]
            while True:
                gap = hi - lo
                if gap.max() <= 1:
                    break
                mid = (lo + hi) // 2
                s_mid = (d - H[mid]).max(axis=1)
                take = s_mid <= 0.0
                lo = np.where(take, mid, lo)
                s_lo = np.where(take, s_mid, s_lo)
                hi = np.where(take, hi, mid)
                s_hi = np.where(take, s_hi, s_mid)
            t = np.clip(s_lo / (s_lo - s_hi), 0.0, 1.0)
            phi[idx] = fld.r_grid[lo] - t * fld.dr
            bracket[idx] = lo
        return phi, bracket, valid

    def _resolve_chunk(self, pts: np.ndarray):
        """Refined (phi, theta_star, valid) for one chunk.

        The grid bisection is polished by re-evaluating the support gap
        at the Newton-refined supporting angle: the gap is stationary in
        theta at the maximizer, so a slightly off angle costs only a
        second-order error, while the grid max alone would bias phi by
        O(dtheta^2) toward the circumscribed polygon.
        """
        fld = self.field
        phi0, bracket, valid = self._phi_chunk(pts)
        theta = np.full(pts.shape[0], np.nan)
        phi = phi0.copy()
        if np.any(valid):
            idx = np.nonzero(valid)[0]
            p = pts[idx]
            th = self._theta_star_chunk(p, phi0[idx], newton_iters=2)
            k = bracket[idx]
            nvec = np.column_stack([np.cos(th), np.sin(th)])
            dot = np.einsum("ij,ij->i", p, nvec)
            phase = self._phase(th)
            s_lo = dot - self._eval_rows(self._coef[k], th, phase=phase)
            s_hi = dot - self._eval_rows(self._coef[k + 1], th, phase=phase)
            t = s_lo / (s_lo - s_hi)
            r = np.clip(fld.r_grid[k] - t * fld.dr, fld.r_stop, fld.R)
            th = self._theta_star_chunk(p, r, newton_iters=2, theta0=th)
            phi[idx] = r
            theta[idx] = th
        return phi, theta, valid

    def _theta_star_chunk(
        self, pts: np.ndarray, r: np.ndarray, newton_iters: int = 3, theta0=None
    ):
        """Supporting angle of each point on its own level set."""
        fld = self.field
        n = fld.n_theta
        dtheta = 2.0 * np.pi / n
        pos = (fld.R - r) / fld.dr
        k = np.clip(np.floor(pos).astype(int), 0, fld.n_r - 1)
        w = pos - k
        if theta0 is None:
            rows = (1.0 - w)[:, None] * fld.H[k] + w[:, None] * fld.H[k + 1]
            gvals = pts @ self._normals.T - rows
            j_star = np.argmax(gvals, axis=1)
            gmax = gvals[np.arange(gvals.shape[0]), j_star]
            near = gvals >= (gmax - 1e-12 * self._scale)[:, None]
            if np.any(near.sum(axis=1) > 1):
                # angular spread of the near-maximal set, circularly
                offsets = (np.arange(n)[None, :] - j_star[:, None]) % n
                offsets = np.where(near, np.minimum(offsets, n - offsets), 0)
                spread = offsets.max(axis=1)
                if np.any(spread > 2):
                    i = int(np.argmax(spread))
                    raise AmbiguousNormalError(
                        f"support maximizers spread {spread[i]} grid steps at point {pts[i]}"
                    )
            theta = geometry.grid_angles(n)[j_star]
        else:
            theta = theta0
        coef_rows = (1.0 - w)[:, None] * self._coef[k] + w[:, None] * self._coef[k + 1]
        for _ in range(newton_iters):
            phase = self._phase(theta)
            nvec = np.column_stack([np.cos(theta), np.sin(theta)])
            vvec = np.column_stack([-nvec[:, 1], nvec[:, 0]])
            g1 = np.einsum("ij,ij->i", pts, vvec) - self._eval_rows(
                coef_rows, theta, self._fac1, phase
            )
            g2 = -np.einsum("ij,ij->i", pts, nvec) - self._eval_rows(
                coef_rows, theta, self._fac2, phase
            )
            step = np.clip(g1 / np.where(g2 < 0.0, g2, -1e-300), -dtheta, dtheta)
            theta = theta - step
        return np.mod(theta, 2.0 * np.pi)

    def _radial_profile_at(self, r: np.ndarray, theta: np.ndarray):
        """H_r and the curvature radius H + H_tt at (r, theta), O(dr^2).

        Quadratic interpolation through the three rows around r,
        differentiated in r for H_r.
        """
        fld = self.field
        m0 = np.clip(np.round((fld.R - r) / fld.dr).astype(int), 1, fld.n_r - 1)
        u = (r - fld.r_grid[m0]) / fld.dr
        phase = np.exp(1j * theta[:, None] * self._modes)

        def row_eval(rows_idx, fac=None):
            c = self._coef[rows_idx]
            if fac is not None:
                c = c * fac
            return np.einsum("im,im->i", phase, c).real / fld.n_theta

        yA = row_eval(m0 - 1)
        yB = row_eval(m0)
        yC = row_eval(m0 + 1)
        h_r = (0.5 * (yA - yC) + u * (yA - 2.0 * yB + yC)) / fld.dr
        gA = yA + row_eval(m0 - 1, self._fac2)
        gB = yB + row_eval(m0, self._fac2)
        gC = yC + row_eval(m0 + 1, self._fac2)
        radius = gB + 0.5 * u * (gA - gC) + 0.5 * u * u * (gA - 2.0 * gB + gC)
        return h_r, radius

    def _chunks(self, pts: np.ndarray):
        for start in range(0, pts.shape[0], CHUNK):
            yield pts[start : start + CHUNK], start

    # -- public operations ----------------------------------------------

    def phi(self, x):
        """Level value r with x on the boundary of A_r.

        Raises OutOfRangeError outside the annulus covered by the solve.
        """
        pts, single = geometry._as_points(x)
        out = np.empty(pts.shape[0])
        for chunk, start in self._chunks(pts):
            vals, _, valid = self._require_valid(chunk)
            out[start : start + chunk.shape[0]] = vals
        return float(out[0]) if single else out

    def phi_or_nan(self, x) -> np.ndarray:
        """Level values with nan outside the annulus (no exception)."""
        pts, single = geometry._as_points(x)
        out = np.empty(pts.shape[0])
        for chunk, start in self._chunks(pts):
            vals, _, _ = self._resolve_chunk(chunk)
            out[start : start + chunk.shape[0]] = vals
        return float(out[0]) if single else out

    def _require_valid(self, chunk: np.ndarray):
        vals, theta, valid = self._resolve_chunk(chunk)
        if not np.all(valid):
            raise OutOfRangeError(
                f"point {chunk[~valid][0]} outside the solved annulus"
            )
        return vals, theta, valid

    def normal_and_grad(self, x):
        """Outward unit normal of the level set and |grad phi| = 1/H_r."""
        pts, single = geometry._as_points(x)
        normals = np.empty_like(pts)
        grads = np.empty(pts.shape[0])
        for chunk, start in self._chunks(pts):
            vals, theta, _ = self._require_valid(chunk)
            h_r, _ = self._radial_profile_at(vals, theta)
            sl = slice(start, start + chunk.shape[0])
            normals[sl] = np.column_stack([np.cos(theta), np.sin(theta)])
            grads[sl] = 1.0 / h_r
        if single:
            return normals[0], float(grads[0])
        return normals, grads

    def forward(self, x):
        """The transport point y = phi(x) n(x)."""
        pts, single = geometry._as_points(x)
        out = np.empty_like(pts)
        for chunk, start in self._chunks(pts):
            vals, theta, _ = self._require_valid(chunk)
            out[start : start + chunk.shape[0]] = vals[:, None] * np.column_stack(
                [np.cos(theta), np.sin(theta)]
            )
        return out[0] if single else out

    def forward_or_nan(self, x) -> np.ndarray:
        """Forward map with nan rows for points outside the annulus."""
        pts, single = geometry._as_points(x)
        out = np.full_like(pts, np.nan)
        for chunk, start in self._chunks(pts):
            vals, theta, valid = self._resolve_chunk(chunk)
            block = np.full_like(chunk, np.nan)
            if np.any(valid):
                block[valid] = vals[valid][:, None] * np.column_stack(
                    [np.cos(theta[valid]), np.sin(theta[valid])]
                )
            out[start : start + chunk.shape[0]] = block
        return out[0] if single else out

    def inverse(self, y):
        """Pull a target point back: x = H n + H_theta v at polar(y)."""
        pts, single = geometry._as_points(y)
        fld = self.field
        r = np.linalg.norm(pts, axis=1)
        tol = 1e-9 * fld.R
        if np.any(r > fld.R + tol) or np.any(r < fld.r_stop - tol):
            raise OutOfRangeError("target point outside the annulus [r_stop, R]")
        r = np.clip(r, fld.r_stop, fld.R)
        theta = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * np.pi)
        out = np.empty_like(pts)
        for chunk_idx in range(0, pts.shape[0], CHUNK):
            sl = slice(chunk_idx, chunk_idx + CHUNK)
            rc, tc = r[sl], theta[sl]
            pos = (fld.R - rc) / fld.dr
            k = np.clip(np.floor(pos).astype(int), 0, fld.n_r - 1)
            w = pos - k
            coef_rows = (1.0 - w)[:, None] * self._coef[k] + w[:, None] * self._coef[k + 1]
            h = self._eval_rows(coef_rows, tc)
            ht = self._eval_rows(coef_rows, tc, self._fac1)
            nvec = np.column_stack([np.cos(tc), np.sin(tc)])
            vvec = np.column_stack([-nvec[:, 1], nvec[:, 0]])
            out[sl] = h[:, None] * nvec + ht[:, None] * vvec
        return out[0] if single else out

    def curvature(self, x):
        """Gauss curvature of the level set through each point."""
        pts, single = geometry._as_points(x)
        out = np.empty(pts.shape[0])
        floor = geometry.FLOOR_DET_REL * self._scale
        for chunk, start in self._chunks(pts):
            vals, theta, _ = self._require_valid(chunk)
            _, radius = self._radial_profile_at(vals, theta)
            if np.any(radius <= floor):
                raise DegenerateCurvatureError(
                    f"curvature undefined at point {chunk[radius <= floor][0]}"
                )
            out[start : start + chunk.shape[0]] = 1.0 / radius
        return float(out[0]) if single else out

    def cov_residual(self, x, on_degenerate: str = "raise"):
        """Relative defect of rho0 = K |grad phi| phi^{d-1} rho1(T x).

        Points whose curvature radius sits at the degeneracy floor have
        no convergence guarantee; they raise by default, or come back as
        nan with `on_degenerate="nan"` so callers can exclude and count
        them.
        """
        pts, single = geometry._as_points(x)
        out = np.empty(pts.shape[0])
        floor = geometry.FLOOR_DET_REL * self._scale
        for chunk, start in self._chunks(pts):
            vals, theta, _ = self._require_valid(chunk)
            h_r, radius = self._radial_profile_at(vals, theta)
            bad = radius <= floor
            if np.any(bad):
                if on_degenerate != "nan":
                    raise DegenerateCurvatureError(
                        f"curvature undefined at point {chunk[bad][0]}"
                    )
                radius = np.where(bad, np.inf, radius)
            y = vals[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
            model = (
                (1.0 / radius)
                * (1.0 / h_r)
                * vals ** (self.field.d - 1)
                * self.rho1.eval_raw(y)
            )
            left = self.rho0.eval_raw(chunk)
            res = np.abs(left - model) / left
            res[bad] = np.nan
            out[start : start + chunk.shape[0]] = res
        return float(out[0]) if single else out

    def jacobian_fd(self, x, step: float = 1e-3):
        """Determinant of the central-difference Jacobian of the map."""
        det, _ = self.jacobian_matrix_fd(x, step)
        return det

    def jacobian_matrix_fd(self, x, step: float = 1e-3):
        """(det, trace) of the finite-difference Jacobian at each point.

        The four stencil points must lie in the solved annulus.
        """
        pts, single = geometry._as_points(x)
        n = pts.shape[0]
        stencil = np.concatenate(
            [
                pts + np.array([step, 0.0]),
                pts - np.array([step, 0.0]),
                pts + np.array([0.0, step]),
                pts - np.array([0.0, step]),
            ]
        )
        images = self.forward(stencil)
        dTx = (images[:n] - images[n : 2 * n]) / (2.0 * step)
        dTy = (images[2 * n : 3 * n] - images[3 * n :]) / (2.0 * step)
        det = dTx[:, 0] * dTy[:, 1] - dTx[:, 1] * dTy[:, 0]
        trace = dTx[:, 0] + dTy[:, 1]
        if single:
            return float(det[0]), float(trace[0])
        return det, trace

    def pushforward_test(
        self,
        n: int,
        seed: int,
        bins: int = 32,
        margin_fraction: float = 0.02,
        w1_c1: float = 2.0,
        w1_c2: float = 10.0,
    ) -> dict:
        """Sample the source, push forward, compare against the target law.

        Statistics are conditioned to the annulus the solve covers: the
        radial law via the 1-D Wasserstein distance between CDFs, the
        angular law via a chi-square test on equal bins.  The pass
        threshold combines a sampling floor c1/sqrt(n) with a grid-error
        allowance.
        """
        fld = self.field
        eps = margin_fraction * (fld.R - fld.r_stop)
        r_lo, r_hi = fld.r_stop + eps, fld.R - eps
        x = self.rho0.sample(n, seed)
        y_all = self.forward_or_nan(x)
        levels = np.linalg.norm(y_all, axis=1)  # |T x| = phi(x)
        keep = np.isfinite(levels) & (levels >= r_lo) & (levels <= r_hi)
        y = y_all[keep]
        n_used = int(keep.sum())
        radii = levels[keep]
        f_lo = self.rho1.radial_cdf(r_lo) if self.rho1.is_radial() else None
        if f_lo is not None:
            f_hi = self.rho1.radial_cdf(r_hi)
            sgrid = np.linspace(r_lo, r_hi, 65536)
            cdf_cond = (self.rho1.radial_cdf(sgrid) - f_lo) / (f_hi - f_lo)
        else:
            # angular-cosine targets still have a uniform-disk radial part
            sgrid = np.linspace(r_lo, r_hi, 65536)
            cdf_cond = (sgrid**2 - r_lo**2) / (r_hi**2 - r_lo**2)
        emp = np.searchsorted(np.sort(radii), sgrid, side="right") / max(n_used, 1)
        radial_w1 = float(np.trapezoid(np.abs(emp - cdf_cond), sgrid))
        # angular marginal
        ang = np.mod(np.arctan2(y[:, 1], y[:, 0]), 2.0 * np.pi)
        edges = np.linspace(0.0, 2.0 * np.pi, bins + 1)
        counts, _ = np.histogram(ang, bins=edges)
        if self.rho1.kind == "angular_cosine":
            a = float(self.rho1.params["a"])
            k = int(self.rho1.params["k"])
            mass = (edges[1:] - edges[:-1]) + (a / k) * (
                np.sin(k * edges[1:]) - np.sin(k * edges[:-1])
            )
            expected = n_used * mass / (2.0 * np.pi)
        else:
            expected = np.full(bins, n_used / bins)
        chi2_p = float(sp_stats.chisquare(counts, expected).pvalue)
        grid_error = (2.0 * np.pi / fld.n_theta) ** 2 + fld.dr**2
        w1_threshold = w1_c1 / math.sqrt(max(n_used, 1)) + w1_c2 * grid_error
        report = {
            "radial_W1": radial_w1,
            "angular_chisq_pvalue": chi2_p,
            "n_used": n_used,
            "w1_threshold": w1_threshold,
            "pass": bool(radial_w1 <= w1_threshold and chi2_p >= 0.01),
        }
        return report


def roundtrip_error(tmap: TransportMap, n: int, seed: int) -> float:
    """Max |T(T^-1(y)) - y| over n target points in the annulus."""
    fld = tmap.field
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    u = rng.random((n, 2))
    radii = fld.r_stop + (fld.R - fld.r_stop) * (0.02 + 0.96 * u[:, 0])
    ang = 2.0 * np.pi * u[:, 1]
    y = radii[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
    x = tmap.inverse(y)
    back = tmap.forward(x)
    return float(np.linalg.norm(back - y, axis=1).max())
