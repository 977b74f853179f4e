"""Catalog of probability densities on a ball or a convex body.

Four parametric kinds (uniform, radial power, angular cosine ripple,
truncated gaussian) with normalization by quadrature or closed form,
pointwise evaluation, radial CDFs for the radially symmetric members,
and deterministic counter-based sampling.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import geometry
from .errors import (
    NonintegrableSingularityError,
    NotRadialError,
    OutOfDomainError,
    RejectionStallError,
)

QUAD_TOL = 1e-8
GL_ORDER = 64

UNIFORM = "uniform"
RADIAL_POWER = "radial_power"
ANGULAR_COSINE = "angular_cosine"
GAUSSIAN_TRUNC = "gaussian_trunc"

_SAMPLE_CHUNK = 65536


@lru_cache(maxsize=8)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _gl_on(a: float, b: float, order: int = GL_ORDER) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = gauss_legendre(order)
    half = 0.5 * (b - a)
    return a + half * (nodes + 1.0), half * weights


def sphere_surface(d: int) -> float:
    """Surface measure of the unit sphere in d dimensions."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class DensityField:
    """Normalized probability density on a ball B_R or a convex body.

    Exactly one of `ball_radius` / `body` is set.  `Z` multiplies the raw
    shape function; construct through `make_field`, which normalizes.
    The dimension `d` is 2 for body domains and any d >= 2 for balls
    (non-radial kinds are planar only).
    """

    kind: str
    params: dict
    d: int = 2
    ball_radius: Optional[float] = None
    body: Optional[geometry.ConvexBody] = None
    Z: Optional[float] = None

    def __post_init__(self):
        if (self.ball_radius is None) == (self.body is None):
            raise ValueError("exactly one of ball_radius / body must be given")
        if self.d < 2:
            raise ValueError("dimension must be >= 2")
        if self.body is not None and self.d != 2:
            raise ValueError("body domains are planar")
        if self.kind not in (UNIFORM, RADIAL_POWER, ANGULAR_COSINE, GAUSSIAN_TRUNC):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind == RADIAL_POWER:
            alpha = float(self.params["alpha"])
            if alpha <= -self.d:
                raise NonintegrableSingularityError(
                    f"radial power {alpha} <= -d = {-self.d} is not integrable"
                )
            if alpha < 0.0 and self.body is not None:
                raise ValueError("negative radial powers are supported on balls only")
        if self.kind == ANGULAR_COSINE:
            if self.d != 2:
                raise ValueError("angular cosine ripple is planar")
            if abs(float(self.params["a"])) >= 1.0:
                raise ValueError("cosine amplitude must satisfy |a| < 1")
            if int(self.params["k"]) < 1:
                raise ValueError("cosine frequency must be a positive integer")
        if self.kind == GAUSSIAN_TRUNC and float(self.params["sigma"]) <= 0.0:
            raise ValueError("gaussian width must be positive")

    # -- metadata ------------------------------------------------------

    @property
    def domain_kind(self) -> str:
        return "ball" if self.ball_radius is not None else "body"

    @property
    def outer_radius(self) -> float:
        """Radius of the domain's circumscribed circle about the origin."""
        if self.ball_radius is not None:
            return float(self.ball_radius)
        return float(self.body.h.max())

    def spec_dict(self) -> dict:
        dom: dict = {"kind": self.domain_kind}
        if self.ball_radius is not None:
            dom["radius"] = float(self.ball_radius)
            dom["d"] = self.d
        else:
            dom["h"] = [float(v) for v in self.body.h]
        dens = {"kind": self.kind}
        dens.update({k: (float(v) if isinstance(v, float) else v) for k, v in self.params.items()})
        return {"domain": dom, "density": dens}

    def digest(self) -> str:
        payload = json.dumps(self.spec_dict(), sort_keys=True).encode()
        return hashlib.sha1(payload).hexdigest()[:12]

    def is_radial(self) -> bool:
        """True when the density is a radially symmetric function on a ball.

        A body domain qualifies only when it is a disk (constant support)
        carrying a radial kind.
        """
        if self.kind == ANGULAR_COSINE:
            return False
        if self.ball_radius is not None:
            return True
        h = self.body.h
        return float(h.max() - h.min()) <= 1e-12 * float(h.max())

    # -- evaluation ----------------------------------------------------

    def _shape(self, pts: np.ndarray) -> np.ndarray:
        """Unnormalized density at points, formula extended off-domain."""
        if self.kind == UNIFORM:
            return np.ones(pts.shape[0])
        r = np.linalg.norm(pts, axis=1)
        if self.kind == RADIAL_POWER:
            alpha = float(self.params["alpha"])
            with np.errstate(divide="ignore"):
                return np.where(r > 0.0, r, np.nan) ** alpha if alpha < 0 else r**alpha
        if self.kind == GAUSSIAN_TRUNC:
            sigma = float(self.params["sigma"])
            return np.exp(-0.5 * (r / sigma) ** 2)
        a = float(self.params["a"])
        k = int(self.params["k"])
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        return 1.0 + a * np.cos(k * theta)

    def _radial_shape(self, r: np.ndarray) -> np.ndarray:
        """Unnormalized density as a function of radius (radial kinds)."""
        if self.kind == UNIFORM:
            return np.ones_like(r)
        if self.kind == RADIAL_POWER:
            return r ** float(self.params["alpha"])
        if self.kind == GAUSSIAN_TRUNC:
            sigma = float(self.params["sigma"])
            return np.exp(-0.5 * (r / sigma) ** 2)
        raise NotRadialError(f"{self.kind} has no radial profile")

    def eval_raw(self, x) -> np.ndarray:
        """Normalized density by formula, without the domain check."""
        if self.Z is None:
            raise ValueError("field is not normalized; use make_field")
        pts, single = geometry._as_points(x)
        vals = self.Z * self._shape(pts)
        return float(vals[0]) if single else vals

    def contains(self, x, tol_scale: float = 1.0) -> np.ndarray:
        pts, single = geometry._as_points(x)
        if self.ball_radius is not None:
            tol = geometry.TOL_CONTAIN_REL * self.ball_radius * tol_scale
            inside = np.linalg.norm(pts, axis=1) <= self.ball_radius + tol
        else:
            gaps = geometry.support_gap(self.body, pts)
            inside = gaps <= self.body.tol_contain * tol_scale
        return bool(inside[0]) if single else inside

    def eval(self, x) -> np.ndarray:
        """Normalized density at points of the domain.

        Raises OutOfDomainError for points beyond the containment
        tolerance.
        """
        pts, single = geometry._as_points(x)
        inside = self.contains(pts)
        if not np.all(inside):
            bad = pts[~np.atleast_1d(inside)][0]
            raise OutOfDomainError(f"point {bad} lies outside the domain")
        vals = self.eval_raw(pts)
        return vals if not single else float(np.atleast_1d(vals)[0])

    def grad_log(self, x) -> np.ndarray:
        """Gradient of log density (independent of normalization)."""
        pts, single = geometry._as_points(x)
        if self.kind == UNIFORM:
            g = np.zeros_like(pts)
        elif self.kind == RADIAL_POWER:
            alpha = float(self.params["alpha"])
            r2 = np.sum(pts**2, axis=1)
            g = alpha * pts / np.maximum(r2, 1e-300)[:, None]
        elif self.kind == GAUSSIAN_TRUNC:
            sigma = float(self.params["sigma"])
            g = -pts / sigma**2
        else:
            a = float(self.params["a"])
            k = int(self.params["k"])
            theta = np.arctan2(pts[:, 1], pts[:, 0])
            r2 = np.maximum(np.sum(pts**2, axis=1), 1e-300)
            dtheta = np.column_stack([-pts[:, 1], pts[:, 0]]) / r2[:, None]
            g = (-a * k * np.sin(k * theta) / (1.0 + a * np.cos(k * theta)))[:, None] * dtheta
        return g[0] if single else g

    # -- integration ---------------------------------------------------

    def _radial_mass(self, s: float) -> float:
        """Unnormalized mass of {|x| <= s} for radial kinds on a ball."""
        sd = sphere_surface(self.d)
        if self.kind == UNIFORM:
            return sd * s**self.d / self.d
        if self.kind == RADIAL_POWER:
            alpha = float(self.params["alpha"])
            return sd * s ** (self.d + alpha) / (self.d + alpha)
        if self.kind == GAUSSIAN_TRUNC:
            if s <= 0.0:
                return 0.0
            nodes, weights = _gl_on(0.0, s)
            vals = self._radial_shape(nodes) * nodes ** (self.d - 1)
            return sd * float(np.sum(weights * vals))
        raise NotRadialError(f"{self.kind} has no radial mass function")

    def _total_mass_raw(self) -> float:
        if self.ball_radius is not None and self.kind != ANGULAR_COSINE:
            return self._radial_mass(self.ball_radius)
        # planar tensor quadrature: trapezoid in angle, Gauss-Legendre in radius
        if self.ball_radius is not None:
            n_ang = 256
            rho = np.full(n_ang, self.ball_radius)
        else:
            n_ang = self.body.n_theta
            rho = geometry.radial_gauge(self.body, geometry.grid_angles(n_ang))
        ang = geometry.grid_angles(n_ang)
        nodes, weights = gauss_legendre(GL_ORDER)
        half = 0.5 * rho
        r = half[:, None] * (nodes[None, :] + 1.0)
        w = half[:, None] * weights[None, :]
        pts = np.stack([r * np.cos(ang)[:, None], r * np.sin(ang)[:, None]], axis=-1)
        vals = self._shape(pts.reshape(-1, 2)).reshape(r.shape)
        return float(np.sum(w * vals * r)) * (2.0 * np.pi / n_ang)

    def total_mass(self) -> float:
        """Quadrature mass of the normalized field (should be 1)."""
        if self.Z is None:
            raise ValueError("field is not normalized")
        return self.Z * self._total_mass_raw()

    def radial_cdf(self, s) -> np.ndarray:
        """Mass of {|x| <= s}; radial densities only."""
        if not self.is_radial():
            raise NotRadialError("radial CDF requires a radially symmetric field on a ball")
        R = self.outer_radius
        svals = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(svals < -1e-12) or np.any(svals > R * (1.0 + 1e-12)):
            raise OutOfDomainError("radius outside [0, R]")
        svals = np.clip(svals, 0.0, R)
        if self.kind == UNIFORM:
            out = (svals / R) ** self.d
        elif self.kind == RADIAL_POWER:
            out = (svals / R) ** (self.d + float(self.params["alpha"]))
        else:
            total = self._radial_mass(R)
            out = np.array([self._radial_mass(v) for v in svals]) / total
        return out if np.ndim(s) else float(out[0])

    def radial_cdf_inv(self, p) -> np.ndarray:
        """Inverse of the radial CDF on [0, 1]."""
        if not self.is_radial():
            raise NotRadialError("radial CDF requires a radially symmetric field on a ball")
        R = self.outer_radius
        pv = np.atleast_1d(np.asarray(p, dtype=float))
        if np.any(pv < -1e-14) or np.any(pv > 1.0 + 1e-14):
            raise ValueError("probability outside [0, 1]")
        pv = np.clip(pv, 0.0, 1.0)
        if self.kind == UNIFORM:
            out = R * pv ** (1.0 / self.d)
        elif self.kind == RADIAL_POWER:
            alpha = float(self.params["alpha"])
            out = R * pv ** (1.0 / (self.d + alpha))
        else:
            out = np.array(
                [brentq(lambda r, q=q: self.radial_cdf(r) - q, 0.0, R, xtol=1e-14) for q in pv]
            )
        return out if np.ndim(p) else float(out[0])

    # -- sampling ------------------------------------------------------

    def _bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.ball_radius is not None:
            R = self.ball_radius
            return np.array([-R, -R]), np.array([R, R])
        h = self.body.h
        n = self.body.n_theta
        lo = np.array([-h[n // 2], -h[3 * n // 4]])
        hi = np.array([h[0], h[n // 4]])
        return lo, hi

    def _shape_max(self) -> float:
        """Upper bound of the raw shape function over the domain."""
        if self.kind == UNIFORM:
            return 1.0
        if self.kind == ANGULAR_COSINE:
            return 1.0 + abs(float(self.params["a"]))
        if self.kind == GAUSSIAN_TRUNC:
            return 1.0
        alpha = float(self.params["alpha"])
        if alpha < 0.0:
            raise ValueError("unbounded density; rejection sampling not applicable")
        return self.outer_radius**alpha

    def sample(self, n: int, seed: int) -> np.ndarray:
        """Draw n points, bit-reproducible for a given (field, n, seed).

        Counter-based generators keyed by (seed, chunk index) make the
        output independent of chunking, so parallel generation could
        reproduce the serial stream.  Bounded kinds use rejection from
        the bounding box; negative radial powers are drawn in polar form
        through the closed-form radial CDF (their density is unbounded
        at the origin, so no finite rejection envelope exists).
        """
        if n < 0:
            raise ValueError("sample count must be nonnegative")
        if self.Z is None:
            raise ValueError("field is not normalized")
        if n == 0:
            return np.empty((0, self.d))
        if self.d != 2:
            if not self.is_radial():
                raise NotRadialError("only radial sampling is supported for d > 2")
            return self._sample_radial_polar(n, seed)
        if self.kind == RADIAL_POWER and float(self.params["alpha"]) < 0.0:
            return self._sample_radial_polar(n, seed)
        out = np.empty((n, 2))
        filled = 0
        chunk_index = 0
        lo, hi = self._bounding_box()
        span = hi - lo
        smax = self._shape_max()
        while filled < n:
            quota = min(_SAMPLE_CHUNK, n - filled)
            rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), chunk_index]))
            got = 0
            attempts = 0
            batches = 0
            while got < quota:
                m = max(4 * (quota - got), 1024)
                u = rng.random((m, 3))
                pts = lo + u[:, :2] * span
                accept = self.contains(pts, tol_scale=0.0)
                if self.kind != UNIFORM:
                    accept &= u[:, 2] * smax <= self._shape(pts)
                good = pts[accept]
                take = min(quota - got, good.shape[0])
                out[filled + got : filled + got + take] = good[:take]
                got += take
                attempts += m
                batches += 1
                if batches >= 64 and got / max(attempts, 1) < 1e-3:
                    raise RejectionStallError(
                        f"acceptance rate {got / attempts:.2e} below 1e-3"
                    )
            filled += quota
            chunk_index += 1
        return out

    def _sample_radial_polar(self, n: int, seed: int) -> np.ndarray:
        """Radius by inverse CDF, direction uniform on the sphere."""
        out = np.empty((n, self.d))
        filled = 0
        chunk_index = 0
        while filled < n:
            quota = min(_SAMPLE_CHUNK, n - filled)
            rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), chunk_index]))
            r = self.radial_cdf_inv(rng.random(quota))
            if self.d == 2:
                ang = 2.0 * np.pi * rng.random(quota)
                direction = np.column_stack([np.cos(ang), np.sin(ang)])
            else:
                direction = rng.standard_normal((quota, self.d))
                direction /= np.linalg.norm(direction, axis=1)[:, None]
            out[filled : filled + quota] = r[:, None] * direction
            filled += quota
            chunk_index += 1
        return out


def normalize(field_: DensityField) -> DensityField:
    """Set the normalization constant so the total mass is 1."""
    mass = replace(field_, Z=1.0)._total_mass_raw()
    if not np.isfinite(mass) or mass <= 0.0:
        raise ValueError(f"cannot normalize: raw mass {mass}")
    out = replace(field_, Z=1.0 / mass)
    check = out.total_mass()
    if abs(check - 1.0) > QUAD_TOL:
        raise ValueError(f"normalization check failed: mass {check}")
    return out


def make_field(
    kind: str,
    *,
    ball_radius: Optional[float] = None,
    body: Optional[geometry.ConvexBody] = None,
    d: int = 2,
    **params,
) -> DensityField:
    """Construct and normalize a catalog density."""
    return normalize(
        DensityField(kind=kind, params=params, d=d, ball_radius=ball_radius, body=body)
    )


def field_from_spec(spec: dict, *, body: Optional[geometry.ConvexBody] = None) -> DensityField:
    """Build a field from the JSON schema {"domain": ..., "density": ...}.

    A domain of kind "body" uses the body passed by the caller (the
    problem's source set).
    """
    dom = spec.get("domain", {"kind": "body"})
    dens = dict(spec["density"])
    kind = dens.pop("kind")
    if dom.get("kind") == "ball":
        return make_field(kind, ball_radius=float(dom["radius"]), d=int(dom.get("d", 2)), **dens)
    if body is None:
        raise ValueError("body-domain density needs an explicit body")
    return make_field(kind, body=body, **dens)
