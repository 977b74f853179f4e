"""Shared solved problems; session-scoped because solves are expensive."""

import math

import numpy as np
import pytest

from gauss_transport import fields, geometry, pma, transport


ELLIPSE_A, ELLIPSE_B = 1.2, 0.8
ELLIPSE_R = math.sqrt(ELLIPSE_A * ELLIPSE_B)


def build_map(body, rho0, rho1, n_r):
    fld = pma.solve_2d(body, rho0, rho1, n_r=n_r)
    return transport.TransportMap(fld, rho0, rho1)


@pytest.fixture(scope="session")
def identity_map():
    disk = geometry.body_from_disk(1.0, 256)
    rho0 = fields.make_field("uniform", body=disk)
    rho1 = fields.make_field("uniform", ball_radius=1.0)
    return build_map(disk, rho0, rho1, 256)


@pytest.fixture(scope="session")
def doubling_map():
    disk = geometry.body_from_disk(1.0, 256)
    rho0 = fields.make_field("uniform", body=disk)
    rho1 = fields.make_field("uniform", ball_radius=2.0)
    return build_map(disk, rho0, rho1, 256)


@pytest.fixture(scope="session")
def power_map():
    """Uniform disk onto the 1/r density; the level map is s -> s^2."""
    disk = geometry.body_from_disk(1.0, 256)
    rho0 = fields.make_field("uniform", body=disk)
    rho1 = fields.make_field("radial_power", ball_radius=1.0, alpha=-1.0)
    return build_map(disk, rho0, rho1, 256)


@pytest.fixture(scope="session")
def ellipse_map():
    body = geometry.body_from_ellipse(ELLIPSE_A, ELLIPSE_B, 256)
    rho0 = fields.make_field("uniform", body=body)
    rho1 = fields.make_field("uniform", ball_radius=ELLIPSE_R)
    return build_map(body, rho0, rho1, 256)


@pytest.fixture(scope="session")
def ellipse_map_512():
    body = geometry.body_from_ellipse(ELLIPSE_A, ELLIPSE_B, 512)
    rho0 = fields.make_field("uniform", body=body)
    rho1 = fields.make_field("uniform", ball_radius=ELLIPSE_R)
    return build_map(body, rho0, rho1, 512)


def interior_sample(tmap, n, seed, dr_margin=2.0):
    """Sampled source points whose levels sit inside the solved annulus."""
    fld = tmap.field
    pts = tmap.rho0.sample(4 * n, seed)
    levels = tmap.phi_or_nan(pts)
    keep = (
        np.isfinite(levels)
        & (levels > fld.r_stop + dr_margin * fld.dr)
        & (levels < fld.R - dr_margin * fld.dr)
    )
    return pts[keep][:n]
