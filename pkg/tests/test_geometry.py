import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gauss_transport import geometry
from gauss_transport.errors import (
    ChartRangeError,
    DegenerateCurvatureError,
    OriginNotInteriorError,
)


class TestBodyConstruction:
    def test_square_support_on_axis(self):
        body = geometry.body_from_polygon([(-1, -1), (1, -1), (1, 1), (-1, 1)])
        assert body.h[0] == pytest.approx(1.0, abs=1e-14)

    def test_square_support_diagonal(self):
        body = geometry.body_from_polygon([(-1, -1), (1, -1), (1, 1), (-1, 1)])
        j = body.n_theta // 8  # theta = pi/4
        assert body.h[j] == pytest.approx(math.sqrt(2.0), abs=1e-14)

    def test_triangle_support_at_pi(self):
        body = geometry.body_from_polygon([(1, 0), (-1, 1), (-1, -1)])
        assert body.h[body.n_theta // 2] == pytest.approx(1.0, abs=1e-14)

    def test_polygon_missing_origin_rejected(self):
        with pytest.raises(OriginNotInteriorError):
            geometry.body_from_polygon([(1, 1), (2, 1), (1.5, 2)])

    def test_ellipse_axes(self):
        body = geometry.body_from_ellipse(2.0, 1.0)
        assert body.h[0] == pytest.approx(2.0)
        assert body.h[body.n_theta // 4] == pytest.approx(1.0)

    def test_unit_disk(self):
        body = geometry.body_from_disk(1.0)
        assert np.allclose(body.h, 1.0)

    def test_n_theta_power_of_two(self):
        with pytest.raises(ValueError):
            geometry.ConvexBody(h=np.ones(100))


class TestBoundaryAndCurvature:
    def test_disk_boundary_point(self):
        body = geometry.body_from_disk(1.0)
        assert geometry.boundary_point(body, 0) == pytest.approx([1.0, 0.0])

    def test_disk_radius_2_at_quarter(self):
        body = geometry.body_from_disk(2.0)
        p = geometry.boundary_point(body, body.n_theta // 4)
        assert p == pytest.approx([0.0, 2.0], abs=1e-12)

    def test_ellipse_boundary_point(self):
        body = geometry.body_from_ellipse(2.0, 1.0)
        assert geometry.boundary_point(body, 0) == pytest.approx([2.0, 0.0], abs=1e-10)

    def test_disk_curvature(self):
        body = geometry.body_from_disk(3.0)
        for j in (0, 17, 100):
            assert geometry.curvature_from_support(body, j) == pytest.approx(1.0 / 3.0)

    def test_ellipse_curvature_vertex(self):
        # h + h_tt = 0.5 at the end of the long axis, so K = 2
        body = geometry.body_from_ellipse(2.0, 1.0)
        assert geometry.curvature_from_support(body, 0) == pytest.approx(2.0, rel=1e-8)

    def test_ellipse_curvature_covertex(self):
        body = geometry.body_from_ellipse(2.0, 1.0)
        j = body.n_theta // 4
        assert geometry.curvature_from_support(body, j) == pytest.approx(0.25, rel=1e-8)

    def test_polygon_flat_spot_degenerate(self):
        # between edge normals a single vertex is active and h + h_tt = 0
        body = geometry.body_from_polygon([(-1, -1), (1, -1), (1, 1), (-1, 1)])
        with pytest.raises(DegenerateCurvatureError):
            geometry.curvature_from_support(body, 5)

    def test_boundary_points_convex_position(self):
        for body in (
            geometry.body_from_disk(1.0),
            geometry.body_from_ellipse(2.0, 1.0),
            geometry.smoothed_square(2.0, 0.1),
        ):
            pts = geometry.boundary_points(body)
            assert geometry.convex_position_defect(pts) <= body.tol_convex


class TestContainment:
    def test_disk_inside(self):
        body = geometry.body_from_disk(1.0)
        assert geometry.contains(body, np.array([0.5, 0.0]))

    def test_disk_outside(self):
        body = geometry.body_from_disk(1.0)
        assert not geometry.contains(body, np.array([1.1, 0.0]))

    def test_ellipse_oracle(self):
        # 1.9^2/4 + 0.5^2 = 1.1525 > 1, outside
        body = geometry.body_from_ellipse(2.0, 1.0)
        assert not geometry.contains(body, np.array([1.9, 0.5]))

    def test_boundary_scaling(self):
        for body in (geometry.body_from_disk(1.0), geometry.body_from_ellipse(2.0, 1.0)):
            pts = geometry.boundary_points(body)
            assert geometry.contains(body, 0.999 * pts).all()
            assert not geometry.contains(body, 1.001 * pts).any()


class TestGaussBonnetDiscrete:
    def test_support_form_exact(self):
        # K (h + h_tt) dtheta telescopes to dtheta by construction
        body = geometry.body_from_ellipse(1.5, 0.7)
        radii = body.curvature_radii()
        dtheta = 2.0 * math.pi / body.n_theta
        total = np.sum((1.0 / radii) * radii * dtheta)
        assert total == pytest.approx(2.0 * math.pi, abs=1e-12)

    def test_arclength_form(self):
        dtheta2 = (2.0 * math.pi / 256) ** 2
        for body in (
            geometry.body_from_disk(1.0, 256),
            geometry.body_from_ellipse(2.0, 1.0, 256),
            geometry.body_from_ellipse(1.2, 0.8, 256),
        ):
            pts = geometry.boundary_points(body)
            curv, ds = geometry.polyline_curvature(pts)
            total = float((curv * ds).sum())
            assert abs(total - 2.0 * math.pi) / (2.0 * math.pi) <= 10.0 * dtheta2


class TestAreaPerimeter:
    def test_disk(self):
        body = geometry.body_from_disk(1.0)
        assert geometry.support_area(body) == pytest.approx(math.pi, rel=1e-12)
        assert geometry.support_perimeter(body) == pytest.approx(2 * math.pi, rel=1e-12)

    def test_ellipse(self):
        from scipy.special import ellipe

        body = geometry.body_from_ellipse(2.0, 1.0)
        assert geometry.support_area(body) == pytest.approx(2 * math.pi, rel=1e-10)
        exact = 8.0 * ellipe(0.75)
        assert geometry.support_perimeter(body) == pytest.approx(exact, rel=1e-10)

    def test_smoothed_square(self):
        body = geometry.smoothed_square(2.0, 0.1, 256)
        assert geometry.support_area(body) == pytest.approx(4.8 + math.pi * 0.01, rel=1e-4)
        assert geometry.support_perimeter(body) == pytest.approx(
            8.0 + 2 * math.pi * 0.1, rel=1e-4
        )


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(0.5, 3.0),
    b=st.floats(0.5, 3.0),
)
def test_ellipse_properties(a, b):
    body = geometry.body_from_ellipse(a, b, 64)
    pts = geometry.boundary_points(body)
    assert geometry.contains(body, 0.999 * pts).all()
    assert geometry.support_area(body) == pytest.approx(math.pi * a * b, rel=1e-3)


class TestLegendre:
    def test_self_dual_quadratic(self):
        z = np.linspace(-2, 2, 257)
        w = geometry.GraphFunction(grid=z, w=z**2 / 2)
        conj = geometry.legendre(w)
        assert np.abs(conj.w - conj.grid**2 / 2).max() <= w.dz**2

    def test_shifted_quadratic(self):
        z = np.linspace(-3, 3, 385)
        w = geometry.GraphFunction(grid=z, w=z**2 / 2 + z)
        conj = geometry.legendre(w)
        assert np.abs(conj.w - (conj.grid - 1.0) ** 2 / 2).max() <= 2 * w.dz**2

    def test_absolute_value(self):
        z = np.linspace(-2, 2, 257)
        w = geometry.GraphFunction(grid=z, w=np.abs(z))
        conj = geometry.legendre(w, grid=np.linspace(-1, 1, 101))
        assert np.abs(conj.w).max() <= 1e-14

    def test_order_reversing(self):
        z = np.linspace(-2, 2, 129)
        small = geometry.legendre(geometry.GraphFunction(grid=z, w=z**2 / 2))
        big = geometry.legendre(geometry.GraphFunction(grid=z, w=z**2 / 2 + 0.5))
        # pointwise larger functions have pointwise smaller conjugates
        assert np.all(big.w <= small.w + 1e-14)

    @settings(max_examples=25, deadline=None)
    @given(c=st.floats(0.3, 3.0), slope=st.floats(-1.0, 1.0))
    def test_biconjugate_restores_convex(self, c, slope):
        z = np.linspace(-2, 2, 257)
        vals = c * z**2 / 2 + slope * z
        w = geometry.GraphFunction(grid=z, w=vals)
        back = geometry.legendre(geometry.legendre(w), grid=z)
        assert np.all(back.w <= vals + 1e-12)
        assert np.abs(back.w - vals).max() <= c * w.dz**2 + 1e-12


class TestSupportFromGraph:
    def test_parabola_south_pole(self):
        z = np.linspace(-2, 2, 513)
        w = geometry.GraphFunction(grid=z, w=z**2 / 2)
        assert geometry.support_from_graph(w, 0.0) == pytest.approx(0.0, abs=1e-14)

    def test_tilted_parabola(self):
        z = np.linspace(-3, 3, 769)
        w = geometry.GraphFunction(grid=z, w=z**2 / 2 + z)
        assert geometry.support_from_graph(w, 0.0) == pytest.approx(0.5, abs=1e-6)

    def test_shifted_disk_arc(self):
        # lower arc of the unit disk centered at (0, 1): support of the
        # shifted disk at n = (t, -sqrt(1-t^2)) is 1 - sqrt(1-t^2)
        z = np.linspace(-0.9, 0.9, 2049)
        w = geometry.GraphFunction(grid=z, w=1.0 - np.sqrt(1.0 - z**2))
        t = math.sin(math.pi / 6.0)
        expected = 1.0 - math.sqrt(1.0 - t**2)
        assert geometry.support_from_graph(w, t) == pytest.approx(expected, abs=1e-6)
        assert geometry.support_from_graph(w, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_chart_range_error(self):
        z = np.linspace(-2, 2, 65)
        w = geometry.GraphFunction(grid=z, w=z**2 / 2)
        with pytest.raises(ChartRangeError):
            geometry.support_from_graph(w, 0.9999, margin=1e-3)

    def test_agrees_with_body_support(self):
        # parabola cap matches the support values of the epigraph piece
        z = np.linspace(-1.5, 1.5, 1025)
        w = geometry.GraphFunction(grid=z, w=z**2 / 2)
        for t in (0.2, -0.35, 0.5):
            drop = math.sqrt(1.0 - t**2)
            direct = float(np.max(t * z - drop * (z**2 / 2)))
            assert geometry.support_from_graph(w, t) == pytest.approx(direct, abs=1e-14)


class TestSpectralDerivatives:
    def test_first_derivative(self):
        th = geometry.grid_angles(128)
        vals = np.cos(3 * th)
        d1 = geometry.periodic_derivative(vals, 1)
        assert np.abs(d1 + 3 * np.sin(3 * th)).max() < 1e-11

    def test_second_derivative(self):
        th = geometry.grid_angles(128)
        vals = np.sin(2 * th) + 0.3 * np.cos(5 * th)
        d2 = geometry.periodic_derivative(vals, 2)
        exact = -4 * np.sin(2 * th) - 7.5 * np.cos(5 * th)
        assert np.abs(d2 - exact).max() < 1e-10

    def test_fd_second_derivative_order(self):
        def err(n):
            th = geometry.grid_angles(n)
            d2 = geometry.periodic_derivative(np.sin(th), 2, mode="fd")
            return np.abs(d2 + np.sin(th)).max()

        assert err(128) / err(256) == pytest.approx(4.0, rel=0.05)

    def test_trig_eval_offgrid(self):
        th = geometry.grid_angles(64)
        vals = np.cos(2 * th) + 0.5 * np.sin(th)
        coef = geometry.trig_coefficients(vals)
        q = np.array([0.123, 1.9, 4.56])
        assert np.allclose(
            geometry.trig_eval(coef, 64, q), np.cos(2 * q) + 0.5 * np.sin(q), atol=1e-12
        )
        assert np.allclose(
            geometry.trig_eval(coef, 64, q, order=1),
            -2 * np.sin(2 * q) + 0.5 * np.cos(q),
            atol=1e-11,
        )
