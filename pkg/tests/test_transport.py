import math

import numpy as np
import pytest

from gauss_transport import geometry, pma, transport
from gauss_transport.errors import OutOfRangeError
from conftest import interior_sample


class TestPhi:
    def test_identity(self, identity_map):
        assert identity_map.phi(np.array([0.3, 0.4])) == pytest.approx(0.5, abs=1e-8)

    def test_doubling(self, doubling_map):
        x = 0.3 * np.array([math.cos(0.7), math.sin(0.7)])
        assert doubling_map.phi(x) == pytest.approx(0.6, abs=1e-8)

    def test_power(self, power_map):
        x = 0.5 * np.array([math.cos(2.2), math.sin(2.2)])
        assert power_map.phi(x) == pytest.approx(0.25, abs=1e-5)

    def test_out_of_range(self, identity_map):
        with pytest.raises(OutOfRangeError):
            identity_map.phi(np.array([1.2, 0.0]))
        with pytest.raises(OutOfRangeError):
            identity_map.phi(np.array([0.001, 0.0]))

    def test_monotone_outward(self, ellipse_map):
        x = np.array([0.4, 0.25])
        n, _ = ellipse_map.normal_and_grad(x)
        stepped = ellipse_map.phi(x + 0.05 * n)
        assert stepped > ellipse_map.phi(x)

    def test_level_set_consistency(self, power_map):
        # phi(inverse(r n)) = r on the stored grid
        fld = power_map.field
        for k in (10, 100, 200):
            r = fld.r_grid[k]
            y = r * np.column_stack(
                [np.cos(fld.row_body(0).angles[::16]), np.sin(fld.row_body(0).angles[::16])]
            )
            x = power_map.inverse(y)
            assert np.abs(power_map.phi(x) - r).max() <= 1e-6


class TestNormalAndGrad:
    def test_identity(self, identity_map):
        n, g = identity_map.normal_and_grad(np.array([0.6, 0.0]))
        assert n == pytest.approx([1.0, 0.0], abs=1e-9)
        assert g == pytest.approx(1.0, rel=1e-8)

    def test_doubling(self, doubling_map):
        n, g = doubling_map.normal_and_grad(np.array([0.3, 0.4]))
        assert n == pytest.approx([0.6, 0.8], abs=1e-9)
        assert g == pytest.approx(2.0, rel=1e-8)

    def test_power(self, power_map):
        # phi = |x|^2, so |grad phi| = 2 |x|
        _, g = power_map.normal_and_grad(np.array([0.5, 0.0]))
        assert g == pytest.approx(1.0, rel=1e-4)

    def test_gradient_identity(self, ellipse_map):
        # |grad phi| H_r(T x) = 1 is how the gradient is evaluated; check
        # it against an independent finite difference of phi.  The FD sees
        # the piecewise-linear-in-r level interpolant, so it can differ
        # from the quadratic H_r by O(dr |H_rr|).
        pts = interior_sample(ellipse_map, 50, seed=21, dr_margin=4.0)
        normals, grads = ellipse_map.normal_and_grad(pts)
        h = 1e-5
        fd = (ellipse_map.phi(pts + h * normals) - ellipse_map.phi(pts - h * normals)) / (
            2 * h
        )
        assert np.abs(fd - grads).max() <= 5e-3 * grads.max()

    def test_gradient_identity_exact_cases(self, identity_map, doubling_map):
        for tmap, value in ((identity_map, 1.0), (doubling_map, 2.0)):
            pts = interior_sample(tmap, 50, seed=22)
            _, grads = tmap.normal_and_grad(pts)
            assert np.abs(grads - value).max() <= 1e-6


class TestForwardInverse:
    def test_identity_forward(self, identity_map):
        x = np.array([0.3, 0.4])
        assert identity_map.forward(x) == pytest.approx(x, abs=1e-8)

    def test_doubling_forward(self, doubling_map):
        assert doubling_map.forward(np.array([0.3, 0.0])) == pytest.approx(
            [0.6, 0.0], abs=1e-8
        )

    def test_doubling_inverse(self, doubling_map):
        assert doubling_map.inverse(np.array([0.6, 0.0])) == pytest.approx(
            [0.3, 0.0], abs=1e-8
        )

    def test_forward_norm_is_phi(self, ellipse_map):
        pts = interior_sample(ellipse_map, 200, seed=3)
        y = ellipse_map.forward(pts)
        assert np.allclose(np.linalg.norm(y, axis=1), ellipse_map.phi(pts), atol=1e-12)

    def test_roundtrip(self, ellipse_map):
        assert transport.roundtrip_error(ellipse_map, 1000, seed=5) <= transport.RT_TOL

    def test_inverse_out_of_annulus(self, identity_map):
        with pytest.raises(OutOfRangeError):
            identity_map.inverse(np.array([1.5, 0.0]))


class TestCovResidual:
    def test_identity(self, identity_map):
        assert identity_map.cov_residual(np.array([0.3, 0.4])) <= 1e-8

    def test_doubling(self, doubling_map):
        pts = interior_sample(doubling_map, 100, seed=9)
        assert doubling_map.cov_residual(pts).max() <= 1e-7

    def test_ellipse_median(self, ellipse_map):
        pts = interior_sample(ellipse_map, 1000, seed=11)
        res = ellipse_map.cov_residual(pts)
        assert np.median(res) <= 5e-3

    def test_cov_and_jacobian_agree(self, power_map):
        # the finite-difference determinant matches phi^{d-1} |grad| K
        pts = interior_sample(power_map, 50, seed=13, dr_margin=8.0)
        det, _ = power_map.jacobian_matrix_fd(pts, 1e-2)
        r = power_map.phi(pts)
        _, grads = power_map.normal_and_grad(pts)
        # K = 1/(H + H_tt) = 1/sqrt(r) on the level circle of radius sqrt(r)
        model = r ** (power_map.field.d - 1) * grads / np.sqrt(r)
        assert np.abs(det - model).max() <= 2e-2


class TestCurvature:
    def test_identity(self, identity_map):
        # level sets are circles of radius r
        x = np.array([0.3, 0.4])
        assert identity_map.curvature(x) == pytest.approx(2.0, rel=1e-8)

    def test_doubling(self, doubling_map):
        # the level set through x is the circle of radius |x|
        x = np.array([0.3, 0.4])
        assert doubling_map.curvature(x) == pytest.approx(2.0, rel=1e-8)


class TestJacobian:
    def test_identity(self, identity_map):
        det = identity_map.jacobian_fd(np.array([0.3, 0.4]), 1e-3)
        assert det == pytest.approx(1.0, abs=1e-6)

    def test_doubling(self, doubling_map):
        det = doubling_map.jacobian_fd(np.array([0.3, 0.4]), 1e-3)
        assert det == pytest.approx(4.0, abs=1e-5)

    def test_power(self, power_map):
        # T = |x| x has det DT = q(s) q'(s) / s = 2 s^2; at s = 0.5 it is 0.5
        x = 0.5 * np.array([math.cos(0.8), math.sin(0.8)])
        det = power_map.jacobian_fd(x, 1e-2)
        assert det == pytest.approx(0.5, abs=2e-2)

    def test_matches_model_under_refinement(self, ellipse_map, ellipse_map_512):
        # |det_fd - phi^{d-1} |grad phi| K| falls with simultaneous
        # (grid, step) refinement at empirical order >= 1.5
        def defect(tmap, step):
            margin = 3.0 * step * 2.0 / tmap.field.dr  # spatial stencil, level units
            pts = interior_sample(tmap, 300, seed=17, dr_margin=margin)
            det, _ = tmap.jacobian_matrix_fd(pts, step)
            r = tmap.phi(pts)
            _, grads = tmap.normal_and_grad(pts)
            model = r ** (tmap.field.d - 1) * grads * tmap.curvature(pts)
            return float(np.median(np.abs(det - model)))

        coarse = defect(ellipse_map, 2e-2)
        fine = defect(ellipse_map_512, 1e-2)
        order = math.log2(coarse / fine)
        assert order >= 1.5


class TestPushforward:
    def test_identity(self, identity_map):
        report = identity_map.pushforward_test(100_000, seed=1)
        assert report["radial_W1"] <= 0.005
        assert report["pass"]

    def test_doubling(self, doubling_map):
        report = doubling_map.pushforward_test(100_000, seed=2)
        assert report["pass"]

    def test_ellipse(self, ellipse_map):
        report = ellipse_map.pushforward_test(100_000, seed=3)
        assert report["pass"]
        assert report["radial_W1"] <= 0.01
        assert report["angular_chisq_pvalue"] >= 0.01

    def test_angular_target(self):
        # a rippled target makes the march genuinely angular and
        # exercises the non-uniform expected bin masses
        from gauss_transport import fields

        disk = geometry.body_from_disk(1.0, 128)
        rho0 = fields.make_field("uniform", body=disk)
        rho1 = fields.make_field("angular_cosine", ball_radius=1.0, a=0.3, k=2)
        fld = pma.solve_2d(disk, rho0, rho1, n_r=128)
        tmap = transport.TransportMap(fld, rho0, rho1)
        report = tmap.pushforward_test(50_000, seed=4)
        assert report["pass"]


class TestAmbiguousNormal:
    def test_square_fan_direction(self):
        # scaled-square levels: a point on the diagonal maximizes the
        # support gap at two well-separated edge normals
        from gauss_transport import fields
        from gauss_transport.errors import AmbiguousNormalError

        square = geometry.body_from_polygon(
            [(-1, -1), (1, -1), (1, 1), (-1, 1)], n_theta=128
        )
        scales = np.linspace(1.0, 0.1, 65)
        fld = pma.SupportField(
            d=2, R=1.0, r_stop=0.1, H=np.outer(scales, square.h), diff_mode="fd"
        )
        rho0 = fields.make_field("uniform", ball_radius=2.0)
        tmap = transport.TransportMap(fld, rho0, rho0)
        with pytest.raises(AmbiguousNormalError):
            tmap.phi(0.5 * np.array([math.cos(math.pi / 4), math.sin(math.pi / 4)]))


class TestDigestGuard:
    def test_mismatched_densities_rejected(self, identity_map, doubling_map):
        with pytest.raises(ValueError):
            transport.TransportMap(
                identity_map.field, doubling_map.rho0, doubling_map.rho1
            )

    def test_loaded_field_skips_check(self, tmp_path, doubling_map):
        path = tmp_path / "f.csv"
        pma.save_field(doubling_map.field, path)
        loaded = pma.load_field(path)
        tmap = transport.TransportMap(loaded, doubling_map.rho0, doubling_map.rho1)
        assert tmap.phi(np.array([0.3, 0.0])) == pytest.approx(0.6, abs=1e-8)
