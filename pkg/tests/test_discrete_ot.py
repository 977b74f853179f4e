import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gauss_transport import discrete_ot as dot
from gauss_transport import fields
from gauss_transport.errors import SizeLimitError


class TestScalingMap:
    def test_t0_identity(self):
        y = np.array([0.3, 0.4])
        assert dot.scaling_map(y, 0.0) == pytest.approx(y)

    def test_t1_halving_radius(self):
        y = np.array([0.5, 0.0])
        assert dot.scaling_map(y, 1.0) == pytest.approx([0.25, 0.0])

    def test_unit_circle_fixed(self):
        ang = np.linspace(0, 2 * np.pi, 17)
        y = np.column_stack([np.cos(ang), np.sin(ang)])
        for t in (0.5, 3.0, 30.0):
            assert np.allclose(dot.scaling_map(y, t), y, atol=1e-12)

    def test_origin_fixed(self):
        assert dot.scaling_map(np.zeros(2), 5.0) == pytest.approx([0.0, 0.0])

    @settings(max_examples=30, deadline=None)
    @given(
        t=st.floats(0.0, 10.0),
        r=st.floats(0.01, 2.0),
        ang=st.floats(0.0, 6.28),
    )
    def test_radius_power_law(self, t, r, ang):
        y = r * np.array([np.cos(ang), np.sin(ang)])
        out = dot.scaling_map(y, t)
        assert np.linalg.norm(out) == pytest.approx(r ** (1.0 + t), rel=1e-10)


class TestSolveAssignment:
    def test_same_cloud_identity(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(10, 2))
        plan = dot.solve_assignment(x, x, 0.0)
        assert np.array_equal(plan.sigma, np.arange(10))
        assert plan.total_cost == pytest.approx(0.0, abs=1e-12)

    def test_relabeling(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0]])
        y = np.array([[1.0, 0.0], [0.0, 0.0]])
        plan = dot.solve_assignment(x, y, 0.0)
        assert list(plan.sigma) == [1, 0]
        assert plan.total_cost == pytest.approx(0.0, abs=1e-12)

    def test_size_limit(self):
        x = np.zeros((dot.N_MAX + 1, 2))
        with pytest.raises(SizeLimitError):
            dot.solve_assignment(x, x, 0.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            n = int(rng.integers(2, 9))
            x = rng.normal(size=(n, 2))
            y = rng.normal(size=(n, 2))
            for t in (0.0, 1.0, 10.0):
                plan = dot.solve_assignment(x, y, t)
                best = dot.brute_force_cost(x, y, t)
                assert plan.total_cost == pytest.approx(best, rel=1e-9, abs=1e-9)

    def test_beats_random_permutations(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(32, 2))
        y = rng.normal(size=(32, 2))
        plan = dot.solve_assignment(x, y, 0.0)
        cost = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
        rows = np.arange(32)
        assert plan.total_cost <= cost[rows, rows].sum() + 1e-12
        for _ in range(200):
            perm = rng.permutation(32)
            assert plan.total_cost <= cost[rows, perm].sum() + 1e-12

    def test_dual_certificate(self):
        rng = np.random.default_rng(3)
        for t in (0.0, 1.0, 10.0, 30.0):
            x = rng.normal(size=(64, 2))
            y = rng.normal(size=(64, 2)) * 1.4
            plan = dot.solve_assignment(x, y, t)
            ys = dot.scaling_map(y, t)
            cost = ((x[:, None, :] - ys[None, :, :]) ** 2).sum(axis=2)
            scale = max(1.0, float(np.abs(cost).max()))
            assert plan.slackness_defect(cost) <= 1e-9 * scale

    def test_matches_scipy(self):
        from scipy.optimize import linear_sum_assignment

        rng = np.random.default_rng(11)
        x = rng.normal(size=(128, 2))
        y = rng.normal(size=(128, 2))
        plan = dot.solve_assignment(x, y, 0.0)
        cost = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
        r, c = linear_sum_assignment(cost)
        assert plan.total_cost == pytest.approx(float(cost[r, c].sum()), rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(
        n=st.integers(2, 6),
        seed=st.integers(0, 10_000),
        t=st.sampled_from([0.0, 2.0, 10.0]),
    )
    def test_exactness_property(self, n, seed, t):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, size=(n, 2))
        y = rng.uniform(-1, 1, size=(n, 2))
        plan = dot.solve_assignment(x, y, t)
        assert plan.total_cost == pytest.approx(
            dot.brute_force_cost(x, y, t), rel=1e-9, abs=1e-9
        )


class TestPrelimitMap:
    def test_t0_recovers_plain_assignment(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(16, 2))
        y = rng.normal(size=(16, 2))
        mapped, plan = dot.prelimit_map(x, y, 0.0)
        plain = dot.solve_assignment(x, y, 0.0)
        assert np.array_equal(plan.sigma, plain.sigma)
        assert np.allclose(mapped, y[plain.sigma])

    def test_same_law_displacement_shrinks_with_n(self):
        rho = fields.make_field("uniform", ball_radius=1.0)
        means = []
        for n in (64, 512):
            x = rho.sample(n, seed=31)
            y = rho.sample(n, seed=77)
            mapped, _ = dot.prelimit_map(x, y, 1.0)
            means.append(np.linalg.norm(mapped - x, axis=1).mean())
        assert means[1] < means[0]


class TestConvergenceExperiment:
    def test_identity_measures_at_floor(self, identity_map):
        report = dot.convergence_experiment(
            identity_map, 256, seed=1, t_list=(1.0, 3.0, 10.0)
        )
        for row in report["rows"]:
            assert row["mean_disp"] <= 2.0 * report["floor"]
        assert dot.trend_is_decreasing(report)

    def test_doubling_reaches_floor_immediately(self, doubling_map):
        # the radial pre-limit maps all coincide with the limit map, so
        # the displacement sits at the same-law sampling floor from the
        # smallest exponent on
        report = dot.convergence_experiment(
            doubling_map, 256, seed=2, t_list=(1.0, 3.0, 10.0, 30.0)
        )
        assert report["rows"][0]["mean_disp"] <= 1.15 * report["floor"]
        assert dot.trend_is_decreasing(report)

    def test_ellipse_first_exponent_near_floor(self, ellipse_map):
        report = dot.convergence_experiment(
            ellipse_map, 256, seed=3, t_list=(1.0, 30.0)
        )
        assert report["rows"][0]["mean_disp"] <= 1.3 * report["floor"]

    def test_rows_schema(self, doubling_map):
        report = dot.convergence_experiment(doubling_map, 64, seed=9, t_list=(1.0, 3.0))
        assert {"t", "mean_disp", "median_disp", "max_disp"} <= set(report["rows"][0])
        assert report["n"] == 64 and report["seed"] == 9

    def test_matched_seeds_shared_draw(self, doubling_map):
        a = dot.convergence_experiment(doubling_map, 64, seed=4, t_list=(1.0,))
        b = dot.convergence_experiment(doubling_map, 64, seed=4, t_list=(1.0, 3.0))
        assert a["rows"][0]["mean_disp"] == b["rows"][0]["mean_disp"]
