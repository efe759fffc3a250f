import math

import numpy as np
import pytest

from warpedcone.net import (
    EmptyCellWarning,
    Net,
    NetConstructionWarning,
    assign_cell,
    build_net,
    default_radii,
    estimate_cell_measures,
    load_net,
    save_net,
    verify_ahlfors,
)
from warpedcone.spaces import FlatTorus, circle

T2 = FlatTorus(2)


def brute_owner(points, space, x):
    d = np.array([space.distance(p, x) for p in points])
    return int(np.flatnonzero(d == d.min())[0])


class TestBuildNet:
    def test_circle_t4_has_three_or_four_points(self):
        sizes = {build_net(circle(), 4, seed).n for seed in range(40)}
        assert sizes <= {3, 4}

    def test_degenerate_level(self):
        net = build_net(T2, 1, seed=0)
        assert net.n == 1

    def test_rejects_small_t(self):
        with pytest.raises(ValueError):
            build_net(T2, 0.5, seed=0)

    @pytest.mark.parametrize("t", [4, 8, 16])
    def test_separation_and_density(self, t):
        net = build_net(T2, t, seed=t)
        assert net.min_separation() >= 1 / t
        assert net.covering_radius(50_000, seed=1) < 1 / t
        assert net.achieved_density < 1 / t

    def test_size_between_packing_and_covering_bounds(self, t2_ahlfors):
        t = 16
        net = build_net(T2, t, seed=3)
        a = t2_ahlfors
        # disjoint balls of radius 1/(2t) and covering balls of radius 1/t
        upper = (2 * t) ** a.m / a.c
        lower = t**a.m / (a.c * a.C)
        assert lower <= net.n <= upper

    def test_deterministic(self):
        a, b = build_net(T2, 8, seed=4), build_net(T2, 8, seed=4)
        assert np.array_equal(a.points, b.points)

    def test_budget_warning_carries_density(self):
        with pytest.warns(NetConstructionWarning) as rec:
            build_net(T2, 16, seed=0, max_candidates=50, check_samples=100)
        assert rec[0].message.achieved_density > 0


class TestAssignCell:
    def test_net_point_owns_itself(self):
        net = build_net(T2, 8, seed=1)
        assert np.array_equal(assign_cell(net, net.points), np.arange(net.n))

    def test_inner_ball(self):
        net = build_net(T2, 8, seed=2)
        rng = np.random.default_rng(0)
        x = rng.random((1000, 2))
        owner = assign_cell(net, x)
        d_owner = T2.distance(net.points[owner], x)
        assert np.all(d_owner <= 1 / net.t)
        for z in range(net.n):
            close = T2.distance(x, net.points[z]) < 1 / (2 * net.t)
            assert np.all(owner[close] == z)

    def test_exact_tie_goes_to_lowest_id(self):
        net = Net(circle(), 4, np.array([[0.0], [0.25], [0.5], [0.75]]))
        assert assign_cell(net, np.array([0.125])) == 0
        assert assign_cell(net, np.array([0.375])) == 1

    def test_thirds_example_matches_brute_force(self):
        pts = np.array([[0.0], [1 / 3], [2 / 3]])
        net = Net(circle(), 3, pts)
        x = np.array([1 / 6])
        assert assign_cell(net, x) == brute_owner(pts, circle(), x) == 0

    def test_matches_brute_force(self):
        net = build_net(T2, 6, seed=3)
        x = np.random.default_rng(1).random((200, 2))
        got = assign_cell(net, x)
        assert all(got[i] == brute_owner(net.points, T2, x[i]) for i in range(len(x)))

    def test_pure(self):
        net = build_net(T2, 8, seed=5)
        x = np.random.default_rng(2).random((100, 2))
        assert np.array_equal(assign_cell(net, x), assign_cell(net, x))


class TestCellMeasures:
    def test_equal_arcs(self):
        net = Net(circle(), 4, np.array([[0.0], [0.25], [0.5], [0.75]]))
        n = 100_000
        mu = estimate_cell_measures(net, n, seed=0)
        assert mu.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.abs(mu - 0.25) < 3 / math.sqrt(n))

    def test_single_cell(self):
        net = build_net(T2, 1, seed=0)
        assert estimate_cell_measures(net, 100, seed=0).tolist() == [1.0]

    def test_budget_floor(self):
        net = build_net(T2, 8, seed=0)
        with pytest.raises(ValueError):
            estimate_cell_measures(net, 5 * net.n, seed=0)

    def test_empty_cell_smoothing(self):
        net = Net(circle(), 4, np.array([[0.0], [0.5 - 1e-7], [0.5], [0.5 + 1e-7]]))
        with pytest.warns(EmptyCellWarning):
            mu = estimate_cell_measures(net, 40, seed=0)
        assert mu.sum() == pytest.approx(1.0)
        assert mu[2] == pytest.approx(1 / (40 + 4))

    @pytest.mark.parametrize("t", [8, 16])
    def test_uniformity_bound(self, t, t2_ahlfors):
        net = build_net(T2, t, seed=t)
        n = 400 * net.n
        mu = estimate_cell_measures(net, n, seed=1)
        K = t2_ahlfors.K
        tol = 4 / math.sqrt(n / net.n)
        assert np.all(mu >= (1 - tol) / (K * net.n))
        assert np.all(mu <= (1 + tol) * K / net.n)
        assert mu.min() / mu.max() >= 1 / K**2

    def test_workers_deterministic(self):
        net = build_net(T2, 8, seed=6)
        a = estimate_cell_measures(net, 20_000, seed=3, workers=3)
        b = estimate_cell_measures(net, 20_000, seed=3, workers=3)
        assert np.array_equal(a, b)
        assert a.sum() == pytest.approx(1.0)


class TestAhlfors:
    def test_torus_small_radii(self):
        a = verify_ahlfors(T2, 16, np.geomspace(0.02, 0.4, 8), 200_000, seed=0)
        assert a.m == pytest.approx(2.0, abs=0.05)
        assert a.c_fit == pytest.approx(math.pi, rel=0.1)
        assert a.c > 0 and a.C >= 1

    def test_circle(self):
        a = verify_ahlfors(circle(), 16, np.geomspace(0.01, 0.4, 8), 200_000, seed=0)
        assert a.m == pytest.approx(1.0, abs=0.02)
        assert a.c_fit == pytest.approx(2.0, rel=0.05)

    def test_wraparound_radii_finite(self):
        a = verify_ahlfors(T2, 16, default_radii(T2), 100_000, seed=1)
        assert math.isfinite(a.C) and a.C >= 1
        assert a.K == pytest.approx(a.C * 2**a.m)

    def test_bounds_hold_on_samples(self):
        radii = default_radii(T2)
        n = 100_000
        a = verify_ahlfors(T2, 8, radii, n, seed=2)
        rng = np.random.default_rng(2)
        centers = T2.sample(rng, 8)
        x = T2.sample(rng, n)
        for y in centers:
            mu = np.array([np.mean(T2.distance(x, y) <= r) for r in radii])
            ok = mu > 0
            tol = 3 / math.sqrt(n)
            assert np.all(a.c * radii[ok] ** a.m <= mu[ok] + tol)
            assert np.all(mu[ok] <= a.c * a.C * radii[ok] ** a.m + tol)

    def test_needs_two_radii(self):
        with pytest.raises(ValueError):
            verify_ahlfors(T2, 4, [0.1], 1000, seed=0)

    def test_radius_beyond_diameter(self):
        with pytest.raises(ValueError):
            verify_ahlfors(T2, 4, [0.1, 2.0], 1000, seed=0)


def test_tsv_roundtrip(tmp_path):
    net = build_net(T2, 8, seed=9)
    estimate_cell_measures(net, 10_000, seed=9)
    path = tmp_path / "net.tsv"
    save_net(net, path)
    text = path.read_bytes()
    assert b"\r" not in text
    back = load_net(path)
    assert back.t == net.t and back.seed == 9 and back.n_samples == 10_000
    assert np.array_equal(back.points, net.points)
    assert np.array_equal(back.cell_measure, net.cell_measure)
