import math

import networkx as nx
import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from warpedcone.harness import ExperimentConfig, classify
from warpedcone.net import build_net
from warpedcone.qi import QIParams, ball_size_bound, transfer_bound
from warpedcone.spaces import FlatTorus
from warpedcone.spectra import eta, lambda2, pairwise_form_ratio

unit = st.floats(0, 1, allow_nan=False, exclude_max=True)
FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def torus_points(draw, k):
    d = draw(st.integers(1, 3))
    pts = [np.array(draw(st.lists(unit, min_size=d, max_size=d))) for _ in range(k)]
    return FlatTorus(d), pts


class TestMetric:
    @FAST
    @given(torus_points(3))
    def test_axioms(self, case):
        space, (x, y, z) = case
        dxy = space.distance(x, y)
        assert space.distance(x, x) == 0
        assert dxy == space.distance(y, x)
        assert dxy <= space.distance(x, z) + space.distance(z, y) + 1e-12
        assert 0 <= dxy <= space.diameter + 1e-12

    @FAST
    @given(torus_points(2), st.lists(st.integers(-3, 3), min_size=3, max_size=3))
    def test_lattice_invariance(self, case, shift):
        space, (x, y) = case
        k = np.array(shift[: space.dim], dtype=float)
        assert math.isclose(space.distance(x + k, y), space.distance(x, y), abs_tol=1e-12)


class TestNet:
    @settings(max_examples=12, deadline=None)
    @given(st.sampled_from([1, 2]), st.floats(1.5, 10), st.integers(0, 2**31))
    def test_separated_and_dense(self, dim, t, seed):
        net = build_net(FlatTorus(dim), t, seed, streak_factor=50)
        if net.n > 1:
            assert net.min_separation() >= 1 / t
        assert net.achieved_density < 1 / t
        assert net.covering_radius(5000, seed=seed) < 1 / t


class TestPairwiseForm:
    @FAST
    @given(st.integers(2, 30), st.integers(1, 4), st.sampled_from([1, 2, 3, np.inf]),
           st.integers(0, 2**31))
    def test_within_factor_two(self, n, d, q, seed):
        rng = np.random.default_rng(seed)
        mu = rng.random(n) + 1e-3
        mu /= mu.sum()
        F = rng.standard_normal((n, d))
        F -= mu @ F
        r = pairwise_form_ratio(mu, F, norm_ord=q)
        assert 0.5 - 1e-12 <= r <= 2 + 1e-12
        if q == 2:
            assert math.isclose(r, math.sqrt(2), rel_tol=1e-9)


class TestTransfer:
    @FAST
    @given(st.floats(1e-3, 10), st.floats(1, 4), st.floats(0, 3), st.floats(0, 3), st.integers(0, 6))
    def test_monotone_in_eta_and_constants(self, e, C, A, B, D):
        base = transfer_bound(e, QIParams(C, A, B, D))
        assert 0 < base <= 1 / 2 + 1e-15
        assert transfer_bound(2 * e, QIParams(C, A, B, D)) >= base
        assert transfer_bound(e, QIParams(C + 1, A + 1, B + 1, D + 1)) <= base

    @FAST
    @given(st.integers(0, 4), st.integers(0, 5))
    def test_ball_bound_is_tree_ball(self, r, d):
        assert ball_size_bound(r, d) == oracles.tree_ball(r, d)


class TestEta:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(3, 25), st.floats(0.15, 0.8), st.integers(0, 10_000))
    def test_p2_is_half_lambda2(self, n, p, seed):
        g = oracles.random_graph(n, p, seed)
        lam = lambda2(g)
        assert math.isclose(lam, nx.laplacian_spectrum(g)[1], rel_tol=1e-8, abs_tol=1e-10)
        assert math.isclose(eta(g, p=2), lam / 2, rel_tol=1e-6)


class TestConfig:
    @FAST
    @given(st.lists(st.floats(1, 1e4, allow_nan=False), min_size=1, max_size=6, unique=True),
           st.integers(0, 2**63 - 1),
           st.lists(st.floats(1, 8), max_size=4, unique=True),
           st.sampled_from(["full", "type1_only"]))
    def test_json_roundtrip(self, levels, seed, p_list, variant):
        cfg = ExperimentConfig(levels=tuple(sorted(levels)), seed=seed, p_list=tuple(p_list),
                               variant=variant)
        back = ExperimentConfig.from_json(cfg.to_json())
        assert back == cfg and back.to_json() == cfg.to_json()


class TestClassify:
    @FAST
    @given(arrays(float, 4, elements=st.floats(0.01, 10)), arrays(float, 4, elements=st.floats(0, 3)),
           st.permutations(range(4)))
    def test_pure_and_order_free(self, e, k, perm):
        t = [4.0, 8.0, 16.0, 32.0]
        n = [10, 40, 160, 640]
        first = classify(t, n, e, k)
        assert classify(t, n, e, k) == first
        perm = list(perm)
        shuffled = classify([t[i] for i in perm], [n[i] for i in perm], e[perm], k[perm])
        assert shuffled[0] == first[0]
