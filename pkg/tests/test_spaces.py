import math

import numpy as np
import pytest
from scipy import stats

from warpedcone.spaces import (
    Action,
    FlatTorus,
    Generator,
    parse_action,
    apply,
    circle,
    distance,
    identity_action,
    lipschitz_estimate,
    load_action,
    rotation_action,
    save_action,
    sl2z_action,
    space_from_name,
)


T2 = FlatTorus(2)


class TestDistance:
    def test_wraparound(self):
        assert distance(T2, (0, 0), (0.9, 0)) == pytest.approx(0.1, abs=1e-15)

    def test_half_diagonal(self):
        assert distance(T2, (0, 0), (0.5, 0.5)) == pytest.approx(math.sqrt(0.5), abs=1e-15)

    def test_identity(self):
        x = np.random.default_rng(0).random((50, 2))
        assert np.all(distance(T2, x, x) == 0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            distance(T2, (0, 0, 0), (0, 0, 0))

    def test_metric_axioms(self):
        rng = np.random.default_rng(1)
        x, y, z = (rng.random((10_000, 2)) for _ in range(3))
        dxy, dyz, dxz = distance(T2, x, y), distance(T2, y, z), distance(T2, x, z)
        assert np.array_equal(dxy, distance(T2, y, x))
        assert np.all(dxz <= dxy + dyz + 1e-12)
        assert np.all(dxy > 0)
        assert np.all(dxy <= T2.diameter + 1e-12)

    def test_diameters(self):
        assert T2.diameter == pytest.approx(math.sqrt(2) / 2)
        assert circle().diameter == 0.5
        assert T2.total_measure == 1.0

    def test_space_names(self):
        assert space_from_name("t2") == T2
        assert space_from_name("circle") == circle()
        assert circle().kind == "circle"
        with pytest.raises(ValueError):
            space_from_name("sphere")


class TestApply:
    def test_matrix_example(self):
        a = Action(T2, (Generator.from_matrix([[1, 2], [0, 1]]),))
        assert np.allclose(apply(a, 0, (0.25, 0.25)), (0.75, 0.25), atol=1e-15)

    def test_rotation_example(self):
        a = rotation_action()
        assert apply(a, 0, (0.0,))[0] == pytest.approx(math.sqrt(2) - 1, abs=1e-15)

    def test_identity_example(self):
        x = np.random.default_rng(2).random((5, 2))
        assert np.array_equal(apply(identity_action(T2), 0, x), x)

    def test_inverse_roundtrip(self):
        act = sl2z_action()
        x = np.random.default_rng(3).random((1000, 2))
        for s, inv in enumerate(act.inverse_index):
            back = apply(act, inv, apply(act, s, x))
            assert np.max(distance(T2, back, x)) < 1e-12

    def test_results_in_unit_cube(self):
        act = sl2z_action()
        x = np.random.default_rng(4).random((1000, 2))
        for s in range(act.n_generators):
            y = apply(act, s, x)
            assert np.all((y >= 0) & (y < 1))

    def test_non_invertible_matrix_rejected(self):
        with pytest.raises(ValueError):
            Generator.from_matrix([[2, 0], [0, 1]])


class TestAction:
    def test_sl2z_is_symmetric(self):
        act = sl2z_action()
        assert act.n_generators == 4
        assert act.symmetric
        for s, inv in enumerate(act.inverse_index):
            assert act.inverse_index[inv] == s
        assert act.L == pytest.approx(1 + math.sqrt(2))

    def test_inverse_not_duplicated(self):
        g = Generator.from_matrix([[1, 2], [0, 1]])
        act = Action(T2, (g, g.inverse()))
        assert act.n_generators == 2

    def test_involution_is_its_own_inverse(self):
        act = rotation_action(0.5)
        assert act.n_generators == 1
        assert act.inverse_index == (0,)

    def test_lipschitz_matches_singular_value(self):
        act = Action(T2, (Generator.from_matrix([[1, 2], [0, 1]]),))
        A = np.array([[1.0, 2.0], [0.0, 1.0]])
        sigma = math.sqrt(np.linalg.eigvalsh(A.T @ A).max())
        est = lipschitz_estimate(act, 20_000, seed=0)
        assert sigma == pytest.approx(1 + math.sqrt(2))
        assert np.all(est <= act.lipschitz_constants * (1 + 1e-9))
        assert est[0] > 0.99 * sigma

    @pytest.mark.parametrize("act", [rotation_action(), identity_action(T2)])
    def test_isometries(self, act):
        assert lipschitz_estimate(act, 2000, seed=1) == pytest.approx(1.0, abs=1e-9)

    def test_lipschitz_needs_pairs(self):
        with pytest.raises(ValueError):
            lipschitz_estimate(sl2z_action(), 0, seed=0)

    def test_measure_preservation_chi_square(self):
        act = sl2z_action()
        rng = np.random.default_rng(5)
        x = rng.random((200_000, 2))
        for s in range(act.n_generators):
            y = apply(act, s, x)
            counts, _, _ = np.histogram2d(y[:, 0], y[:, 1], bins=10, range=[[0, 1], [0, 1]])
            p = stats.chisquare(counts.ravel()).pvalue
            assert p > 1e-4

    def test_ball_measure_preserved(self):
        act = sl2z_action()
        rng = np.random.default_rng(6)
        n = 200_000
        x = rng.random((n, 2))
        y, r = np.array([0.3, 0.7]), 0.2
        inside = distance(T2, x, y) <= r
        for s in range(act.n_generators):
            # mu(s B) = mu(B) since mu(s B) = mu({x : s^-1 x in B})
            pre = apply(act, act.inverse_index[s], x)
            assert abs(np.mean(distance(T2, pre, y) <= r) - np.mean(inside)) < 3 / math.sqrt(n)


class TestConfigFiles:
    def test_roundtrip(self, tmp_path):
        act = sl2z_action()
        path = tmp_path / "sl2z.cfg"
        save_action(act, path)
        back = load_action(path)
        assert back.n_generators == act.n_generators
        assert back.inverse_index == act.inverse_index
        x = np.random.default_rng(0).random((10, 2))
        for s in range(act.n_generators):
            assert np.array_equal(apply(back, s, x), apply(act, s, x))

    def test_symmetrization_from_file(self, tmp_path):
        path = tmp_path / "a.cfg"
        path.write_text("[space]\nname = t2\n\n[gen:a]\nkind = matrix\nmatrix = 2 1; 1 1\n")
        act = load_action(path)
        assert act.n_generators == 2
        assert act.symmetric

    def test_rotation_file(self, tmp_path):
        path = tmp_path / "r.cfg"
        path.write_text("[space]\nkind = circle\n\n[gen:r]\nkind = rotation\nshift = 0.25\n")
        act = load_action(path)
        assert act.space == circle()
        assert apply(act, 0, (0.5,))[0] == pytest.approx(0.75)

    def test_bad_kind(self, tmp_path):
        path = tmp_path / "b.cfg"
        path.write_text("[space]\nname = t2\n\n[gen:x]\nkind = shear\n")
        with pytest.raises(ValueError):
            load_action(path)

    def test_specs(self):
        assert parse_action("sl2z").n_generators == 4
        assert parse_action("rotation:0.25").space == circle()
        assert parse_action("identity:t3").space == FlatTorus(3)
        with pytest.raises(ValueError):
            parse_action("nonsense")
