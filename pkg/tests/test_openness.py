import itertools

import numpy as np
import pytest

from openmap.errors import InputError, NotOpen
from openmap.numcore import DEFAULT_TOL, rank, truncated_svd
from openmap.openness import (
    REGIME_DEFICIENT,
    REGIME_FULL,
    FactorPair,
    check_openness,
    construct_witnesses,
    gauss_newton_recover,
    probe_openness,
    sample_feasible_target,
)


def pair(w1, w2):
    return FactorPair(np.asarray(w1, dtype=float), np.asarray(w2, dtype=float))


class TestCheckOpenness:
    def test_rank_one_open_point(self):
        rep = check_openness(pair([[1.0], [2.0]], [[1.0, 1.0]]))
        assert rep.regime == REGIME_DEFICIENT
        assert rep.open
        assert rep.rank_w1 == rep.rank_w2 == 1
        assert rep.intersection_dim_value == 0

    def test_unequal_ranks_not_open(self):
        rep = check_openness(pair([[1.0], [1.0]], [[0.0, 0.0]]))
        assert rep.regime == REGIME_DEFICIENT
        assert not rep.open
        assert not rep.condition_flags["rank_equal"]

    def test_zero_point_open(self):
        rep = check_openness(pair(np.zeros((3, 2)), np.zeros((2, 3))))
        assert rep.regime == REGIME_DEFICIENT
        assert rep.open
        assert rep.rank_w1 == rep.rank_w2 == 0
        assert rep.intersection_dim_value == 0

    def test_full_rank_regime_with_witness(self):
        w1 = np.array([[1.0, 0.0]])
        w2 = np.array([[0.0], [0.0]])
        rep = check_openness(pair(w1, w2))
        assert rep.regime == REGIME_FULL
        assert rep.open
        # the explicit completion: w1 @ wt2 = 0 and w2 + wt2 full column rank
        wt2 = np.array([[0.0], [1.0]])
        assert np.allclose(w1 @ wt2, 0.0)
        assert rank(w2 + wt2) == 1

    def test_nontrivial_intersection_not_open(self):
        w1 = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        w2 = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        rep = check_openness(pair(w1, w2))
        assert rep.regime == REGIME_DEFICIENT
        assert rep.condition_flags["rank_equal"]
        assert rep.intersection_dim_value == 1
        assert not rep.open

    def test_full_rank_factors_always_open(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            m, n = rng.integers(3, 6, size=2)
            k = int(rng.integers(1, min(m, n)))
            rep = check_openness(
                pair(rng.standard_normal((m, k)), rng.standard_normal((k, n)))
            )
            assert rep.open

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(40):
            m, n = (int(x) for x in rng.integers(1, 5, size=2))
            k = int(rng.integers(1, 5))
            w1 = rng.standard_normal((m, k))
            w2 = rng.standard_normal((k, n))
            if rng.random() < 0.6:
                w1 = truncated_svd(w1, int(rng.integers(0, min(m, k) + 1)))
            if rng.random() < 0.6:
                w2 = truncated_svd(w2, int(rng.integers(0, min(k, n) + 1)))
            p = pair(w1, w2)
            assert check_openness(p).open == check_openness(p.transposed()).open

    def test_flags_all_equal_when_ranks_match(self):
        entries = (-1.0, 0.0, 1.0)
        for vals1 in itertools.product(entries, repeat=2):
            for vals2 in itertools.product(entries, repeat=2):
                w1 = np.array(vals1).reshape(2, 1)
                w2 = np.array(vals2).reshape(1, 2)
                rep = check_openness(pair(w1, w2))
                f = rep.condition_flags
                if f["rank_equal"]:
                    assert (
                        f["condition_i"]
                        == f["condition_ii"]
                        == f["condition_iii"]
                        == f["condition_iv"]
                    )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InputError):
            pair(np.eye(2), np.eye(3))


class TestConstructWitnesses:
    def test_full_rank_factors_trivial_witnesses(self):
        p = pair([[1.0], [2.0]], [[1.0, 1.0]])
        wt1, wt2 = construct_witnesses(p)
        assert np.allclose(wt1, 0.0)
        assert np.allclose(wt2, 0.0)

    def test_rank_deficient_padded_identity(self):
        w1 = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        w2 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        p = pair(w1, w2)
        wt1, wt2 = construct_witnesses(p)
        assert np.abs(w1 @ wt2).max() <= 1e-12
        assert np.abs(wt1 @ w2).max() <= 1e-12
        assert rank(w2 + wt2) == 2
        assert rank(w1 + wt1) == 2

    def test_zero_point(self):
        p = pair(np.zeros((3, 2)), np.zeros((2, 3)))
        wt1, wt2 = construct_witnesses(p)
        assert rank(wt1) == 2
        assert rank(wt2) == 2

    def test_not_open_refused(self):
        with pytest.raises(NotOpen):
            construct_witnesses(pair([[1.0], [1.0]], [[0.0, 0.0]]))

    def test_random_open_deficient_points(self):
        rng = np.random.default_rng(8)
        built = 0
        while built < 15:
            m, n = (int(x) for x in rng.integers(3, 6, size=2))
            k = int(rng.integers(2, min(m, n)))
            r = int(rng.integers(0, k))
            w1 = rng.standard_normal((m, r)) @ rng.standard_normal((r, k))
            # share the column space factor so the intersection is trivial
            base = rng.standard_normal((k, r))
            w2 = base @ rng.standard_normal((r, n))
            w1 = rng.standard_normal((m, r)) @ base.T
            p = pair(w1, w2)
            rep = check_openness(p)
            if not (rep.regime == REGIME_DEFICIENT and rep.open):
                continue
            wt1, wt2 = construct_witnesses(p, seed=built)
            scale = max(np.abs(w1).max(), np.abs(w2).max(), 1.0)
            assert np.abs(w1 @ wt2).max() <= 1e-10 * scale
            assert np.abs(wt1 @ w2).max() <= 1e-10 * scale
            assert rank(w1 + wt1) == k
            assert rank(w2 + wt2) == k
            built += 1


class TestSampleFeasibleTarget:
    def test_rank_and_distance(self):
        rng = np.random.default_rng(2)
        z = np.outer([1.0, 2.0], [1.0, 1.0])
        for delta in (1e-3, 1e-6):
            zt = sample_feasible_target(z, 1, delta, rng)
            assert rank(zt) <= 1
            assert abs(np.linalg.norm(zt - z) - delta) <= 1e-8 * delta

    def test_zero_delta(self):
        z = np.eye(3)
        zt = sample_feasible_target(z, 2, 0.0, np.random.default_rng(0))
        assert np.array_equal(zt, z)


class TestProbeOpenness:
    def test_open_point_all_recoverable(self):
        p = pair([[1.0], [2.0]], [[1.0, 1.0]])
        rep = probe_openness(p, 1e-6, 20)
        assert rep["success_fraction"] == 1.0
        assert rep["max_factor_norm"] <= 1e3 * 1e-6

    def test_non_open_point_fails(self):
        p = pair([[1.0], [1.0]], [[0.0, 0.0]])
        rep = probe_openness(p, 1e-4, 20)
        assert rep["success_fraction"] < 1.0

    def test_zero_delta_trivial(self):
        p = pair([[1.0], [2.0]], [[1.0, 1.0]])
        rep = probe_openness(p, 0.0, 5)
        assert rep["success_fraction"] == 1.0

    def test_zero_point_recoverable_with_sqrt_witnesses(self):
        p = pair(np.zeros((2, 1)), np.zeros((1, 2)))
        rep = probe_openness(p, 1e-5, 10)
        assert rep["success_fraction"] == 1.0

    def test_deterministic_per_seed(self):
        p = pair([[1.0], [2.0]], [[1.0, 1.0]])
        r1 = probe_openness(p, 1e-5, 8, seed=42)
        r2 = probe_openness(p, 1e-5, 8, seed=42)
        assert r1 == r2

    def test_agrees_with_characterization_on_small_grid(self):
        entries = (-1.0, 0.0, 1.0)
        agree = total = 0
        for vals1 in itertools.product(entries, repeat=2):
            for vals2 in itertools.product(entries, repeat=2):
                w1 = np.array(vals1).reshape(2, 1)
                w2 = np.array(vals2).reshape(1, 2)
                p = pair(w1, w2)
                rep = check_openness(p)
                probe = probe_openness(p, 1e-5, 12)
                total += 1
                agree += rep.open == (probe["success_fraction"] == 1.0)
        assert agree / total >= 0.99


class TestGaussNewtonRecover:
    def test_recovers_constructed_solution(self):
        rng = np.random.default_rng(5)
        w1 = rng.standard_normal((3, 2))
        w2 = rng.standard_normal((2, 4))
        da = 1e-5 * rng.standard_normal(w1.shape)
        db = 1e-5 * rng.standard_normal(w2.shape)
        target = (w1 + da) @ (w2 + db)
        delta = np.linalg.norm(target - w1 @ w2)
        out = gauss_newton_recover(w1, w2, target[None], delta, DEFAULT_TOL)
        assert bool(out["success"][0])
        assert out["residual"][0] <= DEFAULT_TOL.residual_abs
