import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import binom, gammaln, gammasgn

from frares import (
    ArtifactSpec,
    ConfigurationError,
    FracSystem,
    build_propagators,
    propagate,
    psi,
    psi_table,
    simulate_outputs,
    simulate_states,
)

from conftest import random_system


def psi_gamma(alpha, j):
    """Γ(j-α) / (Γ(-α) Γ(j+1)) through log-gamma with explicit signs."""
    sign = gammasgn(j - alpha) * gammasgn(-alpha)
    return sign * math.exp(gammaln(j - alpha) - gammaln(-alpha) - gammaln(j + 1))


class TestPsi:
    def test_empty_product(self):
        assert psi(0.5, 0) == 1.0

    def test_first_weight_is_minus_alpha(self):
        assert psi(0.5, 1) == -0.5

    def test_second_weight_matches_binomial(self):
        # (-1)^2 binom(0.5, 2) = 0.5 * (-0.5) / 2
        assert psi(0.5, 2) == pytest.approx((-1) ** 2 * binom(0.5, 2), abs=1e-15)
        assert psi(0.5, 2) == -0.125

    def test_third_weight_at_0_7(self):
        oracle = psi_gamma(0.7, 3)
        assert oracle == pytest.approx(-0.0455, rel=1e-12)
        assert abs(psi(0.7, 3) - oracle) <= 1e-12

    @given(
        alpha=st.floats(0.01, 1.99).filter(lambda a: abs(a - 1.0) > 1e-6),
        j=st.integers(0, 50),
    )
    def test_recursion_matches_log_gamma(self, alpha, j):
        assert abs(psi(alpha, j) - psi_gamma(alpha, j)) <= 1e-12

    def test_integer_order_one_is_first_difference(self):
        assert [psi(1.0, j) for j in range(4)] == [1.0, -1.0, 0.0, 0.0]

    def test_table_is_bitwise_equal_to_scalar(self):
        alpha = np.array([0.1, 0.7, 1.3])
        table = psi_table(alpha, 30)
        for i, a in enumerate(alpha):
            for j in range(31):
                assert table[j, i] == psi(a, j)

    def test_negative_index_rejected(self):
        with pytest.raises(ValueError):
            psi(0.5, -1)


class TestFracSystem:
    def test_alpha_length_mismatch_names_alpha(self):
        with pytest.raises(ConfigurationError, match="alpha"):
            FracSystem(np.eye(2), np.eye(2), [0.5])

    def test_sensor_width_mismatch(self):
        with pytest.raises(ConfigurationError, match="C"):
            FracSystem(np.eye(2), np.ones((3, 3)), [0.5, 0.5])

    def test_non_square_dynamics(self):
        with pytest.raises(ConfigurationError, match="square"):
            FracSystem(np.ones((2, 3)), np.ones((1, 3)), [0.5, 0.5, 0.5])

    @pytest.mark.parametrize("bad", [-0.1, 2.0, 2.5, float("nan")])
    def test_order_range(self, bad):
        with pytest.raises(ConfigurationError):
            FracSystem([[0.0]], [[1.0]], [bad])

    def test_arrays_are_read_only(self, toy):
        with pytest.raises(ValueError):
            toy.A[0, 0] = 1.0


class TestPropagators:
    def test_scalar_hand_recursion(self):
        # A0 = 0.5 + 0.5 = 1, A1 = -psi(0.5, 2) = 0.125, G2 = A0 G1 + A1 G0
        cache = build_propagators(FracSystem([[0.5]], [[1.0]], [0.5]), 3)
        assert cache.G.ravel().tolist() == [1.0, 1.0, 1.125]

    def test_horizon_one(self, toy):
        cache = build_propagators(toy, 1)
        assert cache.G.shape == (1, 4, 4)
        assert np.array_equal(cache.G[0], np.eye(4))

    def test_zero_orders_give_matrix_powers(self, rng):
        A = rng.standard_normal((3, 3)) / 2
        cache = build_propagators(FracSystem(A, np.eye(3), np.zeros(3)), 12)
        for m in range(12):
            power = np.linalg.matrix_power(A, m)
            assert np.max(np.abs(cache.G[m] - power)) <= 1e-12 * max(1.0, np.abs(power).max())

    def test_recursion_invariants(self, rng):
        system = random_system(rng, n_max=5)
        cache = build_propagators(system, 10)
        n = system.n_states
        assert np.array_equal(cache.G[0], np.eye(n))
        assert np.array_equal(cache.Aj[0], system.A - np.diag([psi(a, 1) for a in system.alpha]))
        for j in range(1, 10):
            assert np.array_equal(cache.Aj[j], -np.diag([psi(a, j + 1) for a in system.alpha]))
        for m in range(1, 10):
            expected = sum(cache.Aj[j] @ cache.G[m - 1 - j] for j in range(m))
            np.testing.assert_allclose(cache.G[m], expected, rtol=1e-13, atol=1e-13)

    def test_deterministic(self, toy):
        a = build_propagators(toy, 20)
        b = build_propagators(toy, 20)
        assert a.G.tobytes() == b.G.tobytes()

    def test_head_matches_rebuild(self, toy):
        full = build_propagators(toy, 12)
        short = build_propagators(toy, 7)
        assert full.head(7).G.tobytes() == short.G.tobytes()
        with pytest.raises(ConfigurationError):
            short.head(8)

    def test_rejects_nonpositive_horizon(self, toy):
        with pytest.raises(ConfigurationError):
            build_propagators(toy, 0)


class TestPropagate:
    def test_zero_initial_state(self, toy):
        assert not propagate(build_propagators(toy, 6), np.zeros(4)).any()

    def test_scalar_example(self):
        cache = build_propagators(FracSystem([[0.5]], [[1.0]], [0.5]), 3)
        assert propagate(cache, [2.0]).ravel().tolist() == [2.0, 2.0, 2.25]

    def test_initial_state_echoed(self, toy, rng):
        x0 = rng.standard_normal(4)
        assert propagate(build_propagators(toy, 4), x0)[0].tobytes() == x0.tobytes()

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_matches_direct_stepping(self, seed):
        rng = np.random.default_rng(seed)
        system = random_system(rng, n_max=6, p_max=2)
        k = int(rng.integers(1, 31))
        x0 = rng.standard_normal(system.n_states)
        a = propagate(build_propagators(system, k), x0)
        b = simulate_states(system, x0, k)
        assert np.max(np.abs(a - b)) <= 1e-10 * max(1.0, np.abs(b).max())

    def test_dimension_mismatch(self, toy):
        with pytest.raises(ConfigurationError):
            propagate(build_propagators(toy, 3), np.ones(3))


class TestSimulateOutputs:
    def test_no_artifacts_is_clean(self, toy, rng):
        cache = build_propagators(toy, 5)
        x0 = rng.standard_normal(4)
        block, e = simulate_outputs(cache, x0, ArtifactSpec(), seed=0)
        expected = np.stack([toy.C @ cache.G[m] @ x0 for m in range(5)], axis=1)
        assert np.array_equal(block.Y, expected)
        assert not e.any()

    def test_toy_channel_one_corrupted_at_ten_times(self, toy):
        cache = build_propagators(toy, 5)
        x0 = np.ones(4)
        clean, _ = simulate_outputs(cache, x0)
        block, e = simulate_outputs(cache, x0, ArtifactSpec({0}, "scaled-random", scale=10.0), seed=3)
        assert np.array_equal(block.Y[1:], clean.Y[1:])
        np.testing.assert_allclose(np.abs(e[0]), 10 * np.abs(clean.Y[0]), rtol=1e-15)
        assert not e[1:].any()

    def test_electrode_pop_profile(self, toy):
        cache = build_propagators(toy, 12)
        spec = ArtifactSpec({2}, "electrode-pop", amplitude=7.0, onset=1, pop_steps=4, noise_std=0.3)
        block, e = simulate_outputs(cache, np.ones(4), spec, seed=1)
        assert not np.delete(e, 2, axis=0).any()
        assert e[2, 0] == 0.0
        assert np.all(e[2, 1:5] == 7.0)
        # after the pop the channel carries the noise only
        assert np.all(np.abs(block.Y[2, 5:]) < 0.3 * 5)

    @pytest.mark.parametrize("mode,kw", [
        ("constant", {"offset": 2.5}),
        ("scaled-random", {"scale": 3.0}),
        ("electrode-pop", {"amplitude": 4.0, "pop_steps": 2, "noise_std": 1.0}),
    ])
    def test_support_respected_for_every_mode(self, mode, kw, rng):
        system = random_system(rng, p_min=4, p_max=5)
        cache = build_propagators(system, 9)
        spec = ArtifactSpec({1, 3}, mode, **kw)
        _, e = simulate_outputs(cache, rng.standard_normal(system.n_states), spec, seed=5)
        outside = [i for i in range(system.n_channels) if i not in spec.support]
        assert not e[outside].any()

    def test_seed_replay(self, toy):
        cache = build_propagators(toy, 8)
        spec = ArtifactSpec({0, 1}, "scaled-random", scale=2.0)
        a, _ = simulate_outputs(cache, np.ones(4), spec, seed=11)
        b, _ = simulate_outputs(cache, np.ones(4), spec, seed=11)
        c, _ = simulate_outputs(cache, np.ones(4), spec, seed=12)
        assert a.Y.tobytes() == b.Y.tobytes()
        assert a.Y.tobytes() != c.Y.tobytes()

    def test_support_out_of_range(self, toy):
        with pytest.raises(ConfigurationError, match="out of range"):
            simulate_outputs(build_propagators(toy, 3), np.ones(4), ArtifactSpec({4}, "constant"))

    def test_linear_without_artifacts(self, toy, rng):
        cache = build_propagators(toy, 6)
        x, y = rng.standard_normal(4), rng.standard_normal(4)
        Yx = simulate_outputs(cache, x)[0].Y
        Yy = simulate_outputs(cache, y)[0].Y
        Ysum = simulate_outputs(cache, x + y)[0].Y
        Yscaled = simulate_outputs(cache, 3.0 * x)[0].Y
        scale = np.abs(Ysum).max()
        assert np.max(np.abs(Ysum - (Yx + Yy))) <= 1e-14 * scale
        assert np.max(np.abs(Yscaled - 3.0 * Yx)) <= 1e-14 * np.abs(Yscaled).max()
