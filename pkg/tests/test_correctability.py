from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import null_space, svdvals

from frares import (
    ConfigurationError,
    EnumerationCapError,
    FracSystem,
    build_propagators,
    check_correctable_exact,
    confusable_pair,
    correctable_channel_cap,
    max_correctable_q,
    nullspace_property_check,
    observability_index,
    sufficient_bound,
)
from frares.correctability import witness_leak

from conftest import random_system

seeds = st.integers(0, 2**32 - 1)


def oracle_correctable(system, k, q):
    """No nonzero z may excite 2q or fewer channels over the horizon."""
    cache = build_propagators(system, k)
    p, n = system.n_channels, system.n_states
    for K in combinations(range(p), 2 * q):
        rows = [cache.CG[m, i] for m in range(k) for i in range(p) if i not in K]
        M = np.array(rows).reshape(-1, n)
        if M.size == 0 or null_space(M, rcond=1e-9).shape[1] > 0:
            return False
    return True


class TestExactCheck:
    def test_toy_single_channel_correctable(self, toy):
        report = check_correctable_exact(toy, 5, 1)
        assert report.correctable
        assert report.decision == "correctable"
        assert report.subsets_checked == 6

    def test_two_identical_channels_fail(self):
        system = FracSystem([[0.3]], [[1.0], [1.0]], [0.5])
        report = check_correctable_exact(system, 3, 1)
        assert not report.correctable
        assert report.witness_support == (0, 1)
        assert abs(abs(report.witness_z[0]) - 1.0) < 1e-15

    def test_q_zero_is_plain_observability(self):
        unobservable = FracSystem(np.diag([0.2, 0.3]), [[1.0, 0.0]], [0.0, 0.0])
        assert not check_correctable_exact(unobservable, 10, 0).correctable
        assert check_correctable_exact(FracSystem([[0.2]], [[1.0]], [0.4]), 1, 0).correctable

    def test_too_many_channels_requested(self, toy):
        with pytest.raises(ConfigurationError, match="exceeds"):
            check_correctable_exact(toy, 5, 3)

    def test_enumeration_cap(self):
        system = FracSystem([[0.1]], np.ones((12, 1)), [0.5])
        with pytest.raises(EnumerationCapError, match="sufficient_bound"):
            check_correctable_exact(system, 2, 3, cap=100)

    @settings(max_examples=60, deadline=None)
    @given(seed=seeds)
    def test_matches_nullspace_oracle(self, seed):
        rng = np.random.default_rng(seed)
        system = random_system(rng)
        k = int(rng.integers(1, 7))
        q = int(rng.integers(0, system.n_channels // 2 + 1))
        assert check_correctable_exact(system, k, q).correctable == oracle_correctable(system, k, q)

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds)
    def test_monotone_in_q_and_horizon(self, seed):
        rng = np.random.default_rng(seed)
        system = random_system(rng, p_min=2)
        k = int(rng.integers(1, 7))
        for q in range(1, system.n_channels // 2 + 1):
            if check_correctable_exact(system, k, q).correctable:
                assert check_correctable_exact(system, k, q - 1).correctable
                assert check_correctable_exact(system, k + 1, q).correctable

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds)
    def test_channel_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        system = random_system(rng, p_min=2)
        perm = rng.permutation(system.n_channels)
        k = int(rng.integers(1, 6))
        assert max_correctable_q(system, k) == max_correctable_q(system.permute_channels(perm), k)

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds)
    def test_extra_sensors_cannot_hurt_q_zero(self, seed):
        rng = np.random.default_rng(seed)
        system = random_system(rng)
        k = int(rng.integers(1, 6))
        wider = system.with_sensors(np.vstack([system.C, rng.standard_normal((1, system.n_states))]))
        if check_correctable_exact(system, k, 0).correctable:
            assert check_correctable_exact(wider, k, 0).correctable

    def test_report_roundtrips_to_dict(self):
        system = FracSystem([[0.3]], [[1.0], [1.0]], [0.5])
        d = check_correctable_exact(system, 2, 1).to_dict()
        assert d["decision"] == "not-correctable"
        assert d["witness"]["support"] == [0, 1]


class TestMaxCorrectable:
    def test_toy(self, toy):
        assert max_correctable_q(toy, 5) == 1

    def test_unobservable_gives_minus_one(self):
        system = FracSystem(np.diag([0.2, 0.3]), [[1.0, 0.0]], [0.0, 0.0])
        assert max_correctable_q(system, 4) == -1

    def test_scalar_identity_sensors(self):
        # every channel sees the state, so any p - 2q >= 1 remaining rows suffice
        for p in range(1, 7):
            system = FracSystem([[0.4]], np.ones((p, 1)), [0.5])
            assert max_correctable_q(system, 1) == (p - 1) // 2


class TestConfusablePair:
    @settings(max_examples=40, deadline=None)
    @given(seed=seeds)
    def test_outputs_coincide(self, seed):
        rng = np.random.default_rng(seed)
        system = random_system(rng, p_min=2)
        k = int(rng.integers(1, 6))
        q = int(rng.integers(1, system.n_channels // 2 + 1))
        cache = build_propagators(system, k)
        report = check_correctable_exact(cache, None, q)
        if report.correctable:
            return
        pair = confusable_pair(cache, report, x_b=rng.standard_normal(system.n_states))
        Ya, Yb = pair.outputs(cache)
        scale = max(1.0, np.abs(Ya).max())
        assert np.max(np.abs(Ya - Yb)) <= 1e-10 * scale
        assert np.linalg.norm(pair.x_a - pair.x_b) == pytest.approx(1.0)
        for e, L in ((pair.e_a, pair.support_a), (pair.e_b, pair.support_b)):
            assert len(L) <= q
            assert not np.delete(e, list(L), axis=0).any()
        assert witness_leak(cache, report) <= 1e-10

    def test_rejects_correctable_report(self, toy):
        cache = build_propagators(toy, 5)
        with pytest.raises(ConfigurationError):
            confusable_pair(cache, check_correctable_exact(cache, None, 1))


class TestObservabilityIndex:
    def test_identity_sensors(self, toy):
        assert observability_index(toy, 10).k_star == 1

    def test_single_channel_toy(self, toy):
        for i in range(4):
            report = observability_index(toy.with_sensors(toy.C[i : i + 1]), 10)
            assert report.k_star == 4
            assert report.rank_profile[:5] == (1, 2, 3, 4, 4)

    def test_not_reached(self):
        system = FracSystem(np.diag([0.2, 0.3]), [[1.0, 0.0]], [0.0, 0.0])
        report = observability_index(system, 5)
        assert not report.found
        assert report.k_star is None


class TestChannelCap:
    def test_hand_values(self):
        assert correctable_channel_cap(4, 1, 4) == Fraction(1, 2)
        assert correctable_channel_cap(4, 4, 4) == Fraction(2)
        assert correctable_channel_cap(5, 2, 4) == Fraction(4, 2)

    def test_rejects_too_short(self):
        with pytest.raises(ConfigurationError):
            correctable_channel_cap(2, 1, 4)

    @settings(max_examples=60, deadline=None)
    @given(seed=seeds)
    def test_correctable_q_is_strictly_below_cap(self, seed):
        rng = np.random.default_rng(seed)
        system = random_system(rng)
        tau = int(rng.integers(1, 7))
        obs = observability_index(system, 12)
        if not obs.found or system.n_channels * tau < obs.k_star:
            return
        cap = correctable_channel_cap(system.n_channels, tau, obs.k_star)
        q = max_correctable_q(system, tau)
        assert q < cap


class TestSufficientBound:
    def test_scalar_identity_example(self):
        for p, expected in ((2, 0), (3, 1), (4, 1), (5, 2)):
            system = FracSystem([[0.4]], np.ones((p, 1)), [0.5])
            report = sufficient_bound(build_propagators(system, 1))
            assert report.certified
            assert report.alpha_bound == report.beta_bound == 1.0
            assert report.q_sufficient == expected

    def test_uncertified_when_horizon_short(self, toy):
        report = sufficient_bound(build_propagators(toy, 1))
        assert not report.certified
        assert report.alpha_bound == 0.0
        assert report.q_sufficient == 0

    def test_gains_match_svd_oracle(self, rng):
        system = random_system(rng, n_max=3, p_min=3)
        cache = build_propagators(system, 6)
        report = sufficient_bound(cache)
        for i, (lo, hi) in enumerate(report.channel_gains):
            s = svdvals(np.array([cache.CG[m, i] for m in range(6)]))
            assert lo == pytest.approx(s[system.n_states - 1], rel=1e-10, abs=1e-14)
            assert hi == pytest.approx(s[0], rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds)
    def test_guarantee_is_consistent(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 3))
        p = int(rng.integers(3, 8))
        # nearly balanced channels give a nontrivial guarantee
        C = np.ones((p, n)) + 0.05 * rng.standard_normal((p, n))
        system = FracSystem(0.3 * np.eye(n) + 0.05 * rng.standard_normal((n, n)), C,
                            rng.uniform(0.2, 0.9, n))
        cache = build_propagators(system, int(rng.integers(n, n + 4)))
        report = sufficient_bound(cache)
        assert 0 <= report.q_sufficient <= p // 2
        if report.certified and report.q_sufficient > 0:
            q = report.q_sufficient
            assert max_correctable_q(cache, None) >= q
            nsp = nullspace_property_check(cache, q, trials=500, seed=0, ascent_starts=2)
            assert nsp.max_ratio < 1.0

    def test_toy_report(self, toy):
        report = sufficient_bound(build_propagators(toy, 5))
        assert report.certified
        assert report.q_sufficient == 0
        assert report.k_star == 1
        assert report.channel_cap == Fraction(4, 2)
