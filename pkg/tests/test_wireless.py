"""Channel model: rates, feasibility, minimal power, domains, sampling."""

import math

import numpy as np
import pytest

from binomfl.errors import CapacityInfeasibleError, EmptyDomainError
from binomfl.wireless import (
    ChannelSampler,
    SystemParams,
    capacity_base,
    capacity_feasible,
    dbm_to_watts,
    db_to_linear,
    domain_bound,
    min_snr,
    required_power,
    sample_gains,
    shannon_rate,
    watts_to_dbm,
)


def flat_system(K=2, d=4, T=2.0, W=4.0, omega0=1.0, gain=1.0, p_min=1e-6, p_max=100.0):
    return SystemParams(
        K=K, M=K, d=d, delta=1e-3, T=T, W=W, omega0=omega0,
        p_min=p_min, p_max=p_max, gains=tuple([gain] * K),
    )


class TestSystemParams:
    def test_rejects_gain_count_mismatch(self):
        with pytest.raises(ValueError):
            SystemParams(K=3, M=5, d=1, delta=0.5, T=1, W=1, omega0=1,
                         p_min=0.1, p_max=1.0, gains=(1.0, 2.0))

    def test_rejects_k_above_m(self):
        with pytest.raises(ValueError):
            SystemParams(K=6, M=5, d=1, delta=0.5, T=1, W=1, omega0=1,
                         p_min=0.1, p_max=1.0, gains=(1.0,) * 6)

    def test_rejects_inverted_power_limits(self):
        with pytest.raises(ValueError):
            SystemParams(K=1, M=1, d=1, delta=0.5, T=1, W=1, omega0=1,
                         p_min=2.0, p_max=1.0, gains=(1.0,))


class TestShannonRate:
    def test_unit_snr(self):
        sys = flat_system(W=8.0)
        assert shannon_rate(1.0, 1.0, sys) == 8.0

    def test_snr_three(self):
        sys = flat_system(W=1.0, omega0=2.0)
        # power * gain / omega0 = 3 -> log2(4) = 2
        assert shannon_rate(6.0, 1.0, sys) == 2.0

    def test_monotone_in_gain(self, rng):
        sys = flat_system(W=5.0)
        for _ in range(20):
            p = float(rng.uniform(0.1, 10))
            g = float(rng.uniform(0.1, 10))
            assert shannon_rate(p, 2 * g, sys) > shannon_rate(p, g, sys)

    def test_rejects_nonpositive_power(self):
        with pytest.raises(ValueError):
            shannon_rate(0.0, 1.0, flat_system())


class TestCapacityFeasible:
    def test_exact_equality_is_feasible(self):
        # payload 4*log2(4) = 8 vs T*W*log2(2) = 8
        sys = flat_system(K=2, d=4, T=2.0, W=4.0)
        assert capacity_feasible(2, 2, [1.0, 1.0], sys)

    def test_snr_point_nine_fails(self):
        sys = flat_system(K=2, d=4, T=2.0, W=4.0)
        assert not capacity_feasible(2, 2, [0.9, 0.9], sys)

    def test_more_time_or_bandwidth_never_breaks(self, rng):
        for _ in range(50):
            d = int(rng.integers(1, 30))
            T = float(rng.uniform(0.5, 4))
            W = float(rng.uniform(0.5, 8))
            q = int(rng.integers(2, 20))
            n = int(rng.integers(2, 40))
            power = float(rng.uniform(0.1, 20))
            sys = flat_system(K=1, d=d, T=T, W=W)
            if capacity_feasible(q, n, [power], sys):
                grown = flat_system(K=1, d=d, T=T * rng.uniform(1, 3), W=W * rng.uniform(1, 3))
                assert capacity_feasible(q, n, [power], grown)


class TestRequiredPower:
    def test_closed_form_point(self):
        # (q+n)^(d/TW) - 1 = 4^0.5 - 1 = 1 at omega0 = gain = 1
        sys = flat_system(K=1, d=1, T=1.0, W=2.0)
        assert required_power(2, 2, 1.0, sys) == 1.0

    def test_clamps_to_p_min(self):
        sys = flat_system(K=1, d=1, T=1.0, W=2.0, p_min=5.0, p_max=100.0)
        assert required_power(2, 2, 1.0, sys) == 5.0

    def test_signals_above_p_max(self):
        sys = flat_system(K=1, d=1, T=1.0, W=2.0, p_max=0.5)
        with pytest.raises(CapacityInfeasibleError):
            required_power(2, 2, 1.0, sys)

    def test_output_always_passes_capacity(self, rng):
        # randomized cross-check between the two operations
        for _ in range(300):
            d = int(rng.integers(1, 40))
            T = float(rng.uniform(0.2, 3))
            W = float(rng.uniform(0.5, 50))
            gain = float(rng.uniform(0.01, 10))
            omega0 = float(rng.uniform(0.01, 2))
            q = int(rng.integers(2, 50))
            n = int(rng.integers(2, 100))
            sys = SystemParams(K=1, M=1, d=d, delta=0.5, T=T, W=W, omega0=omega0,
                               p_min=1e-9, p_max=1e6, gains=(gain,))
            try:
                power = required_power(q, n, gain, sys)
            except CapacityInfeasibleError:
                continue
            assert capacity_feasible(q, n, [power], sys)


class TestDomainBound:
    def test_floor_minus_two(self):
        # base (1 + 65.3)^1 = 66.3 -> bound 64
        sys = flat_system(K=1, d=1, T=1.0, W=1.0, p_max=65.3)
        assert capacity_base(sys) == pytest.approx(66.3)
        assert domain_bound(sys) == 64

    def test_empty_domain_signals(self):
        sys = flat_system(K=1, d=1, T=1.0, W=1.0, p_max=2.0)
        with pytest.raises(EmptyDomainError):
            domain_bound(sys)

    @pytest.mark.parametrize("axis", ["p_max", "T", "W"])
    def test_monotone_in_resources(self, axis, rng):
        for _ in range(50):
            kw = dict(K=1, d=2, T=1.0, W=3.0, p_max=float(rng.uniform(10, 100)))
            sys = flat_system(**kw)
            kw[axis] = kw[axis] * float(rng.uniform(1, 4))
            grown = flat_system(**kw)
            try:
                b0 = domain_bound(sys)
            except EmptyDomainError:
                continue
            assert domain_bound(grown) >= b0

    def test_required_power_never_signals_inside_domain(self, rng):
        # any q + n up to bound + 2 is carryable by the worst device
        for _ in range(100):
            sys = flat_system(K=3, d=int(rng.integers(1, 10)), T=1.0,
                              W=float(rng.uniform(2, 20)),
                              gain=float(rng.uniform(0.5, 4.0)),
                              p_max=float(rng.uniform(5, 200)))
            try:
                bound = domain_bound(sys)
            except EmptyDomainError:
                continue
            hi = min(bound + 2, 10**6)
            total = int(rng.integers(4, hi + 1))
            q = int(rng.integers(2, total - 1))
            required_power(q, total - q, min(sys.gains), sys)

    def test_min_snr_uses_worst_gain(self):
        sys = SystemParams(K=3, M=3, d=1, delta=0.5, T=1, W=1, omega0=2.0,
                           p_min=0.1, p_max=4.0, gains=(3.0, 1.0, 2.0))
        assert min_snr(sys) == 4.0 * 1.0 / 2.0


class TestSampleGains:
    def test_bit_identical_under_fixed_seed(self):
        sampler = ChannelSampler(g0=1e-4, d0=1.0, d_min=2.0, d_max=200.0, seed=99)
        a = sample_gains(sampler, 64)
        b = sample_gains(sampler, 64)
        assert a == b

    def test_squared_gain_mean_matches_pathloss(self):
        # fixed distance: 1e5 draws of h^2 ~ Exp(mean g0 (d0/D)^4)
        sampler = ChannelSampler(g0=1e-4, d0=1.0, d_min=50.0, d_max=50.0, seed=5)
        h = np.array(sample_gains(sampler, 100_000))
        h_sq = h * h
        mean = 1e-4 * (1.0 / 50.0) ** 4
        stderr = mean / math.sqrt(h_sq.size)  # exponential: sd == mean
        assert abs(h_sq.mean() - mean) <= 3.0 * stderr

    def test_power_semantics_returns_square(self):
        amp = ChannelSampler(g0=1e-2, d0=1.0, d_min=3.0, d_max=3.0, seed=1)
        pwr = ChannelSampler(g0=1e-2, d0=1.0, d_min=3.0, d_max=3.0, seed=1, semantics="power")
        a = np.array(sample_gains(amp, 256))
        p = np.array(sample_gains(pwr, 256))
        np.testing.assert_allclose(a * a, p, rtol=1e-12)

    def test_degenerate_distance_interval(self):
        sampler = ChannelSampler(g0=1e-4, d0=1.0, d_min=7.0, d_max=7.0, seed=3)
        gains = sample_gains(sampler, 10)
        assert len(gains) == 10 and all(g > 0 for g in gains)


class TestUnitConversions:
    def test_dbm_watts_roundtrip(self, rng):
        for _ in range(20):
            dbm = float(rng.uniform(-30, 40))
            assert watts_to_dbm(dbm_to_watts(dbm)) == pytest.approx(dbm, abs=1e-9)

    def test_reference_points(self):
        assert dbm_to_watts(0.0) == pytest.approx(1e-3)
        assert dbm_to_watts(20.0) == pytest.approx(0.1)
        assert db_to_linear(-40.0) == pytest.approx(1e-4)
