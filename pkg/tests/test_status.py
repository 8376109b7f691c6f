import math

import numpy as np
import pytest
from scipy import stats

from semchan import io
from semchan.core import SPEED_OF_LIGHT, NS, SemanticLabel, delay_window_ns
from semchan.distributions import DistributionSpec
from semchan.status import (
    DEFAULT_WAVELENGTH_M, SingularityError, StatusProfile, denormalize_power, normalize_power,
    synthesize_cluster,
)


@pytest.fixture(scope="module")
def lib():
    return io.load_status_library(io.default_library_path("status"))


def tau_for_distance(d):
    return d / SPEED_OF_LIGHT / NS


def relative(cluster):
    d = np.array([m.delay for m in cluster.members])
    p = 20 * np.log10([m.amplitude for m in cluster.members])
    return cluster.centroid_delay - d[1:], cluster.centroid_power - p[1:]


def collect(profile, n_clusters, seed, centroid=1000.0):
    rng = np.random.default_rng(seed)
    dt, dp = [], []
    for _ in range(n_clusters):
        a, b = relative(synthesize_cluster(profile, centroid, 0.0, rng))
        dt.append(a)
        dp.append(b)
    return np.concatenate(dt), np.concatenate(dp)


# -- free-space normalization ----------------------------------------------------

def test_unit_gain_distance_leaves_power_alone():
    tau = tau_for_distance(DEFAULT_WAVELENGTH_M / (4 * math.pi))
    assert normalize_power(-80.0, tau) == pytest.approx(-80.0, abs=1e-9)


def test_tenfold_distance_adds_twenty_db():
    tau = tau_for_distance(10 * DEFAULT_WAVELENGTH_M / (4 * math.pi))
    assert normalize_power(-80.0, tau) == pytest.approx(-60.0, abs=1e-9)
    assert denormalize_power(-60.0, tau) == pytest.approx(-80.0, abs=1e-9)


@pytest.mark.parametrize("p,tau", [(-80.0, 1.0), (-123.4, 57.5), (3.0, 333.0)])
def test_normalize_inverse_pair(p, tau):
    assert denormalize_power(normalize_power(p, tau), tau) == pytest.approx(p, abs=1e-9)
    assert normalize_power(denormalize_power(p, tau), tau) == pytest.approx(p, abs=1e-9)


def test_zero_delay_is_singular():
    with pytest.raises(SingularityError):
        normalize_power(-80.0, 0.0)
    with pytest.raises(SingularityError):
        denormalize_power(-80.0, [1.0, 0.0])


def test_two_way_halves_the_distance():
    diff = normalize_power(-80.0, 20.0) - normalize_power(-80.0, 20.0, two_way=True)
    assert diff == pytest.approx(20 * math.log10(2))


# -- library ---------------------------------------------------------------------

def test_default_library_is_complete(lib):
    assert lib.is_complete()
    assert lib.wavelength_m == pytest.approx(SPEED_OF_LIGHT / 28e9)
    p = lib[SemanticLabel.METAL_BARRIER]
    assert (p.decay_slope, p.decay_intercept) == (-0.0561, 8.3474)


def test_profile_rejects_bad_scales(lib):
    p = lib[1]
    with pytest.raises(ValueError, match="delay scales"):
        StatusProfile(p.label, p.number_dist, 0.0, 1.0, p.decay_slope, p.decay_intercept, p.residual)


# -- synthesis -------------------------------------------------------------------

def test_degenerate_count_gives_centroid_only(lib, rng):
    p = lib[3]
    one = StatusProfile(p.label, DistributionSpec.normal(1.0, 1e-12), p.delay_scale_pos,
                        p.delay_scale_neg, p.decay_slope, p.decay_intercept, p.residual)
    c = synthesize_cluster(one, 50.0, -3.0, rng)
    assert len(c.members) == 1
    assert c.members[0].delay == 50.0
    assert 20 * math.log10(c.members[0].amplitude) == pytest.approx(-3.0)


def test_centroid_is_member_zero_and_strongest(lib, rng):
    hi = delay_window_ns()
    for label in lib.labels:
        for _ in range(200):
            c = synthesize_cluster(lib[label], 5.0, 0.0, rng, delay_limits=(0.0, hi))
            amps = np.array([m.amplitude for m in c.members])
            delays = np.array([m.delay for m in c.members])
            assert c.members[0].delay == 5.0
            assert amps.max() <= amps[0] * (1 + 1e-12)
            assert delays.min() >= 0.0 and delays.max() <= hi
            assert all(0 <= m.phase < 2 * math.pi for m in c.members)


def test_centroid_outside_window_rejected(lib, rng):
    with pytest.raises(ValueError, match="outside"):
        synthesize_cluster(lib[1], 400.0, 0.0, rng, delay_limits=(0.0, delay_window_ns()))


def test_label_01_mean_member_count_matches_floored_gamma(lib):
    p = lib[1]
    shape, rate = p.number_dist.params
    assert shape / rate == pytest.approx(2.944, abs=5e-4)
    # oracle: scipy draws pushed through the same half-up rounding and floor of 1
    x = stats.gamma(shape, scale=1 / rate).rvs(10**6, random_state=np.random.default_rng(7))
    oracle = np.maximum(1, np.floor(x + 0.5)).mean()
    rng = np.random.default_rng(8)
    sizes = [len(synthesize_cluster(p, 1000.0, 0.0, rng).members) for _ in range(10**5)]
    assert np.mean(sizes) == pytest.approx(oracle, abs=0.05)
    assert np.mean(sizes) == pytest.approx(2.944, abs=0.1)


def test_label_02_late_side_exponential_mean(lib):
    p = lib[2]
    assert p.delay_scale_pos == 6.5815
    dt, _ = collect(p, 10**5, seed=9)
    pos = dt[dt > 0]
    loc, scale = stats.expon.fit(pos, floc=0)
    assert scale == pytest.approx(6.5815, rel=0.02)


def test_side_probability_override(lib):
    p = lib[5]
    skew = StatusProfile(p.label, p.number_dist, p.delay_scale_pos, p.delay_scale_neg,
                         p.decay_slope, p.decay_intercept, p.residual, side_prob_pos=0.8)
    dt, _ = collect(skew, 5000, seed=3)
    assert np.mean(dt > 0) == pytest.approx(0.8, abs=0.02)


def test_untruncated_relation_recovers_slope(lib):
    # an intercept far above the residual spread never triggers the redraw
    p = lib[1]
    far = StatusProfile(p.label, p.number_dist, p.delay_scale_pos, p.delay_scale_neg,
                        p.decay_slope, 200.0, p.residual)
    dt, dp = collect(far, 30000, seed=4)
    slope, intercept = np.polyfit(dt, dp, 1)
    assert slope == pytest.approx(p.decay_slope, rel=0.05)


@pytest.mark.xfail(strict=True, reason="the dp >= 0 redraw lifts low trend values and flattens "
                                       "the regression slope by 10-35% with the shipped profiles")
def test_shipped_profile_slope_within_ten_percent(lib):
    p = lib[1]
    dt, dp = collect(p, 52000, seed=5)
    assert dt.size >= 10**5
    slope, _ = np.polyfit(dt, dp, 1)
    assert slope == pytest.approx(p.decay_slope, rel=0.10)


def test_same_seed_same_cluster(lib):
    a = synthesize_cluster(lib[7], 80.0, 1.0, np.random.default_rng(3))
    b = synthesize_cluster(lib[7], 80.0, 1.0, np.random.default_rng(3))
    assert a == b


def test_measured_domain_output_reapplies_free_space_loss(lib):
    c = synthesize_cluster(lib[4], 80.0, 10.0, np.random.default_rng(1), library=lib)
    m0 = c.members[0]
    assert 20 * math.log10(m0.amplitude) == pytest.approx(lib.denormalize(10.0, 80.0))
