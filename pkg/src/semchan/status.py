"""Status semantics: per-label multipath recipes and single-snapshot synthesis.

Relative quantities follow the centroid convention::

    delta_tau = centroid_delay - member_delay
    delta_p   = centroid_power - member_power      (normalized dB, >= 0)

so ``delta_tau > 0`` marks a member that arrives *before* the centroid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    DEFAULT_CARRIER_HZ, NS, SPEED_OF_LIGHT, TWO_PI, MultipathComponent,
    SemanticCluster, SemanticLabel,
)
from .distributions import DistributionSpec, Family, round_half_up

DEFAULT_WAVELENGTH_M = SPEED_OF_LIGHT / DEFAULT_CARRIER_HZ
MAX_POWER_REDRAWS = 16


class SingularityError(ValueError):
    pass


def _path_length_m(tau_ns, two_way):
    d = np.asarray(tau_ns, dtype=float) * NS * SPEED_OF_LIGHT
    return d / 2.0 if two_way else d


def free_space_gain_db(tau_ns, wavelength_m=DEFAULT_WAVELENGTH_M, two_way=False):
    """20*log10(lambda / (4*pi*d)) with d = tau*c (or tau*c/2 when ``two_way``)."""
    tau = np.asarray(tau_ns, dtype=float)
    if np.any(tau <= 0):
        raise SingularityError("free-space normalization is singular at zero delay")
    out = 20.0 * np.log10(wavelength_m / (4.0 * math.pi * _path_length_m(tau, two_way)))
    return float(out) if out.ndim == 0 else out


def normalize_power(p_measured_db, tau_ns, wavelength_m=DEFAULT_WAVELENGTH_M, two_way=False):
    """Remove free-space loss so powers describe the scatterer only."""
    return p_measured_db - free_space_gain_db(tau_ns, wavelength_m, two_way)


def denormalize_power(p_normalized_db, tau_ns, wavelength_m=DEFAULT_WAVELENGTH_M, two_way=False):
    return p_normalized_db + free_space_gain_db(tau_ns, wavelength_m, two_way)


@dataclass(frozen=True)
class StatusProfile:
    label: SemanticLabel
    number_dist: DistributionSpec
    delay_scale_pos: float          # mean |delta_tau| in ns for delta_tau > 0
    delay_scale_neg: float          # mean |delta_tau| in ns for delta_tau < 0
    decay_slope: float              # dB / ns
    decay_intercept: float          # dB
    residual: DistributionSpec      # t location-scale, dB
    side_prob_pos: float = 0.5
    estimated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "label", SemanticLabel(int(self.label)))
        if not (self.delay_scale_pos > 0 and self.delay_scale_neg > 0):
            raise ValueError(f"label {int(self.label)}: delay scales must be > 0")
        if not 0.0 <= self.side_prob_pos <= 1.0:
            raise ValueError(f"label {int(self.label)}: side probability must lie in [0, 1]")
        if self.residual.family is not Family.TLOCATIONSCALE and self.residual.family is not Family.NORMAL:
            raise ValueError(f"label {int(self.label)}: residual must be t location-scale or normal")


@dataclass(frozen=True)
class StatusLibrary:
    profiles: dict = field(default_factory=dict)
    wavelength_m: float = DEFAULT_WAVELENGTH_M
    two_way_pathloss: bool = False

    def __post_init__(self):
        if not self.wavelength_m > 0:
            raise ValueError("carrier wavelength must be > 0")
        profiles = {SemanticLabel(int(k)): v for k, v in self.profiles.items()}
        for k, v in profiles.items():
            if v.label != k:
                raise ValueError(f"profile keyed {int(k)} carries label {int(v.label)}")
        object.__setattr__(self, "profiles", profiles)

    def __getitem__(self, label) -> StatusProfile:
        try:
            return self.profiles[SemanticLabel(int(label))]
        except KeyError:
            raise KeyError(f"status library has no profile for label {int(label)}") from None

    def __contains__(self, label):
        return SemanticLabel(int(label)) in self.profiles

    @property
    def labels(self):
        return sorted(self.profiles)

    def is_complete(self) -> bool:
        return all(SemanticLabel(i) in self.profiles for i in range(1, 17))

    def with_profile(self, profile: StatusProfile) -> "StatusLibrary":
        profiles = dict(self.profiles)
        profiles[profile.label] = profile
        return replace(self, profiles=profiles)

    def normalize(self, p_db, tau_ns):
        return normalize_power(p_db, tau_ns, self.wavelength_m, self.two_way_pathloss)

    def denormalize(self, p_db, tau_ns):
        return denormalize_power(p_db, tau_ns, self.wavelength_m, self.two_way_pathloss)


def draw_member_count(profile: StatusProfile, rng: np.random.Generator) -> int:
    return max(1, int(round_half_up(profile.number_dist.sample(rng, 1)[0])))


def synthesize_cluster(profile: StatusProfile, centroid_delay: float, centroid_power: float,
                       rng: np.random.Generator, *, delay_limits=(0.0, math.inf),
                       birth_snapshot: int = 0, library: StatusLibrary | None = None,
                       ) -> SemanticCluster:
    """Draw the multipaths of one cluster around a given centroid.

    Member delays are clipped to ``delay_limits``. With ``library`` given,
    amplitudes carry measured-domain power (free-space loss re-applied at
    each member's delay); otherwise they carry the normalized power.
    """
    lo, hi = delay_limits
    if not lo <= centroid_delay <= hi:
        raise ValueError(f"centroid delay {centroid_delay} ns outside [{lo}, {hi}] ns")
    n = draw_member_count(profile, rng)
    delays = np.empty(n)
    powers = np.empty(n)
    delays[0], powers[0] = centroid_delay, centroid_power
    m = n - 1
    if m:
        late = rng.random(m) < profile.side_prob_pos
        dtau = rng.exponential(1.0, m) * np.where(late, profile.delay_scale_pos, -profile.delay_scale_neg)
        tau = np.clip(centroid_delay - dtau, lo, hi)
        dtau = centroid_delay - tau
        trend = profile.decay_slope * dtau + profile.decay_intercept
        dp = trend + profile.residual.sample(rng, m)
        # only the offending members get a fresh residual
        for _ in range(MAX_POWER_REDRAWS):
            bad = np.flatnonzero(dp < 0)
            if bad.size == 0:
                break
            dp[bad] = trend[bad] + profile.residual.sample(rng, bad.size)
        np.maximum(dp, 0.0, out=dp)
        delays[1:], powers[1:] = tau, centroid_power - dp
    phases = rng.uniform(0.0, TWO_PI, n)
    if library is not None:
        powers = library.denormalize(powers, delays)
    amps = 10.0 ** (np.asarray(powers) / 20.0)
    members = tuple(
        MultipathComponent(float(a), float(ph) % TWO_PI, float(d), profile.label)
        for a, ph, d in zip(amps, phases, delays))
    return SemanticCluster(profile.label, float(centroid_delay), float(centroid_power),
                           members, birth_snapshot)
