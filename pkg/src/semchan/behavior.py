"""Behavior semantics: centroid trajectories driven by per-behavior Markov chains."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import NS, SPEED_OF_LIGHT, BehaviorKind
from .distributions import DistributionSpec, Family

ROW_SUM_TOL = 1e-9

DEFAULT_TURN_RADIUS_M = 10.0
DEFAULT_TURN_ANGLE_RAD = math.pi / 2


class MarkovState(enum.IntEnum):
    UNCHANGED = 1
    ADVANCING = 2
    DELAYING = 3
    BIRTH_DEATH = 4


class TransitionMatrixError(ValueError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


def check_transition_matrix(matrix, name="transition matrix") -> np.ndarray:
    P = np.asarray(matrix, dtype=float)
    if P.shape != (4, 4):
        raise TransitionMatrixError(f"{name} must be 4x4, got shape {P.shape}")
    for i, row in enumerate(P):
        state = MarkovState(i + 1).name.lower()
        if np.any(row < 0) or not np.all(np.isfinite(row)):
            raise TransitionMatrixError(f"{name} row {i + 1} ({state}) has negative or "
                                        f"non-finite entries: {row.tolist()}", row=i + 1)
        if abs(row.sum() - 1.0) > ROW_SUM_TOL:
            raise TransitionMatrixError(
                f"{name} row {i + 1} ({state}) sums to {row.sum():.10g}, expected 1", row=i + 1)
    return P


@dataclass(frozen=True)
class BehaviorProfile:
    kind: BehaviorKind
    transition: np.ndarray
    duration_dist: DistributionSpec       # snapshots
    power_var_dist: DistributionSpec      # dB per snapshot

    def __post_init__(self):
        object.__setattr__(self, "kind", BehaviorKind.parse(self.kind))
        P = check_transition_matrix(self.transition, f"{self.kind.key} transition matrix")
        P.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "_cdf", np.cumsum(P, axis=1))

    def __eq__(self, other):
        if not isinstance(other, BehaviorProfile):
            return NotImplemented
        return (self.kind == other.kind and np.array_equal(self.transition, other.transition)
                and self.duration_dist == other.duration_dist
                and self.power_var_dist == other.power_var_dist)

    __hash__ = None


@dataclass(frozen=True)
class BehaviorLibrary:
    profiles: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "profiles",
                           {BehaviorKind.parse(k): v for k, v in self.profiles.items()})

    def __getitem__(self, kind) -> BehaviorProfile:
        try:
            return self.profiles[BehaviorKind.parse(kind)]
        except KeyError:
            raise KeyError(f"behavior library has no profile for {kind!r}") from None

    def __contains__(self, kind):
        return BehaviorKind.parse(kind) in self.profiles

    def with_profile(self, profile: BehaviorProfile) -> "BehaviorLibrary":
        profiles = dict(self.profiles)
        profiles[profile.kind] = profile
        return replace(self, profiles=profiles)


@dataclass(frozen=True)
class TurnGeometry:
    radius: float           # m
    total_angle: float      # rad
    duration: float         # s
    snapshot_rate: float    # Hz

    def __post_init__(self):
        if not (self.radius > 0 and self.duration > 0 and self.snapshot_rate > 0):
            raise ValueError("turn radius, duration and snapshot rate must be > 0")
        if self.total_angle < 0:
            raise ValueError("turn angle must be >= 0")

    @classmethod
    def over_snapshots(cls, n_snapshots, snapshot_rate, radius=DEFAULT_TURN_RADIUS_M,
                       total_angle=DEFAULT_TURN_ANGLE_RAD):
        return cls(radius, total_angle, n_snapshots / snapshot_rate, snapshot_rate)


def turn_offset(geom: TurnGeometry) -> float:
    """Centroid delay offset per snapshot during a turn, in ns (unsigned)."""
    step_angle = geom.total_angle / geom.duration / geom.snapshot_rate
    return 2.0 * geom.radius / SPEED_OF_LIGHT * (1.0 - math.cos(step_angle)) / NS


@dataclass(frozen=True)
class CentroidState:
    markov_state: MarkovState
    delay: float
    power: float

    def __post_init__(self):
        object.__setattr__(self, "markov_state", MarkovState(int(self.markov_state)))
        if self.delay < 0:
            raise ValueError(f"centroid delay must be >= 0, got {self.delay}")


@dataclass(frozen=True)
class StepOutcome:
    """Result of one centroid update. ``state`` is None when the cluster died."""

    state: CentroidState | None
    spawned: bool = False
    left_window: bool = False

    @property
    def died(self) -> bool:
        return self.state is None


def step_markov(state, profile: BehaviorProfile, rng: np.random.Generator) -> MarkovState:
    current = state.markov_state if isinstance(state, CentroidState) else MarkovState(int(state))
    cdf = profile._cdf[current - 1]
    j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return MarkovState(min(j, 3) + 1)


def advance_centroid(state: CentroidState, behavior, profile: BehaviorProfile,
                     rng: np.random.Generator, *, geom: TurnGeometry | None = None,
                     delay_bin: float = 1.0, delay_limits=(0.0, math.inf),
                     spawn_fraction: float = 0.0) -> StepOutcome:
    """Move a centroid one snapshot forward.

    On entering (or staying in) the birth-death state the cluster dies,
    except with probability ``spawn_fraction`` where it survives and the
    caller should spawn a new cluster. A centroid pushed to zero delay or
    outside ``delay_limits`` leaves the model (``left_window``).
    """
    behavior = BehaviorKind.parse(behavior)
    nxt = step_markov(state, profile, rng)
    if behavior is BehaviorKind.STRAIGHT:
        offset = delay_bin
    else:
        if geom is None:
            raise ValueError(f"{behavior.key} needs a turn geometry")
        offset = turn_offset(geom)
    delay = state.delay
    spawned = False
    if nxt is MarkovState.ADVANCING:
        delay -= offset
    elif nxt is MarkovState.DELAYING:
        delay += offset
    elif nxt is MarkovState.BIRTH_DEATH:
        if spawn_fraction > 0 and rng.random() < spawn_fraction:
            spawned = True
        else:
            return StepOutcome(None)
    power = state.power + float(profile.power_var_dist.sample(rng, 1)[0])
    if delay <= 0 or not delay_limits[0] <= delay <= delay_limits[1]:
        return StepOutcome(None, spawned, left_window=True)
    return StepOutcome(CentroidState(nxt, delay, power), spawned)


def sample_duration(profile: BehaviorProfile, rng: np.random.Generator) -> int:
    """Behavior duration in snapshots: ceil of the fitted draw, at least 1."""
    spec = profile.duration_dist
    if spec.family is Family.LOGNORMAL and spec.params[1] <= 1e-12:
        value = math.exp(spec.params[0])
    else:
        value = float(spec.sample(rng, 1)[0])
    return max(1, int(math.ceil(value)))


@dataclass(frozen=True)
class TransitionEstimate:
    matrix: np.ndarray      # rows of unobserved states are NaN
    counts: np.ndarray
    defined: np.ndarray     # bool per row

    @property
    def complete(self) -> bool:
        return bool(self.defined.all())


def estimate_transition_matrix(sequences) -> TransitionEstimate:
    """Row-normalized transition counts over state paths (states 1..4)."""
    sequences = [np.asarray(s, dtype=int) for s in sequences]
    if not sequences or all(s.size < 2 for s in sequences):
        raise ValueError("need at least one observed transition")
    counts = np.zeros((4, 4), dtype=np.int64)
    for s in sequences:
        if s.size and (s.min() < 1 or s.max() > 4):
            raise ValueError(f"states must lie in 1..4, got {sorted(set(s.tolist()))}")
        if s.size >= 2:
            np.add.at(counts, (s[:-1] - 1, s[1:] - 1), 1)
    totals = counts.sum(axis=1)
    defined = totals > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(defined[:, None], counts / totals[:, None], np.nan)
    return TransitionEstimate(matrix, counts, defined)


def simulate_states(profile: BehaviorProfile, n_steps: int, rng: np.random.Generator,
                    start=MarkovState.UNCHANGED) -> np.ndarray:
    """A single Markov path of ``n_steps`` transitions (``n_steps + 1`` states)."""
    cdf = profile._cdf
    u = rng.random(n_steps)
    out = np.empty(n_steps + 1, dtype=np.int64)
    s = int(start)
    out[0] = s
    for t in range(n_steps):
        row = cdf[s - 1]
        s = min(int(np.searchsorted(row, u[t] * row[-1], side="right")), 3) + 1
        out[t + 1] = s
    return out
