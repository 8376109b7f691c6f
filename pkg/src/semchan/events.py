"""Event semantics: which statuses appear under which behaviors, and where.

Matrices are indexed by label id minus one (labels 1..16) and by behavior
value minus one (straight, left, right).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import BehaviorKind, SemanticLabel

N_LABELS = 16
N_BEHAVIORS = 3


class ConfigError(ValueError):
    pass


def _probability_matrix(values, shape, name):
    m = np.array(values, dtype=float)
    if m.shape != shape:
        raise ConfigError(f"{name} must have shape {shape}, got {m.shape}")
    finite = m[np.isfinite(m)]
    if np.any((finite < 0) | (finite > 1)):
        raise ConfigError(f"{name} entries must lie in [0, 1]")
    m.setflags(write=False)
    return m


def _flags(estimated, shape):
    if estimated is None:
        flags = np.zeros(shape, dtype=bool)
    else:
        flags = np.array(estimated, dtype=bool)
        if flags.shape != shape:
            raise ConfigError(f"estimated flags must have shape {shape}, got {flags.shape}")
    flags.setflags(write=False)
    return flags


@dataclass(frozen=True, eq=False)
class BehaviorCorrelationMatrix:
    """Probability that each label is a dominant status under each behavior.

    NaN rows mark behaviors that were never observed.
    """

    values: np.ndarray
    estimated: np.ndarray = None

    def __post_init__(self):
        shape = (N_BEHAVIORS, N_LABELS)
        object.__setattr__(self, "values", _probability_matrix(self.values, shape, "behavior correlation matrix"))
        object.__setattr__(self, "estimated", _flags(self.estimated, shape))

    def row(self, behavior) -> np.ndarray:
        return self.values[BehaviorKind.parse(behavior) - 1]

    def __getitem__(self, key):
        behavior, label = key
        return float(self.values[BehaviorKind.parse(behavior) - 1, int(label) - 1])

    def __eq__(self, other):
        return (isinstance(other, BehaviorCorrelationMatrix)
                and np.array_equal(self.values, other.values, equal_nan=True)
                and np.array_equal(self.estimated, other.estimated))


@dataclass(frozen=True, eq=False)
class StatusCooccurrenceMatrix:
    """``values[i-1, j-1]`` = P(label j present | label i present)."""

    values: np.ndarray
    estimated: np.ndarray = None

    def __post_init__(self):
        shape = (N_LABELS, N_LABELS)
        m = _probability_matrix(self.values, shape, "status co-occurrence matrix")
        diag = np.diag(m)
        if np.any(np.isfinite(diag) & (diag != 1.0)):
            bad = int(np.flatnonzero(np.isfinite(diag) & (diag != 1.0))[0]) + 1
            raise ConfigError(f"status co-occurrence diagonal must be 1 (label {bad})")
        object.__setattr__(self, "values", m)
        object.__setattr__(self, "estimated", _flags(self.estimated, shape))

    def __getitem__(self, key):
        i, j = key
        return float(self.values[int(i) - 1, int(j) - 1])

    def __eq__(self, other):
        return (isinstance(other, StatusCooccurrenceMatrix)
                and np.array_equal(self.values, other.values, equal_nan=True)
                and np.array_equal(self.estimated, other.estimated))

    @classmethod
    def identity(cls):
        return cls(np.eye(N_LABELS))


@dataclass(frozen=True)
class CentroidRange:
    delay_ns: tuple
    power_db: tuple
    estimated: bool = False

    def __post_init__(self):
        d = tuple(float(v) for v in self.delay_ns)
        p = tuple(float(v) for v in self.power_db)
        if len(d) != 2 or len(p) != 2 or d[0] > d[1] or p[0] > p[1]:
            raise ConfigError(f"centroid range needs lo <= hi, got delay {d}, power {p}")
        if d[0] < 0:
            raise ConfigError(f"centroid delay range must be nonnegative, got {d}")
        object.__setattr__(self, "delay_ns", d)
        object.__setattr__(self, "power_db", p)


@dataclass(frozen=True)
class CentroidInitRange:
    ranges: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "ranges", {SemanticLabel(int(k)): v for k, v in self.ranges.items()})

    def __getitem__(self, label) -> CentroidRange:
        try:
            return self.ranges[SemanticLabel(int(label))]
        except KeyError:
            raise ConfigError(f"no centroid range configured for label {int(label)}") from None

    def __contains__(self, label):
        return SemanticLabel(int(label)) in self.ranges


@dataclass(frozen=True)
class EventMatrices:
    bcm: BehaviorCorrelationMatrix
    scm: StatusCooccurrenceMatrix
    ranges: CentroidInitRange


@dataclass(frozen=True)
class ScriptToken:
    behavior: BehaviorKind
    duration: int | None = None
    radius_m: float | None = None
    angle_rad: float | None = None
    labels: frozenset | None = None

    def __post_init__(self):
        object.__setattr__(self, "behavior", BehaviorKind.parse(self.behavior))
        if self.duration is not None and int(self.duration) < 1:
            raise ConfigError(f"token duration must be >= 1 snapshot, got {self.duration}")
        if self.labels is not None:
            labels = frozenset(SemanticLabel(int(v)) for v in self.labels)
            if not labels or SemanticLabel.OTHER in labels:
                raise ConfigError("forced label sets must be nonempty and exclude label 0")
            object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class EventScript:
    tokens: tuple
    seed: int | None = None

    def __post_init__(self):
        tokens = tuple(t if isinstance(t, ScriptToken) else ScriptToken(t) for t in self.tokens)
        if not tokens:
            raise ConfigError("event script needs at least one behavior token")
        object.__setattr__(self, "tokens", tokens)

    @classmethod
    def from_sequence(cls, behaviors, durations=None, seed=None):
        durations = durations or [None] * len(behaviors)
        return cls(tuple(ScriptToken(b, d) for b, d in zip(behaviors, durations)), seed)


@dataclass(frozen=True)
class EventSegment:
    behavior: BehaviorKind
    start: int
    duration: int
    dominant: frozenset
    active: frozenset
    fallback: bool = False

    @property
    def stop(self) -> int:
        return self.start + self.duration


@dataclass(frozen=True)
class EventMap:
    segments: tuple

    @property
    def n_snapshots(self) -> int:
        return self.segments[-1].stop if self.segments else 0

    def segment_at(self, t: int) -> EventSegment:
        for seg in self.segments:
            if seg.start <= t < seg.stop:
                return seg
        raise IndexError(f"snapshot {t} outside event map of {self.n_snapshots} snapshots")

    def labeled_snapshots(self):
        """One record per snapshot, with dominance annotations."""
        return [LabeledSnapshot(s.behavior, s.active, s.dominant, s.fallback)
                for s in self.segments for _ in range(s.duration)]


def _draw_dominant(row, rng):
    p = np.nan_to_num(row, nan=0.0)
    hits = rng.random(N_LABELS) < p
    if hits.any():
        return frozenset(SemanticLabel(i + 1) for i in np.flatnonzero(hits)), False
    return frozenset({SemanticLabel(int(np.argmax(p)) + 1)}), True


def _draw_cooccurring(dominant, scm, rng):
    active = set(dominant)
    values = np.nan_to_num(scm.values, nan=0.0)
    for i in sorted(dominant):
        hits = rng.random(N_LABELS) < values[i - 1]
        hits[i - 1] = False
        active.update(SemanticLabel(j + 1) for j in np.flatnonzero(hits))
    return frozenset(active)


def compose_event_map(script: EventScript, bcm: BehaviorCorrelationMatrix,
                      scm: StatusCooccurrenceMatrix, rng: np.random.Generator,
                      durations=None) -> EventMap:
    """Resolve the active label set of every behavior segment.

    ``durations`` overrides the script's per-token durations (missing ones
    default to one snapshot).
    """
    if durations is None:
        durations = [t.duration or 1 for t in script.tokens]
    if len(durations) != len(script.tokens):
        raise ConfigError("need one duration per script token")
    segments, start = [], 0
    for tok, dur in zip(script.tokens, durations):
        if tok.labels is not None:
            dominant, fallback, active = tok.labels, False, tok.labels
        else:
            dominant, fallback = _draw_dominant(bcm.row(tok.behavior), rng)
            active = _draw_cooccurring(dominant, scm, rng)
        segments.append(EventSegment(tok.behavior, start, int(dur), dominant, active, fallback))
        start += int(dur)
    return EventMap(tuple(segments))


def init_centroid(label, ranges: CentroidInitRange, rng: np.random.Generator):
    """Uniform initial (delay ns, normalized power dB) for a new centroid."""
    r = ranges[label]
    return float(rng.uniform(*r.delay_ns)), float(rng.uniform(*r.power_db))


@dataclass(frozen=True)
class ClusterSeed:
    label: SemanticLabel
    delay: float
    power: float
    birth_snapshot: int


def spawn_on_birth(active_labels, ranges: CentroidInitRange, rng: np.random.Generator,
                   snapshot: int = 0) -> ClusterSeed:
    labels = sorted(SemanticLabel(int(v)) for v in active_labels)
    if not labels:
        raise ConfigError("cannot spawn a cluster from an empty active label set")
    label = labels[int(rng.integers(len(labels)))]
    delay, power = init_centroid(label, ranges, rng)
    return ClusterSeed(label, delay, power, snapshot)


@dataclass(frozen=True)
class LabeledSnapshot:
    behavior: BehaviorKind
    labels: frozenset
    dominant: frozenset | None = None
    fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "behavior", BehaviorKind.parse(self.behavior))
        object.__setattr__(self, "labels", frozenset(int(v) for v in self.labels))
        if self.dominant is not None:
            object.__setattr__(self, "dominant", frozenset(int(v) for v in self.dominant))


def _as_labeled(item) -> LabeledSnapshot:
    if isinstance(item, LabeledSnapshot):
        return item
    return LabeledSnapshot(*item)


def estimate_matrices(labeled_snapshots, mode: str = "auto"):
    """Estimate (bcm, scm) from per-snapshot label sets.

    ``presence`` mode counts label occurrence: bcm[b][i] is the fraction of
    b-snapshots containing i, scm[i][j] the fraction of i-snapshots also
    containing j. ``directional`` mode needs dominance annotations and
    counts bcm over non-fallback dominant draws and scm only over snapshots
    whose dominant set is exactly {i}, which isolates the i->j draw. ``auto``
    picks directional when every record carries annotations.
    Unobserved rows are NaN.
    """
    snaps = [_as_labeled(s) for s in labeled_snapshots]
    if not snaps:
        raise ValueError("need at least one labeled snapshot")
    if mode == "auto":
        mode = "directional" if all(s.dominant is not None for s in snaps) else "presence"
    if mode not in ("presence", "directional"):
        raise ValueError(f"unknown estimation mode {mode!r}")
    if mode == "directional" and any(s.dominant is None for s in snaps):
        raise ValueError("directional estimation needs dominance annotations on every snapshot")

    pres = np.zeros((len(snaps), N_LABELS), dtype=bool)
    beh = np.array([s.behavior - 1 for s in snaps])
    for k, s in enumerate(snaps):
        for lab in s.labels:
            if 1 <= lab <= N_LABELS:
                pres[k, lab - 1] = True

    bcm = np.full((N_BEHAVIORS, N_LABELS), np.nan)
    scm = np.full((N_LABELS, N_LABELS), np.nan)
    if mode == "presence":
        for b in range(N_BEHAVIORS):
            sel = beh == b
            if sel.any():
                bcm[b] = pres[sel].mean(axis=0)
        for i in range(N_LABELS):
            sel = pres[:, i]
            if sel.any():
                scm[i] = pres[sel].mean(axis=0)
    else:
        dom = np.zeros_like(pres)
        solo = np.zeros(len(snaps), dtype=int)
        for k, s in enumerate(snaps):
            if not s.fallback:
                for lab in s.dominant:
                    dom[k, lab - 1] = True
            solo[k] = next(iter(s.dominant)) if len(s.dominant) == 1 else 0
        for b in range(N_BEHAVIORS):
            sel = beh == b
            if sel.any():
                bcm[b] = dom[sel].mean(axis=0)
        for i in range(N_LABELS):
            sel = solo == i + 1
            if sel.any():
                scm[i] = pres[sel].mean(axis=0)
    for i in range(N_LABELS):
        if not math.isnan(scm[i, i]):
            scm[i, i] = 1.0
    return BehaviorCorrelationMatrix(bcm), StatusCooccurrenceMatrix(scm)

