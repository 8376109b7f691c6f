"""Domain types shared by the generator and the analyzer.

Delays are in nanoseconds, powers in dB, amplitudes are linear voltage
gains. All value types are frozen dataclasses.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s
NS = 1e-9

DEFAULT_DELAY_BIN_NS = 1.0
DEFAULT_D_MAX_M = 50.0
DEFAULT_CARRIER_HZ = 28e9
TWO_PI = 2.0 * math.pi


class SemanticLabel(enum.IntEnum):
    OTHER = 0
    METAL_BARRIER = 1
    PARKED_VEHICLES = 2
    BUILDING_COMMERCIAL = 3
    BUILDING_SHANTY = 4
    SAME_DIRECTION_VEHICLES = 5
    GREENBELT_SHRUBS = 6
    OPPOSITE_DIRECTION_VEHICLES = 7
    HEAVY_VEHICLES = 8
    GREENBELT_LAWN_TREES = 9
    BILLBOARD_BUS_STOP = 10
    STREET_DEBRIS = 11
    GREENBELT_DENSE_TREES = 12
    TWO_WHEELER = 13
    STREETLIGHT = 14
    MESH_FENCE = 15
    CONCRETE_BARRIER = 16

    @property
    def display_name(self) -> str:
        return LABEL_NAMES[int(self)]


LABEL_NAMES = {
    0: "Other",
    1: "Metal Barrier",
    2: "Parked Vehicles",
    3: "Building-Commercial",
    4: "Building-Shanty",
    5: "Same Direction Vehicles",
    6: "Greenbelt-Shrubs",
    7: "Opposite Direction Vehicles",
    8: "Heavy Vehicles",
    9: "Greenbelt-Lawn/Trees",
    10: "Billboard/Bus Stop",
    11: "Street Debris",
    12: "Greenbelt-Dense Trees",
    13: "Two wheeler",
    14: "Streetlight",
    15: "Mesh Fence",
    16: "Concrete Barrier",
}

#: Labels the forward model may generate (0 is reserved for the analyzer).
SCATTERER_LABELS = tuple(SemanticLabel(i) for i in range(1, 17))


class BehaviorKind(enum.IntEnum):
    """Driving behavior of the sensing vehicle. Values follow the 1/2/3
    token convention used in behavior sequences."""

    STRAIGHT = 1
    LEFT = 2
    RIGHT = 3

    @classmethod
    def parse(cls, token) -> "BehaviorKind":
        if isinstance(token, BehaviorKind):
            return token
        if isinstance(token, (int, np.integer)):
            return cls(int(token))
        key = str(token).strip().lower()
        if key.isdigit():
            return cls(int(key))
        aliases = {
            "straight": cls.STRAIGHT, "straight_driving": cls.STRAIGHT, "s": cls.STRAIGHT,
            "left": cls.LEFT, "left_turning": cls.LEFT, "l": cls.LEFT,
            "right": cls.RIGHT, "right_turning": cls.RIGHT, "r": cls.RIGHT,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown behavior token {token!r}") from None

    @property
    def key(self) -> str:
        return self.name.lower()


def delay_window_ns(d_max_m: float = DEFAULT_D_MAX_M) -> float:
    """Round-trip delay of the farthest resolvable scatterer."""
    return 2.0 * d_max_m / SPEED_OF_LIGHT / NS


@dataclass(frozen=True)
class DelayGrid:
    """Uniform delay axis: bin ``b`` sits at ``b * bin_ns``."""

    bin_ns: float = DEFAULT_DELAY_BIN_NS
    n_bins: int = 334

    def __post_init__(self):
        if not self.bin_ns > 0:
            raise ValueError(f"delay bin must be positive, got {self.bin_ns}")
        if self.n_bins < 1:
            raise ValueError(f"grid needs at least one bin, got {self.n_bins}")

    @classmethod
    def for_range(cls, d_max_m: float = DEFAULT_D_MAX_M,
                  bin_ns: float = DEFAULT_DELAY_BIN_NS) -> "DelayGrid":
        return cls(bin_ns, int(math.floor(delay_window_ns(d_max_m) / bin_ns)) + 1)

    @property
    def delays(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.bin_ns

    @property
    def max_delay(self) -> float:
        return (self.n_bins - 1) * self.bin_ns

    def quantize(self, delay_ns):
        """Nearest bin index, ties rounded up."""
        return np.floor(np.asarray(delay_ns, dtype=float) / self.bin_ns + 0.5).astype(np.int64)


@dataclass(frozen=True)
class MultipathComponent:
    amplitude: float
    phase: float
    delay: float
    label: SemanticLabel

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")
        if not 0.0 <= self.phase < TWO_PI:
            raise ValueError(f"phase must lie in [0, 2pi), got {self.phase}")
        if self.delay < 0:
            raise ValueError(f"delay must be >= 0, got {self.delay}")

    @property
    def power_db(self) -> float:
        return 20.0 * math.log10(self.amplitude)

    @property
    def gain(self) -> complex:
        return self.amplitude * complex(math.cos(self.phase), math.sin(self.phase))


@dataclass(frozen=True)
class SemanticCluster:
    """A centroid (normalized domain) with the members synthesized around it.

    ``members[0]`` is the centroid path itself.
    """

    label: SemanticLabel
    centroid_delay: float
    centroid_power: float
    members: tuple = ()
    birth_snapshot: int = 0
    alive: bool = True
    uid: int = 0

    def __post_init__(self):
        for m in self.members:
            if m.label != self.label:
                raise ValueError(
                    f"member label {int(m.label)} differs from cluster label {int(self.label)}")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Snapshot:
    time_index: int
    clusters: tuple = ()
    behavior: BehaviorKind = BehaviorKind.STRAIGHT

    @property
    def mpcs(self) -> list:
        return [m for c in self.clusters for m in c.members]

    @property
    def n_mpcs(self) -> int:
        return sum(c.size for c in self.clusters)


@dataclass(frozen=True)
class ChannelRealization:
    snapshots: tuple
    snapshot_rate: float
    delay_bin: float
    seed: int
    d_max: float = DEFAULT_D_MAX_M
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.snapshot_rate > 0:
            raise ValueError("snapshot_rate must be positive")
        if not self.delay_bin > 0:
            raise ValueError("delay_bin must be positive")
        for k, snap in enumerate(self.snapshots):
            expected = self.snapshots[0].time_index + k
            if snap.time_index != expected:
                raise ValueError(
                    f"snapshot time indices must be contiguous: expected {expected}, "
                    f"got {snap.time_index}")

    def __len__(self):
        return len(self.snapshots)

    @property
    def grid(self) -> DelayGrid:
        return DelayGrid.for_range(self.d_max, self.delay_bin)

    def cir_matrix(self) -> np.ndarray:
        grid = self.grid
        return np.vstack([assemble_cir(s, grid) for s in self.snapshots]) if self.snapshots \
            else np.zeros((0, grid.n_bins), dtype=complex)

    def pdp_matrix(self) -> np.ndarray:
        grid = self.grid
        out = np.zeros((len(self.snapshots), grid.n_bins))
        for k, s in enumerate(self.snapshots):
            out[k] = pdp_of(assemble_cir(s, grid))
        return out


def assemble_cir(snapshot, grid: DelayGrid) -> np.ndarray:
    """Sum ``a * exp(j*phi)`` of every MPC into its delay bin.

    ``snapshot`` may be a :class:`Snapshot` or any iterable of
    :class:`MultipathComponent`.
    """
    mpcs = snapshot.mpcs if isinstance(snapshot, Snapshot) else list(snapshot)
    h = np.zeros(grid.n_bins, dtype=complex)
    if not mpcs:
        return h
    delays = np.array([m.delay for m in mpcs])
    bins = grid.quantize(delays)
    bad = np.flatnonzero((bins < 0) | (bins >= grid.n_bins))
    if bad.size:
        m = mpcs[bad[0]]
        raise IndexError(
            f"MPC #{bad[0]} (label {int(m.label)}, delay {m.delay} ns) falls outside "
            f"the delay grid [0, {grid.max_delay}] ns")
    gains = np.array([m.amplitude for m in mpcs]) * np.exp(1j * np.array([m.phase for m in mpcs]))
    np.add.at(h, bins, gains)
    return h


def pdp_of(cir) -> np.ndarray:
    """Power delay profile, |h|^2 elementwise."""
    cir = np.asarray(cir)
    return cir.real ** 2 + cir.imag ** 2
