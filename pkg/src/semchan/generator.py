"""Forward model: event script -> time-varying channel realization.

Pipeline per script:

1. behavior durations (explicit or drawn from the behavior library)
2. event map (active labels per segment)
3. centroid initialization for every active label without a live cluster
4. centroid evolution per snapshot (Markov dynamics, births and deaths)
5. member synthesis around every live centroid
6. snapshot assembly
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .behavior import (
    DEFAULT_TURN_ANGLE_RAD, DEFAULT_TURN_RADIUS_M, BehaviorLibrary, CentroidState,
    MarkovState, TurnGeometry, advance_centroid, sample_duration,
)
from .core import (
    DEFAULT_D_MAX_M, BehaviorKind, ChannelRealization, DelayGrid, SemanticLabel, Snapshot,
)
from .events import EventMatrices, EventScript, compose_event_map, init_centroid, spawn_on_birth
from .status import StatusLibrary, synthesize_cluster


@dataclass(frozen=True)
class GeneratorConfig:
    delay_bin: float = 1.0              # ns
    d_max: float = DEFAULT_D_MAX_M      # m
    snapshot_rate: float = 100.0        # Hz
    two_way_pathloss: bool | None = None
    seed: int | None = None
    turn_radius: float = DEFAULT_TURN_RADIUS_M
    turn_angle: float = DEFAULT_TURN_ANGLE_RAD
    spawn_fraction: float = 0.5
    status: StatusLibrary | None = None
    behavior: BehaviorLibrary | None = None
    events: EventMatrices | None = None

    def __post_init__(self):
        for name in ("delay_bin", "d_max", "snapshot_rate", "turn_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"generator config: {name} must be > 0, got {getattr(self, name)}")
        if self.turn_angle < 0:
            raise ValueError("generator config: turn_angle must be >= 0")
        if not 0.0 <= self.spawn_fraction <= 1.0:
            raise ValueError("generator config: spawn_fraction must lie in [0, 1]")

    @property
    def grid(self) -> DelayGrid:
        return DelayGrid.for_range(self.d_max, self.delay_bin)

    def resolved(self) -> "GeneratorConfig":
        """Fill missing libraries from the default library location."""
        from . import io

        cfg = self
        if cfg.status is None:
            cfg = replace(cfg, status=io.load_status_library(io.default_library_path("status")))
        if cfg.behavior is None:
            cfg = replace(cfg, behavior=io.load_behavior_library(io.default_library_path("behavior")))
        if cfg.events is None:
            cfg = replace(cfg, events=io.load_event_matrices(io.default_library_path("events")))
        if cfg.two_way_pathloss is not None and cfg.status.two_way_pathloss != cfg.two_way_pathloss:
            cfg = replace(cfg, status=replace(cfg.status, two_way_pathloss=cfg.two_way_pathloss))
        return cfg


@dataclass
class _Track:
    uid: int
    label: SemanticLabel
    state: CentroidState
    birth: int


@dataclass
class GenerationLog:
    births: int = 0
    deaths: int = 0
    exits: int = 0
    initialized: int = 0
    retired: int = 0
    events: list = field(default_factory=list)   # (snapshot, kind, uid, label)


def _resolve_seed(script, cfg, seed):
    for s in (seed, cfg.seed, script.seed):
        if s is not None:
            return int(s)
    return 0


def generate(script: EventScript, cfg: GeneratorConfig | None = None,
             seed: int | None = None) -> ChannelRealization:
    cfg = (cfg or GeneratorConfig()).resolved()
    seed = _resolve_seed(script, cfg, seed)
    rng = np.random.default_rng(seed)
    status, behaviors, events = cfg.status, cfg.behavior, cfg.events
    grid = cfg.grid
    limits = (grid.bin_ns, grid.max_delay)

    for tok in script.tokens:
        if tok.behavior not in behaviors:
            raise KeyError(f"behavior library lacks {tok.behavior.key}")
        for lab in tok.labels or ():
            if lab not in status:
                raise KeyError(f"status library lacks label {int(lab)}")

    # step 1: durations
    durations = [tok.duration if tok.duration is not None
                 else sample_duration(behaviors[tok.behavior], rng) for tok in script.tokens]
    # step 2: event map
    emap = compose_event_map(script, events.bcm, events.scm, rng, durations)

    log = GenerationLog()
    live: list[_Track] = []
    next_uid = 0

    def new_track(label, delay, power, t):
        nonlocal next_uid
        delay = min(max(delay, limits[0]), limits[1])
        tr = _Track(next_uid, SemanticLabel(label), CentroidState(MarkovState.UNCHANGED, delay, power), t)
        next_uid += 1
        return tr

    snapshots = []
    for tok, seg in zip(script.tokens, emap.segments):
        kept = [tr for tr in live if tr.label in seg.active]
        for tr in live:
            if tr.label not in seg.active:
                log.retired += 1
                log.events.append((seg.start, "retired", tr.uid, int(tr.label)))
        live = kept
        # step 3: centroid initialization
        present = {tr.label for tr in live}
        for lab in sorted(seg.active - present):
            delay, power = init_centroid(lab, events.ranges, rng)
            tr = new_track(lab, delay, power, seg.start)
            live.append(tr)
            log.initialized += 1
            log.events.append((seg.start, "initialized", tr.uid, int(lab)))

        profile = behaviors[seg.behavior]
        geom = None
        if seg.behavior is not BehaviorKind.STRAIGHT:
            geom = TurnGeometry.over_snapshots(
                seg.duration, cfg.snapshot_rate,
                radius=tok.radius_m if tok.radius_m is not None else cfg.turn_radius,
                total_angle=tok.angle_rad if tok.angle_rad is not None else cfg.turn_angle)

        for t in range(seg.start, seg.stop):
            # step 4: centroid evolution
            if t > 0:
                evolved, spawned = [], []
                for tr in live:
                    if tr.birth == t:
                        evolved.append(tr)
                        continue
                    out = advance_centroid(tr.state, seg.behavior, profile, rng, geom=geom,
                                           delay_bin=cfg.delay_bin, delay_limits=limits,
                                           spawn_fraction=cfg.spawn_fraction)
                    if out.spawned:
                        s = spawn_on_birth(seg.active, events.ranges, rng, t)
                        child = new_track(s.label, s.delay, s.power, t)
                        spawned.append(child)
                        log.births += 1
                        log.events.append((t, "birth", child.uid, int(child.label)))
                    if out.died:
                        kind = "exit" if out.left_window else "death"
                        if out.left_window:
                            log.exits += 1
                        else:
                            log.deaths += 1
                        log.events.append((t, kind, tr.uid, int(tr.label)))
                    else:
                        tr.state = out.state
                        evolved.append(tr)
                live = evolved + spawned
            # step 5: member synthesis
            clusters = []
            for tr in sorted(live, key=lambda tr: tr.uid):
                c = synthesize_cluster(status[tr.label], tr.state.delay, tr.state.power, rng,
                                       delay_limits=limits, birth_snapshot=tr.birth, library=status)
                clusters.append(replace(c, uid=tr.uid))
            # step 6: snapshot assembly
            snapshots.append(Snapshot(t, tuple(clusters), seg.behavior))

    meta = {"event_map": emap, "durations": durations, "log": log,
            "wavelength_m": status.wavelength_m, "two_way_pathloss": status.two_way_pathloss}
    return ChannelRealization(tuple(snapshots), cfg.snapshot_rate, cfg.delay_bin, seed,
                              cfg.d_max, meta)


def run_seeds(base_seed: int, n_runs: int) -> list:
    """Independent per-run seeds: base XOR run index."""
    return [int(base_seed) ^ i for i in range(n_runs)]


def generate_many(script: EventScript, cfg: GeneratorConfig | None = None,
                  base_seed: int = 0, n_runs: int = 1, workers: int = 1) -> list:
    """Independent realizations in run-index order."""
    cfg = (cfg or GeneratorConfig()).resolved()
    seeds = run_seeds(base_seed, n_runs)
    if workers <= 1:
        return [generate(script, cfg, s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: generate(script, cfg, s), seeds))


@dataclass(frozen=True)
class RealizationStats:
    mpc_counts: np.ndarray                   # per snapshot
    label_counts: dict                       # label -> per-snapshot MPC count array
    cluster_sizes: dict                      # label -> list of member counts
    lifetimes: dict                          # uid -> snapshots alive
    lifetime_labels: dict                    # uid -> label
    cohort_counts: list                      # per snapshot: {birth_snapshot: MPC count}
    births: int
    deaths: int
    exits: int
    initialized: int
    retired: int

    @property
    def birth_death_balanced(self) -> bool:
        n = self.births + self.deaths
        return abs(self.births - self.deaths) <= 3.0 * math.sqrt(n)

    def lifetimes_by_label(self) -> dict:
        out = defaultdict(list)
        for uid, life in self.lifetimes.items():
            out[self.lifetime_labels[uid]].append(life)
        return dict(out)

    def to_dict(self) -> dict:
        return {
            "n_snapshots": int(self.mpc_counts.size),
            "mpc_counts": self.mpc_counts.tolist(),
            "label_mpc_totals": {str(int(k)): int(v.sum()) for k, v in sorted(self.label_counts.items())},
            "mean_cluster_size": {str(int(k)): float(np.mean(v)) for k, v in sorted(self.cluster_sizes.items())},
            "lifetimes_by_label": {str(int(k)): v for k, v in sorted(self.lifetimes_by_label().items())},
            "births": self.births, "deaths": self.deaths, "exits": self.exits,
            "initialized": self.initialized, "retired": self.retired,
            "birth_death_balanced": self.birth_death_balanced,
        }


def realization_stats(r: ChannelRealization) -> RealizationStats:
    if not r.snapshots:
        raise ValueError("realization has no snapshots")
    n = len(r.snapshots)
    mpc_counts = np.array([s.n_mpcs for s in r.snapshots])
    label_counts = defaultdict(lambda: np.zeros(n, dtype=int))
    sizes = defaultdict(list)
    lifetimes, labels = Counter(), {}
    cohorts = []
    for k, snap in enumerate(r.snapshots):
        cohort = Counter()
        for c in snap.clusters:
            label_counts[c.label][k] += c.size
            sizes[c.label].append(c.size)
            lifetimes[c.uid] += 1
            labels[c.uid] = c.label
            cohort[c.birth_snapshot] += c.size
        cohorts.append(dict(cohort))
    log = r.meta.get("log") or GenerationLog()
    return RealizationStats(mpc_counts, dict(label_counts), dict(sizes), dict(lifetimes), labels,
                            cohorts, log.births, log.deaths, log.exits, log.initialized, log.retired)


def truth_depths(r: ChannelRealization) -> dict:
    """Per snapshot, the mean echo distance (c*tau/2, m) of each label's members."""
    from .analyzer import delay_to_distance

    frames = {}
    for snap in r.snapshots:
        row = defaultdict(list)
        for c in snap.clusters:
            row[int(c.label)].extend(m.delay for m in c.members)
        frames[snap.time_index] = {lab: float(delay_to_distance(np.mean(d))) for lab, d in row.items()}
    return frames
