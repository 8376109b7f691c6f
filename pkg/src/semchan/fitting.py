"""Rebuild libraries from labeled clusters.

Status profiles come from the clusters alone. Behavior profiles and event
matrices also need the per-snapshot behavior annotation (``BehaviorTrack``).
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .behavior import BehaviorLibrary, BehaviorProfile, MarkovState, estimate_transition_matrix
from .core import BehaviorKind, SemanticLabel
from .distributions import (
    NUMBER_FAMILIES, DistributionError, DistributionSpec, Family, fit_mle, select_best_family,
)
from .events import (
    CentroidInitRange, CentroidRange, EventMatrices, LabeledSnapshot, estimate_matrices,
)
from .status import DEFAULT_WAVELENGTH_M, StatusLibrary, StatusProfile, normalize_power

log = logging.getLogger(__name__)

MIN_CLUSTERS_PER_LABEL = 30
# stands in for a zero spread; samplers treat it as a point mass
DEGENERATE_SIGMA = 1e-12


@dataclass
class FitReport:
    warnings: list = field(default_factory=list)
    skipped: dict = field(default_factory=dict)      # label -> reason
    samples: dict = field(default_factory=dict)      # label -> cluster count

    def warn(self, msg):
        log.info(msg)
        self.warnings.append(msg)

    def to_dict(self):
        return {"warnings": self.warnings,
                "skipped": {str(k): v for k, v in sorted(self.skipped.items())},
                "samples": {str(k): v for k, v in sorted(self.samples.items())}}


def _bin_delay(b, delay_bin):
    # bin 0 would make the free-space term singular; half a bin is a harmless stand-in
    return max(b * delay_bin, 0.5 * delay_bin)


@dataclass(frozen=True)
class MemberSample:
    """Relative quantities of every non-centroid member of one label."""
    dtau: np.ndarray     # centroid - member, ns
    dp: np.ndarray       # centroid - member, normalized dB


def relative_members(clusters, delay_bin, wavelength_m=DEFAULT_WAVELENGTH_M, two_way=False) -> MemberSample:
    dtau, dp = [], []
    for c in clusters:
        bins = np.asarray(c.member_bins)
        tau = np.array([_bin_delay(b, delay_bin) for b in bins])
        p = normalize_power(np.asarray(c.member_powers_db), tau, wavelength_m, two_way)
        k = int(np.flatnonzero(bins == c.centroid_bin)[0])
        others = np.arange(bins.size) != k
        dtau.append(tau[k] - tau[others])
        dp.append(p[k] - p[others])
    if not dtau:
        return MemberSample(np.zeros(0), np.zeros(0))
    return MemberSample(np.concatenate(dtau), np.concatenate(dp))


def fit_status_profile(label, clusters, delay_bin, wavelength_m=DEFAULT_WAVELENGTH_M,
                       two_way=False, number_families=NUMBER_FAMILIES) -> StatusProfile:
    sizes = np.array([c.size for c in clusters], dtype=float)
    number = select_best_family(sizes, number_families)
    rel = relative_members(clusters, delay_bin, wavelength_m, two_way)
    pos = rel.dtau[rel.dtau > 0]
    neg = -rel.dtau[rel.dtau < 0]
    estimated = False
    # a side without members gets a one-bin placeholder, flagged as such
    if pos.size == 0 or neg.size == 0:
        estimated = True
    scale_pos = float(pos.mean()) if pos.size else delay_bin
    scale_neg = float(neg.mean()) if neg.size else delay_bin
    side = pos.size / max(pos.size + neg.size, 1) if (pos.size + neg.size) else 0.5
    if rel.dtau.size >= 2 and np.ptp(rel.dtau) > 0:
        slope, intercept = np.polyfit(rel.dtau, rel.dp, 1)
        resid = rel.dp - (slope * rel.dtau + intercept)
    else:
        slope, intercept, resid = 0.0, float(np.mean(rel.dp)) if rel.dp.size else 0.0, rel.dp
        estimated = True
    try:
        residual = fit_mle(Family.TLOCATIONSCALE, resid)
    except DistributionError:
        try:
            residual = fit_mle(Family.NORMAL, resid)
        except DistributionError:
            residual, estimated = DistributionSpec.normal(0.0, 1.0), True
    return StatusProfile(SemanticLabel(int(label)), number, scale_pos, scale_neg, float(slope),
                         float(intercept), residual, float(side), estimated)


def fit_status_library(clusters, delay_bin, *, wavelength_m=DEFAULT_WAVELENGTH_M, two_way=False,
                       min_clusters=MIN_CLUSTERS_PER_LABEL, report: FitReport | None = None,
                       number_families=NUMBER_FAMILIES) -> StatusLibrary:
    report = report if report is not None else FitReport()
    by_label = defaultdict(list)
    for c in clusters:
        if c.label != 0:
            by_label[int(c.label)].append(c)
    profiles = {}
    for label in sorted(by_label):
        group = by_label[label]
        report.samples[label] = len(group)
        if len(group) < min_clusters:
            report.skipped[label] = f"{len(group)} clusters < {min_clusters}"
            report.warn(f"label {label}: only {len(group)} clusters, skipped")
            continue
        try:
            profiles[label] = fit_status_profile(label, group, delay_bin, wavelength_m, two_way,
                                                 number_families)
        except DistributionError as err:
            report.skipped[label] = str(err)
            report.warn(f"label {label}: {err}")
    if not profiles:
        raise ValueError("no label had enough clusters to fit a status profile")
    return StatusLibrary(profiles, wavelength_m, two_way)


# -- behaviors -------------------------------------------------------------------

@dataclass(frozen=True)
class BehaviorTrack:
    """Per-snapshot behavior annotation, optionally with event dominance."""
    behaviors: tuple                    # BehaviorKind per snapshot
    dominant: tuple | None = None       # frozenset per snapshot
    fallback: tuple | None = None

    def runs(self):
        """(behavior, length) of each maximal constant stretch."""
        out = []
        for b in self.behaviors:
            if out and out[-1][0] == b:
                out[-1][1] += 1
            else:
                out.append([b, 1])
        return [(b, n) for b, n in out]


def centroid_paths(clusters, delay_bin, wavelength_m=DEFAULT_WAVELENGTH_M, two_way=False):
    """Link same-label clusters across consecutive snapshots.

    Greedy nearest-centroid matching within each label. Returns a list of
    paths, each a list of ``(snapshot, centroid_bin, normalized power)``.
    """
    by_snap = defaultdict(lambda: defaultdict(list))
    for c in clusters:
        if c.label == 0:
            continue
        p = float(normalize_power(c.centroid_power_db, _bin_delay(c.centroid_bin, delay_bin),
                                  wavelength_m, two_way))
        by_snap[c.snapshot][c.label].append((c.centroid_bin, p))
    live = defaultdict(list)       # label -> paths ending at the previous snapshot
    done = []
    for t in sorted(by_snap):
        nxt = defaultdict(list)
        for label in sorted(set(live) | set(by_snap[t])):
            prev = [p for p in live[label] if p[-1][0] == t - 1]
            done.extend(p for p in live[label] if p[-1][0] != t - 1)
            items = by_snap[t].get(label, [])
            pairs = sorted((abs(path[-1][1] - b), pi, ii)
                           for pi, path in enumerate(prev) for ii, (b, _) in enumerate(items))
            used_p, used_i = set(), set()
            for _, pi, ii in pairs:
                if pi in used_p or ii in used_i:
                    continue
                used_p.add(pi)
                used_i.add(ii)
                prev[pi].append((t, *items[ii]))
                nxt[label].append(prev[pi])
            done.extend(p for pi, p in enumerate(prev) if pi not in used_p)
            nxt[label].extend([(t, *it)] for ii, it in enumerate(items) if ii not in used_i)
        live = nxt
    for paths in live.values():
        done.extend(paths)
    return done


def path_states(path, born=False):
    """Markov states implied by a centroid path.

    A path that appears mid-record starts in birth-death; every path closes
    with birth-death when it disappears.
    """
    states = [MarkovState.BIRTH_DEATH if born else MarkovState.UNCHANGED]
    for (_, b0, _), (_, b1, _) in zip(path, path[1:]):
        states.append(MarkovState.UNCHANGED if b1 == b0 else
                      MarkovState.ADVANCING if b1 < b0 else MarkovState.DELAYING)
    states.append(MarkovState.BIRTH_DEATH)
    return states


def fit_behavior_library(clusters, track: BehaviorTrack, delay_bin, *,
                         wavelength_m=DEFAULT_WAVELENGTH_M, two_way=False,
                         report: FitReport | None = None) -> BehaviorLibrary:
    report = report if report is not None else FitReport()
    n = len(track.behaviors)
    seqs, dpow = defaultdict(list), defaultdict(list)
    paths = centroid_paths(clusters, delay_bin, wavelength_m, two_way)
    first = min((p[0][0] for p in paths), default=0)
    for path in paths:
        if path[0][0] >= n:
            continue
        kind = BehaviorKind.parse(track.behaviors[path[0][0]])
        seqs[kind].append([int(s) for s in path_states(path, born=path[0][0] > first)])
        for (t0, _, p0), (t1, _, p1) in zip(path, path[1:]):
            dpow[BehaviorKind.parse(track.behaviors[t1])].append(p1 - p0)
    runs = defaultdict(list)
    for b, length in track.runs():
        runs[BehaviorKind.parse(b)].append(length)
    profiles = {}
    for kind in BehaviorKind:
        if not seqs.get(kind):
            report.warn(f"{kind.key}: no cluster paths, behavior skipped")
            continue
        est = estimate_transition_matrix(seqs[kind])
        if not est.complete:
            missing = [i + 1 for i, d in enumerate(est.defined) if not d]
            report.warn(f"{kind.key}: states {missing} never left, behavior skipped")
            continue
        try:
            duration = fit_mle(Family.LOGNORMAL, runs[kind])
        except DistributionError as err:
            report.warn(f"{kind.key}: duration fit failed ({err}); using the mean run length")
            mean = float(np.mean(runs[kind])) if runs[kind] else 1.0
            duration = DistributionSpec.lognormal(math.log(mean), DEGENERATE_SIGMA)
        try:
            power_var = fit_mle(Family.NORMAL, dpow[kind])
        except DistributionError as err:
            report.warn(f"{kind.key}: power-variation fit failed ({err})")
            power_var = DistributionSpec.normal(0.0, DEGENERATE_SIGMA)
        profiles[kind] = BehaviorProfile(kind, est.matrix, duration, power_var)
    if not profiles:
        raise ValueError("no behavior could be fitted")
    return BehaviorLibrary(profiles)


# -- events ----------------------------------------------------------------------

def labeled_snapshots_from(clusters, track: BehaviorTrack):
    present = defaultdict(set)
    for c in clusters:
        if c.label != 0:
            present[c.snapshot].add(int(c.label))
    out = []
    for t, b in enumerate(track.behaviors):
        dom = track.dominant[t] if track.dominant is not None else None
        fb = bool(track.fallback[t]) if track.fallback is not None else False
        out.append(LabeledSnapshot(b, frozenset(present[t]), dom, fb))
    return out


def fit_centroid_ranges(clusters, delay_bin, wavelength_m=DEFAULT_WAVELENGTH_M, two_way=False):
    delays, powers = defaultdict(list), defaultdict(list)
    for c in clusters:
        if c.label == 0:
            continue
        tau = _bin_delay(c.centroid_bin, delay_bin)
        delays[c.label].append(tau)
        powers[c.label].append(float(normalize_power(c.centroid_power_db, tau, wavelength_m, two_way)))
    return CentroidInitRange({
        lab: CentroidRange((min(delays[lab]), max(delays[lab])), (min(powers[lab]), max(powers[lab])))
        for lab in delays})


def fit_event_matrices(clusters, track: BehaviorTrack, delay_bin, *, mode="presence",
                       wavelength_m=DEFAULT_WAVELENGTH_M, two_way=False) -> EventMatrices:
    bcm, scm = estimate_matrices(labeled_snapshots_from(clusters, track), mode)
    ranges = fit_centroid_ranges(clusters, delay_bin, wavelength_m, two_way)
    # observed labels get ranges; the rest keep NaN rows and no range
    return EventMatrices(bcm, scm, ranges)

