import numpy as np
import pytest

from semchan import io
from semchan.analyzer import LabeledCluster
from semchan.behavior import MarkovState
from semchan.core import BehaviorKind
from semchan.distributions import Family
from semchan.fitting import (
    BehaviorTrack, FitReport, centroid_paths, fit_behavior_library, fit_centroid_ranges,
    fit_event_matrices, fit_status_library, path_states, relative_members,
)
from semchan.status import synthesize_cluster

FINE = 0.001   # ns per bin: member collisions are negligible


@pytest.fixture(scope="module")
def lib():
    return io.load_status_library(io.default_library_path("status"))


def as_labeled(cluster, snapshot, lib, delay_bin=FINE):
    """Analyzer-style record of a synthesized cluster, measured-domain powers."""
    bins = np.array([round(m.delay / delay_bin) for m in cluster.members])
    bins = np.maximum(bins, 1)
    pw = 20 * np.log10([m.amplitude for m in cluster.members])
    order = np.argsort(bins, kind="stable")
    bins, pw = bins[order], pw[order]
    c0 = round(cluster.centroid_delay / delay_bin)
    k = int(np.flatnonzero(bins == c0)[0])
    mean = float(np.mean(bins) * delay_bin)
    return LabeledCluster(snapshot, 0, int(cluster.label), mean, 0.15 * mean, int(bins[k]),
                          float(pw[k]), tuple(int(b) for b in bins), tuple(float(v) for v in pw))


def synth(lib, label, n, seed, centroid=150.0):
    rng = np.random.default_rng(seed)
    return [as_labeled(synthesize_cluster(lib[label], centroid, 0.0, rng, library=lib), t, lib)
            for t in range(n)]


def test_label_03_refit(lib):
    fitted = fit_status_library(synth(lib, 3, 20000, 1), FINE)
    p = fitted[3]
    assert p.number_dist.family is Family.LOGNORMAL
    assert np.allclose(p.number_dist.params, (0.9509, 0.5773), rtol=0.05)


def test_relative_members_recover_late_scale(lib):
    clusters = synth(lib, 2, 20000, 2)
    rel = relative_members(clusters, FINE)
    assert np.all(rel.dp >= -1e-3)   # bin rounding moves the free-space term slightly
    assert rel.dtau[rel.dtau > 0].mean() == pytest.approx(lib[2].delay_scale_pos, rel=0.05)
    assert (-rel.dtau[rel.dtau < 0]).mean() == pytest.approx(lib[2].delay_scale_neg, rel=0.05)


def test_single_label_gives_one_profile(lib):
    fitted = fit_status_library(synth(lib, 14, 200, 3), FINE)
    assert fitted.labels == [14]
    assert not fitted.is_complete()


def test_sparse_label_skipped_with_warning(lib):
    report = FitReport()
    fitted = fit_status_library(synth(lib, 5, 200, 4) + synth(lib, 6, 10, 5), FINE, report=report)
    assert fitted.labels == [5]
    assert 6 in report.skipped and any("label 6" in w for w in report.warnings)


def test_nothing_fittable_is_an_error(lib):
    with pytest.raises(ValueError, match="no label"):
        fit_status_library(synth(lib, 5, 5, 6), FINE)


def test_unlabeled_clusters_ignored(lib):
    from dataclasses import replace
    cs = synth(lib, 5, 60, 7)
    other = [replace(c, label=0) for c in synth(lib, 6, 60, 8)]
    assert fit_status_library(cs + other, FINE).labels == [5]


# -- behavior --------------------------------------------------------------------

def point(t, b, label=1, p=-70.0):
    return LabeledCluster(t, 0, label, float(b), 0.15 * b, b, p, (b,), (p,))


def test_paths_link_nearest_same_label():
    cs = [point(0, 10), point(0, 50), point(1, 11), point(1, 49), point(2, 49),
          point(1, 30, label=2)]
    paths = sorted(centroid_paths(cs, 1.0), key=lambda p: (len(p), p[0][1]))
    bins = [[b for _, b, _ in p] for p in paths]
    assert sorted(bins) == [[10, 11], [30], [50, 49, 49]]


def test_path_states():
    path = [(0, 10, 0.0), (1, 10, 0.0), (2, 9, 0.0), (3, 12, 0.0)]
    S = MarkovState
    assert path_states(path) == [S.UNCHANGED, S.UNCHANGED, S.ADVANCING, S.DELAYING, S.BIRTH_DEATH]
    assert path_states(path[:1], born=True) == [S.BIRTH_DEATH, S.BIRTH_DEATH]


def test_behavior_fit_from_generated_paths(cfg):
    from dataclasses import replace as rp
    from semchan.events import EventScript, ScriptToken
    from semchan.generator import generate

    c = rp(cfg, spawn_fraction=0.5)
    script = EventScript(tuple(ScriptToken("straight", 25, labels={1, 4, 9, 12}) for _ in range(80)))
    r = generate(script, c, 9)
    clusters = []
    for snap in r.snapshots:
        for cl in snap.clusters:
            b = int(round(cl.centroid_delay))
            p = 20 * np.log10(cl.members[0].amplitude)
            clusters.append(point(snap.time_index, b, int(cl.label), p))
    track = BehaviorTrack(tuple(s.behavior for s in r.snapshots))
    report = FitReport()
    blib = fit_behavior_library(clusters, track, 1.0, report=report)
    assert BehaviorKind.STRAIGHT in blib and BehaviorKind.LEFT not in blib
    P = blib["straight"].transition
    assert np.allclose(P.sum(axis=1), 1.0)
    # path linking merges co-located clusters, so only the dominant diagonal is checked
    assert P[0, 0] == pytest.approx(cfg.behavior["straight"].transition[0, 0], abs=0.05)
    assert any("left" in w for w in report.warnings)


# -- events ----------------------------------------------------------------------

def test_event_fit_and_ranges():
    cs = [point(0, 10, 1, -70.0), point(0, 80, 2, -75.0), point(1, 12, 1, -72.0), point(2, 90, 3)]
    track = BehaviorTrack((BehaviorKind.STRAIGHT, BehaviorKind.STRAIGHT, BehaviorKind.LEFT))
    em = fit_event_matrices(cs, track, 1.0)
    assert em.bcm["straight", 1] == 1.0 and em.bcm["straight", 2] == 0.5
    assert em.bcm["left", 3] == 1.0
    assert np.isnan(em.bcm.row("right")).all()
    assert em.scm[1, 2] == 0.5 and em.scm[2, 1] == 1.0
    ranges = fit_centroid_ranges(cs, 1.0)
    assert ranges[1].delay_ns == (10.0, 12.0)
    assert 4 not in em.ranges
