import numpy as np
import pytest

from semchan import io
from semchan.core import BehaviorKind, SemanticLabel
from semchan.events import (
    BehaviorCorrelationMatrix, CentroidInitRange, CentroidRange, ConfigError, EventScript,
    LabeledSnapshot, ScriptToken, StatusCooccurrenceMatrix, compose_event_map, estimate_matrices,
    init_centroid, spawn_on_birth,
)
from semchan.validation import event_matrix_recovery


@pytest.fixture(scope="module")
def shipped():
    return io.load_event_matrices(io.default_library_path("events"))


def one_hot_bcm(label, behavior=None, p=1.0):
    m = np.zeros((3, 16))
    rows = range(3) if behavior is None else [BehaviorKind.parse(behavior) - 1]
    for r in rows:
        m[r, label - 1] = p
    return BehaviorCorrelationMatrix(m)


def script(behavior, n):
    return EventScript.from_sequence([behavior] * n, [1] * n)


def test_one_hot_with_identity_scm(rng):
    emap = compose_event_map(script("straight", 50), one_hot_bcm(9),
                             StatusCooccurrenceMatrix.identity(), rng)
    assert {s.active for s in emap.segments} == {frozenset({SemanticLabel(9)})}


def test_left_turn_barrier_always_present(rng, shipped):
    m = shipped.bcm.values.copy()
    m[BehaviorKind.LEFT - 1, 0] = 1.0
    emap = compose_event_map(script("left", 1000), BehaviorCorrelationMatrix(m), shipped.scm, rng)
    assert np.mean([1 in s.active for s in emap.segments]) > 0.99


def test_scm_draw_frequency(rng, shipped):
    assert shipped.scm[1, 2] == 0.30
    emap = compose_event_map(script("straight", 10**4), one_hot_bcm(1), shipped.scm, rng)
    assert np.mean([2 in s.active for s in emap.segments]) == pytest.approx(0.30, abs=0.03)


def test_empty_row_falls_back_to_argmax(rng):
    m = np.zeros((3, 16))
    m[0, 4] = 1e-9
    emap = compose_event_map(script("straight", 20), BehaviorCorrelationMatrix(m),
                             StatusCooccurrenceMatrix.identity(), rng)
    assert all(s.active == {5} for s in emap.segments)
    assert sum(s.fallback for s in emap.segments) >= 19


def test_forced_labels_skip_the_draw(rng, shipped):
    tok = ScriptToken("right", 3, labels={4, 7})
    emap = compose_event_map(EventScript((tok,)), shipped.bcm, shipped.scm, rng)
    seg = emap.segments[0]
    assert seg.active == {4, 7} and seg.duration == 3


def test_composition_is_deterministic(shipped):
    s = script("left", 200)
    a = compose_event_map(s, shipped.bcm, shipped.scm, np.random.default_rng(4))
    b = compose_event_map(s, shipped.bcm, shipped.scm, np.random.default_rng(4))
    assert a == b


def test_shipped_matrices_encode_stated_values(shipped):
    scm = shipped.scm
    assert (scm[1, 2], scm[2, 1], scm[9, 11], scm[11, 9]) == (0.30, 0.39, 0.03, 0.39)
    assert np.all(np.diag(scm.values) == 1.0)
    off = ~np.eye(16, dtype=bool)
    assert np.all(scm.values[15][off[15]] == 0) and np.all(scm.values[:, 15][off[:, 15]] == 0)
    assert not scm.estimated[0, 1] and scm.estimated[0, 3]
    assert shipped.bcm.estimated.all()


def test_matrix_validation():
    with pytest.raises(ConfigError, match="diagonal"):
        StatusCooccurrenceMatrix(np.full((16, 16), 0.5))
    with pytest.raises(ConfigError, match="shape"):
        BehaviorCorrelationMatrix(np.zeros((2, 16)))
    with pytest.raises(ConfigError, match=r"\[0, 1\]"):
        BehaviorCorrelationMatrix(np.full((3, 16), 1.5))


# -- centroids -------------------------------------------------------------------

def test_degenerate_range(rng):
    r = CentroidInitRange({3: CentroidRange((42.0, 42.0), (1.0, 1.0))})
    assert {init_centroid(3, r, rng) for _ in range(20)} == {(42.0, 1.0)}


def test_uniform_delay_moments(rng):
    r = CentroidInitRange({3: CentroidRange((50.0, 200.0), (0.0, 1.0))})
    d = np.array([init_centroid(3, r, rng)[0] for _ in range(10**4)])
    assert d.min() >= 50 and d.max() <= 200
    assert d.mean() == pytest.approx(125.0, abs=2.0)


def test_missing_range_is_config_error(rng):
    with pytest.raises(ConfigError, match="label 5"):
        init_centroid(5, CentroidInitRange({}), rng)


def test_buildings_sit_farther_than_barriers(rng, shipped):
    med = lambda lab: np.median([init_centroid(lab, shipped.ranges, rng)[0] for _ in range(2000)])
    assert min(med(SemanticLabel.BUILDING_COMMERCIAL), med(SemanticLabel.BUILDING_SHANTY)) > med(SemanticLabel.METAL_BARRIER)


def test_range_checks():
    with pytest.raises(ConfigError):
        CentroidRange((10.0, 5.0), (0.0, 1.0))


def test_spawn_singleton(rng, shipped):
    s = spawn_on_birth({6}, shipped.ranges, rng, snapshot=12)
    lo, hi = shipped.ranges[6].delay_ns
    assert s.label == 6 and s.birth_snapshot == 12 and lo <= s.delay <= hi


def test_spawn_splits_evenly(rng, shipped):
    labels = [spawn_on_birth({1, 2}, shipped.ranges, rng).label for _ in range(10**4)]
    assert np.mean(np.asarray(labels) == 1) == pytest.approx(0.5, abs=0.02)


def test_spawn_needs_labels(rng, shipped):
    with pytest.raises(ConfigError):
        spawn_on_birth(set(), shipped.ranges, rng)


# -- estimation ------------------------------------------------------------------

def test_hand_counted_estimate():
    bcm, scm = estimate_matrices([("straight", {1, 2}), ("straight", {1})], "presence")
    assert bcm["straight", 1] == 1.0 and bcm["straight", 2] == 0.5
    assert scm[1, 2] == 0.5 and scm[2, 1] == 1.0
    assert np.isnan(bcm.row("left")).all()


def test_identical_sets_give_all_ones():
    _, scm = estimate_matrices([("left", {3, 4, 8})] * 5, "presence")
    idx = [2, 3, 7]
    assert np.all(scm.values[np.ix_(idx, idx)] == 1.0)


def test_directional_needs_annotations():
    with pytest.raises(ValueError, match="annotations"):
        estimate_matrices([LabeledSnapshot("left", {1})], "directional")
    with pytest.raises(ValueError):
        estimate_matrices([])


def test_round_trip_recovery():
    _, est_scm, d_bcm, d_scm = event_matrix_recovery(10**4, seed=0)
    assert d_bcm <= 0.02 and d_scm <= 0.02
    # asymmetry survives in the generating direction
    assert est_scm[9, 11] < est_scm[11, 9]
