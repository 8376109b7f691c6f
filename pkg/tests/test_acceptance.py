"""Acceptance criteria, one check each.

Run under pytest (a PASS/FAIL line per criterion is printed in the terminal
summary) or directly: ``python tests/test_acceptance.py``.
"""
import math
import time

import numpy as np
import pytest

from semchan import io
from semchan.analyzer import rmsds
from semchan.behavior import sample_duration
from semchan.core import NS, SPEED_OF_LIGHT, BehaviorKind
from semchan.generator import GeneratorConfig
from semchan.validation import (
    birth_death_balance, closed_loop, dbscan_oracle_agreement, determinism,
    distribution_roundtrip, event_matrix_recovery, markov_recovery, normalization_identity,
    turn_formula_checks,
)

RESULTS = {}


def _cfg():
    return GeneratorConfig().resolved()


def c1_distribution_round_trip():
    t0 = time.perf_counter()
    rows = distribution_roundtrip(io.load_status_library(io.default_library_path("status")), n=10_000)
    secs = time.perf_counter() - t0
    worst = max(rows, key=lambda r: r[3])
    ok = all(r[4] for r in rows) and len(rows) == 16 and secs < 30
    return ok, f"16 rows, worst label {worst[0]} rel err {worst[3]:.4f}, {secs:.1f} s"


def c2_markov_recovery():
    blib = io.load_behavior_library(io.default_library_path("behavior"))
    res = markov_recovery(blib, n=200_000, seed=0)
    worst = max(err for _, err in res.values())
    spot = np.array([0.8851, 0.0500, 0.0445, 0.0204])
    spot_ok = np.allclose(blib["straight"].transition[0], spot, atol=5e-4)
    return worst < 0.01 and spot_ok, f"max abs err {worst:.4f}, straight row 1 {'ok' if spot_ok else 'off'}"


def c3_turn_formula():
    zero, half, expected, monotone = turn_formula_checks()
    ok = zero == 0.0 and abs(half - 133.4) <= 0.1 and abs(half - 40.0 / SPEED_OF_LIGHT / NS) < 1e-9 and monotone
    return ok, f"theta=0 -> {zero!r}, half turn {half:.4f} ns, monotone {monotone}"


def c4_power_normalization():
    err = normalization_identity(10_000)
    return err <= 1e-9, f"max |error| {err:.2e} dB over 1e4 pairs"


def c5_dbscan_oracle():
    bad = dbscan_oracle_agreement(100, 300)
    return bad == 0, f"{bad} mismatching instances of 100"


def c6_rmsds_cases():
    tau = np.arange(101.0)
    one = np.zeros(101); one[40] = 1.0
    two = np.zeros(101); two[0] = two[100] = 1.0
    w = np.zeros(101); w[0], w[100] = 1.0, 3.0
    a, b, c = rmsds(one, tau), rmsds(two, tau), rmsds(w, tau)
    return a == 0.0 and b == 50.0 and abs(c - 43.30) <= 0.01, f"{a} / {b} / {c:.4f} ns"


def c7_closed_loop():
    res = closed_loop(n_snapshots=5000)
    worst = max(e[2] for e in res.param_errors.values())
    ok = res.label_recovery >= 0.9 and worst <= 0.10 and res.seconds < 120
    return ok, (f"label recovery {res.label_recovery:.3f} over {res.n_clusters} clusters, "
                f"worst param err {worst:.4f}, {res.seconds:.1f} s")


def c8_event_matrices():
    _, scm, d_bcm, d_scm = event_matrix_recovery(10_000)
    ok = d_bcm <= 0.02 and d_scm <= 0.02
    return ok, f"max err bcm {d_bcm:.4f}, scm {d_scm:.4f}; scm[09][11]={scm[9, 11]:.3f}, scm[11][09]={scm[11, 9]:.3f}"


def c9_duration_median():
    blib = io.load_behavior_library(io.default_library_path("behavior"))
    rng = np.random.default_rng(0)
    d = [sample_duration(blib[BehaviorKind.STRAIGHT], rng) for _ in range(100_000)]
    med, target = float(np.median(d)), math.exp(4.2741)
    return abs(med - target) <= 0.05 * target, f"median {med:.1f} vs {target:.1f} snapshots"


def c10_determinism():
    identical, ks, n = determinism(cfg=_cfg())
    return identical and ks < 0.1 and n >= 1000, f"byte-identical {identical}, KS {ks:.4f} at {n} snapshots"


def c11_birth_death():
    births, deaths, ok = birth_death_balance(10_000, cfg=_cfg())
    bound = 3 * math.sqrt(births + deaths)
    return ok, f"births {births}, deaths {deaths}, |diff| {abs(births - deaths)} <= {bound:.1f}"


CRITERIA = [
    (1, "distribution round trip", c1_distribution_round_trip),
    (2, "Markov recovery", c2_markov_recovery),
    (3, "turning formula", c3_turn_formula),
    (4, "power normalization identity", c4_power_normalization),
    (5, "DBSCAN oracle equivalence", c5_dbscan_oracle),
    (6, "RMSDS analytic cases", c6_rmsds_cases),
    (7, "closed loop generate-analyze-fit", c7_closed_loop),
    (8, "event-matrix recovery", c8_event_matrices),
    (9, "duration median", c9_duration_median),
    (10, "determinism", c10_determinism),
    (11, "birth/death balance", c11_birth_death),
]


def line(num, name, ok, detail):
    return f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    rep = request.config.pluginmanager.get_plugin("terminalreporter")
    if rep is None:
        return
    rep.write_line("")
    rep.write_sep("-", "acceptance criteria")
    for num, name, _ in CRITERIA:
        if num in RESULTS:
            rep.write_line(line(num, name, *RESULTS[num]))


@pytest.mark.parametrize("num,name,check", CRITERIA, ids=[f"c{n:02d}" for n, _, _ in CRITERIA])
def test_criterion(num, name, check):
    ok, detail = check()
    RESULTS[num] = (ok, detail)
    print(line(num, name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for num, name, check in CRITERIA:
        ok, detail = check()
        failed += not ok
        print(line(num, name, ok, detail), flush=True)
    raise SystemExit(1 if failed else 0)
