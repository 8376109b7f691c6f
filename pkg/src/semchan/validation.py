"""Self-checks behind ``semchan validate``.

Suites:

``analytic``   closed-form cases that must hold exactly
``roundtrip``  sample/refit, simulate/re-estimate and file-format round trips
``closedloop`` generator -> analyzer -> fitter, event matrices, determinism
"""
from __future__ import annotations

import math
import tempfile
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .analyzer import (
    DbscanParams, DepthTable, analyze_pdp, bind_label, compare_realizations, dbscan_cluster,
    delay_to_distance, normalize_depth, rmsds, threshold_pdp,
)
from .behavior import (
    BehaviorLibrary, TurnGeometry, estimate_transition_matrix, simulate_states,
    turn_offset,
)
from .core import NS, SPEED_OF_LIGHT, BehaviorKind, DelayGrid, SemanticLabel
from .distributions import DistributionSpec, Family, fit_mle
from .events import (
    BehaviorCorrelationMatrix, CentroidInitRange, CentroidRange, EventScript, ScriptToken,
    StatusCooccurrenceMatrix, compose_event_map, estimate_matrices,
)
from .fitting import fit_status_library
from .generator import GeneratorConfig, generate, realization_stats, truth_depths
from .status import StatusLibrary, denormalize_power, normalize_power

SUITES = ("analytic", "roundtrip", "closedloop")
NU_EXEMPT = 1e3


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    value: object = None

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


@dataclass
class SuiteReport:
    suite: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {"suite": self.suite, "passed": self.passed, "seconds": round(self.seconds, 3),
                "checks": [c.to_dict() for c in self.checks]}


def _rel(a, b):
    return abs(a - b) / abs(b)


# -- distributions ------------------------------------------------------------------

def distribution_roundtrip(lib: StatusLibrary, n=10_000, seed=0, tol=0.05):
    """Sample each label's number distribution and refit it by MLE."""
    rng = np.random.default_rng(seed)
    rows = []
    for label in lib.labels:
        spec = lib[label].number_dist
        fit = fit_mle(spec.family, spec.sample(rng, n))
        errs = [_rel(f, p) for f, p in zip(fit.params, spec.params)]
        rows.append((int(label), spec, fit, max(errs), max(errs) <= tol))
    return rows


def residual_roundtrip(lib: StatusLibrary, n=10_000, seed=0, tol=0.05):
    """Same for the residual t fits; nu is exempt above ``NU_EXEMPT``."""
    rng = np.random.default_rng(seed)
    rows = []
    for label in lib.labels:
        spec = lib[label].residual
        fit = fit_mle(spec.family, spec.sample(rng, n))
        mu, sigma = spec.params[:2]
        err_mu = abs(fit.params[0] - mu) / max(abs(mu), sigma)
        errs = [err_mu, _rel(fit.params[1], sigma)]
        if spec.family is Family.TLOCATIONSCALE and spec.params[2] <= NU_EXEMPT:
            errs.append(_rel(fit.params[2], spec.params[2]))
        rows.append((int(label), spec, fit, max(errs), max(errs) <= tol))
    return rows


# -- behaviors ----------------------------------------------------------------------

def markov_recovery(blib: BehaviorLibrary, n=200_000, seed=0):
    rng = np.random.default_rng(seed)
    out = {}
    for kind in sorted(blib.profiles):
        prof = blib[kind]
        est = estimate_transition_matrix([simulate_states(prof, n, rng)])
        out[kind] = (est.matrix, float(np.max(np.abs(est.matrix - prof.transition))))
    return out


def duration_median(blib: BehaviorLibrary, kind=BehaviorKind.STRAIGHT, n=100_000, seed=0):
    """Median of ``n`` continuous duration draws and the log-normal median e^mu."""
    spec = blib[kind].duration_dist
    draws = spec.sample(np.random.default_rng(seed), n)
    return float(np.median(draws)), math.exp(spec.params[0])


def turn_formula_checks():
    c = SPEED_OF_LIGHT
    zero = turn_offset(TurnGeometry(10.0, 0.0, 1.0, 100.0))
    # theta / (T f_s) = pi: one snapshot spanning a half turn
    half = turn_offset(TurnGeometry(10.0, math.pi, 1.0, 1.0))
    expected = 4 * 10.0 / c / NS
    thetas = np.linspace(0.0, math.pi, 1000)
    vals = [turn_offset(TurnGeometry(10.0, th, 1.0, 1.0)) for th in thetas]
    monotone = all(b >= a for a, b in zip(vals, vals[1:]))
    return zero, half, expected, monotone


def normalization_identity(n=10_000, seed=0):
    rng = np.random.default_rng(seed)
    p = rng.uniform(-150.0, 50.0, n)
    tau = rng.uniform(0.01, 1000.0, n)
    back = normalize_power(denormalize_power(p, tau), tau)
    fwd = denormalize_power(normalize_power(p, tau), tau)
    return float(max(np.max(np.abs(back - p)), np.max(np.abs(fwd - p))))


# -- clustering ------------------------------------------------------------------

def dbscan_reference(delays, powers, params: DbscanParams):
    """Textbook DBSCAN by repeated reachability sweeps, O(n^3)."""
    n = len(delays)
    pts = list(zip(map(float, delays), map(float, powers)))

    def dist(i, j):
        return math.sqrt(params.delay_weight * (pts[i][0] - pts[j][0]) ** 2
                         + params.power_weight * (pts[i][1] - pts[j][1]) ** 2)

    nb = [[j for j in range(n) if dist(i, j) <= params.eps] for i in range(n)]
    core = [len(nb[i]) >= params.min_pts for i in range(n)]
    order = sorted(range(n), key=lambda i: (pts[i][0], pts[i][1], i))
    labels = [-1] * n
    next_id = 0
    for i in order:
        if not core[i] or labels[i] != -1:
            continue
        labels[i] = next_id
        changed = True
        while changed:
            changed = False
            for a in range(n):
                if labels[a] == next_id and core[a]:
                    for b in nb[a]:
                        if core[b] and labels[b] == -1:
                            labels[b] = next_id
                            changed = True
        next_id += 1
    for i in range(n):
        if not core[i]:
            reach = [j for j in order if core[j] and j in nb[i]]
            if reach:
                labels[i] = labels[reach[0]]
    return np.array(labels)


def dbscan_oracle_agreement(n_instances=100, max_points=300, seed=0):
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_instances):
        n = int(rng.integers(1, max_points + 1))
        k = int(rng.integers(1, 6))
        centers = rng.uniform(0, 300, k)
        delays = rng.choice(centers, n) + rng.normal(0, rng.uniform(1, 15), n)
        powers = rng.normal(-80, 6, n)
        params = DbscanParams(eps=float(rng.uniform(1, 10)), min_pts=int(rng.integers(1, 8)),
                              delay_weight=float(rng.uniform(0.2, 2)), power_weight=float(rng.uniform(0, 1)))
        if not np.array_equal(dbscan_cluster(delays, powers, params), dbscan_reference(delays, powers, params)):
            mismatches += 1
    return mismatches


# -- event matrices -------------------------------------------------------------------

def known_event_matrices():
    """A test (bcm, scm) pair: one solo dominant label per behavior plus the
    asymmetric 09/11 pair."""
    bcm = np.zeros((3, 16))
    bcm[0, 8] = 1.0        # straight -> 09
    bcm[1, 10] = 1.0       # left -> 11
    bcm[2, 0] = 0.5        # right -> 01 half the time
    bcm[2, 4] = 1.0        #          and 05 always
    scm = np.eye(16)
    scm[8, 10] = 0.03
    scm[10, 8] = 0.39
    return BehaviorCorrelationMatrix(bcm), StatusCooccurrenceMatrix(scm)


def event_matrix_recovery(n=10_000, seed=0, mode="directional"):
    bcm, scm = known_event_matrices()
    script = EventScript.from_sequence([1 + (k % 3) for k in range(n)], [1] * n)
    emap = compose_event_map(script, bcm, scm, np.random.default_rng(seed))
    est_bcm, est_scm = estimate_matrices(emap.labeled_snapshots(), mode)
    d_bcm = np.abs(est_bcm.values - bcm.values)
    d_scm = np.abs(est_scm.values - scm.values)
    return est_bcm, est_scm, float(np.nanmax(d_bcm)), float(np.nanmax(d_scm))


# -- closed loop -----------------------------------------------------------------------

CLOSED_LOOP_NUMBERS = {
    SemanticLabel.PARKED_VEHICLES: DistributionSpec.lognormal(2.1, 0.3),
    SemanticLabel.OPPOSITE_DIRECTION_VEHICLES: DistributionSpec.gamma(9.0, 1.0),
    SemanticLabel.BILLBOARD_BUS_STOP: DistributionSpec.weibull(4.0, 10.0),
    SemanticLabel.STREETLIGHT: DistributionSpec.normal(9.0, 2.5),
}
CLOSED_LOOP_CENTERS = {
    SemanticLabel.PARKED_VEHICLES: 40.0,
    SemanticLabel.OPPOSITE_DIRECTION_VEHICLES: 110.0,
    SemanticLabel.BILLBOARD_BUS_STOP: 180.0,
    SemanticLabel.STREETLIGHT: 250.0,
}


def closed_loop_config(base: GeneratorConfig | None = None, delay_bin=0.05, delay_scale=2.0):
    """Four labels 70 ns apart, integer-friendly member counts, no spawning."""
    base = (base or GeneratorConfig()).resolved()
    profiles = {lab: replace(base.status[lab], number_dist=spec, delay_scale_pos=delay_scale,
                             delay_scale_neg=delay_scale)
                for lab, spec in CLOSED_LOOP_NUMBERS.items()}
    status = StatusLibrary(profiles, base.status.wavelength_m, base.status.two_way_pathloss)
    ranges = CentroidInitRange({lab: CentroidRange((c - 2.0, c + 2.0), (0.0, 5.0))
                                for lab, c in CLOSED_LOOP_CENTERS.items()})
    return replace(base, delay_bin=delay_bin, status=status,
                   events=replace(base.events, ranges=ranges), spawn_fraction=0.0)


@dataclass(frozen=True)
class ClosedLoopResult:
    label_recovery: float
    n_clusters: int
    n_true_clusters: int
    param_errors: dict          # label -> (generating spec, refit spec, max rel error)
    selected: dict              # label -> family chosen by best-fit selection
    seconds: float


def truth_depth_table(realization) -> DepthTable:
    return DepthTable(truth_depths(realization), realization.d_max)


def closed_loop(n_snapshots=5000, segment=10, seed=2024, params=DbscanParams(eps=20.0, min_pts=1, power_weight=0.0),
                cfg: GeneratorConfig | None = None) -> ClosedLoopResult:
    t0 = time.perf_counter()
    cfg = cfg or closed_loop_config()
    labels = frozenset(CLOSED_LOOP_NUMBERS)
    script = EventScript(tuple(ScriptToken(BehaviorKind.STRAIGHT, segment, labels=labels)
                               for _ in range(n_snapshots // segment)), seed)
    r = generate(script, cfg)
    grid = r.grid
    owners = []
    for s in r.snapshots:
        own = {}
        for c in s.clusters:
            for b in grid.quantize([m.delay for m in c.members]):
                own.setdefault(int(b), Counter())[int(c.label)] += 1
        owners.append(own)
    res = analyze_pdp(r.pdp_matrix(), grid, depth_table=truth_depth_table(r), params=params,
                      wavelength_m=cfg.status.wavelength_m, two_way=cfg.status.two_way_pathloss)
    hits = 0
    for c in res.clusters:
        votes = Counter()
        for b in c.member_bins:
            votes.update(owners[c.snapshot].get(b, {}))
        hits += bool(votes) and votes.most_common(1)[0][0] == c.label
    fitted = fit_status_library(res.clusters, cfg.delay_bin, wavelength_m=cfg.status.wavelength_m,
                                two_way=cfg.status.two_way_pathloss)
    errors, selected = {}, {}
    for lab, spec in CLOSED_LOOP_NUMBERS.items():
        sizes = [c.size for c in res.clusters if c.label == lab]
        refit = fit_mle(spec.family, sizes)
        errors[int(lab)] = (spec, refit, max(_rel(f, p) for f, p in zip(refit.params, spec.params)))
        selected[int(lab)] = fitted[lab].number_dist.family.key if lab in fitted else None
    return ClosedLoopResult(hits / max(len(res.clusters), 1), len(res.clusters),
                            sum(len(s.clusters) for s in r.snapshots), errors, selected,
                            time.perf_counter() - t0)


# -- generator-level properties ----------------------------------------------------------

def mixed_script(n_tokens=100, duration=20, seed=None):
    pattern = (BehaviorKind.STRAIGHT, BehaviorKind.LEFT, BehaviorKind.STRAIGHT, BehaviorKind.RIGHT)
    return EventScript.from_sequence([pattern[k % 4] for k in range(n_tokens)], [duration] * n_tokens, seed)


def pdp_bytes(realization) -> bytes:
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "pdp.csv"
        io.write_pdp(path, realization.pdp_matrix(), realization.delay_bin)
        return path.read_bytes()


def determinism(script=None, cfg=None, seeds=(1, 2)):
    # many short segments: RMSDS varies mostly between event draws, so the
    # number of segments sets the effective sample size of the KS comparison
    script = script or mixed_script(500, 10)
    cfg = (cfg or GeneratorConfig()).resolved()
    a1, a2 = generate(script, cfg, seeds[0]), generate(script, cfg, seeds[0])
    b = generate(script, cfg, seeds[1])
    identical = pdp_bytes(a1) == pdp_bytes(a2)
    ks = compare_realizations(a1, b).ks_distance
    return identical, ks, len(a1)


def birth_death_balance(n_snapshots=10_000, segment=20, seed=11, cfg=None):
    cfg = (cfg or GeneratorConfig()).resolved()
    script = EventScript.from_sequence([BehaviorKind.STRAIGHT] * (n_snapshots // segment),
                                       [segment] * (n_snapshots // segment), seed)
    st = realization_stats(generate(script, cfg))
    return st.births, st.deaths, st.birth_death_balanced


# -- suites ----------------------------------------------------------------------------

def run_analytic() -> list:
    checks = []
    zero, half, expected, monotone = turn_formula_checks()
    checks.append(Check("turn offset is 0 at theta=0", zero == 0.0, f"{zero!r}"))
    checks.append(Check("turn offset 4r/c at theta/(T f_s)=pi", abs(half - expected) < 1e-9,
                        f"{half:.4f} ns vs {expected:.4f} ns"))
    checks.append(Check("turn offset monotone in theta", monotone))
    grid = DelayGrid(1.0, 101)
    one = np.zeros(101); one[40] = 1.0
    two = np.zeros(101); two[0] = two[100] = 1.0
    w = np.zeros(101); w[0], w[100] = 1.0, 3.0
    checks.append(Check("rmsds single tap", rmsds(one, grid.delays) == 0.0))
    checks.append(Check("rmsds equal taps 0/100 ns", rmsds(two, grid.delays) == 50.0))
    checks.append(Check("rmsds 1:3 taps", abs(rmsds(w, grid.delays) - math.sqrt(7500 - 75 ** 2)) < 1e-9,
                        f"{rmsds(w, grid.delays):.4f} ns"))
    d = float(delay_to_distance(np.mean([100.0, 110.0, 90.0])))
    checks.append(Check("cluster distance c*tau/2", abs(d - SPEED_OF_LIGHT * 100e-9 / 2) < 1e-12, f"{d:.4f} m"))
    checks.append(Check("label binding exact match", bind_label(15.0, {1: 15.0, 2: 40.0}) == 1))
    checks.append(Check("label binding tie to lowest id", bind_label(15.0, {2: 20.0, 1: 10.0}) == 1))
    pdp = 10 ** (np.array([[-95.0, -93.0]]) / 10)
    pts, _ = threshold_pdp(pdp, DelayGrid(1.0, 2), noise_floor_db=-100.0)
    checks.append(Check("6 dB gate", [p.bin for p in pts] == [1]))
    nd = normalize_depth(np.arange(256), 50.0)
    checks.append(Check("depth normalization endpoints", nd[0] == 0.0 and nd[-1] == 50.0))
    single = DistributionSpec.lognormal(0.0, 1e-9)
    base = GeneratorConfig().resolved()
    lab = SemanticLabel.METAL_BARRIER
    cfg = replace(base, status=base.status.with_profile(replace(base.status[lab], number_dist=single)))
    r = generate(EventScript((ScriptToken(BehaviorKind.STRAIGHT, 1, labels=frozenset({lab})),)), cfg, 0)
    checks.append(Check("one snapshot, one MPC", len(r) == 1 and r.snapshots[0].n_mpcs == 1))
    return checks


def run_roundtrip(seed=0) -> list:
    checks = []
    cfg = GeneratorConfig().resolved()
    rows = distribution_roundtrip(cfg.status, seed=seed)
    worst = max(rows, key=lambda r: r[3])
    checks.append(Check("number distributions refit within 5%", all(r[4] for r in rows),
                        f"worst label {worst[0]:02d} at {worst[3]:.2%}"))
    rec = markov_recovery(cfg.behavior, seed=seed)
    err = max(v[1] for v in rec.values())
    checks.append(Check("transition matrices re-estimated within 0.01", err < 0.01, f"max error {err:.4f}"))
    med, target = duration_median(cfg.behavior, seed=seed)
    checks.append(Check("straight duration median", _rel(med, target) <= 0.05, f"{med:.2f} vs {target:.2f}"))
    dev = normalization_identity(seed=seed)
    checks.append(Check("power normalization inverts", dev <= 1e-9, f"max deviation {dev:.2e} dB"))
    mism = dbscan_oracle_agreement(seed=seed)
    checks.append(Check("dbscan matches reference", mism == 0, f"{mism} mismatching instances"))
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        ok = (io.load_status_library(io.save_status_library(cfg.status, d / "s.json")) == cfg.status
              and io.load_behavior_library(io.save_behavior_library(cfg.behavior, d / "b.json")) == cfg.behavior
              and io.load_event_matrices(io.save_event_matrices(cfg.events, d / "e.json")) == cfg.events)
        checks.append(Check("library files round trip", ok))
        r = generate(mixed_script(8, 5), cfg, seed)
        pdp = r.pdp_matrix()
        back = io.read_pdp(io.write_pdp(d / "p.csv", pdp, r.delay_bin))
        checks.append(Check("PDP file round trip", np.array_equal(back.pdp, pdp)))
    return checks


def run_closedloop(seed=0) -> list:
    checks = []
    res = closed_loop()
    worst = max(v[2] for v in res.param_errors.values())
    checks.append(Check("closed loop label recovery >= 90%", res.label_recovery >= 0.9,
                        f"{res.label_recovery:.2%} of {res.n_clusters} clusters"))
    checks.append(Check("closed loop number parameters within 10%", worst <= 0.10, f"worst {worst:.2%}"))
    _, _, eb, es = event_matrix_recovery(seed=seed)
    checks.append(Check("event matrices recovered within 0.02", max(eb, es) <= 0.02,
                        f"bcm {eb:.4f}, scm {es:.4f}"))
    identical, ks, n = determinism()
    checks.append(Check("same seed gives identical PDP bytes", identical))
    checks.append(Check("RMSDS CDFs across seeds within KS 0.1", ks < 0.1, f"KS {ks:.4f} over {n} snapshots"))
    b, dth, ok = birth_death_balance()
    checks.append(Check("births balance deaths", ok, f"{b} births, {dth} deaths"))
    return checks


RUNNERS = {"analytic": run_analytic, "roundtrip": run_roundtrip, "closedloop": run_closedloop}


def run_suite(name: str) -> SuiteReport:
    if name not in RUNNERS:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    t0 = time.perf_counter()
    checks = RUNNERS[name]()
    return SuiteReport(name, checks, time.perf_counter() - t0)
