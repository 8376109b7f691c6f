"""Measurement-side processing: PDP thresholding, density clustering of
multipath bins, depth-based label binding and delay-spread metrics."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import DEFAULT_D_MAX_M, NS, SPEED_OF_LIGHT, ChannelRealization, DelayGrid
from .distributions import ks_two_sample

THRESHOLD_DB = 6.0
NOISE = -1


class AnalysisError(ValueError):
    pass


# -- thresholding -------------------------------------------------------------------

@dataclass(frozen=True)
class BinPoint:
    """A retained PDP bin."""
    snapshot: int
    bin: int
    delay: float        # ns
    power_db: float


def to_db(pdp):
    pdp = np.asarray(pdp, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(pdp)


def estimate_noise_floor(pdp) -> float:
    """Median of the weakest quarter of all bins, in dB (may be -inf)."""
    db = np.sort(to_db(pdp).ravel())
    if db.size == 0:
        raise AnalysisError("empty PDP")
    q = db[: max(1, db.size // 4)]
    return float(np.median(q)) if np.all(np.isfinite(q)) else float(q[(q.size - 1) // 2])


def threshold_pdp(pdp, grid: DelayGrid, noise_floor_db=None, gate_db: float = THRESHOLD_DB,
                  snapshot_index=None):
    """Bins at least ``gate_db`` above the noise floor (auto-estimated when None).

    Returns ``(points, floor_db)``. Empty bins never pass.
    """
    pdp = np.atleast_2d(np.asarray(pdp, dtype=float))
    if pdp.size == 0:
        raise AnalysisError("empty PDP")
    if pdp.shape[1] != grid.n_bins:
        raise AnalysisError(f"PDP has {pdp.shape[1]} bins, grid has {grid.n_bins}")
    floor = estimate_noise_floor(pdp) if noise_floor_db is None else float(noise_floor_db)
    db = to_db(pdp)
    keep = (pdp > 0) & (db >= floor + gate_db)
    idx = range(pdp.shape[0]) if snapshot_index is None else snapshot_index
    points = []
    for t, row_db, row_keep in zip(idx, db, keep):
        for b in np.flatnonzero(row_keep):
            points.append(BinPoint(int(t), int(b), float(b * grid.bin_ns), float(row_db[b])))
    return points, floor


# -- DBSCAN -------------------------------------------------------------------------

@dataclass(frozen=True)
class DbscanParams:
    eps: float = 5.0
    min_pts: int = 3
    delay_weight: float = 1.0
    power_weight: float = 0.25

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if int(self.min_pts) != self.min_pts or self.min_pts < 1:
            raise ValueError(f"min_pts must be an integer >= 1, got {self.min_pts}")
        if self.delay_weight < 0 or self.power_weight < 0:
            raise ValueError("distance weights must be nonnegative")


def pairwise_distance(delays, powers, params: DbscanParams) -> np.ndarray:
    d = np.asarray(delays, dtype=float)
    p = np.asarray(powers, dtype=float)
    dd = d[:, None] - d[None, :]
    dp = p[:, None] - p[None, :]
    return np.sqrt(params.delay_weight * dd * dd + params.power_weight * dp * dp)


def dbscan_cluster(delays, powers, params: DbscanParams = DbscanParams()) -> np.ndarray:
    """Cluster id per point, ``-1`` for noise.

    Core points have at least ``min_pts`` points (themselves included)
    within ``eps``. Clusters are connected components of the core
    eps-graph; a border point joins the cluster of the first core
    neighbour in ascending (delay, power, index) order. Cluster ids are
    numbered in that same order.
    """
    delays = np.asarray(delays, dtype=float)
    powers = np.asarray(powers, dtype=float)
    n = delays.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    adj = pairwise_distance(delays, powers, params) <= params.eps
    core = adj.sum(axis=1) >= params.min_pts
    order = np.lexsort((np.arange(n), powers, delays))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)

    labels = np.full(n, NOISE, dtype=np.int64)
    ci = np.flatnonzero(core)
    if ci.size == 0:
        return labels
    _, comp = connected_components(csr_matrix(adj[np.ix_(ci, ci)]), directed=False)
    # renumber components by their first core point in the canonical order
    first = {}
    for k in np.argsort(rank[ci], kind="stable"):
        first.setdefault(comp[k], len(first))
    labels[ci] = [first[c] for c in comp]
    for i in np.flatnonzero(~core):
        nb = ci[adj[i, ci]]
        if nb.size:
            labels[i] = labels[nb[np.argmin(rank[nb])]]
    return labels


# -- depth tables and label binding ----------------------------------------------

def normalize_depth(raw, d_max: float = DEFAULT_D_MAX_M) -> np.ndarray:
    """Min-max rescale of a relative depth map to ``[0, d_max]`` metres."""
    raw = np.asarray(raw, dtype=float)
    lo, hi = float(raw.min()), float(raw.max())
    if not hi > lo:
        raise AnalysisError("depth image has no range (max == min)")
    return (raw - lo) / (hi - lo) * d_max


def avg_depth(seg_map, depth) -> dict:
    """Mean depth per category id; categories without pixels are absent."""
    seg = np.asarray(seg_map)
    depth = np.asarray(depth, dtype=float)
    if seg.shape != depth.shape:
        raise AnalysisError(f"segmentation {seg.shape} and depth {depth.shape} differ in shape")
    return {int(c): float(depth[seg == c].mean()) for c in np.unique(seg)}


@dataclass(frozen=True)
class DepthTable:
    """frame index -> {category id: average depth in m}."""
    frames: dict = field(default_factory=dict)
    d_max: float = DEFAULT_D_MAX_M

    def __post_init__(self):
        frames = {}
        for f, row in self.frames.items():
            clean = {}
            for cat, depth in row.items():
                depth = float(depth)
                if not 0.0 < depth <= self.d_max:
                    raise AnalysisError(
                        f"frame {f}, category {cat}: depth {depth} m outside (0, {self.d_max}]")
                clean[int(cat)] = depth
            frames[int(f)] = clean
        object.__setattr__(self, "frames", frames)

    def __contains__(self, frame):
        return int(frame) in self.frames and bool(self.frames[int(frame)])

    def __getitem__(self, frame) -> dict:
        return self.frames[int(frame)]

    def __len__(self):
        return len(self.frames)


def delay_to_distance(tau_ns):
    """Mono-static echo distance c*tau/2 in metres."""
    return SPEED_OF_LIGHT * np.asarray(tau_ns, dtype=float) * NS / 2.0


def bind_label(distance_m: float, depths: dict) -> int:
    """Category whose average depth is nearest; ties go to the lowest id."""
    if not depths:
        raise AnalysisError("depth table frame is empty")
    best, best_err = None, math.inf
    for cat in sorted(depths):
        err = abs(distance_m - depths[cat])
        if err < best_err:
            best, best_err = cat, err
    return best


@dataclass(frozen=True)
class LabeledCluster:
    snapshot: int
    cluster_id: int
    label: int
    mean_delay: float          # ns, unweighted mean over member bins
    distance: float            # m
    centroid_bin: int          # strongest member after free-space normalization
    centroid_power_db: float   # measured dB at the centroid bin
    member_bins: tuple
    member_powers_db: tuple    # measured dB

    @property
    def size(self) -> int:
        return len(self.member_bins)


def bind_labels(clusters, depth_table: DepthTable | None):
    """Attach labels to clusters; label 0 when no depth frame is available."""
    from dataclasses import replace
    out = []
    for c in clusters:
        label = bind_label(c.distance, depth_table[c.snapshot]) \
            if depth_table is not None and c.snapshot in depth_table else 0
        out.append(replace(c, label=int(label)))
    return out


# -- per-snapshot clustering pipeline ------------------------------------------

def _centroid_score(bins, powers_db, grid, wavelength_m, two_way):
    from .status import normalize_power
    delays = np.maximum(np.asarray(bins) * grid.bin_ns, grid.bin_ns * 0.5)
    return normalize_power(np.asarray(powers_db), delays, wavelength_m, two_way)


def cluster_snapshot(points, grid: DelayGrid, params: DbscanParams, *, wavelength_m=None,
                     two_way=False):
    """Cluster the retained bins of one snapshot into unlabeled clusters."""
    from .status import DEFAULT_WAVELENGTH_M
    if not points:
        return []
    wavelength_m = wavelength_m or DEFAULT_WAVELENGTH_M
    delays = np.array([p.delay for p in points])
    powers = np.array([p.power_db for p in points])
    ids = dbscan_cluster(delays, powers, params)
    out = []
    for cid in range(ids.max() + 1 if ids.size else 0):
        sel = np.flatnonzero(ids == cid)
        sel = sel[np.argsort(delays[sel], kind="stable")]
        bins = [points[i].bin for i in sel]
        pw = powers[sel]
        score = _centroid_score(bins, pw, grid, wavelength_m, two_way)
        k = int(np.argmax(score))
        tau_bar = float(np.mean(delays[sel]))
        out.append(LabeledCluster(points[0].snapshot, cid, 0, tau_bar, float(delay_to_distance(tau_bar)),
                                  int(bins[k]), float(pw[k]), tuple(int(b) for b in bins),
                                  tuple(float(v) for v in pw)))
    return out


@dataclass(frozen=True)
class AnalysisResult:
    clusters: list
    noise_floor_db: float
    rmsds_ns: np.ndarray          # NaN for empty snapshots
    n_points: int
    n_noise: int

    def to_dict(self) -> dict:
        finite = self.rmsds_ns[np.isfinite(self.rmsds_ns)]
        per_label = {}
        for c in self.clusters:
            per_label[c.label] = per_label.get(c.label, 0) + 1
        return {
            "noise_floor_db": self.noise_floor_db if math.isfinite(self.noise_floor_db) else None,
            "n_snapshots": int(self.rmsds_ns.size),
            "n_retained_bins": self.n_points,
            "n_noise_bins": self.n_noise,
            "n_clusters": len(self.clusters),
            "clusters_per_label": {str(k): v for k, v in sorted(per_label.items())},
            "rmsds_mean_ns": float(finite.mean()) if finite.size else None,
            "rmsds_ns": [float(v) if np.isfinite(v) else None for v in self.rmsds_ns],
        }


def analyze_pdp(pdp, grid: DelayGrid, *, depth_table: DepthTable | None = None,
                params: DbscanParams = DbscanParams(), noise_floor_db=None,
                wavelength_m=None, two_way=False, snapshot_index=None,
                workers: int = 1) -> AnalysisResult:
    pdp = np.atleast_2d(np.asarray(pdp, dtype=float))
    idx = list(range(pdp.shape[0])) if snapshot_index is None else [int(t) for t in snapshot_index]
    points, floor = threshold_pdp(pdp, grid, noise_floor_db, snapshot_index=idx)
    by_snap = {t: [] for t in idx}
    for p in points:
        by_snap[p.snapshot].append(p)

    def work(t):
        return cluster_snapshot(by_snap[t], grid, params, wavelength_m=wavelength_m, two_way=two_way)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_snap = list(pool.map(work, idx))
    else:
        per_snap = [work(t) for t in idx]
    clusters = bind_labels([c for snap in per_snap for c in snap], depth_table)
    n_clustered = sum(c.size for c in clusters)
    return AnalysisResult(clusters, floor, rmsds_series(pdp, grid), len(points), len(points) - n_clustered)


# -- delay spread -------------------------------------------------------------------

def rmsds(pdp_snapshot, delays_ns) -> float:
    p = np.asarray(pdp_snapshot, dtype=float)
    tau = np.asarray(delays_ns, dtype=float)
    total = p.sum()
    if not total > 0:
        raise AnalysisError("RMS delay spread undefined for a snapshot with zero power")
    m1 = (p * tau).sum() / total
    var = (p * (tau - m1) ** 2).sum() / total
    return math.sqrt(max(var, 0.0))


def rmsds_series(pdp, grid: DelayGrid) -> np.ndarray:
    """Per-snapshot RMS delay spread, NaN where a snapshot is empty."""
    pdp = np.atleast_2d(np.asarray(pdp, dtype=float))
    out = np.full(pdp.shape[0], np.nan)
    delays = grid.delays
    for k, row in enumerate(pdp):
        if row.sum() > 0:
            out[k] = rmsds(row, delays)
    return out


def empirical_cdf(values):
    x = np.sort(np.asarray(values, dtype=float))
    return x, np.arange(1, x.size + 1) / x.size


@dataclass(frozen=True)
class ComparisonReport:
    rmsds_a: np.ndarray
    rmsds_b: np.ndarray
    ks_distance: float

    @property
    def mean_a(self) -> float:
        return float(np.mean(self.rmsds_a))

    @property
    def mean_b(self) -> float:
        return float(np.mean(self.rmsds_b))

    def to_dict(self) -> dict:
        xa, fa = empirical_cdf(self.rmsds_a)
        xb, fb = empirical_cdf(self.rmsds_b)
        return {"rmsds_mean_ns": [self.mean_a, self.mean_b], "ks_distance": self.ks_distance,
                "cdf_a": {"x": xa.tolist(), "F": fa.tolist()},
                "cdf_b": {"x": xb.tolist(), "F": fb.tolist()}}


def _rmsds_of(x):
    if isinstance(x, ChannelRealization):
        s = rmsds_series(x.pdp_matrix(), x.grid)
    else:
        pdp, grid = x
        s = rmsds_series(pdp, grid)
    return s[np.isfinite(s)]


def compare_realizations(a, b) -> ComparisonReport:
    """RMSDS of two channels (realizations or ``(pdp, grid)`` pairs), empty snapshots skipped."""
    ra, rb = _rmsds_of(a), _rmsds_of(b)
    if ra.size == 0 or rb.size == 0:
        raise AnalysisError("cannot compare: a channel has no snapshot with power")
    return ComparisonReport(ra, rb, ks_two_sample(ra, rb))
