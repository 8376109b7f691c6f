"""File formats.

Libraries, scripts, configs, reports and manifests are JSON documents
with a ``format`` tag, explicit units in key names and ``estimated``
provenance flags. Channel data (PDP matrix, CIR list, labeled clusters,
depth tables) are comma-separated decimal text; ``#`` lines carry
``key=value`` metadata. Floats are written with ``repr`` so every value
parses back bit-exactly.

PDP matrix::

    # semchan-pdp v1
    # delay_bin_ns=1.0
    # n_bins=334
    snapshot,b0,b1,...,b333
    0,0,0,1.52e-09,...

CIR list (one row per multipath)::

    snapshot,delay_bin,real,imag,label_id,cluster_id,birth_snapshot

Labeled clusters::

    snapshot,cluster_id,label,mean_delay_ns,distance_m,centroid_bin,centroid_power_db,member_bins,member_powers_db

with member lists joined by ``;``. Depth table::

    frame_index,category_id,avg_depth_m
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .behavior import BehaviorLibrary, BehaviorProfile, TransitionMatrixError
from .core import LABEL_NAMES, BehaviorKind, ChannelRealization, DelayGrid, SemanticLabel
from .distributions import DistributionError, DistributionSpec, Family
from .events import (
    N_LABELS, BehaviorCorrelationMatrix, CentroidInitRange, CentroidRange, ConfigError,
    EventMatrices, EventScript, ScriptToken, StatusCooccurrenceMatrix,
)
from .status import DEFAULT_WAVELENGTH_M, StatusLibrary, StatusProfile

LIB_DIR_ENV = "SEMCHAN_LIB_DIR"
DEFAULT_FILES = {
    "status": "status_library.json",
    "behavior": "behavior_library.json",
    "events": "event_matrices.json",
}
# shipped transition rows are rounded to 4 decimals; rows off by more than
# this are rejected rather than renormalized
ROW_RENORMALIZE_TOL = 2e-3


class FormatError(ValueError):
    """A file failed to parse or validate. ``where`` names the field or line."""

    def __init__(self, message, where=None, path=None):
        prefix = f"{path}: " if path else ""
        loc = f"{where}: " if where else ""
        super().__init__(f"{prefix}{loc}{message}")
        self.where = where
        self.path = path


# -- generic helpers -----------------------------------------------------------

def fmt(x) -> str:
    x = float(x)
    if x == 0.0:
        return "0"
    return repr(x)


def _read_json(path):
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise FormatError(f"invalid JSON ({err.msg})", where=f"line {err.lineno}", path=path) from None


def _write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")
    return path


def _nan_to_none(a):
    return [[None if not np.isfinite(v) else float(v) for v in row] for row in np.asarray(a)]


def _none_to_nan(rows):
    return np.array([[math.nan if v is None else float(v) for v in row] for row in rows], dtype=float)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def default_library_dir() -> Path:
    env = os.environ.get(LIB_DIR_ENV)
    if env:
        return Path(env)
    return Path(resources.files("semchan") / "data")


def default_library_path(kind: str) -> Path:
    return default_library_dir() / DEFAULT_FILES[kind]


# -- distribution specs ----------------------------------------------------------

def dist_to_dict(spec: DistributionSpec) -> dict:
    return {"family": spec.family.key, "params": {k: v for k, v in spec.named.items()}}


def dist_from_dict(doc, where="distribution") -> DistributionSpec:
    try:
        fam = Family.parse(doc["family"])
        params = doc["params"]
        if isinstance(params, dict):
            values = [params[name] for name in fam.param_names]
        else:
            order = doc.get("param_order", fam.param_names)
            if sorted(order) != sorted(fam.param_names):
                raise FormatError(f"param_order {order} does not name {fam.param_names}", where)
            named = dict(zip(order, params))
            values = [named[name] for name in fam.param_names]
        return DistributionSpec(fam, tuple(values))
    except KeyError as err:
        raise FormatError(f"missing field {err}", where) from None
    except DistributionError as err:
        raise FormatError(str(err), where) from None


# -- status library ----------------------------------------------------------------

def status_library_to_dict(lib: StatusLibrary) -> dict:
    profiles = []
    for label in lib.labels:
        p = lib[label]
        profiles.append({
            "label": int(label),
            "name": LABEL_NAMES[int(label)],
            "number": dist_to_dict(p.number_dist),
            "delay_scale_pos_ns": p.delay_scale_pos,
            "delay_scale_neg_ns": p.delay_scale_neg,
            "decay_slope_db_per_ns": p.decay_slope,
            "decay_intercept_db": p.decay_intercept,
            "residual_db": dist_to_dict(p.residual),
            "side_prob_pos": p.side_prob_pos,
            "estimated": p.estimated,
        })
    return {
        "format": "semchan/status-library",
        "version": 1,
        "carrier_wavelength_m": lib.wavelength_m,
        "two_way_pathloss": lib.two_way_pathloss,
        "conventions": {
            "relative_delay": "centroid_minus_member",
            "relative_power": "centroid_minus_member",
            "delay_scale": "mean_ns",
        },
        "profiles": profiles,
    }


def status_library_from_dict(doc, path=None) -> StatusLibrary:
    if doc.get("format") != "semchan/status-library":
        raise FormatError(f"expected format semchan/status-library, got {doc.get('format')!r}", path=path)
    conv = doc.get("conventions", {}).get("delay_scale", "mean_ns")
    if conv not in ("mean_ns", "rate_per_ns"):
        raise FormatError(f"unknown delay_scale convention {conv!r}", "conventions", path)
    profiles = {}
    for k, row in enumerate(doc.get("profiles", [])):
        where = f"profiles[{k}]"
        try:
            label = SemanticLabel(int(row["label"]))
            where = f"profiles[{k}] (label {int(label)})"
            pos, neg = float(row["delay_scale_pos_ns"]), float(row["delay_scale_neg_ns"])
            if conv == "rate_per_ns":
                pos, neg = 1.0 / pos, 1.0 / neg
            profile = StatusProfile(
                label=label,
                number_dist=dist_from_dict(row["number"], f"{where}.number"),
                delay_scale_pos=pos,
                delay_scale_neg=neg,
                decay_slope=float(row["decay_slope_db_per_ns"]),
                decay_intercept=float(row["decay_intercept_db"]),
                residual=dist_from_dict(row["residual_db"], f"{where}.residual_db"),
                side_prob_pos=float(row.get("side_prob_pos", 0.5)),
                estimated=bool(row.get("estimated", False)),
            )
        except KeyError as err:
            raise FormatError(f"missing field {err}", where, path) from None
        except FormatError as err:
            raise FormatError(str(err), path=path) from None
        except (TypeError, ValueError) as err:
            raise FormatError(str(err), where, path) from None
        if label in profiles:
            raise FormatError(f"duplicate profile for label {int(label)}", where, path)
        profiles[label] = profile
    if not profiles:
        raise FormatError("status library has no profiles", path=path)
    return StatusLibrary(profiles, float(doc.get("carrier_wavelength_m", DEFAULT_WAVELENGTH_M)),
                         bool(doc.get("two_way_pathloss", False)))


def load_status_library(path) -> StatusLibrary:
    return status_library_from_dict(_read_json(path), path)


def save_status_library(lib: StatusLibrary, path):
    return _write_json(path, status_library_to_dict(lib))


# -- behavior library ----------------------------------------------------------------

def behavior_library_to_dict(lib: BehaviorLibrary) -> dict:
    rows = []
    for kind in sorted(lib.profiles):
        p = lib.profiles[kind]
        rows.append({
            "kind": kind.key,
            "transition": p.transition.tolist(),
            "duration_snapshots": dist_to_dict(p.duration_dist),
            "power_variation_db": dist_to_dict(p.power_var_dist),
        })
    return {
        "format": "semchan/behavior-library",
        "version": 1,
        "states": ["unchanged", "advancing", "delaying", "birth_death"],
        "duration_unit": "snapshots",
        "renormalize_rows": False,
        "behaviors": rows,
    }


def _renormalize(P, where, path):
    P = np.asarray(P, dtype=float)
    if P.shape != (4, 4):
        raise FormatError(f"transition matrix must be 4x4, got shape {P.shape}", where, path)
    sums = P.sum(axis=1)
    for i, s in enumerate(sums):
        if abs(s - 1.0) > ROW_RENORMALIZE_TOL:
            raise FormatError(f"transition row {i + 1} sums to {s:.6g}, expected 1", where, path)
    return P / sums[:, None]


def behavior_library_from_dict(doc, path=None) -> BehaviorLibrary:
    if doc.get("format") != "semchan/behavior-library":
        raise FormatError(f"expected format semchan/behavior-library, got {doc.get('format')!r}", path=path)
    unit = doc.get("duration_unit", "snapshots")
    sps = doc.get("snapshots_per_second")
    if unit not in ("snapshots", "seconds"):
        raise FormatError(f"unknown duration unit {unit!r}", "duration_unit", path)
    if unit == "seconds" and not (sps and sps > 0):
        raise FormatError("duration_unit 'seconds' needs a positive snapshots_per_second",
                          "snapshots_per_second", path)
    profiles = {}
    for k, row in enumerate(doc.get("behaviors", [])):
        where = f"behaviors[{k}]"
        try:
            kind = BehaviorKind.parse(row["kind"])
            where = f"behaviors[{k}] ({kind.key})"
            P = row["transition"]
            if doc.get("renormalize_rows", False):
                P = _renormalize(P, where, path)
            duration = dist_from_dict(row["duration_snapshots"], f"{where}.duration_snapshots")
            if unit == "seconds":
                if duration.family is not Family.LOGNORMAL:
                    raise FormatError("seconds-based durations must be log-normal", where, path)
                duration = DistributionSpec.lognormal(duration.params[0] + math.log(sps), duration.params[1])
            profile = BehaviorProfile(kind, P, duration,
                                      dist_from_dict(row["power_variation_db"], f"{where}.power_variation_db"))
        except KeyError as err:
            raise FormatError(f"missing field {err}", where, path) from None
        except TransitionMatrixError as err:
            raise FormatError(str(err), where, path) from None
        except FormatError:
            raise
        except (TypeError, ValueError) as err:
            raise FormatError(str(err), where, path) from None
        profiles[kind] = profile
    if not profiles:
        raise FormatError("behavior library has no behaviors", path=path)
    return BehaviorLibrary(profiles)


def load_behavior_library(path) -> BehaviorLibrary:
    return behavior_library_from_dict(_read_json(path), path)


def save_behavior_library(lib: BehaviorLibrary, path):
    return _write_json(path, behavior_library_to_dict(lib))


# -- event matrices ----------------------------------------------------------------

def event_matrices_to_dict(em: EventMatrices) -> dict:
    return {
        "format": "semchan/event-matrices",
        "version": 1,
        "labels": list(range(1, N_LABELS + 1)),
        "behavior_correlation": {b.key: _nan_to_none([em.bcm.values[b - 1]])[0] for b in BehaviorKind},
        "behavior_correlation_estimated": {b.key: em.bcm.estimated[b - 1].tolist() for b in BehaviorKind},
        "status_cooccurrence": _nan_to_none(em.scm.values),
        "status_cooccurrence_estimated": em.scm.estimated.tolist(),
        "centroid_ranges": [
            {"label": int(lab), "delay_ns": list(r.delay_ns), "power_db": list(r.power_db),
             "estimated": r.estimated}
            for lab, r in sorted(em.ranges.ranges.items())
        ],
    }


def event_matrices_from_dict(doc, path=None) -> EventMatrices:
    if doc.get("format") != "semchan/event-matrices":
        raise FormatError(f"expected format semchan/event-matrices, got {doc.get('format')!r}", path=path)
    try:
        bcm_doc = doc["behavior_correlation"]
        bcm = _none_to_nan([bcm_doc.get(b.key, [None] * N_LABELS) for b in BehaviorKind])
        est_doc = doc.get("behavior_correlation_estimated", {})
        bcm_est = [est_doc.get(b.key, [False] * N_LABELS) for b in BehaviorKind]
        scm = _none_to_nan(doc["status_cooccurrence"])
        scm_est = doc.get("status_cooccurrence_estimated")
        ranges = {}
        for k, row in enumerate(doc.get("centroid_ranges", [])):
            ranges[int(row["label"])] = CentroidRange(tuple(row["delay_ns"]), tuple(row["power_db"]),
                                                      bool(row.get("estimated", False)))
        return EventMatrices(BehaviorCorrelationMatrix(bcm, bcm_est),
                             StatusCooccurrenceMatrix(scm, scm_est),
                             CentroidInitRange(ranges))
    except KeyError as err:
        raise FormatError(f"missing field {err}", path=path) from None
    except (ConfigError, TypeError, ValueError) as err:
        raise FormatError(str(err), path=path) from None


def load_event_matrices(path) -> EventMatrices:
    return event_matrices_from_dict(_read_json(path), path)


def save_event_matrices(em: EventMatrices, path):
    return _write_json(path, event_matrices_to_dict(em))


# -- event script ----------------------------------------------------------------

def event_script_to_dict(script: EventScript) -> dict:
    tokens = []
    for t in script.tokens:
        tok = {"behavior": t.behavior.key}
        if t.duration is not None:
            tok["duration_snapshots"] = int(t.duration)
        if t.radius_m is not None:
            tok["turn_radius_m"] = t.radius_m
        if t.angle_rad is not None:
            tok["turn_angle_rad"] = t.angle_rad
        if t.labels is not None:
            tok["labels"] = sorted(int(v) for v in t.labels)
        tokens.append(tok)
    doc = {"format": "semchan/event-script", "version": 1, "tokens": tokens}
    if script.seed is not None:
        doc["seed"] = int(script.seed)
    return doc


def event_script_from_dict(doc, path=None) -> EventScript:
    if doc.get("format", "semchan/event-script") != "semchan/event-script":
        raise FormatError(f"expected format semchan/event-script, got {doc.get('format')!r}", path=path)
    try:
        if "tokens" in doc:
            tokens = []
            for k, t in enumerate(doc["tokens"]):
                if not isinstance(t, dict):
                    t = {"behavior": t}
                tokens.append(ScriptToken(t["behavior"], t.get("duration_snapshots"),
                                          t.get("turn_radius_m"), t.get("turn_angle_rad"),
                                          t.get("labels")))
        else:
            behaviors = doc["behaviors"]
            durations = doc.get("durations") or [None] * len(behaviors)
            if len(durations) != len(behaviors):
                raise FormatError("durations must match behaviors in length", "durations", path)
            tokens = [ScriptToken(b, d) for b, d in zip(behaviors, durations)]
        return EventScript(tuple(tokens), doc.get("seed"))
    except KeyError as err:
        raise FormatError(f"missing field {err}", path=path) from None
    except (ConfigError, ValueError) as err:
        raise FormatError(str(err), path=path) from None


def load_event_script(path) -> EventScript:
    return event_script_from_dict(_read_json(path), path)


def save_event_script(script: EventScript, path):
    return _write_json(path, event_script_to_dict(script))


# -- generator config ----------------------------------------------------------------

CONFIG_KEYS = {
    "delay_bin_ns": "delay_bin", "d_max_m": "d_max", "snapshot_rate_hz": "snapshot_rate",
    "two_way_pathloss": "two_way_pathloss", "seed": "seed", "turn_radius_m": "turn_radius",
    "turn_angle_rad": "turn_angle", "spawn_fraction": "spawn_fraction",
}
LIBRARY_KEYS = {"status_library": "status", "behavior_library": "behavior", "event_matrices": "events"}


def load_config(path=None):
    """Generator config plus the paths of the libraries it resolved."""
    from .generator import GeneratorConfig

    doc = _read_json(path) if path else {}
    base = Path(path).parent if path else Path.cwd()
    kwargs, lib_paths = {}, {}
    for key, value in doc.items():
        if key in CONFIG_KEYS:
            kwargs[CONFIG_KEYS[key]] = value
        elif key in LIBRARY_KEYS:
            if value is not None:
                lib_paths[LIBRARY_KEYS[key]] = (base / value) if not Path(value).is_absolute() else Path(value)
        elif key not in ("format", "version"):
            raise FormatError(f"unknown config field {key!r}", path=path)
    for kind in DEFAULT_FILES:
        lib_paths.setdefault(kind, default_library_path(kind))
    kwargs["status"] = load_status_library(lib_paths["status"])
    kwargs["behavior"] = load_behavior_library(lib_paths["behavior"])
    kwargs["events"] = load_event_matrices(lib_paths["events"])
    try:
        cfg = GeneratorConfig(**kwargs)
    except (TypeError, ValueError) as err:
        raise FormatError(str(err), path=path) from None
    return cfg.resolved(), lib_paths


# -- channel data ----------------------------------------------------------------

def _write_meta(fh, tag, meta):
    fh.write(f"# {tag}\n")
    for k, v in meta.items():
        fh.write(f"# {k}={v}\n")


def _read_table(path):
    meta, header, rows = {}, None, []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append((lineno, next(csv.reader([line]))))
    if header is None:
        raise FormatError("missing header row", path=path)
    return meta, header, rows


def write_pdp(path, pdp, delay_bin_ns: float, snapshot_index=None):
    pdp = np.asarray(pdp, dtype=float)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    idx = range(pdp.shape[0]) if snapshot_index is None else snapshot_index
    with open(path, "w") as fh:
        _write_meta(fh, "semchan-pdp v1", {"delay_bin_ns": fmt(delay_bin_ns), "n_bins": pdp.shape[1],
                                           "units": "linear_power"})
        fh.write("snapshot," + ",".join(f"b{b}" for b in range(pdp.shape[1])) + "\n")
        for t, row in zip(idx, pdp):
            fh.write(f"{int(t)}," + ",".join(fmt(v) for v in row) + "\n")
    return path


@dataclass(frozen=True)
class PdpData:
    pdp: np.ndarray
    delay_bin: float
    snapshots: np.ndarray

    @property
    def grid(self) -> DelayGrid:
        return DelayGrid(self.delay_bin, self.pdp.shape[1])


def read_pdp(path) -> PdpData:
    meta, header, rows = _read_table(path)
    if header[0] != "snapshot":
        raise FormatError("first column must be 'snapshot'", "header", path)
    n_bins = len(header) - 1
    try:
        delay_bin = float(meta.get("delay_bin_ns", "1"))
    except ValueError:
        raise FormatError("delay_bin_ns is not a number", "metadata", path) from None
    data = np.empty((len(rows), n_bins))
    snaps = np.empty(len(rows), dtype=np.int64)
    for k, (lineno, fields) in enumerate(rows):
        if len(fields) != n_bins + 1:
            raise FormatError(f"expected {n_bins + 1} fields, got {len(fields)}", f"line {lineno}", path)
        try:
            snaps[k] = int(fields[0])
            data[k] = [float(v) for v in fields[1:]]
        except ValueError as err:
            raise FormatError(str(err), f"line {lineno}", path) from None
        if np.any(data[k] < 0) or not np.all(np.isfinite(data[k])):
            raise FormatError("PDP powers must be finite and nonnegative", f"line {lineno}", path)
    return PdpData(data, delay_bin, snaps)


def write_cir(path, realization: ChannelRealization):
    grid = realization.grid
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        _write_meta(fh, "semchan-cir v1", {"delay_bin_ns": fmt(grid.bin_ns), "n_bins": grid.n_bins})
        fh.write("snapshot,delay_bin,real,imag,label_id,cluster_id,birth_snapshot\n")
        for snap in realization.snapshots:
            for c in snap.clusters:
                for m in c.members:
                    g = m.gain
                    b = int(grid.quantize(m.delay))
                    fh.write(f"{snap.time_index},{b},{fmt(g.real)},{fmt(g.imag)},{int(m.label)},"
                             f"{c.uid},{c.birth_snapshot}\n")
    return path


@dataclass(frozen=True)
class CirRecord:
    snapshot: int
    delay_bin: int
    gain: complex
    label: int
    cluster_id: int
    birth_snapshot: int


def read_cir(path):
    meta, header, rows = _read_table(path)
    out = []
    for lineno, f in rows:
        try:
            out.append(CirRecord(int(f[0]), int(f[1]), complex(float(f[2]), float(f[3])), int(f[4]),
                                 int(f[5]) if len(f) > 5 else -1, int(f[6]) if len(f) > 6 else -1))
        except (ValueError, IndexError) as err:
            raise FormatError(str(err), f"line {lineno}", path) from None
    return float(meta.get("delay_bin_ns", "1")), int(meta.get("n_bins", "0")), out


def write_depth_table(path, table):
    """``table`` maps frame index -> {category id: average depth in m}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("frame_index,category_id,avg_depth_m\n")
        for frame in sorted(table):
            for cat in sorted(table[frame]):
                fh.write(f"{int(frame)},{int(cat)},{fmt(table[frame][cat])}\n")
    return path


def read_depth_table(path) -> dict:
    _, header, rows = _read_table(path)
    if header[:3] != ["frame_index", "category_id", "avg_depth_m"]:
        raise FormatError("header must be frame_index,category_id,avg_depth_m", "header", path)
    out = {}
    for lineno, f in rows:
        try:
            frame, cat, depth = int(f[0]), int(f[1]), float(f[2])
        except (ValueError, IndexError) as err:
            raise FormatError(str(err), f"line {lineno}", path) from None
        if not depth > 0:
            raise FormatError(f"average depth must be > 0, got {depth}", f"line {lineno}", path)
        out.setdefault(frame, {})[cat] = depth
    return out


LABELED_HEADER = ("snapshot,cluster_id,label,mean_delay_ns,distance_m,centroid_bin,"
                  "centroid_power_db,member_bins,member_powers_db")


def write_labeled_clusters(path, clusters, delay_bin_ns: float):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        _write_meta(fh, "semchan-labeled-clusters v1", {"delay_bin_ns": fmt(delay_bin_ns)})
        fh.write(LABELED_HEADER + "\n")
        for c in clusters:
            fh.write(",".join([
                str(c.snapshot), str(c.cluster_id), str(c.label), fmt(c.mean_delay), fmt(c.distance),
                str(c.centroid_bin), fmt(c.centroid_power_db),
                ";".join(str(b) for b in c.member_bins),
                ";".join(fmt(p) for p in c.member_powers_db),
            ]) + "\n")
    return path


def read_labeled_clusters(path):
    from .analyzer import LabeledCluster

    meta, header, rows = _read_table(path)
    if ",".join(header) != LABELED_HEADER:
        raise FormatError(f"header must be {LABELED_HEADER}", "header", path)
    out = []
    for lineno, f in rows:
        try:
            bins = tuple(int(v) for v in f[7].split(";") if v)
            powers = tuple(float(v) for v in f[8].split(";") if v)
            if len(bins) != len(powers):
                raise ValueError("member_bins and member_powers_db differ in length")
            out.append(LabeledCluster(int(f[0]), int(f[1]), int(f[2]), float(f[3]), float(f[4]),
                                      int(f[5]), float(f[6]), bins, powers))
        except (ValueError, IndexError) as err:
            raise FormatError(str(err), f"line {lineno}", path) from None
    return float(meta.get("delay_bin_ns", "1")), out


def write_json_report(path, doc):
    return _write_json(path, doc)


def read_json(path):
    return _read_json(path)


# -- per-snapshot event annotation ------------------------------------------------

EVENTS_HEADER = "snapshot,behavior,active_labels,dominant_labels,fallback"


def write_events(path, event_map):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("# semchan-events v1\n")
        fh.write(EVENTS_HEADER + "\n")
        for seg in event_map.segments:
            active = ";".join(str(int(v)) for v in sorted(seg.active))
            dominant = ";".join(str(int(v)) for v in sorted(seg.dominant))
            for t in range(seg.start, seg.stop):
                fh.write(f"{t},{seg.behavior.key},{active},{dominant},{int(seg.fallback)}\n")
    return path


def read_events(path):
    """Per-snapshot annotation as a :class:`semchan.fitting.BehaviorTrack`."""
    from .fitting import BehaviorTrack

    _, header, rows = _read_table(path)
    if ",".join(header) != EVENTS_HEADER:
        raise FormatError(f"header must be {EVENTS_HEADER}", "header", path)
    behaviors, dominant, fallback = [], [], []
    for k, (lineno, f) in enumerate(rows):
        try:
            if int(f[0]) != k:
                raise ValueError(f"snapshots must be contiguous from 0, got {f[0]}")
            behaviors.append(BehaviorKind.parse(f[1]))
            dominant.append(frozenset(int(v) for v in f[3].split(";") if v))
            fallback.append(bool(int(f[4])))
        except (ValueError, IndexError) as err:
            raise FormatError(str(err), f"line {lineno}", path) from None
    return BehaviorTrack(tuple(behaviors), tuple(dominant), tuple(fallback))
