"""Multi-object tracking: parallel resonators over video frames, lock-on
detection, offset calibration, and error statistics."""

import json
from dataclasses import dataclass, field

import numpy as np

from . import resonator as rn
from . import scenes as sc
from . import vfa


def toroidal_delta(a, b, size: int):
    """Signed shortest displacement a - b on a ring of `size`."""
    return (np.asarray(a, dtype=np.float64) - b + size / 2.0) % size - size / 2.0


def toroidal_distance(p, q, canvas: tuple) -> float:
    w, h = canvas
    dx = toroidal_delta(p[0], q[0], w)
    dy = toroidal_delta(p[1], q[1], h)
    return float(np.hypot(dx, dy))


@dataclass
class TrackRecord:
    network_id: int
    est: np.ndarray  # (T, 2) int decoded positions
    shape_argmax: np.ndarray  # (T,)
    color_argmax: np.ndarray  # (T,)
    lock_frame: int | None = None
    matched_object: int | None = None
    truth: np.ndarray | None = None  # (T, 2) float, matched object
    locked: np.ndarray | None = None  # (T,) bool
    offset: tuple = (0.0, 0.0)
    raw_errors: np.ndarray | None = None  # (T,), NaN before lock
    calibrated_errors: np.ndarray | None = None

    @property
    def n_frames(self) -> int:
        return len(self.est)


def detect_lock_on(shape_argmax: np.ndarray, color_argmax: np.ndarray, k: int = 5):
    """First frame t whose shape and color argmaxes are unchanged over the k
    frames ending at t; None if never stable that long.  Internal criterion
    only -- no ground truth involved."""
    if k < 2:
        raise ValueError("k must be >= 2")
    run = 1
    for t in range(len(shape_argmax)):
        if t > 0:
            if shape_argmax[t] == shape_argmax[t - 1] and color_argmax[t] == color_argmax[t - 1]:
                run += 1
            else:
                run = 1
        if run >= k:
            return t
    return None


def calibrate_offset(record: TrackRecord, canvas: tuple) -> tuple:
    """Mean (est - truth) over locked frames, toroidal-aware; evaluation-only."""
    if record.lock_frame is None or record.truth is None:
        raise ValueError("no locked frames to calibrate against")
    w, h = canvas
    sel = slice(record.lock_frame, None)
    dx = toroidal_delta(record.est[sel, 0], record.truth[sel, 0], w).mean()
    dy = toroidal_delta(record.est[sel, 1], record.truth[sel, 1], h).mean()
    return float(dx), float(dy)


def track(
    frames: list,
    truths: np.ndarray,
    basis,
    codebooks: dict,
    config: rn.ResonatorConfig,
    n_networks: int,
    seed,
    lock_k: int = 5,
) -> list:
    """Track objects through pre-rendered frames with parallel resonators.

    One resonator iteration per frame; networks carry state across frames and
    exchange explanations every frame.  `truths` is (T, n_objects, 2) float
    ground truth used only for matching and calibration afterwards.
    """
    n_frames = len(frames)
    gain = 0.5 if config.explain_gain is None else config.explain_gain
    state = rn.init_state(basis, codebooks, seed, n_lanes=n_networks, config=config)
    w, h = basis.canvas

    est = np.zeros((n_networks, n_frames, 2), dtype=int)
    shape_am = np.zeros((n_networks, n_frames), dtype=int)
    color_am = np.zeros((n_networks, n_frames), dtype=int)
    for t, frame in enumerate(frames):
        s = vfa.encode_rgb(basis, frame)
        state = rn.parallel_step(state, s, codebooks, config, gain)
        snap = state.history[-1]
        for lane in range(n_networks):
            dx = rn.profile_peak(snap["pos_h"][:, lane], w)
            dy = rn.profile_peak(snap["pos_v"][:, lane], h)
            est[lane, t] = ((dx + w // 2) % w, (dy + h // 2) % h)
            shape_am[lane, t] = snap["shape"][:, lane].argmax()
            color_am[lane, t] = snap["color"][:, lane].argmax()
    if len(state.history) > 2 * lock_k:  # keep memory bounded over long videos
        del state.history[: -2 * lock_k]

    records = [
        TrackRecord(
            network_id=lane,
            est=est[lane],
            shape_argmax=shape_am[lane],
            color_argmax=color_am[lane],
            lock_frame=detect_lock_on(shape_am[lane], color_am[lane], lock_k),
        )
        for lane in range(n_networks)
    ]
    _match_and_score(records, truths, basis.canvas)
    return records


def _mean_post_lock_distance(record: TrackRecord, truth_xy: np.ndarray, canvas: tuple) -> float:
    t0 = record.lock_frame if record.lock_frame is not None else 0
    w, h = canvas
    dx = toroidal_delta(record.est[t0:, 0], truth_xy[t0:, 0], w)
    dy = toroidal_delta(record.est[t0:, 1], truth_xy[t0:, 1], h)
    return float(np.hypot(dx, dy).mean())


def _match_and_score(records: list, truths: np.ndarray, canvas: tuple):
    """Greedy one-to-one assignment of networks to ground-truth objects by mean
    post-lock toroidal distance, then per-frame error computation."""
    n_objects = truths.shape[1]
    w, h = canvas
    # locked networks pick first, by их best achievable distance
    order = sorted(
        range(len(records)),
        key=lambda i: (records[i].lock_frame is None, records[i].lock_frame or 0),
    )
    taken = set()
    for i in order:
        rec = records[i]
        dists = [
            _mean_post_lock_distance(rec, truths[:, j], canvas) if j not in taken else np.inf
            for j in range(n_objects)
        ]
        j = int(np.argmin(dists))
        if np.isinf(dists[j]):
            continue
        taken.add(j)
        rec.matched_object = j
        rec.truth = truths[:, j].astype(np.float64)

    for rec in records:
        n_frames = rec.n_frames
        rec.locked = np.zeros(n_frames, dtype=bool)
        rec.raw_errors = np.full(n_frames, np.nan)
        rec.calibrated_errors = np.full(n_frames, np.nan)
        if rec.truth is None:
            continue
        dx = toroidal_delta(rec.est[:, 0], rec.truth[:, 0], w)
        dy = toroidal_delta(rec.est[:, 1], rec.truth[:, 1], h)
        err = np.hypot(dx, dy)
        if rec.lock_frame is None:
            continue
        rec.locked[rec.lock_frame :] = True
        rec.raw_errors[rec.lock_frame :] = err[rec.lock_frame :]
        rec.offset = calibrate_offset(rec, canvas)
        cdx = toroidal_delta(rec.est[:, 0] - rec.offset[0], rec.truth[:, 0], w)
        cdy = toroidal_delta(rec.est[:, 1] - rec.offset[1], rec.truth[:, 1], h)
        rec.calibrated_errors[rec.lock_frame :] = np.hypot(cdx, cdy)[rec.lock_frame :]


def run_tracking_experiment(
    digits,
    dictionary,
    basis,
    codebooks: dict,
    config: rn.ResonatorConfig,
    seed: int,
    n_objects: int = 3,
    n_frames: int = 60,
    speed_range: tuple = (0.5, 2.0),
    palette: np.ndarray = sc.PALETTE,
    lock_k: int = 5,
) -> tuple:
    """One seeded moving-scene experiment; returns (records, spec)."""
    spec, _ = sc.random_scene(
        digits, palette, n_objects, basis.canvas, seed=seed, trajectories=True,
        speed_range=speed_range,
    )
    frames = [sc.render_frame(spec, digits, t, palette) for t in range(n_frames)]
    truths = np.array(
        [[(gt[2], gt[3]) for gt in sc.ground_truth(spec, t)] for t in range(n_frames)]
    )  # (T, n_objects, 2)
    records = track(
        frames, truths, basis, codebooks, config, n_networks=n_objects,
        seed=(seed, 104729), lock_k=lock_k,
    )
    return records, spec


def pooled_errors(records: list, which: str) -> np.ndarray:
    vals = []
    for rec in records:
        arr = rec.raw_errors if which == "raw" else rec.calibrated_errors
        if arr is not None:
            vals.extend(arr[~np.isnan(arr)])
    return np.asarray(vals)


def summarize(records: list) -> dict:
    """Lock rates plus mean/median/p95 of post-lock errors, pooled per frame and
    aggregated per object."""
    out = {
        "n_networks": len(records),
        "n_locked": sum(r.lock_frame is not None for r in records),
    }
    out["lock_rate"] = out["n_locked"] / out["n_networks"] if records else 0.0
    for which in ("raw", "calibrated"):
        pooled = pooled_errors(records, which)
        per_object = [
            float(np.nanmean(r.raw_errors if which == "raw" else r.calibrated_errors))
            for r in records
            if r.lock_frame is not None and r.truth is not None
        ]
        key = f"{which}_post_lock"
        if pooled.size:
            out[key] = {
                "mean": float(pooled.mean()),
                "median": float(np.median(pooled)),
                "p95": float(np.percentile(pooled, 95)),
                "frac_under_5px": float((pooled < 5.0).mean()),
                "n_frames": int(pooled.size),
            }
            out[key + "_per_object"] = {
                "mean": float(np.mean(per_object)),
                "median": float(np.median(per_object)),
                "p95": float(np.percentile(per_object, 95)),
                "frac_under_5px": float((np.asarray(per_object) < 5.0).mean()),
                "n_objects": len(per_object),
            }
        else:
            out[key] = None
            out[key + "_per_object"] = None
    return out


def write_track_csv(path, all_records: list, mode: str = "w"):
    """Per-frame log: experiment, frame, network, est/truth, locked, errors."""
    with open(path, mode) as f:
        if mode == "w":
            f.write(
                "experiment,frame,network,est_x,est_y,truth_x,truth_y,locked,raw_err,cal_err\n"
            )
        for exp_id, records in all_records:
            for rec in records:
                for t in range(rec.n_frames):
                    tx, ty = ("", "")
                    if rec.truth is not None:
                        tx, ty = f"{rec.truth[t, 0]:.17g}", f"{rec.truth[t, 1]:.17g}"
                    raw = rec.raw_errors[t] if rec.raw_errors is not None else np.nan
                    cal = rec.calibrated_errors[t] if rec.calibrated_errors is not None else np.nan
                    f.write(
                        f"{exp_id},{t},{rec.network_id},{rec.est[t, 0]},{rec.est[t, 1]},"
                        f"{tx},{ty},{int(bool(rec.locked[t])) if rec.locked is not None else 0},"
                        f"{'' if np.isnan(raw) else format(raw, '.17g')},"
                        f"{'' if np.isnan(cal) else format(cal, '.17g')}\n"
                    )


def write_summary_json(path, summary: dict):
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
