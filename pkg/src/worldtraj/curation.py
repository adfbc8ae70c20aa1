"""Data curation over pre-extracted per-frame masks and components.

External segmenters/trackers are consumed as files: connected components as
JSON records, masks as run-length encodings. This module keeps the
plausibility filtering, cross-frame association, scoring, window selection
and query-point seeding that turn those raw detections into training tuples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .metrics import regime_classify

MIN_AREA_FRACTION = 0.001
MAX_AREA_FRACTION = 0.30
MATCH_RADIUS_FRACTION = 0.15  # of the frame diagonal
AREA_PLATEAU_LO = 0.005
AREA_PLATEAU_HI = 0.15
COHERENCE_SCALE = 0.05  # mean jump (fraction of diagonal) for one e-fold
MIN_WINDOW_COVERAGE = 0.30
DEFAULT_WINDOW = 97
DEFAULT_MIN_DISPLACEMENT = 0.05
DEFAULT_QUERY_POINTS = 20


class CurationError(ValueError):
    pass


@dataclass(frozen=True)
class Component:
    frame: int
    centroid: np.ndarray
    area: float
    mask_ref: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "centroid", np.asarray(self.centroid, dtype=float).reshape(2))
        if not self.area > 0:
            raise CurationError(f"component area must be positive, got {self.area}")


@dataclass
class Tracklet:
    components: list  # time-ordered, at most one per frame
    frame_area: float  # pixels of the full frame, for area fractions
    diag: float

    @property
    def n_frames(self) -> int:
        return len(self.components)

    @property
    def mean_area_fraction(self) -> float:
        return float(np.mean([c.area for c in self.components])) / self.frame_area

    @property
    def mean_jump(self) -> float:
        """Mean frame-to-frame centroid step, as a fraction of the diagonal."""
        if len(self.components) < 2:
            return 0.0
        steps = [
            float(np.linalg.norm(b.centroid - a.centroid))
            for a, b in zip(self.components, self.components[1:])
        ]
        return float(np.mean(steps)) / self.diag

    @property
    def frames(self) -> list[int]:
        return [c.frame for c in self.components]


@dataclass(frozen=True)
class ClipWindow:
    start: int
    length: int
    coverage: float
    net_displacement: float = 0.0


def filter_components(components, frame_area: float) -> list[Component]:
    """Keep components whose area fraction lies in [0.1%, 30%] of the frame."""
    if not frame_area > 0:
        raise CurationError("frame area must be positive")
    return [
        c for c in components
        if MIN_AREA_FRACTION <= c.area / frame_area <= MAX_AREA_FRACTION
    ]


def match_tracklets(components_by_frame: dict, diag: float) -> list[Tracklet]:
    """Greedy forward-in-time association of components by centroid proximity.

    At each frame transition, candidate (open tracklet, component) pairs
    within 15% of the diagonal are consumed in order of (distance, tracklet
    index, component index); leftovers start new tracklets. Each component
    joins at most one tracklet.
    """
    if not components_by_frame:
        return []
    frames = sorted(components_by_frame)
    threshold = MATCH_RADIUS_FRACTION * diag

    tracklets: list[list[Component]] = []
    open_idx: list[int] = []  # tracklets still matchable (had a component last frame)

    first = components_by_frame[frames[0]]
    for c in first:
        tracklets.append([c])
    open_idx = list(range(len(tracklets)))

    for prev_f, cur_f in zip(frames, frames[1:]):
        cur = components_by_frame[cur_f]
        if cur_f != prev_f + 1:
            open_idx = []  # gap in the frame sequence closes all tracklets
        pairs = []
        for oi, ti in enumerate(open_idx):
            tail = tracklets[ti][-1].centroid
            for cj, comp in enumerate(cur):
                d = float(np.linalg.norm(comp.centroid - tail))
                if d <= threshold:
                    pairs.append((d, oi, cj))
        pairs.sort()
        used_t, used_c = set(), set()
        assigned = {}
        for d, oi, cj in pairs:
            if oi in used_t or cj in used_c:
                continue
            used_t.add(oi)
            used_c.add(cj)
            assigned[cj] = open_idx[oi]
        next_open = []
        for cj, comp in enumerate(cur):
            if cj in assigned:
                ti = assigned[cj]
                tracklets[ti].append(comp)
                next_open.append(ti)
            else:
                tracklets.append([comp])
                next_open.append(len(tracklets) - 1)
        open_idx = next_open

    # Frame area is unknown here; Tracklet carries diag and defers area
    # fractions until the caller sets frame_area via bind_frame_area.
    return [Tracklet(components=t, frame_area=np.nan, diag=diag) for t in tracklets]


def bind_frame_area(tracklets: list[Tracklet], frame_area: float) -> list[Tracklet]:
    for t in tracklets:
        t.frame_area = float(frame_area)
    return tracklets


def score_tracklet(t: Tracklet) -> float:
    """Persistence x size-prior x coherence.

    The size prior is a trapezoid over area fraction: zero outside
    [0.1%, 30%], ramping up to a plateau of 1 on [0.5%, 15%]. Coherence
    decays exponentially with the mean centroid jump.
    """
    if t.n_frames == 0:
        raise CurationError("cannot score an empty tracklet")
    a = t.mean_area_fraction
    if a < MIN_AREA_FRACTION or a > MAX_AREA_FRACTION:
        s_area = 0.0
    elif a < AREA_PLATEAU_LO:
        s_area = (a - MIN_AREA_FRACTION) / (AREA_PLATEAU_LO - MIN_AREA_FRACTION)
    elif a <= AREA_PLATEAU_HI:
        s_area = 1.0
    else:
        s_area = (MAX_AREA_FRACTION - a) / (MAX_AREA_FRACTION - AREA_PLATEAU_HI)
    s_coherence = float(np.exp(-t.mean_jump / COHERENCE_SCALE))
    return t.n_frames * s_area * s_coherence


def select_window(validity, window: int = DEFAULT_WINDOW) -> ClipWindow | None:
    """Best fixed-length window by mask coverage; earliest start wins ties.

    Returns None (rejection) when even the best window has coverage below
    30%. Sequences shorter than the window are an error.
    """
    valid = np.asarray(validity, dtype=bool)
    n = valid.size
    if n < window:
        raise CurationError(f"sequence of {n} frames shorter than window {window}")
    counts = np.convolve(valid.astype(np.int64), np.ones(window, dtype=np.int64), mode="valid")
    best = int(np.argmax(counts))  # argmax returns the earliest maximum
    coverage = counts[best] / window
    if coverage < MIN_WINDOW_COVERAGE:
        return None
    return ClipWindow(start=best, length=window, coverage=float(coverage))


def displacement_filter(track, diag: float, min_frac: float = DEFAULT_MIN_DISPLACEMENT) -> bool:
    """Accept only tracks whose net centroid displacement exceeds min_frac."""
    pts = [np.asarray(p, dtype=float) for p in track]
    if len(pts) < 2:
        raise CurationError("displacement needs at least 2 points")
    return bool(np.linalg.norm(pts[-1] - pts[0]) / diag > min_frac)


def seed_query_points(mask: np.ndarray, n: int = DEFAULT_QUERY_POINTS, seed: int = 0):
    """Centroid plus uniformly sampled interior points, deterministic by seed.

    The first point is the mask centroid snapped to the nearest interior
    pixel; the rest are drawn without replacement from the remaining interior
    pixels. Returns (points as (x, y) rows, complete flag); complete is False
    when the mask has fewer than n pixels, in which case all pixels are
    returned.
    """
    mask = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise CurationError("mask is empty")
    centroid = np.array([xs.mean(), ys.mean()])
    d2 = (xs - centroid[0]) ** 2 + (ys - centroid[1]) ** 2
    order = np.lexsort((xs, ys, d2))  # distance, then row, then column
    c_idx = int(order[0])
    first = np.array([xs[c_idx], ys[c_idx]], dtype=float)

    rest_idx = np.array([i for i in range(xs.size) if i != c_idx], dtype=np.int64)
    if xs.size < n:
        pts = np.concatenate([[first], np.stack([xs[rest_idx], ys[rest_idx]], axis=1).astype(float)])
        return pts, False
    rng = np.random.default_rng(seed)
    chosen = rng.choice(rest_idx, size=n - 1, replace=False)
    pts = np.concatenate([[first], np.stack([xs[chosen], ys[chosen]], axis=1).astype(float)])
    return pts, True


def dataset_stats(clips) -> dict:
    """Regime fractions plus displacement median/p95 (nearest-rank).

    clips is a sequence of (camera translation in world units, object
    displacement as a fraction of the diagonal).
    """
    if not clips:
        raise CurationError("no clips")
    regimes = {r: 0 for r in ("static-cam/static-obj", "static-cam/moving-obj",
                              "moving-cam/static-obj", "moving-cam/moving-obj")}
    displacements = []
    for cam_t, obj_d in clips:
        regimes[regime_classify(cam_t, obj_d)] += 1
        displacements.append(float(obj_d))
    n = len(clips)
    fractions = {r: c / n for r, c in regimes.items()}
    ordered = sorted(displacements)

    def nearest_rank(q: float) -> float:
        rank = max(1, int(np.ceil(q * n)))
        return ordered[rank - 1]

    return {
        "clips": n,
        "regime_fractions": fractions,
        "displacement_median": nearest_rank(0.5),
        "displacement_p95": nearest_rank(0.95),
    }


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def components_from_records(records) -> dict:
    """Group {frame, centroid:[x,y], area} records into a frame-indexed dict."""
    by_frame: dict[int, list[Component]] = {}
    for rec in records:
        c = Component(
            frame=int(rec["frame"]),
            centroid=np.array(rec["centroid"], dtype=float),
            area=float(rec["area"]),
            mask_ref=rec.get("mask_ref"),
        )
        by_frame.setdefault(c.frame, []).append(c)
    return by_frame


def load_components(path) -> dict:
    with open(path) as f:
        return components_from_records(json.load(f))


def decode_rle_mask(rec: dict) -> np.ndarray:
    """Run-length mask: {"size": [H, W], "runs": [start, length, ...]} over a
    row-major flattening, runs marking foreground."""
    h, w = rec["size"]
    flat = np.zeros(h * w, dtype=bool)
    runs = rec["runs"]
    for i in range(0, len(runs), 2):
        start, length = runs[i], runs[i + 1]
        flat[start : start + length] = True
    return flat.reshape(h, w)


def encode_rle_mask(mask: np.ndarray) -> dict:
    mask = np.asarray(mask, dtype=bool)
    flat = mask.reshape(-1)
    runs = []
    i = 0
    n = flat.size
    while i < n:
        if flat[i]:
            j = i
            while j < n and flat[j]:
                j += 1
            runs.extend([int(i), int(j - i)])
            i = j
        else:
            i += 1
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "runs": runs}


def curate_clip(
    components_by_frame: dict,
    mask_validity,
    frame_size: tuple,
    masks_by_frame: dict | None = None,
    camera_translation: float = 0.0,
    window: int = DEFAULT_WINDOW,
    min_displacement: float = DEFAULT_MIN_DISPLACEMENT,
    seed: int = 0,
) -> dict | None:
    """Full per-clip pipeline; returns a curated-sample record or None.

    Steps: size-filter components, associate tracklets, score, pick the best,
    select the coverage-maximal window, check net displacement, seed query
    points from the prompt-frame mask (when masks are provided).
    """
    w, h = frame_size
    frame_area = float(w * h)
    diag = float(np.hypot(w, h))

    filtered = {
        f: filter_components(comps, frame_area) for f, comps in components_by_frame.items()
    }
    filtered = {f: comps for f, comps in filtered.items() if comps}
    if not filtered:
        return None
    tracklets = bind_frame_area(match_tracklets(filtered, diag), frame_area)
    scored = [(score_tracklet(t), i, t) for i, t in enumerate(tracklets)]
    scored.sort(key=lambda x: (-x[0], x[1]))
    best_score, best_idx, best = scored[0]
    if best_score <= 0:
        return None

    win = select_window(mask_validity, window)
    if win is None:
        return None

    in_window = [c for c in best.components if win.start <= c.frame < win.start + win.length]
    if len(in_window) < 2:
        return None
    centroids = [c.centroid for c in in_window]
    if not displacement_filter(centroids, diag, min_displacement):
        return None
    net_disp = float(np.linalg.norm(centroids[-1] - centroids[0])) / diag

    query_points = None
    if masks_by_frame is not None:
        prompt_frame = in_window[0].frame
        if prompt_frame in masks_by_frame:
            pts, _complete = seed_query_points(masks_by_frame[prompt_frame], seed=seed)
            query_points = [[float(x), float(y)] for x, y in pts]

    return {
        "window": {"start": win.start, "length": win.length, "coverage": win.coverage},
        "tracklet_id": best_idx,
        "score": best_score,
        "n_frames": best.n_frames,
        "net_displacement": net_disp,
        "camera_translation": camera_translation,
        "regime": regime_classify(camera_translation, net_disp),
        "query_points": query_points,
    }
