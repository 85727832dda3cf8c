"""Retinal vessel morphometry from binary artery/vein masks.

Six metrics per vessel class (artery, vein, combined):

average_width
    vessel pixel count divided by skeleton length.
vessel_density
    vessel pixel count divided by image area.
fractal_dimension
    box-counting slope over a dyadic ladder of box sizes.
distance_tortuosity
    arc length over chord length, per centreline segment.
squared_curvature_tortuosity
    integral of squared curvature along a segment divided by its length.
tortuosity_density
    inflection-count based tortuosity (zero for straight or single-arc
    segments).

Segment-level tortuosities are aggregated per class by an arc-length
weighted mean.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import ndimage
from scipy.integrate import trapezoid

from . import kernels
from .errors import (
    DegenerateLadder,
    EmptyVesselClass,
    InvalidMask,
    NoEyesAvailable,
    TooShortForCurvature,
    ZeroChord,
)

VESSEL_CLASSES = ("artery", "vein", "combined")
METRICS = (
    "average_width",
    "vessel_density",
    "fractal_dimension",
    "distance_tortuosity",
    "squared_curvature_tortuosity",
    "tortuosity_density",
)
_PREFIX = {"artery": "artery_", "vein": "vein_", "combined": ""}
FEATURE_NAMES = tuple(_PREFIX[c] + m for c in VESSEL_CLASSES for m in METRICS)
BILATERAL = "bilateral-averaged"

_EIGHT = np.ones((3, 3), dtype=bool)
_SQRT2 = math.sqrt(2.0)


def feature_name(vessel_class, metric):
    return _PREFIX[vessel_class] + metric


@dataclass(frozen=True)
class MorphometryConfig:
    min_segment_length_px: float = 10.0
    gaussian_sigma_samples: float = 2.0
    box_ladder_max_divisor: int = 4
    width_scale_factor: float = 1.0
    # "normalized": ((N-1)/N) / Lc * sum;  "per_length": (N-1) / Lc * sum
    grisan_variant: str = "normalized"
    # divide the squared-curvature integral by arc length
    hart_normalize: bool = True
    # |curvature| at or below this (1/px) carries no sign
    curvature_zero_tol: float = 1e-6

    def __post_init__(self):
        if self.grisan_variant not in ("normalized", "per_length"):
            raise ValueError(f"unknown grisan_variant {self.grisan_variant!r}")
        if self.gaussian_sigma_samples < 0:
            raise ValueError("gaussian_sigma_samples must be >= 0")
        if self.box_ladder_max_divisor < 1:
            raise ValueError("box_ladder_max_divisor must be >= 1")

    @classmethod
    def from_mapping(cls, mapping):
        """Build from string-valued config keys, ignoring unrelated keys."""
        kwargs = {}
        for f in fields(cls):
            if f.name not in mapping:
                continue
            raw = mapping[f.name]
            if f.type in ("bool", bool):
                kwargs[f.name] = str(raw).strip().lower() in ("1", "true", "yes", "on")
            elif f.type in ("int", int):
                kwargs[f.name] = int(raw)
            elif f.type in ("float", float):
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = str(raw).strip()
        return cls(**kwargs)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, eq=False)
class SegmentationMask:
    """Per-eye artery and vein bit rasters (rows x cols)."""

    artery: np.ndarray
    vein: np.ndarray
    eye: str = "L"
    participant_id: str = ""

    def __post_init__(self):
        a = np.asarray(self.artery) != 0
        v = np.asarray(self.vein) != 0
        if a.ndim != 2 or a.shape != v.shape:
            raise InvalidMask(f"artery {a.shape} and vein {v.shape} rasters differ")
        if a.shape[0] == 0 or a.shape[1] == 0:
            raise InvalidMask("mask has zero width or height")
        if self.eye not in ("L", "R"):
            raise InvalidMask(f"eye must be 'L' or 'R', got {self.eye!r}")
        object.__setattr__(self, "artery", a)
        object.__setattr__(self, "vein", v)

    @property
    def width(self):
        return self.artery.shape[1]

    @property
    def height(self):
        return self.artery.shape[0]

    def raster(self, vessel_class):
        if vessel_class == "artery":
            return self.artery
        if vessel_class == "vein":
            return self.vein
        if vessel_class == "combined":
            return self.artery | self.vein
        raise ValueError(f"unknown vessel class {vessel_class!r}")


@dataclass(frozen=True, eq=False)
class CenterlineSegment:
    points: np.ndarray  # (m, 2) as (x, y)
    arc_length: float
    chord_length: float

    @classmethod
    def from_points(cls, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if len(pts) < 2:
            raise ValueError("a segment needs at least two points")
        steps = np.hypot(*np.diff(pts, axis=0).T)
        return cls(pts, float(steps.sum()), float(np.hypot(*(pts[-1] - pts[0]))))


@dataclass
class MorphometricFeatureSet:
    participant_id: str
    eye: str
    values: dict
    invalid: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def valid(self):
        return not self.invalid

    def as_row(self):
        row = {"participant_id": self.participant_id}
        row.update({name: self.values.get(name, math.nan) for name in FEATURE_NAMES})
        return row


# ---------------------------------------------------------------------------
# skeleton


def skeletonize(raster):
    """Unit-width 8-connected skeleton of a binary raster."""
    raster = np.asarray(raster)
    if raster.ndim != 2 or 0 in raster.shape:
        raise InvalidMask("raster must be a non-empty 2-D array")
    return kernels.thin(raster)


def neighbor_count(skeleton):
    sk = np.asarray(skeleton, dtype=bool)
    counts = ndimage.convolve(sk.astype(np.int16), _EIGHT.astype(np.int16), mode="constant")
    return np.where(sk, counts - 1, 0)


def crossing_number(skeleton):
    """Number of 0->1 transitions around each skeleton pixel's 8-ring.

    1 at endpoints, 2 along a path, >= 3 at branch points.
    """
    sk = np.pad(np.asarray(skeleton, dtype=np.int8), 1)
    h, w = sk.shape
    ring = [sk[1 + dr:h - 1 + dr, 1 + dc:w - 1 + dc]
            for dr, dc in zip(kernels.RING_DR, kernels.RING_DC)]
    cn = sum(((ring[k] == 0) & (ring[(k + 1) % 8] == 1)).astype(np.int8) for k in range(8))
    return np.where(sk[1:-1, 1:-1] == 1, cn, 0)


def skeleton_length(skeleton):
    """Total centreline length: axial steps count 1, diagonal steps sqrt(2).

    A diagonal link is skipped when either corner pixel it cuts across is
    set, so junction triangles are not double counted.
    """
    sk = np.asarray(skeleton, dtype=bool)
    axial = np.count_nonzero(sk[:, :-1] & sk[:, 1:]) + np.count_nonzero(sk[:-1, :] & sk[1:, :])
    a, b = sk[:-1, :-1], sk[1:, 1:]
    down = a & b & ~sk[:-1, 1:] & ~sk[1:, :-1]
    c, d = sk[:-1, 1:], sk[1:, :-1]
    up = c & d & ~sk[:-1, :-1] & ~sk[1:, 1:]
    return axial + _SQRT2 * (np.count_nonzero(down) + np.count_nonzero(up))


def _neighbors(pixels, r, c):
    for dr, dc in zip(kernels.RING_DR, kernels.RING_DC):
        q = (r + int(dr), c + int(dc))
        if q in pixels:
            yield q


def decompose_segments(skeleton, min_length=0.0):
    """Split a skeleton into centreline segments.

    Segments run between nodes (endpoints or branch pixels).  Adjacent
    branch pixels form one junction, and links inside a junction are not
    segments.  Closed loops without nodes become a single segment whose
    first and last point coincide.  Segments shorter than ``min_length``
    (arc length, px) are dropped.
    """
    sk = np.asarray(skeleton, dtype=bool)
    counts = neighbor_count(sk)
    junction_labels, _ = ndimage.label(counts >= 3, structure=_EIGHT)
    coords = [tuple(map(int, rc)) for rc in np.argwhere(sk)]
    count_of = {p: int(counts[p]) for p in coords}
    pixels = set(coords)

    def is_node(p):
        return count_of[p] != 2

    def same_junction(p, q):
        lp = junction_labels[p]
        return lp != 0 and lp == junction_labels[q]

    paths = []
    visited = set()
    linked = set()

    def walk(start, first):
        path = [start, first]
        prev, cur = start, first
        visited.add(cur)
        while not is_node(cur):
            nxt = [q for q in _neighbors(pixels, *cur) if q != prev]
            if not nxt:
                break
            q = nxt[0]
            path.append(q)
            if is_node(q) or q in visited:
                break
            visited.add(q)
            prev, cur = cur, q
        return path

    for p in coords:
        if not is_node(p) or count_of[p] == 0:
            continue
        for q in _neighbors(pixels, *p):
            if is_node(q):
                if same_junction(p, q):
                    continue
                key = (min(p, q), max(p, q))
                if key in linked:
                    continue
                linked.add(key)
                paths.append([p, q])
            elif q not in visited:
                paths.append(walk(p, q))

    for p in coords:
        if is_node(p) or p in visited:
            continue
        visited.add(p)
        q = next(_neighbors(pixels, *p))
        loop = walk(p, q)
        if loop[-1] != p:
            loop.append(p)
        paths.append(loop)

    segments = []
    for path in paths:
        pts = np.array([(c, r) for r, c in path], dtype=np.float64)
        seg = CenterlineSegment.from_points(pts)
        if seg.arc_length >= min_length:
            segments.append(seg)
    return segments


# ---------------------------------------------------------------------------
# area metrics


def vessel_density(mask, vessel_class):
    raster = mask.raster(vessel_class)
    return np.count_nonzero(raster) / raster.size


def average_width(mask, vessel_class, scale=1.0):
    """Vessel pixel count over skeleton length, times ``scale``."""
    raster = mask.raster(vessel_class)
    area = np.count_nonzero(raster)
    if area == 0:
        raise EmptyVesselClass(f"{vessel_class} raster is empty")
    length = skeleton_length(skeletonize(raster))
    if length == 0:
        raise EmptyVesselClass(f"{vessel_class} skeleton has zero length")
    return area / length * scale


def box_ladder(shape, max_divisor=4):
    limit = min(shape) / max_divisor
    sizes = []
    s = 2
    while s <= limit:
        sizes.append(s)
        s *= 2
    return np.array(sizes, dtype=np.int64)


def box_counting_dimension(raster, max_divisor=4):
    """Least-squares slope of log N(eps) against log(1/eps).

    Box sizes are 2, 4, 8, ... up to ``min(H, W) / max_divisor`` with the
    grid anchored at the raster origin.
    """
    raster = np.asarray(raster) != 0
    if not raster.any():
        raise EmptyVesselClass("raster is empty")
    sizes = box_ladder(raster.shape, max_divisor)
    if len(sizes) < 3:
        raise DegenerateLadder(f"only {len(sizes)} box sizes fit a {raster.shape} raster")
    counts = kernels.box_counts(raster, sizes)
    slope = np.polyfit(np.log(1.0 / sizes), np.log(counts), 1)[0]
    return float(min(max(slope, 0.0), 2.0))


def fractal_dimension(mask, vessel_class, max_divisor=4):
    return box_counting_dimension(mask.raster(vessel_class), max_divisor)


# ---------------------------------------------------------------------------
# segment tortuosity


def distance_tortuosity(segment):
    if segment.chord_length <= 0:
        raise ZeroChord("segment endpoints coincide")
    ratio = segment.arc_length / segment.chord_length
    # summed steps of a straight run can miss the chord by a few ulps either way
    return 1.0 if abs(ratio - 1.0) < 1e-12 else ratio


def _resample(points, spacing=1.0):
    steps = np.hypot(*np.diff(points, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(steps)])
    total = s[-1]
    n = max(int(round(total / spacing)), 1) + 1
    h = total / (n - 1)
    grid = np.arange(n) * h
    grid[-1] = total
    return np.column_stack([np.interp(grid, s, points[:, 0]), np.interp(grid, s, points[:, 1])]), h


def _gaussian_weights(sigma):
    radius = int(3.0 * sigma + 0.5)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (t / sigma) ** 2)
    return w / w.sum()


def _smooth_with_margin(values, sigma):
    # Odd reflection about each endpoint keeps straight lines straight and
    # leaves the tangent continuous; one extra sample each side feeds the
    # central differences at the ends.
    if sigma == 0:
        return np.pad(values, 1, mode="reflect", reflect_type="odd")
    w = _gaussian_weights(sigma)
    radius = len(w) // 2
    padded = np.pad(values, radius + 1, mode="reflect", reflect_type="odd")
    return np.convolve(padded, w, mode="valid")


def curvature_profile(segment, sigma=2.0):
    """Signed curvature along the unit-spaced, smoothed segment.

    Returns ``(resampled_points, spacing, kappa)``.
    """
    pts, h = _resample(segment.points)
    if len(pts) < 7:
        raise TooShortForCurvature(f"{len(pts)} samples after resampling, need 7")
    x = _smooth_with_margin(pts[:, 0], sigma)
    y = _smooth_with_margin(pts[:, 1], sigma)
    dx = (x[2:] - x[:-2]) / (2 * h)
    dy = (y[2:] - y[:-2]) / (2 * h)
    ddx = (x[2:] - 2 * x[1:-1] + x[:-2]) / (h * h)
    ddy = (y[2:] - 2 * y[1:-1] + y[:-2]) / (h * h)
    speed = (dx * dx + dy * dy) ** 1.5
    kappa = (dx * ddy - dy * ddx) / speed
    return pts, h, kappa


def squared_curvature_tortuosity(segment, sigma=2.0, normalize=True):
    """Integral of squared curvature over arc length, divided by the length."""
    _, h, kappa = curvature_profile(segment, sigma)
    total = trapezoid(kappa * kappa, dx=h)
    if normalize:
        return float(total / segment.arc_length)
    return float(total)


def _sign_runs(kappa, tol):
    signs = np.where(kappa > tol, 1, np.where(kappa < -tol, -1, 0))
    nonzero = np.flatnonzero(signs)
    if nonzero.size == 0:
        return []
    # zero-signed samples inherit the preceding sign
    filled = signs.copy()
    filled[: nonzero[0]] = signs[nonzero[0]]
    for i in range(nonzero[0] + 1, len(filled)):
        if filled[i] == 0:
            filled[i] = filled[i - 1]
    return list(np.flatnonzero(np.diff(filled) != 0) + 1)


def tortuosity_density(segment, sigma=2.0, variant="normalized", zero_tol=1e-6):
    """Inflection-based tortuosity.

    The segment is split wherever the curvature changes sign into N pieces
    of arc length ``Lc_i`` and chord ``Lx_i``; with total arc length ``Lc``::

        tau = (N - 1) / N / Lc * sum(Lc_i / Lx_i - 1)

    ``variant="per_length"`` uses ``(N - 1) / Lc`` as the prefactor.
    """
    pts, h, kappa = curvature_profile(segment, sigma)
    cuts = _sign_runs(kappa, zero_tol)
    n_pieces = len(cuts) + 1
    if n_pieces == 1:
        return 0.0
    bounds = [0] + cuts + [len(pts) - 1]
    acc = 0.0
    for a, b in zip(bounds[:-1], bounds[1:]):
        chord = float(np.hypot(*(pts[b] - pts[a])))
        if chord <= 1e-12:
            continue
        acc += (b - a) * h / chord - 1.0
    total = segment.arc_length
    if variant == "per_length":
        return (n_pieces - 1) / total * acc
    return (n_pieces - 1) / n_pieces / total * acc


# ---------------------------------------------------------------------------
# per-image and per-participant features


def _weighted_tortuosities(segments, config, diag):
    sums = {m: 0.0 for m in METRICS[3:]}
    weights = {m: 0.0 for m in METRICS[3:]}
    for seg in segments:
        w = seg.arc_length
        try:
            sums["distance_tortuosity"] += w * distance_tortuosity(seg)
            weights["distance_tortuosity"] += w
        except ZeroChord:
            diag["zero_chord"] = diag.get("zero_chord", 0) + 1
        try:
            sct = squared_curvature_tortuosity(
                seg, config.gaussian_sigma_samples, config.hart_normalize)
            td = tortuosity_density(
                seg, config.gaussian_sigma_samples, config.grisan_variant,
                config.curvature_zero_tol)
        except TooShortForCurvature:
            diag["too_short"] = diag.get("too_short", 0) + 1
            continue
        sums["squared_curvature_tortuosity"] += w * sct
        weights["squared_curvature_tortuosity"] += w
        sums["tortuosity_density"] += w * td
        weights["tortuosity_density"] += w
    return {m: (sums[m] / weights[m] if weights[m] > 0 else None) for m in sums}


def _class_metrics(mask, vessel_class, config, diag):
    raster = mask.raster(vessel_class)
    area = np.count_nonzero(raster)
    if area == 0:
        raise EmptyVesselClass(f"{vessel_class} raster is empty")
    values, reasons = {}, {}
    skeleton = skeletonize(raster)
    length = skeleton_length(skeleton)
    values["vessel_density"] = area / raster.size
    if length > 0:
        values["average_width"] = area / length * config.width_scale_factor
    else:
        reasons["average_width"] = "skeleton has zero length"
    try:
        values["fractal_dimension"] = box_counting_dimension(raster, config.box_ladder_max_divisor)
    except DegenerateLadder as exc:
        reasons["fractal_dimension"] = str(exc)
    segments = decompose_segments(skeleton, config.min_segment_length_px)
    diag["segments"] = len(segments)
    for metric, value in _weighted_tortuosities(segments, config, diag).items():
        if value is None:
            reasons[metric] = "no usable segments"
        else:
            values[metric] = value
    return values, reasons


def extract_features(mask, config=None):
    """All 18 features for one eye.

    A failing vessel class marks only its own six features invalid (value
    NaN, reason in ``invalid``).
    """
    config = config or MorphometryConfig()
    values, invalid, diagnostics = {}, {}, {}
    for vc in VESSEL_CLASSES:
        diag = {}
        try:
            got, reasons = _class_metrics(mask, vc, config, diag)
        except EmptyVesselClass as exc:
            got, reasons = {}, {m: str(exc) for m in METRICS}
        for m in METRICS:
            name = feature_name(vc, m)
            if m in got:
                values[name] = float(got[m])
            else:
                values[name] = math.nan
                invalid[name] = reasons.get(m, "not computed")
        diagnostics[vc] = diag
    return MorphometricFeatureSet(mask.participant_id, mask.eye, values, invalid, diagnostics)


def average_bilateral(left, right=None):
    """Fieldwise mean over the available eyes.

    Either argument may be None; a feature invalid in one eye takes the
    other eye's value.
    """
    eyes = [fs for fs in (left, right) if fs is not None]
    if not eyes:
        raise NoEyesAvailable("no eyes available")
    pid = eyes[0].participant_id
    if any(fs.participant_id != pid for fs in eyes):
        raise ValueError("bilateral averaging across different participants")
    values, invalid = {}, {}
    for name in FEATURE_NAMES:
        got = [fs.values.get(name, math.nan) for fs in eyes]
        got = [v for v in got if not math.isnan(v)]
        if got:
            values[name] = float(sum(got) / len(got))
        else:
            values[name] = math.nan
            invalid[name] = "; ".join(sorted({fs.invalid.get(name, "missing") for fs in eyes}))
    diagnostics = {"eyes": [fs.eye for fs in eyes]}
    return MorphometricFeatureSet(pid, BILATERAL, values, invalid, diagnostics)
