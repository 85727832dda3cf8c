import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from conftest import bar, mask_of
from oracles import (
    KOCH_DIMENSION,
    circle_arc,
    koch_points,
    rasterize_polyline,
    sine_arc_length,
    sine_mean_squared_curvature,
    sine_polyline,
    sine_tortuosity_density,
)
from oculolipid.errors import (
    DegenerateLadder,
    EmptyVesselClass,
    InvalidMask,
    NoEyesAvailable,
    TooShortForCurvature,
    ZeroChord,
)
from oculolipid.morphometry import (
    BILATERAL,
    FEATURE_NAMES,
    CenterlineSegment,
    MorphometricFeatureSet,
    MorphometryConfig,
    SegmentationMask,
    average_bilateral,
    average_width,
    box_counting_dimension,
    crossing_number,
    decompose_segments,
    distance_tortuosity,
    extract_features,
    fractal_dimension,
    neighbor_count,
    skeleton_length,
    skeletonize,
    squared_curvature_tortuosity,
    tortuosity_density,
    vessel_density,
)
from oculolipid.synthetic import synthetic_mask


def chain(n, axis=1, shape=None):
    shape = shape or (n + 10, n + 10)
    img = np.zeros(shape, dtype=bool)
    if axis == 1:
        img[shape[0] // 2, 5:5 + n] = True
    else:
        img[5:5 + n, shape[1] // 2] = True
    return img


# --- masks ------------------------------------------------------------------


def test_mask_validation():
    with pytest.raises(InvalidMask):
        SegmentationMask(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(InvalidMask):
        SegmentationMask(np.zeros((0, 4)), np.zeros((0, 4)))
    with pytest.raises(InvalidMask):
        SegmentationMask(np.zeros((4, 4)), np.zeros((4, 4)), eye="X")
    m = SegmentationMask(np.eye(4), np.zeros((4, 4)))
    assert (m.width, m.height) == (4, 4)
    assert m.raster("combined").sum() == 4


# --- skeleton ---------------------------------------------------------------


def test_skeleton_of_empty_raster_is_empty():
    assert not skeletonize(np.zeros((20, 30), dtype=bool)).any()


def test_bar_skeleton_is_single_horizontal_chain():
    sk = skeletonize(bar(5, 100))
    rows = np.flatnonzero(sk.any(axis=1))
    assert len(rows) == 1
    assert abs(sk.sum() - 100) <= 4
    assert neighbor_count(sk)[sk].max() == 2


def test_plus_sign_has_one_degree_four_branch_point():
    img = np.zeros((41, 41), dtype=bool)
    img[19:22, 5:36] = True
    img[5:36, 19:22] = True
    sk = skeletonize(img)
    cn = crossing_number(sk)
    branch = np.argwhere(cn >= 3)
    assert len(branch) == 1
    assert cn[tuple(branch[0])] == 4
    # the junction cluster collapses into one node joining four arms
    assert len(decompose_segments(sk)) == 4


def test_plus_sign_matches_reference_thinning():
    skimage_morph = pytest.importorskip("skimage.morphology")
    img = np.zeros((41, 41), dtype=bool)
    img[19:22, 5:36] = True
    img[5:36, 19:22] = True
    ref = skimage_morph.thin(img)
    ours = skeletonize(img)
    # same branch structure: one degree-4 node, four endpoints
    for sk in (ref, ours):
        cn = crossing_number(sk)
        assert np.count_nonzero(cn[sk] == 1) == 4
        assert np.count_nonzero(cn >= 3) == 1
        assert np.count_nonzero(cn == 4) == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_skeleton_properties_on_random_blobs(seed):
    r = np.random.default_rng(seed)
    img = ndimage.binary_dilation(r.random((40, 40)) < 0.04, iterations=int(r.integers(1, 3)))
    sk = skeletonize(img)
    assert not (sk & ~img).any()
    eight = np.ones((3, 3), dtype=bool)
    assert ndimage.label(sk, eight)[1] == ndimage.label(img, eight)[1]
    # unit width: a pixel of a fully set 2x2 block survives only where
    # deleting it would cut the skeleton (thick X-crossings)
    blocks = sk[:-1, :-1] & sk[1:, :-1] & sk[:-1, 1:] & sk[1:, 1:]
    padded = np.pad(sk, 1)
    for r0, c0 in np.argwhere(blocks):
        for r, c in ((r0, c0), (r0 + 1, c0), (r0, c0 + 1), (r0 + 1, c0 + 1)):
            assert not _removable(padded[r:r + 3, c:c + 3])


def _removable(win):
    """Deleting the centre keeps its neighbours in one 8-connected piece."""
    ring = win.copy()
    ring[1, 1] = False
    n_pieces = ndimage.label(ring, np.ones((3, 3), dtype=bool))[1]
    four_bg = not (win[0, 1] and win[1, 0] and win[1, 2] and win[2, 1])
    return n_pieces == 1 and four_bg and ring.sum() >= 2


def test_skeleton_length_counts_diagonals_as_sqrt2():
    img = np.zeros((12, 12), dtype=bool)
    for i in range(10):
        img[1 + i, 1 + i] = True
    assert skeleton_length(img) == pytest.approx(9 * math.sqrt(2))
    assert skeleton_length(chain(50)) == 49


# --- segments ---------------------------------------------------------------


def test_straight_chain_is_one_segment():
    segs = decompose_segments(chain(50))
    assert len(segs) == 1
    assert segs[0].arc_length == 49
    assert segs[0].chord_length == 49


def test_y_shape_gives_three_segments():
    img = np.zeros((80, 80), dtype=bool)
    c = (40, 40)
    img[c[0], c[1] - 30:c[1] + 1] = True          # left arm
    for i in range(1, 31):
        img[c[0] - i, c[1] + i] = True           # up-right arm
        img[c[0] + i, c[1] + i] = True           # down-right arm
    segs = decompose_segments(img)
    assert len(segs) == 3
    ends = {tuple(s.points[0]) for s in segs} | {tuple(s.points[-1]) for s in segs}
    assert (40.0, 40.0) in ends


def test_short_chain_is_filtered():
    assert decompose_segments(chain(5), min_length=10) == []


def test_closed_loop_has_zero_chord():
    img = np.zeros((20, 20), dtype=bool)
    img[5, 5:15] = img[14, 5:15] = True
    img[5:15, 5] = img[5:15, 14] = True
    segs = decompose_segments(skeletonize(img))
    assert len(segs) == 1
    assert segs[0].chord_length == 0
    with pytest.raises(ZeroChord):
        distance_tortuosity(segs[0])


# --- area metrics -----------------------------------------------------------


def test_density_trivial_cases():
    empty = np.zeros((10, 10), dtype=bool)
    assert vessel_density(mask_of(empty), "artery") == 0.0
    half = np.zeros((10, 10), dtype=bool)
    half[:5] = True
    assert vessel_density(mask_of(half), "artery") == 0.5


def test_density_of_synthetic_artery_tree_is_in_band():
    m = synthetic_mask(7)
    d = vessel_density(m, "artery")
    assert abs(d - 0.0391) <= 3 * 0.0045


@pytest.mark.parametrize("h,w,expected", [(5, 100, 5.0), (8, 200, 8.0)])
def test_bar_width(h, w, expected):
    assert average_width(mask_of(bar(h, w)), "artery") == pytest.approx(expected, abs=0.5)


def test_two_parallel_bars_width():
    img = np.zeros((40, 130), dtype=bool)
    img[5:9, 10:110] = True
    img[20:26, 10:110] = True
    assert average_width(mask_of(img), "artery") == pytest.approx(5.0, abs=0.5)


def test_width_scale_factor_applies_last():
    m = mask_of(bar(5, 100))
    assert average_width(m, "artery", scale=3.0) == pytest.approx(3 * average_width(m, "artery"))


def test_doubling_bar_width_doubles_average_width():
    a = average_width(mask_of(bar(6, 150)), "artery")
    b = average_width(mask_of(bar(12, 150)), "artery")
    assert b / a == pytest.approx(2.0, rel=0.1)


def test_width_of_empty_class_raises():
    with pytest.raises(EmptyVesselClass):
        average_width(mask_of(np.zeros((10, 10), dtype=bool)), "artery")


# --- fractal dimension ------------------------------------------------------


def test_line_dimension():
    img = np.zeros((512, 512), dtype=bool)
    img[256, :] = True
    assert box_counting_dimension(img) == pytest.approx(1.0, abs=0.05)


def test_square_dimension():
    assert box_counting_dimension(np.ones((512, 512), dtype=bool)) == pytest.approx(2.0, abs=0.05)


def test_koch_dimension():
    img = rasterize_polyline(koch_points(), (768, 768))
    assert box_counting_dimension(img) == pytest.approx(KOCH_DIMENSION, abs=0.08)


def test_dimension_ordering_line_koch_square():
    line = np.zeros((768, 768), dtype=bool)
    line[300, :] = True
    koch = rasterize_polyline(koch_points(), (768, 768))
    full = np.ones((768, 768), dtype=bool)
    assert box_counting_dimension(line) < box_counting_dimension(koch) < box_counting_dimension(full)


def test_degenerate_ladder():
    with pytest.raises(DegenerateLadder):
        box_counting_dimension(np.ones((20, 20), dtype=bool))
    with pytest.raises(EmptyVesselClass):
        fractal_dimension(mask_of(np.zeros((64, 64), dtype=bool)), "artery")


# --- tortuosity -------------------------------------------------------------


def test_straight_segment_tortuosities():
    seg = CenterlineSegment.from_points(np.column_stack([np.arange(60.0), np.zeros(60)]))
    assert distance_tortuosity(seg) == 1.0
    assert squared_curvature_tortuosity(seg) == pytest.approx(0.0, abs=1e-6)
    assert tortuosity_density(seg) == 0.0


def test_semicircle_distance_tortuosity():
    seg = CenterlineSegment.from_points(circle_arc(100, 180, samples=2000))
    assert distance_tortuosity(seg) == pytest.approx(math.pi / 2, abs=0.01)


def test_sine_distance_tortuosity_matches_quadrature():
    pts = sine_polyline(20, 200, 1)
    seg = CenterlineSegment.from_points(pts)
    assert distance_tortuosity(seg) == pytest.approx(sine_arc_length(20, 200, 1) / 200, rel=1e-4)


def test_circle_arc_squared_curvature():
    seg = CenterlineSegment.from_points(circle_arc(50, 90))
    assert squared_curvature_tortuosity(seg) == pytest.approx(1 / 50 ** 2, rel=0.10)


def test_raw_curvature_integral_flag():
    seg = CenterlineSegment.from_points(circle_arc(50, 90))
    raw = squared_curvature_tortuosity(seg, normalize=False)
    assert raw == pytest.approx(squared_curvature_tortuosity(seg) * seg.arc_length)


@pytest.mark.parametrize("amp,span,periods", [(20, 200, 1), (20, 200, 2), (10, 300, 2)])
def test_sine_squared_curvature_matches_quadrature(amp, span, periods):
    seg = CenterlineSegment.from_points(sine_polyline(amp, span, periods))
    oracle = sine_mean_squared_curvature(amp, span, periods)
    assert squared_curvature_tortuosity(seg) == pytest.approx(oracle, rel=0.05)


def test_single_arc_tortuosity_density_is_zero():
    seg = CenterlineSegment.from_points(circle_arc(50, 120))
    assert tortuosity_density(seg) == 0.0


@pytest.mark.parametrize("amp,span", [(20, 200), (10, 300)])
def test_two_period_sine_tortuosity_density_matches_inflection_oracle(amp, span):
    seg = CenterlineSegment.from_points(sine_polyline(amp, span, 2))
    oracle = sine_tortuosity_density(amp, span, 2)
    assert tortuosity_density(seg) == pytest.approx(oracle, rel=0.05)
    assert squared_curvature_tortuosity(seg) > 0


def test_frozen_sine_oracle_values():
    # guards the quadrature oracles themselves
    assert sine_arc_length(20, 200, 1) == pytest.approx(218.4767, abs=1e-3)
    assert sine_tortuosity_density(20, 200, 2) == pytest.approx(0.0036420, rel=1e-4)


def test_per_length_variant_scales_by_n():
    seg = CenterlineSegment.from_points(sine_polyline(20, 200, 2))
    a = tortuosity_density(seg, variant="normalized")
    b = tortuosity_density(seg, variant="per_length")
    assert b / a == pytest.approx(4.0)  # N = 4 pieces


def test_too_short_for_curvature():
    seg = CenterlineSegment.from_points(np.array([[0.0, 0.0], [3.0, 0.0]]))
    with pytest.raises(TooShortForCurvature):
        squared_curvature_tortuosity(seg)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2 * math.pi), st.integers(0, 2 ** 31))
def test_distance_tortuosity_rotation_invariant(theta, seed):
    r = np.random.default_rng(seed)
    pts = np.cumsum(r.normal(size=(30, 2)) + [1.0, 0.0], axis=0)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    a = distance_tortuosity(CenterlineSegment.from_points(pts))
    b = distance_tortuosity(CenterlineSegment.from_points(pts @ rot.T))
    assert a >= 1.0
    assert b == pytest.approx(a, rel=0.01)


# --- per-image features -----------------------------------------------------


def test_empty_vein_marks_only_vein_invalid():
    fs = extract_features(mask_of(bar(5, 100, shape=(128, 128))))
    vein = [n for n in FEATURE_NAMES if n.startswith("vein_")]
    assert set(fs.invalid) == set(vein)
    assert all(math.isnan(fs.values[n]) for n in vein)
    assert all(math.isfinite(fs.values[n]) for n in FEATURE_NAMES if n not in vein)


def test_bar_artery_is_straight():
    fs = extract_features(mask_of(bar(5, 100), bar(5, 100, shape=(25, 120), top=2)))
    assert fs.values["artery_distance_tortuosity"] == pytest.approx(1.0, abs=1e-6)


def test_synthetic_tree_features_complete_and_union_bound():
    m = synthetic_mask(3)
    fs = extract_features(m)
    assert fs.valid
    assert all(math.isfinite(fs.values[n]) for n in FEATURE_NAMES)
    da, dv = np.count_nonzero(m.artery) / m.artery.size, np.count_nonzero(m.vein) / m.vein.size
    assert fs.values["artery_vessel_density"] == da
    assert fs.values["vein_vessel_density"] == dv
    assert max(da, dv) <= fs.values["vessel_density"] <= da + dv
    assert 0 <= fs.values["fractal_dimension"] <= 2
    assert fs.values["distance_tortuosity"] >= 1


def test_extract_is_deterministic():
    m = synthetic_mask(11, size=256)
    a = extract_features(m)
    b = extract_features(SegmentationMask(m.artery.copy(), m.vein.copy()))
    assert np.array([a.values[n] for n in FEATURE_NAMES]).tobytes() == \
        np.array([b.values[n] for n in FEATURE_NAMES]).tobytes()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_density_union_bound_random(seed):
    r = np.random.default_rng(seed)
    a = r.random((30, 30)) < r.random()
    v = r.random((30, 30)) < r.random()
    m = SegmentationMask(a, v)
    da, dv, dc = (vessel_density(m, c) for c in ("artery", "vein", "combined"))
    assert max(da, dv) <= dc <= da + dv + 1e-15


def test_config_from_mapping():
    cfg = MorphometryConfig.from_mapping({"min_segment_length_px": "15", "grisan_variant": "per_length",
                                          "hart_normalize": "false", "unrelated": "x"})
    assert cfg.min_segment_length_px == 15.0
    assert cfg.grisan_variant == "per_length"
    assert cfg.hart_normalize is False
    with pytest.raises(ValueError):
        MorphometryConfig(grisan_variant="bogus")


# --- bilateral --------------------------------------------------------------


def _fs(eye, **vals):
    values = {n: 1.0 for n in FEATURE_NAMES}
    values.update(vals)
    return MorphometricFeatureSet("P1", eye, values)


def test_bilateral_mean():
    out = average_bilateral(_fs("L", vessel_density=0.04), _fs("R", vessel_density=0.05))
    assert out.values["vessel_density"] == pytest.approx(0.045)
    assert out.eye == BILATERAL


def test_bilateral_identical_and_single():
    left = _fs("L", fractal_dimension=1.4)
    assert average_bilateral(left, _fs("R", fractal_dimension=1.4)).values == left.values
    assert average_bilateral(left).values == left.values
    assert average_bilateral(None, left).values == left.values


def test_bilateral_requires_an_eye():
    with pytest.raises(NoEyesAvailable):
        average_bilateral(None, None)
