import logging

import numpy as np
import pytest
from PIL import Image

from oculolipid.errors import InvalidMask
from oculolipid.masks import MaskLayout, discover, extract_directory, load_mask, read_binary_png, write_binary_png
from oculolipid.morphometry import FEATURE_NAMES, average_bilateral, extract_features
from oculolipid.synthetic import synthetic_mask


def save_mask(directory, m):
    stem = f"{m.participant_id}_{m.eye}"
    write_binary_png(m.artery, directory / f"{stem}_artery.png")
    write_binary_png(m.vein, directory / f"{stem}_vein.png")


@pytest.fixture
def two_by_two(tmp_path):
    masks = [synthetic_mask(10 * i + j, size=160, participant_id=pid, eye=eye)
             for i, pid in enumerate(["P1", "P2"]) for j, eye in enumerate("LR")]
    for m in masks:
        save_mask(tmp_path, m)
    return tmp_path, masks


def test_binary_png_round_trip(tmp_path):
    r = np.random.default_rng(0)
    raster = r.random((33, 47)) < 0.3
    write_binary_png(raster, tmp_path / "x.png")
    assert np.array_equal(read_binary_png(tmp_path / "x.png"), raster)


def test_two_participants_two_eyes(two_by_two):
    directory, masks = two_by_two
    result = extract_directory(directory)
    assert result.frame["participant_id"].tolist() == ["P1", "P2"]
    assert len(result.per_eye) == 4 and not result.errors
    expected = average_bilateral(extract_features(masks[0]), extract_features(masks[1]))
    row = result.frame.iloc[0]
    for name in FEATURE_NAMES:
        assert row[name] == pytest.approx(expected.values[name], rel=1e-12, nan_ok=True)


def test_parallel_extraction_is_identical(two_by_two):
    directory, _ = two_by_two
    a = extract_directory(directory, jobs=1).frame
    b = extract_directory(directory, jobs=2).frame
    assert a.equals(b)


def test_corrupt_file_is_skipped_not_fatal(two_by_two):
    directory, _ = two_by_two
    (directory / "P2_R_vein.png").write_bytes(b"not a png")
    result = extract_directory(directory)
    assert result.frame["participant_id"].tolist() == ["P1", "P2"]
    assert [e[0] for e in result.errors] == ["P2_R"]
    assert len(result.per_eye) == 3


def test_missing_class_file(two_by_two):
    directory, _ = two_by_two
    (directory / "P1_L_vein.png").unlink()
    result = extract_directory(directory)
    assert "P1_L" in [e[0] for e in result.errors]
    assert "P1" in result.frame["participant_id"].tolist()


def test_badly_named_files_are_ignored(tmp_path, caplog):
    m = synthetic_mask(1, size=96, participant_id="A", eye="L")
    save_mask(tmp_path, m)
    (tmp_path / "notes.txt").write_text("x")
    (tmp_path / "A_X_artery.png").write_bytes(b"")
    with caplog.at_level(logging.WARNING):
        found = discover(tmp_path)
    assert [(e.participant_id, e.eye) for e in found] == [("A", "L")]
    assert "A_X_artery.png" in caplog.text


def test_participant_ids_with_underscores(tmp_path):
    m = synthetic_mask(1, size=96, participant_id="site_3_0042", eye="R")
    save_mask(tmp_path, m)
    (entry,) = discover(tmp_path)
    assert (entry.participant_id, entry.eye) == ("site_3_0042", "R")


def test_indexed_layout(tmp_path):
    m = synthetic_mask(4, size=128, participant_id="Q", eye="L")
    labels = np.zeros(m.artery.shape, dtype=np.uint8)
    labels[m.artery] = 1
    labels[m.vein] = 2
    labels[m.artery & m.vein] = 3
    Image.fromarray(labels, mode="L").save(tmp_path / "Q_L.png")
    layout = MaskLayout.from_mapping({"mask_mode": "indexed", "artery_labels": "1,3", "vein_labels": "2,3"})
    (entry,) = discover(tmp_path, layout)
    loaded = load_mask(entry, layout)
    assert np.array_equal(loaded.artery, m.artery) and np.array_equal(loaded.vein, m.vein)


def test_rgb_indexed_layout(tmp_path):
    m = synthetic_mask(4, size=96, participant_id="Q", eye="R")
    rgb = np.zeros(m.artery.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = m.artery * 255
    rgb[..., 2] = m.vein * 255
    Image.fromarray(rgb, mode="RGB").save(tmp_path / "Q_R.png")
    layout = MaskLayout(mode="indexed")
    loaded = load_mask(discover(tmp_path, layout)[0], layout)
    assert np.array_equal(loaded.artery, m.artery) and np.array_equal(loaded.vein, m.vein)


def test_bad_layout_mode():
    with pytest.raises(ValueError):
        MaskLayout.from_mapping({"mask_mode": "rle"})


def test_invalid_png_raises(tmp_path):
    (tmp_path / "z.png").write_bytes(b"\x89PNG broken")
    with pytest.raises(InvalidMask):
        read_binary_png(tmp_path / "z.png")
