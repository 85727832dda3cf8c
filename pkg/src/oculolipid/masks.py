"""Mask files on disk: discovery, PNG decoding and batch feature extraction."""

import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from PIL import Image

from .errors import InvalidMask, NoEyesAvailable
from .morphometry import FEATURE_NAMES, MorphometryConfig, SegmentationMask, average_bilateral, extract_features

log = logging.getLogger(__name__)

PAIR_RE = re.compile(r"^(.+)_([LR])_(artery|vein)\.png$")
SINGLE_RE = re.compile(r"^(.+)_([LR])\.png$")


@dataclass(frozen=True)
class MaskLayout:
    """How vessel classes are stored on disk.

    ``pair``: one grayscale file per class, foreground = nonzero.
    ``indexed``: one file per eye; palette/gray values listed in
    ``artery_labels``/``vein_labels`` select each class (a value may be in
    both, e.g. crossings).  RGB files use ``artery_channel``/``vein_channel``.
    """

    mode: str = "pair"
    artery_labels: tuple = (1,)
    vein_labels: tuple = (2,)
    artery_channel: int = 0
    vein_channel: int = 2

    @classmethod
    def from_mapping(cls, m):
        def labels(v, default):
            if v is None:
                return default
            if isinstance(v, str):
                return tuple(int(t) for t in v.split(",") if t.strip())
            return tuple(int(t) for t in v)

        mode = str(m.get("mask_mode", "pair"))
        if mode not in ("pair", "indexed"):
            raise ValueError(f"mask_mode must be 'pair' or 'indexed', got {mode!r}")
        return cls(mode, labels(m.get("artery_labels"), (1,)), labels(m.get("vein_labels"), (2,)),
                   int(m.get("artery_channel", 0)), int(m.get("vein_channel", 2)))


def _open(path):
    try:
        with Image.open(path) as im:
            im.load()
            return im.copy()
    except Exception as exc:  # Pillow raises a zoo of types for bad files
        raise InvalidMask(f"{os.path.basename(path)}: {exc}") from exc


def read_binary_png(path):
    im = _open(path)
    if im.mode not in ("1", "L", "P", "I", "I;16"):
        im = im.convert("L")
    return np.asarray(im) != 0


def read_indexed_png(path, layout):
    im = _open(path)
    if im.mode in ("RGB", "RGBA"):
        a = np.asarray(im)
        return a[..., layout.artery_channel] != 0, a[..., layout.vein_channel] != 0
    a = np.asarray(im if im.mode in ("P", "L", "I") else im.convert("L"))
    return np.isin(a, layout.artery_labels), np.isin(a, layout.vein_labels)


def write_binary_png(raster, path):
    Image.fromarray(np.where(raster, 255, 0).astype(np.uint8), mode="L").save(path, optimize=False)


@dataclass
class EyeFiles:
    participant_id: str
    eye: str
    files: dict = field(default_factory=dict)  # class or "indexed" -> path


def discover(directory, layout=MaskLayout()):
    """Group mask files by (participant, eye); unknown names are logged and ignored."""
    found = {}
    for name in sorted(os.listdir(directory)):
        path = os.path.join(directory, name)
        if not os.path.isfile(path):
            continue
        if layout.mode == "pair":
            m = PAIR_RE.match(name)
            if not m:
                log.warning("ignoring %s: name does not match <id>_<L|R>_<artery|vein>.png", name)
                continue
            pid, eye, cls = m.groups()
        else:
            m = SINGLE_RE.match(name)
            if not m:
                log.warning("ignoring %s: name does not match <id>_<L|R>.png", name)
                continue
            (pid, eye), cls = m.groups(), "indexed"
        found.setdefault((pid, eye), EyeFiles(pid, eye)).files[cls] = path
    return [found[k] for k in sorted(found)]


def load_mask(entry, layout=MaskLayout()):
    if layout.mode == "indexed":
        artery, vein = read_indexed_png(entry.files["indexed"], layout)
    else:
        missing = [c for c in ("artery", "vein") if c not in entry.files]
        if missing:
            raise InvalidMask(f"{entry.participant_id}_{entry.eye}: no {missing[0]} file")
        artery = read_binary_png(entry.files["artery"])
        vein = read_binary_png(entry.files["vein"])
    return SegmentationMask(artery, vein, eye=entry.eye, participant_id=entry.participant_id)


def _extract_one(args):
    entry, layout, config = args
    try:
        return entry, extract_features(load_mask(entry, layout), config), None
    except InvalidMask as exc:
        return entry, None, str(exc)


@dataclass
class ExtractionResult:
    frame: pd.DataFrame
    per_eye: list
    errors: list  # (file stem, message)


def extract_directory(directory, config=None, layout=MaskLayout(), jobs=1):
    """Features for every participant in a mask directory, eyes averaged."""
    config = config or MorphometryConfig()
    entries = discover(directory, layout)
    work = [(e, layout, config) for e in entries]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_extract_one, work))
    else:
        done = [_extract_one(w) for w in work]

    errors, per_eye, by_pid = [], [], {}
    for entry, fs, err in done:
        if err:
            log.error("skipping %s_%s: %s", entry.participant_id, entry.eye, err)
            errors.append((f"{entry.participant_id}_{entry.eye}", err))
            continue
        for name, reason in sorted(fs.invalid.items()):
            log.info("%s_%s %s invalid: %s", entry.participant_id, entry.eye, name, reason)
        per_eye.append(fs)
        by_pid.setdefault(entry.participant_id, {})[entry.eye] = fs
    rows = []
    for pid in sorted(by_pid):
        eyes = by_pid[pid]
        try:
            merged = average_bilateral(eyes.get("L"), eyes.get("R"))
        except NoEyesAvailable as exc:
            errors.append((pid, str(exc)))
            continue
        rows.append(merged.as_row())
    frame = pd.DataFrame(rows, columns=["participant_id", *FEATURE_NAMES])
    return ExtractionResult(frame, per_eye, errors)
