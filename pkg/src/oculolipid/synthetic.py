"""Synthetic fundus-like vessel masks for fixtures and the bundled dataset."""

import math

import numpy as np
from scipy import ndimage

from .morphometry import SegmentationMask


def _grow(rng, start, heading, length, width, depth, bend, out):
    step = 2.0
    n = max(int(length / step), 2)
    pts = np.empty((n, 2))
    x, y = start
    for i in range(n):
        pts[i] = (x, y)
        heading += bend + rng.normal(0.0, 0.06)
        x += step * math.cos(heading)
        y += step * math.sin(heading)
    out.append((pts, width))
    if depth == 0:
        return
    for frac in sorted(rng.uniform(0.3, 0.8, size=2)):
        i = int(frac * (n - 1))
        px, py = pts[i]
        dh = pts[min(i + 1, n - 1)] - pts[max(i - 1, 0)]
        h0 = math.atan2(dh[1], dh[0])
        side = rng.choice((-1.0, 1.0))
        _grow(rng, (px, py), h0 + side * rng.uniform(0.4, 0.9), length * rng.uniform(0.45, 0.65),
              max(width * 0.7, 1.5), depth - 1, -bend * 0.5 + rng.normal(0, 0.004), out)


def _render(branches, shape):
    raster = np.zeros(shape, dtype=bool)
    h, w = shape
    for pts, width in branches:
        radius = width / 2.0
        pad = int(math.ceil(radius)) + 2
        lo = np.floor(pts.min(axis=0)).astype(int) - pad
        hi = np.ceil(pts.max(axis=0)).astype(int) + pad
        x0, y0 = max(lo[0], 0), max(lo[1], 0)
        x1, y1 = min(hi[0], w), min(hi[1], h)
        if x0 >= x1 or y0 >= y1:
            continue
        # densify so consecutive centre pixels touch
        seg = np.diff(pts, axis=0)
        k = np.maximum(np.ceil(np.hypot(seg[:, 0], seg[:, 1]) * 2).astype(int), 1)
        dense = np.concatenate([pts[i] + seg[i] * np.linspace(0, 1, k[i], endpoint=False)[:, None]
                                for i in range(len(seg))] + [pts[-1:]])
        cx = np.round(dense[:, 0]).astype(int) - x0
        cy = np.round(dense[:, 1]).astype(int) - y0
        ok = (cx >= 0) & (cx < x1 - x0) & (cy >= 0) & (cy < y1 - y0)
        if not ok.any():
            continue
        centre = np.ones((y1 - y0, x1 - x0), dtype=bool)
        centre[cy[ok], cx[ok]] = False
        raster[y0:y1, x0:x1] |= ndimage.distance_transform_edt(centre) <= radius
    return raster


def vessel_tree(rng, shape, disc, base_width, length, depth=4):
    """Four arcades leaving an optic-disc location, branching recursively."""
    branches = []
    for heading, bend in ((-0.5, 0.006), (0.5, -0.006), (-1.4, 0.012), (1.4, -0.012)):
        _grow(rng, disc, heading + rng.normal(0, 0.08), length * rng.uniform(0.85, 1.15),
              base_width, depth, bend, branches)
    return _render(branches, shape)


def synthetic_mask(seed, size=512, participant_id="", eye="L", artery_width=2.8, vein_width=3.4):
    """A deterministic artery/vein mask pair shaped loosely like a fundus tree."""
    rng = np.random.default_rng(seed)
    h = w = size
    disc = (0.22 * w, 0.5 * h)
    shape = (h, w)
    artery = vessel_tree(rng, shape, disc, artery_width * size / 512, 0.75 * size, depth=4)
    vein = vessel_tree(rng, shape, (disc[0] + 6, disc[1] + 4), vein_width * size / 512,
                       0.8 * size, depth=4)
    if eye == "R":
        # trees were grown rightwards; mirror for a right eye
        artery = artery[:, ::-1]
        vein = vein[:, ::-1]
    return SegmentationMask(artery, vein, eye=eye, participant_id=participant_id)
