"""Hot numeric kernels.

Every kernel has an ``@njit`` implementation (``*_nb``) and a pure-numpy
one (``*_np``).  The public names dispatch on :data:`oculolipid._accel.USE_NUMBA`.
Both paths must return identical results; ``tests/test_kernels.py`` checks
that and ``benchmarks/bench_kernels.py`` times them.

Neighbour ring order used throughout (row, col offsets)::

    P9 P2 P3        NW N NE
    P8 P1 P4   =    W  p  E
    P7 P6 P5        SW S SE
"""

import numpy as np
from scipy.ndimage import convolve

from . import _accel
from ._accel import njit

# ring order P2..P9: N, NE, E, SE, S, SW, W, NW
RING_DR = np.array([-1, -1, 0, 1, 1, 1, 0, -1], dtype=np.int64)
RING_DC = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)


# ---------------------------------------------------------------------------
# local predicates shared by both paths (scalar, numba-compilable)


@njit
def _ring(img, r, c, out):
    out[0] = img[r - 1, c]
    out[1] = img[r - 1, c + 1]
    out[2] = img[r, c + 1]
    out[3] = img[r + 1, c + 1]
    out[4] = img[r + 1, c]
    out[5] = img[r + 1, c - 1]
    out[6] = img[r, c - 1]
    out[7] = img[r - 1, c - 1]


@njit
def _yokoi8(nb):
    # Yokoi connectivity number for 8-connected foreground.
    # nb is ring ordered N, NE, E, SE, S, SW, W, NW; Yokoi indexes from E
    # counter-clockwise: x1=E x2=NE x3=N x4=NW x5=W x6=SW x7=S x8=SE.
    x1 = 1 - nb[2]
    x2 = 1 - nb[1]
    x3 = 1 - nb[0]
    x4 = 1 - nb[7]
    x5 = 1 - nb[6]
    x6 = 1 - nb[5]
    x7 = 1 - nb[4]
    x8 = 1 - nb[3]
    return (x1 - x1 * x2 * x3) + (x3 - x3 * x4 * x5) + (x5 - x5 * x6 * x7) + (x7 - x7 * x8 * x1)


@njit
def _is_simple(img, r, c, nb):
    _ring(img, r, c, nb)
    b = 0
    for k in range(8):
        b += nb[k]
    return b >= 2 and _yokoi8(nb) == 1


@njit
def _has_corner_pair(nb):
    n, e, s, w = nb[0], nb[2], nb[4], nb[6]
    return (n and e) or (e and s) or (s and w) or (w and n)


# ---------------------------------------------------------------------------
# thinning


@njit
def _gh_candidates_nb(img, step):
    h, w = img.shape
    nb = np.zeros(8, dtype=np.uint8)
    rows = np.empty(h * w, dtype=np.int64)
    cols = np.empty(h * w, dtype=np.int64)
    m = 0
    for r in range(1, h - 1):
        for c in range(1, w - 1):
            if img[r, c] == 0:
                continue
            _ring(img, r, c, nb)
            x1, x2, x3, x4 = nb[2], nb[1], nb[0], nb[7]
            x5, x6, x7, x8 = nb[6], nb[5], nb[4], nb[3]
            cn = ((1 - x1) & (x2 | x3)) + ((1 - x3) & (x4 | x5)) \
                + ((1 - x5) & (x6 | x7)) + ((1 - x7) & (x8 | x1))
            if cn != 1:
                continue
            n1 = (x1 | x2) + (x3 | x4) + (x5 | x6) + (x7 | x8)
            n2 = (x2 | x3) + (x4 | x5) + (x6 | x7) + (x8 | x1)
            lo = min(n1, n2)
            if lo < 2 or lo > 3:
                continue
            if step == 0:
                if (x2 | x3 | (1 - x8)) & x1:
                    continue
            else:
                if (x6 | x7 | (1 - x4)) & x5:
                    continue
            rows[m] = r
            cols[m] = c
            m += 1
    return rows[:m], cols[:m]


@njit
def _thin_nb(img):
    nb = np.zeros(8, dtype=np.uint8)
    changed = True
    while changed:
        changed = False
        for step in range(2):
            rows, cols = _gh_candidates_nb(img, step)
            for i in range(rows.shape[0]):
                r = rows[i]
                c = cols[i]
                if _is_simple(img, r, c, nb):
                    img[r, c] = 0
                    changed = True
    return img


@njit
def _staircase_nb(img):
    h, w = img.shape
    nb = np.zeros(8, dtype=np.uint8)
    changed = True
    while changed:
        changed = False
        for r in range(1, h - 1):
            for c in range(1, w - 1):
                if img[r, c] == 0:
                    continue
                _ring(img, r, c, nb)
                if not _has_corner_pair(nb):
                    continue
                if _is_simple(img, r, c, nb):
                    img[r, c] = 0
                    changed = True
    return img


def _ring_py(img, r, c):
    return [int(img[r + dr, c + dc]) for dr, dc in zip(RING_DR, RING_DC)]


def _is_simple_py(nb):
    if sum(nb) < 2:
        return False
    x = [1 - nb[k] for k in (2, 1, 0, 7, 6, 5, 4, 3)]
    yokoi = sum(x[k] - x[k] * x[k + 1] * x[(k + 2) % 8] for k in (0, 2, 4, 6))
    return yokoi == 1


def _shifted(img, k):
    h, w = img.shape
    dr, dc = RING_DR[k], RING_DC[k]
    return img[1 + dr:h - 1 + dr, 1 + dc:w - 1 + dc]


def _gh_candidates_np(img, step):
    p = [_shifted(img, k).astype(np.int16) for k in range(8)]
    x1, x2, x3, x4, x5, x6, x7, x8 = (p[k] for k in (2, 1, 0, 7, 6, 5, 4, 3))
    cn = (((1 - x1) & (x2 | x3)) + ((1 - x3) & (x4 | x5))
          + ((1 - x5) & (x6 | x7)) + ((1 - x7) & (x8 | x1)))
    n1 = (x1 | x2) + (x3 | x4) + (x5 | x6) + (x7 | x8)
    n2 = (x2 | x3) + (x4 | x5) + (x6 | x7) + (x8 | x1)
    lo = np.minimum(n1, n2)
    cand = (img[1:-1, 1:-1] == 1) & (cn == 1) & (lo >= 2) & (lo <= 3)
    if step == 0:
        cand &= ((x2 | x3 | (1 - x8)) & x1) == 0
    else:
        cand &= ((x6 | x7 | (1 - x4)) & x5) == 0
    return cand


def _simple_mask_np(img):
    p = [_shifted(img, k).astype(np.int16) for k in range(8)]
    b = sum(p)
    x = [1 - p[k] for k in (2, 1, 0, 7, 6, 5, 4, 3)]  # x1..x8, Yokoi order
    yokoi = ((x[0] - x[0] * x[1] * x[2]) + (x[2] - x[2] * x[3] * x[4])
             + (x[4] - x[4] * x[5] * x[6]) + (x[6] - x[6] * x[7] * x[0]))
    return (b >= 2) & (yokoi == 1)


def _thin_np(img):
    kernel_hits = np.ones((3, 3), dtype=np.int16)

    changed = True
    while changed:
        changed = False
        for step in range(2):
            cand = np.zeros_like(img, dtype=bool)
            cand[1:-1, 1:-1] = _gh_candidates_np(img, step)
            if not cand.any():
                continue
            # A candidate with no candidate neighbours sees an unchanged
            # neighbourhood, so its guard can be evaluated on the snapshot.
            crowd = convolve(cand.astype(np.int16), kernel_hits, mode="constant") - cand
            lone = cand & (crowd == 0)
            simple = np.zeros_like(cand)
            simple[1:-1, 1:-1] = _simple_mask_np(img)
            drop = lone & simple
            if drop.any():
                img[drop] = 0
                changed = True
            for r, c in np.argwhere(cand & ~lone):
                if _is_simple_py(_ring_py(img, r, c)):
                    img[r, c] = 0
                    changed = True
    return img


def _staircase_np(img):
    changed = True
    while changed:
        changed = False
        n_ = _shifted(img, 0)
        e_ = _shifted(img, 2)
        s_ = _shifted(img, 4)
        w_ = _shifted(img, 6)
        corner = (n_ & e_) | (e_ & s_) | (s_ & w_) | (w_ & n_)
        cand = np.zeros_like(img, dtype=bool)
        cand[1:-1, 1:-1] = (img[1:-1, 1:-1] == 1) & (corner == 1)
        if not cand.any():
            break
        # deletions never create new corner pairs, so the snapshot candidate
        # set is complete; each one is re-checked against the current image
        for r, c in np.argwhere(cand):
            nb = _ring_py(img, r, c)
            if ((nb[0] and nb[2]) or (nb[2] and nb[4]) or (nb[4] and nb[6])
                    or (nb[6] and nb[0])) and _is_simple_py(nb):
                img[r, c] = 0
                changed = True
    return img


def thin(raster):
    """Guo-Hall two-subiteration thinning followed by staircase removal.

    Candidates are marked on a snapshot per sub-iteration (the parallel
    Guo-Hall rule), then deleted in raster order only if still a simple point,
    which keeps 2x2 blocks and other small components alive.  The cleanup
    pass removes corner pixels so the result is a unit-width 8-connected
    skeleton.
    """
    img = np.zeros((raster.shape[0] + 2, raster.shape[1] + 2), dtype=np.uint8)
    img[1:-1, 1:-1] = np.asarray(raster) != 0
    if _accel.USE_NUMBA:
        _thin_nb(img)
        _staircase_nb(img)
    else:
        _thin_np(img)
        _staircase_np(img)
    return img[1:-1, 1:-1].astype(bool)


# ---------------------------------------------------------------------------
# box counting


@njit
def _box_counts_nb(raster, sizes):
    h, w = raster.shape
    out = np.zeros(sizes.shape[0], dtype=np.int64)
    for i in range(sizes.shape[0]):
        s = sizes[i]
        gh = (h + s - 1) // s
        gw = (w + s - 1) // s
        seen = np.zeros((gh, gw), dtype=np.uint8)
        n = 0
        for r in range(h):
            rr = r // s
            for c in range(w):
                if raster[r, c] != 0:
                    cc = c // s
                    if seen[rr, cc] == 0:
                        seen[rr, cc] = 1
                        n += 1
        out[i] = n
    return out


def _box_counts_np(raster, sizes):
    h, w = raster.shape
    out = np.zeros(len(sizes), dtype=np.int64)
    for i, s in enumerate(sizes):
        gh = -(-h // s)
        gw = -(-w // s)
        padded = np.zeros((gh * s, gw * s), dtype=bool)
        padded[:h, :w] = raster != 0
        out[i] = padded.reshape(gh, s, gw, s).any(axis=(1, 3)).sum()
    return out


def box_counts(raster, sizes):
    """Occupied-box counts for each box edge length, grid anchored at (0, 0)."""
    raster = np.ascontiguousarray(raster, dtype=np.uint8)
    sizes = np.asarray(sizes, dtype=np.int64)
    if _accel.USE_NUMBA:
        return _box_counts_nb(raster, sizes)
    return _box_counts_np(raster, sizes)


# ---------------------------------------------------------------------------
# pairwise correlation sweep


@njit
def _pair_dots_nb(at, bt):
    # takes transposed (column-major) inputs so the inner loop is contiguous
    p, n = at.shape
    q = bt.shape[0]
    out = np.empty((p, q))
    for i in range(p):
        for j in range(q):
            acc = 0.0
            for k in range(n):
                acc += at[i, k] * bt[j, k]
            out[i, j] = acc
    return out


def _pair_dots_np(a, b):
    # one matrix-vector product per row keeps each row independent of the
    # others, so sweeping a subset of rows reproduces the same values
    out = np.empty((a.shape[1], b.shape[1]))
    bt = np.ascontiguousarray(b.T)
    for i in range(a.shape[1]):
        out[i] = bt @ a[:, i]
    return out


def pair_dots(a, b):
    """All column dot products ``a[:, i] . b[:, j]`` as a (p, q) matrix."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _pair_dots_nb(np.ascontiguousarray(a.T), np.ascontiguousarray(b.T))
    return _pair_dots_np(a, b)
