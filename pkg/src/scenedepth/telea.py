"""Fast-marching inpainting of depth holes (Telea-style weighted averages).

Hole pixels are filled boundary-inward, ordered by their Eikonal distance T
from the hole boundary (first-order upwind discretization on the 4-connected
grid).  Each filled value is a normalized weighted average of first-order
extrapolations from the pixels already carrying values inside the disk of
the given radius:

    I(p) = sum_q w(p, q) * [I(q) + gradI(q) . (p - q)] / sum_q w(p, q)

    w(p, q) = | dir(p, q) * dst(p, q) * lev(p, q) |
    dir = gradT(p) . (p - q) / |p - q|      (propagation-direction factor)
    dst = 1 / |p - q|^2                     (geometric-distance factor)
    lev = 1 / (1 + |T(q) - T(p)|)           (level-set proximity factor)

The gradient term makes linear data reproduce near-exactly; to keep fills
inside the physical range of the data, every filled value is clamped to the
[min, max] of the known input values.  Known pixels are never touched.  The
march's priority queue breaks ties by (distance, row, column), making the
fill order fully deterministic.

Sky pixels are out-of-domain: they are neither filled nor used as sources,
and the march does not propagate through them.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .depthmap import DepthMap
from .errors import InpaintError

DEFAULT_RADIUS_PX = 5

_KNOWN = np.uint8(0)
_BAND = np.uint8(1)
_INSIDE = np.uint8(2)
_OUTSIDE = np.uint8(3)
_LARGE = 1.0e6


@njit(cache=True, nogil=True, inline="always")
def _heap_less(ht, hr, hc, a, b):
    if ht[a] != ht[b]:
        return ht[a] < ht[b]
    if hr[a] != hr[b]:
        return hr[a] < hr[b]
    return hc[a] < hc[b]


@njit(cache=True, nogil=True)
def _heap_push(ht, hr, hc, size, t, r, c):
    i = size
    ht[i] = t
    hr[i] = r
    hc[i] = c
    while i > 0:
        p = (i - 1) // 2
        if _heap_less(ht, hr, hc, i, p):
            ht[i], ht[p] = ht[p], ht[i]
            hr[i], hr[p] = hr[p], hr[i]
            hc[i], hc[p] = hc[p], hc[i]
            i = p
        else:
            break
    return size + 1


@njit(cache=True, nogil=True)
def _heap_pop(ht, hr, hc, size):
    t, r, c = ht[0], hr[0], hc[0]
    size -= 1
    ht[0], hr[0], hc[0] = ht[size], hr[size], hc[size]
    i = 0
    while True:
        left = 2 * i + 1
        right = left + 1
        smallest = i
        if left < size and _heap_less(ht, hr, hc, left, smallest):
            smallest = left
        if right < size and _heap_less(ht, hr, hc, right, smallest):
            smallest = right
        if smallest == i:
            break
        ht[i], ht[smallest] = ht[smallest], ht[i]
        hr[i], hr[smallest] = hr[smallest], hr[i]
        hc[i], hc[smallest] = hc[smallest], hc[i]
        i = smallest
    return t, r, c, size


@njit(cache=True, nogil=True, inline="always")
def _usable(f, i, j):
    return f[i, j] != _INSIDE and f[i, j] != _OUTSIDE


@njit(cache=True, nogil=True)
def _eikonal(T, f, i, j):
    """First-order upwind solution at (i, j); min over the four quadrants."""
    H, W = T.shape
    best = _LARGE
    for di in (-1, 1):
        ii = i + di
        has_v = 0 <= ii < H and _usable(f, ii, j)
        tv = T[ii, j] if has_v else _LARGE
        for dj in (-1, 1):
            jj = j + dj
            has_h = 0 <= jj < W and _usable(f, i, jj)
            th = T[i, jj] if has_h else _LARGE
            if has_v and has_h:
                if abs(tv - th) >= 1.0:
                    s = min(tv, th) + 1.0
                else:
                    diff = tv - th
                    s = (tv + th + np.sqrt(2.0 - diff * diff)) * 0.5
            elif has_v:
                s = tv + 1.0
            elif has_h:
                s = th + 1.0
            else:
                continue
            if s < best:
                best = s
    return best


@njit(cache=True, nogil=True, inline="always")
def _grad(grid, f, i, j, H, W):
    """Guarded central/one-sided gradient of `grid` at (i, j): (d/dx, d/dy)."""
    right_ok = j + 1 < W and _usable(f, i, j + 1)
    left_ok = j - 1 >= 0 and _usable(f, i, j - 1)
    if right_ok and left_ok:
        gx = (grid[i, j + 1] - grid[i, j - 1]) * 0.5
    elif right_ok:
        gx = grid[i, j + 1] - grid[i, j]
    elif left_ok:
        gx = grid[i, j] - grid[i, j - 1]
    else:
        gx = 0.0
    down_ok = i + 1 < H and _usable(f, i + 1, j)
    up_ok = i - 1 >= 0 and _usable(f, i - 1, j)
    if down_ok and up_ok:
        gy = (grid[i + 1, j] - grid[i - 1, j]) * 0.5
    elif down_ok:
        gy = grid[i + 1, j] - grid[i, j]
    elif up_ok:
        gy = grid[i, j] - grid[i - 1, j]
    else:
        gy = 0.0
    return gx, gy


@njit(cache=True, nogil=True)
def _fill_value(values, T, f, i, j, radius, lo, hi):
    H, W = T.shape
    gtx, gty = _grad(T, f, i, j, H, W)

    r2max = float(radius * radius)
    num = 0.0
    den = 0.0
    for k in range(max(0, i - radius), min(H, i + radius + 1)):
        for l in range(max(0, j - radius), min(W, j + radius + 1)):
            if k == i and l == j:
                continue
            if not _usable(f, k, l):
                continue
            ry = float(i - k)
            rx = float(j - l)
            len2 = rx * rx + ry * ry
            if len2 > r2max:
                continue
            direction = (gtx * rx + gty * ry) / np.sqrt(len2)
            if abs(direction) <= 1e-2:
                direction = 1e-6
            dst = 1.0 / len2
            lev = 1.0 / (1.0 + abs(T[k, l] - T[i, j]))
            w = abs(direction * dst * lev)
            gix, giy = _grad(values, f, k, l, H, W)
            num += w * (values[k, l] + gix * rx + giy * ry)
            den += w
    if den > 0.0:
        return min(max(num / den, lo), hi)
    # radius >= 1 guarantees the just-popped neighbor is in range, so this
    # branch is unreachable; kept as a safe default.
    return values[i, j]


@njit(cache=True, nogil=True)
def _march(values, f, T, ht, hr, hc, size, radius, lo, hi):
    H, W = f.shape
    filled = 0
    while size > 0:
        _, i, j, size = _heap_pop(ht, hr, hc, size)
        if f[i, j] == _KNOWN:
            continue
        f[i, j] = _KNOWN
        for n in range(4):
            if n == 0:
                ni, nj = i - 1, j
            elif n == 1:
                ni, nj = i + 1, j
            elif n == 2:
                ni, nj = i, j - 1
            else:
                ni, nj = i, j + 1
            if ni < 0 or ni >= H or nj < 0 or nj >= W:
                continue
            if f[ni, nj] != _INSIDE:
                continue
            tn = _eikonal(T, f, ni, nj)
            T[ni, nj] = tn
            values[ni, nj] = _fill_value(values, T, f, ni, nj, radius, lo, hi)
            f[ni, nj] = _BAND
            filled += 1
            size = _heap_push(ht, hr, hc, size, tn, ni, nj)
    return filled


def inpaint_telea(depth: DepthMap, radius: int = DEFAULT_RADIUS_PX) -> DepthMap:
    """Fill every non-sky invalid pixel; known pixels pass through bit-for-bit.

    Raises InpaintError when there are holes but no valid pixels to propagate
    from.  Hole regions with no 4-connected path to any valid pixel (e.g.
    enclosed by sky) cannot be reached by the march and are filled with the
    mean of the known values.
    """
    if radius < 1:
        raise ValueError(f"inpaint radius must be >= 1, got {radius}")
    holes = ~depth.valid & ~depth.sky
    if not holes.any():
        return depth
    if not depth.valid.any():
        raise InpaintError("cannot inpaint: the depth map has no valid pixels")

    f = np.full(depth.values.shape, _KNOWN, dtype=np.uint8)
    f[depth.sky] = _OUTSIDE
    f[holes] = _INSIDE
    T = np.zeros(depth.values.shape, dtype=np.float64)
    T[holes] = _LARGE

    # Initial band: valid pixels 4-adjacent to a hole, in row-major order.
    adj = np.zeros_like(holes)
    adj[:-1, :] |= holes[1:, :]
    adj[1:, :] |= holes[:-1, :]
    adj[:, :-1] |= holes[:, 1:]
    adj[:, 1:] |= holes[:, :-1]
    band = adj & depth.valid
    rows, cols = np.nonzero(band)
    f[band] = _BAND

    capacity = rows.size + int(holes.sum()) + 1
    ht = np.zeros(capacity, dtype=np.float64)
    hr = np.zeros(capacity, dtype=np.int64)
    hc = np.zeros(capacity, dtype=np.int64)
    size = 0
    values = depth.values.copy()
    known = depth.values[depth.valid]
    lo, hi = float(known.min()), float(known.max())
    for r, c in zip(rows, cols):
        size = _heap_push(ht, hr, hc, size, 0.0, r, c)
    _march(values, f, T, ht, hr, hc, size, int(radius), lo, hi)

    unreachable = f == _INSIDE
    if unreachable.any():
        values[unreachable] = depth.values[depth.valid].mean()
    return DepthMap.create(values, ~depth.sky, depth.sky)
