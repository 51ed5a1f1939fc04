"""Raster and geometry primitives for the segmentation pipeline.

Conventions used throughout the package:

* color images are ``uint8`` arrays of shape ``(h, w, 3)`` in RGB order;
* single-channel rasters are ``uint8`` arrays of shape ``(h, w)``;
* binary masks are ``bool`` arrays of shape ``(h, w)``, indexed ``[y, x]``;
* contours are ``int`` arrays of shape ``(n, 2)`` holding ``(x, y)`` pixel
  coordinates of the outer border, ordered so consecutive points are
  8-connected and the last point is adjacent to the first.

Morphology treats the mask as a finite subset of the integer plane: pixels
outside the raster are background for dilation and foreground for erosion,
which makes ``dilate(m) == ~erode(~m)`` hold exactly on the raster and keeps
opening/closing idempotent.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import (
    ChannelMismatch,
    DegeneratePolygon,
    EmptyContour,
    EmptyMask,
)

_EIGHT = np.ones((3, 3), dtype=int)
_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int)

# clockwise Moore neighborhood as (dy, dx), starting West
_MOORE = np.array(
    [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)],
    dtype=int,
)


def rgb_to_hue(img: np.ndarray) -> np.ndarray:
    """Extract the hue channel on the halved 8-bit scale [0, 179].

    Hue in degrees is divided by two and rounded to nearest so byte-valued
    thresholds keep their usual meaning; achromatic pixels map to 0.
    """
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ChannelMismatch("rgb_to_hue expects an (h, w, 3) image")
    rgb = img.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    delta = mx - mn
    safe = np.where(delta == 0, 1.0, delta)

    deg = np.zeros(mx.shape, dtype=np.float64)
    sel = (delta > 0) & (mx == r)
    deg[sel] = 60.0 * (((g - b)[sel] / safe[sel]) % 6.0)
    sel = (delta > 0) & (mx == g) & (mx != r)
    deg[sel] = 60.0 * ((b - r)[sel] / safe[sel] + 2.0)
    sel = (delta > 0) & (mx == b) & (mx != r) & (mx != g)
    deg[sel] = 60.0 * ((r - g)[sel] / safe[sel] + 4.0)

    halved = np.rint(deg / 2.0).astype(np.int64) % 180
    return halved.astype(np.uint8)


def binary_threshold(channel: np.ndarray, t: int) -> np.ndarray:
    """Set a bit wherever the sample is strictly above ``t``."""
    channel = np.asarray(channel)
    if channel.ndim != 2:
        raise ChannelMismatch("binary_threshold expects a single-channel raster")
    return channel > t


def _square(radius: int) -> np.ndarray:
    if radius < 1:
        raise ValueError("structuring element radius must be >= 1")
    side = 2 * radius + 1
    return np.ones((side, side), dtype=bool)


def erode(mask: np.ndarray, radius: int = 1) -> np.ndarray:
    return ndimage.binary_erosion(mask, structure=_square(radius), border_value=1)


def dilate(mask: np.ndarray, radius: int = 1) -> np.ndarray:
    return ndimage.binary_dilation(mask, structure=_square(radius), border_value=0)


def opening(mask: np.ndarray, radius: int = 1) -> np.ndarray:
    """Erosion followed by dilation; removes speckles below the kernel size."""
    return dilate(erode(mask, radius), radius)


def closing(mask: np.ndarray, radius: int = 1) -> np.ndarray:
    """Dilation followed by erosion; bridges gaps below the kernel size."""
    return erode(dilate(mask, radius), radius)


_MORPH_OPS = {"erode": erode, "dilate": dilate, "open": opening, "close": closing}


def morphology(mask: np.ndarray, op: str, radius: int = 1) -> np.ndarray:
    """Apply a named morphological operation with a square kernel."""
    try:
        fn = _MORPH_OPS[op]
    except KeyError:
        raise ValueError(f"unknown morphology op {op!r}") from None
    return fn(np.asarray(mask, dtype=bool), radius)


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Set every background component not 4-connected to the raster border."""
    mask = np.asarray(mask, dtype=bool)
    bg_labels, n = ndimage.label(~mask, structure=_FOUR)
    if n == 0:
        return mask.copy()
    border = np.concatenate(
        [bg_labels[0, :], bg_labels[-1, :], bg_labels[:, 0], bg_labels[:, -1]]
    )
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(border)] = True
    keep[0] = True
    return mask | ~keep[bg_labels]


_DIR_INDEX = {(int(dy), int(dx)): i for i, (dy, dx) in enumerate(_MOORE)}


def _moore_trace(mask: np.ndarray, start_y: int, start_x: int) -> np.ndarray:
    """Follow the outer border clockwise from the topmost-leftmost pixel.

    The walk over (pixel, entry-direction) states is deterministic, so the
    border is the cycle this walk falls into; tracing stops at the first
    repeated state, which handles spurs and diagonal chains that defeat the
    plain return-to-start criterion.
    """
    h, w = mask.shape
    # the West neighbor of a topmost-leftmost pixel is always background
    cy, cx, cdir = start_y, start_x, 0
    points = [(start_x, start_y)]
    seen = {(cy, cx, cdir): 0}
    while True:
        found = -1
        for k in range(1, 9):
            d = (cdir + k) % 8
            ny, nx = cy + _MOORE[d, 0], cx + _MOORE[d, 1]
            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx]:
                found = d
                break
        if found < 0:
            return np.array(points, dtype=np.int64)  # isolated pixel
        ny = int(cy + _MOORE[found, 0])
        nx = int(cx + _MOORE[found, 1])
        # backtrack is the background neighbor examined just before the hit
        by = int(cy + _MOORE[(found - 1) % 8, 0])
        bx = int(cx + _MOORE[(found - 1) % 8, 1])
        ndir = _DIR_INDEX[(by - ny, bx - nx)]
        state = (ny, nx, ndir)
        if state in seen:
            return np.array(points[seen[state] :], dtype=np.int64)
        seen[state] = len(points)
        points.append((nx, ny))
        cy, cx, cdir = ny, nx, ndir


def trace_contours(mask: np.ndarray) -> list[np.ndarray]:
    """Trace the outer border of every 8-connected component.

    Components are returned in scanline discovery order (topmost, then
    leftmost, of each component's first pixel).
    """
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        return []
    flat_first = ndimage.minimum_position(
        np.arange(mask.size).reshape(mask.shape), labels, index=range(1, n + 1)
    )
    starts = sorted((y * mask.shape[1] + x, y, x) for y, x in flat_first)
    contours = []
    for _, y, x in starts:
        comp = labels == labels[y, x]
        contours.append(_moore_trace(comp, y, x))
    return contours


def contour_area(contour: np.ndarray) -> float:
    """Pixel-count-compatible area of a traced contour.

    Shoelace area of the closed pixel-center polygon plus half the closed
    path length plus one (a Pick's-theorem correction), so a filled 3x3
    block reports 9, matching the set-pixel count of hole-free components.
    """
    contour = np.asarray(contour)
    if contour.size == 0:
        raise EmptyContour("contour has no points")
    n = len(contour)
    if n == 1:
        return 1.0
    x = contour[:, 0].astype(np.float64)
    y = contour[:, 1].astype(np.float64)
    shoelace = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    return shoelace + n / 2.0 + 1.0


def bounding_rect(contour: np.ndarray) -> tuple[int, int, int, int]:
    """Tight axis-aligned box as (x, y, w, h)."""
    contour = np.asarray(contour)
    if contour.size == 0:
        raise EmptyContour("contour has no points")
    x0, y0 = contour.min(axis=0)
    x1, y1 = contour.max(axis=0)
    return int(x0), int(y0), int(x1 - x0 + 1), int(y1 - y0 + 1)


def hu_moments(mask: np.ndarray) -> np.ndarray:
    """The seven Hu invariants of a filled region."""
    mask = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise EmptyMask("hu_moments requires a non-empty mask")
    x = xs.astype(np.float64)
    y = ys.astype(np.float64)
    m00 = float(len(x))
    xc, yc = x.mean(), y.mean()
    dx, dy = x - xc, y - yc

    def mu(p, q):
        return float(np.sum(dx**p * dy**q))

    def eta(p, q):
        return mu(p, q) / m00 ** (1 + (p + q) / 2.0)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03 = eta(3, 0), eta(0, 3)
    n21, n12 = eta(2, 1), eta(1, 2)

    h1 = n20 + n02
    h2 = (n20 - n02) ** 2 + 4 * n11**2
    h3 = (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2
    h4 = (n30 + n12) ** 2 + (n21 + n03) ** 2
    h5 = (n30 - 3 * n12) * (n30 + n12) * (
        (n30 + n12) ** 2 - 3 * (n21 + n03) ** 2
    ) + (3 * n21 - n03) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2)
    h6 = (n20 - n02) * ((n30 + n12) ** 2 - (n21 + n03) ** 2) + 4 * n11 * (
        n30 + n12
    ) * (n21 + n03)
    h7 = (3 * n21 - n03) * (n30 + n12) * (
        (n30 + n12) ** 2 - 3 * (n21 + n03) ** 2
    ) - (n30 - 3 * n12) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2)
    return np.array([h1, h2, h3, h4, h5, h6, h7])


def i1_distance(ha: np.ndarray, hb: np.ndarray) -> float:
    """I1 metric between two Hu-invariant vectors.

    Terms where either invariant is below 1e-30 carry no usable signal and
    are skipped.
    """
    usable = (np.abs(ha) >= 1e-30) & (np.abs(hb) >= 1e-30)
    if not usable.any():
        return 0.0
    ma = np.sign(ha[usable]) * np.log10(np.abs(ha[usable]))
    mb = np.sign(hb[usable]) * np.log10(np.abs(hb[usable]))
    return float(np.sum(np.abs(1.0 / ma - 1.0 / mb)))


def match_shapes(a: np.ndarray, b: np.ndarray) -> float:
    """I1 shape distance between two filled regions.

    0 means identical shapes; the pipeline rejects candidates above its
    similarity threshold.
    """
    return i1_distance(hu_moments(a), hu_moments(b))


def hue_to_rgb(hue_halved: np.ndarray) -> np.ndarray:
    """Full-saturation, full-value RGB for hue on the halved [0, 179] scale.

    Inverse of rgb_to_hue up to the rounding of the intermediate channel;
    synthetic scenes use it to paint regions with known hue.
    """
    h = np.asarray(hue_halved, dtype=np.float64)
    deg = 2.0 * h
    sector = (deg // 60.0).astype(np.int64) % 6
    frac = (deg % 60.0) / 60.0
    x = np.rint(255.0 * np.where(sector % 2 == 0, frac, 1.0 - frac)).astype(np.uint8)
    c = np.full(h.shape, 255, dtype=np.uint8)
    z = np.zeros(h.shape, dtype=np.uint8)
    channels = [(c, x, z), (x, c, z), (z, c, x), (z, x, c), (x, z, c), (c, z, x)]
    out = np.empty(h.shape + (3,), dtype=np.uint8)
    for s, (r, g, b) in enumerate(channels):
        sel = sector == s
        out[sel, 0] = r[sel]
        out[sel, 1] = g[sel]
        out[sel, 2] = b[sel]
    return out


def rasterize_polygon(points, w: int, h: int) -> np.ndarray:
    """Even-odd scanline fill of a polygon, boundary pixels included.

    Vertices may be fractional; the filled region is clipped to the raster.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 3:
        raise DegeneratePolygon(f"polygon needs >= 3 vertices, got {len(pts)}")
    if not np.isfinite(pts).all():
        raise DegeneratePolygon("polygon has non-finite coordinates")
    mask = np.zeros((h, w), dtype=bool)

    x1 = pts[:, 0]
    y1 = pts[:, 1]
    x2 = np.roll(x1, -1)
    y2 = np.roll(y1, -1)
    nonhoriz = y1 != y2
    ylo = np.minimum(y1, y2)
    yhi = np.maximum(y1, y2)

    y_start = max(0, int(np.ceil(pts[:, 1].min())))
    y_stop = min(h - 1, int(np.floor(pts[:, 1].max())))
    for y in range(y_start, y_stop + 1):
        active = nonhoriz & (ylo <= y) & (y < yhi)
        if not active.any():
            continue
        xs = x1[active] + (y - y1[active]) * (x2[active] - x1[active]) / (
            y2[active] - y1[active]
        )
        xs.sort()
        for i in range(0, len(xs) - 1, 2):
            a = int(np.ceil(xs[i]))
            b = int(np.floor(xs[i + 1]))
            a = max(a, 0)
            b = min(b, w - 1)
            if a <= b:
                mask[y, a : b + 1] = True

    _draw_edges(mask, pts)
    return mask


def _draw_edges(mask: np.ndarray, pts: np.ndarray) -> None:
    """Mark the polygon boundary itself (rounded Bresenham segments)."""
    h, w = mask.shape
    verts = np.rint(pts).astype(np.int64)
    for (xa, ya), (xb, yb) in zip(verts, np.roll(verts, -1, axis=0)):
        steps = int(max(abs(xb - xa), abs(yb - ya))) + 1
        xs = np.rint(np.linspace(xa, xb, steps)).astype(np.int64)
        ys = np.rint(np.linspace(ya, yb, steps)).astype(np.int64)
        ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        mask[ys[ok], xs[ok]] = True
