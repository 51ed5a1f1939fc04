import numpy as np
import pytest

from calfmetrics import imgcore
from calfmetrics.errors import ChannelMismatch, DegeneratePolygon, EmptyContour, EmptyMask


def px(r, g, b):
    return np.array([[[r, g, b]]], dtype=np.uint8)


def block_mask(h, w, y0, x0, bh, bw):
    m = np.zeros((h, w), dtype=bool)
    m[y0 : y0 + bh, x0 : x0 + bw] = True
    return m


def flood_components(mask):
    """Independent 8-connected component labeling (BFS, pure python)."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for y in range(h):
        for x in range(w):
            if mask[y, x] and not seen[y, x]:
                stack = [(y, x)]
                seen[y, x] = True
                pix = []
                while stack:
                    cy, cx = stack.pop()
                    pix.append((cy, cx))
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx = cy + dy, cx + dx
                            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                                seen[ny, nx] = True
                                stack.append((ny, nx))
                comps.append(pix)
    return comps


def brute_hu(mask):
    """Hu invariants via explicit python-loop moment sums."""
    pts = [(x, y) for y in range(mask.shape[0]) for x in range(mask.shape[1]) if mask[y, x]]
    m00 = len(pts)
    xc = sum(p[0] for p in pts) / m00
    yc = sum(p[1] for p in pts) / m00

    def mu(p, q):
        return sum((x - xc) ** p * (y - yc) ** q for x, y in pts)

    def eta(p, q):
        return mu(p, q) / m00 ** (1 + (p + q) / 2)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)
    return np.array(
        [
            n20 + n02,
            (n20 - n02) ** 2 + 4 * n11**2,
            (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2,
            (n30 + n12) ** 2 + (n21 + n03) ** 2,
            (n30 - 3 * n12) * (n30 + n12) * ((n30 + n12) ** 2 - 3 * (n21 + n03) ** 2)
            + (3 * n21 - n03) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2),
            (n20 - n02) * ((n30 + n12) ** 2 - (n21 + n03) ** 2)
            + 4 * n11 * (n30 + n12) * (n21 + n03),
            (3 * n21 - n03) * (n30 + n12) * ((n30 + n12) ** 2 - 3 * (n21 + n03) ** 2)
            - (n30 - 3 * n12) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2),
        ]
    )


class TestRgbToHue:
    def test_red_is_zero(self):
        assert imgcore.rgb_to_hue(px(255, 0, 0))[0, 0] == 0

    def test_green_is_60_on_halved_scale(self):
        # RGB->HSV by hand: max=g, hue = 60*((b-r)/delta + 2) = 120 deg -> 60
        assert imgcore.rgb_to_hue(px(0, 255, 0))[0, 0] == 60

    def test_blue_is_120(self):
        assert imgcore.rgb_to_hue(px(0, 0, 255))[0, 0] == 120

    def test_achromatic_is_zero(self):
        assert imgcore.rgb_to_hue(px(128, 128, 128))[0, 0] == 0
        assert imgcore.rgb_to_hue(px(0, 0, 0))[0, 0] == 0

    def test_single_channel_rejected(self):
        with pytest.raises(ChannelMismatch):
            imgcore.rgb_to_hue(np.zeros((4, 4), dtype=np.uint8))


class TestBinaryThreshold:
    def test_strictly_above_is_set(self):
        ch = np.array([[61]], dtype=np.uint8)
        assert imgcore.binary_threshold(ch, 60)[0, 0]

    def test_equal_is_clear(self):
        ch = np.array([[60]], dtype=np.uint8)
        assert not imgcore.binary_threshold(ch, 60)[0, 0]

    def test_all_zero_gives_empty(self):
        ch = np.zeros((5, 7), dtype=np.uint8)
        assert not imgcore.binary_threshold(ch, 0).any()


class TestMorphology:
    def test_dilate_single_pixel(self):
        m = block_mask(7, 7, 3, 3, 1, 1)
        out = imgcore.morphology(m, "dilate", 1)
        assert np.array_equal(out, block_mask(7, 7, 2, 2, 3, 3))

    def test_open_removes_isolated_pixel(self):
        m = block_mask(7, 7, 3, 3, 1, 1)
        assert not imgcore.morphology(m, "open", 1).any()

    def test_close_bridges_one_pixel_gap(self):
        m = np.zeros((5, 7), dtype=bool)
        m[2, 2] = m[2, 4] = True
        out = imgcore.morphology(m, "close", 1)
        assert out[2, 3]
        assert out[2, 2] and out[2, 4]

    def test_duality_on_random_masks(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            h, w = rng.integers(4, 40, 2)
            m = rng.random((h, w)) < 0.5
            r = int(rng.integers(1, 3))
            lhs = imgcore.morphology(m, "dilate", r)
            rhs = ~imgcore.morphology(~m, "erode", r)
            assert np.array_equal(lhs, rhs)

    @pytest.mark.parametrize("op", ["open", "close"])
    def test_idempotent(self, op):
        rng = np.random.default_rng(11)
        for _ in range(50):
            h, w = rng.integers(4, 40, 2)
            m = rng.random((h, w)) < rng.uniform(0.2, 0.8)
            once = imgcore.morphology(m, op, 1)
            assert np.array_equal(imgcore.morphology(once, op, 1), once)


class TestFillHoles:
    def test_ring_becomes_solid(self):
        m = np.zeros((7, 7), dtype=bool)
        m[1:6, 1:6] = True
        m[2:5, 2:5] = False  # carve a 3x3 hole; border ring remains
        out = imgcore.fill_holes(m)
        assert np.array_equal(out, block_mask(7, 7, 1, 1, 5, 5))

    def test_solid_unchanged(self):
        m = block_mask(8, 8, 2, 2, 4, 4)
        assert np.array_equal(imgcore.fill_holes(m), m)

    def test_empty_unchanged(self):
        m = np.zeros((6, 6), dtype=bool)
        assert not imgcore.fill_holes(m).any()

    def test_idempotent_and_superset(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            h, w = rng.integers(4, 50, 2)
            m = rng.random((h, w)) < rng.uniform(0.3, 0.7)
            once = imgcore.fill_holes(m)
            assert np.array_equal(imgcore.fill_holes(once), once)
            assert (once | m).sum() == once.sum()  # once is a superset of m


class TestTraceContours:
    def test_empty_mask(self):
        assert imgcore.trace_contours(np.zeros((5, 5), dtype=bool)) == []

    def test_3x3_block_has_8_border_pixels(self):
        m = block_mask(7, 7, 2, 2, 3, 3)
        contours = imgcore.trace_contours(m)
        assert len(contours) == 1
        c = contours[0]
        assert len(c) == 8
        border = {
            (x, y)
            for y in range(2, 5)
            for x in range(2, 5)
            if y in (2, 4) or x in (2, 4)
        }
        assert {tuple(p) for p in c.tolist()} == border

    def test_two_disjoint_blocks(self):
        m = block_mask(10, 10, 1, 1, 2, 2) | block_mask(10, 10, 6, 6, 3, 3)
        assert len(imgcore.trace_contours(m)) == 2

    def test_scanline_discovery_order(self):
        m = block_mask(10, 10, 6, 1, 2, 2) | block_mask(10, 10, 1, 6, 2, 2)
        contours = imgcore.trace_contours(m)
        # the (y=1, x=6) block is discovered first in row-major order
        assert tuple(contours[0][0]) == (6, 1)
        assert tuple(contours[1][0]) == (1, 6)

    def test_component_count_matches_flood_fill(self):
        rng = np.random.default_rng(21)
        for _ in range(40):
            h, w = rng.integers(3, 64, 2)
            m = rng.random((h, w)) < rng.uniform(0.2, 0.6)
            assert len(imgcore.trace_contours(m)) == len(flood_components(m))

    def test_contours_are_closed_8_connected(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            m = rng.random((20, 20)) < 0.4
            for c in imgcore.trace_contours(m):
                d = np.abs(np.diff(np.vstack([c, c[:1]]), axis=0)).max(axis=1)
                if len(c) > 1:
                    assert (d <= 1).all() and (d > 0).any()


class TestContourArea:
    def test_3x3_block(self):
        m = block_mask(7, 7, 2, 2, 3, 3)
        c = imgcore.trace_contours(m)[0]
        assert imgcore.contour_area(c) == 9.0
        assert imgcore.bounding_rect(c) == (2, 2, 3, 3)

    def test_single_pixel(self):
        c = imgcore.trace_contours(block_mask(5, 5, 2, 3, 1, 1))[0]
        assert imgcore.contour_area(c) == 1.0
        assert imgcore.bounding_rect(c) == (3, 2, 1, 1)

    def test_10x4_rectangle(self):
        m = block_mask(12, 16, 3, 2, 4, 10)
        c = imgcore.trace_contours(m)[0]
        assert imgcore.contour_area(c) == 40.0
        assert imgcore.bounding_rect(c) == (2, 3, 10, 4)

    def test_empty_contour_raises(self):
        with pytest.raises(EmptyContour):
            imgcore.contour_area(np.zeros((0, 2), dtype=int))
        with pytest.raises(EmptyContour):
            imgcore.bounding_rect(np.zeros((0, 2), dtype=int))

    def test_area_equals_pixel_count_on_hole_free_components(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            h, w = rng.integers(4, 48, 2)
            m = imgcore.fill_holes(rng.random((h, w)) < rng.uniform(0.3, 0.6))
            comps = flood_components(m)
            contours = imgcore.trace_contours(m)
            assert len(contours) == len(comps)
            owner = {(y, x): len(pix) for pix in comps for (y, x) in pix}
            for c in contours:
                count = owner[(int(c[0][1]), int(c[0][0]))]
                assert imgcore.contour_area(c) == count


class TestHuMoments:
    def test_matches_brute_force_oracle(self):
        m = np.zeros((12, 14), dtype=bool)
        m[3:9, 2:11] = True
        m[4:6, 5:8] = False
        np.testing.assert_allclose(imgcore.hu_moments(m), brute_hu(m), rtol=1e-12)

    def test_translation_invariant(self):
        a = block_mask(40, 40, 3, 4, 7, 12)
        b = block_mask(40, 40, 20, 15, 7, 12)
        np.testing.assert_allclose(imgcore.hu_moments(a), imgcore.hu_moments(b), atol=1e-12)

    def test_rot90_invariant(self):
        m = np.zeros((30, 30), dtype=bool)
        m[5:12, 4:20] = True
        m[5:8, 4:9] = False
        np.testing.assert_allclose(
            imgcore.hu_moments(m), imgcore.hu_moments(np.rot90(m)), atol=1e-12
        )

    def test_scale_invariant_to_1e3(self):
        a = block_mask(90, 90, 10, 10, 32, 64)
        b = block_mask(160, 160, 10, 10, 64, 128)
        ha, hb = imgcore.hu_moments(a), imgcore.hu_moments(b)
        big = np.abs(ha) > 1e-12
        np.testing.assert_allclose(ha[big], hb[big], rtol=1e-3)

    def test_square_vs_bar_differ(self):
        sq = block_mask(40, 40, 5, 5, 20, 20)
        bar = block_mask(60, 120, 5, 5, 20, 100)  # 1:5 aspect
        h_sq, h_bar = imgcore.hu_moments(sq), imgcore.hu_moments(bar)
        assert abs(h_sq[0] - h_bar[0]) > 1e-2

    def test_empty_raises(self):
        with pytest.raises(EmptyMask):
            imgcore.hu_moments(np.zeros((4, 4), dtype=bool))


class TestMatchShapes:
    def test_identical_is_zero(self):
        m = block_mask(30, 30, 5, 5, 10, 18)
        assert imgcore.match_shapes(m, m) == 0.0

    def test_translated_copy_below_1e6(self):
        a = block_mask(50, 50, 5, 5, 9, 17)
        b = block_mask(50, 50, 30, 20, 9, 17)
        assert imgcore.match_shapes(a, b) < 1e-6

    def test_square_vs_long_bar_rejected_at_threshold(self):
        sq = block_mask(50, 50, 5, 5, 24, 24)
        bar = block_mask(40, 220, 5, 5, 24, 192)  # 1:8 aspect
        assert imgcore.match_shapes(sq, bar) > 0.8

    def test_symmetric(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            a = imgcore.fill_holes(rng.random((25, 25)) < 0.5)
            b = imgcore.fill_holes(rng.random((25, 25)) < 0.5)
            if not a.any() or not b.any():
                continue
            assert imgcore.match_shapes(a, b) == imgcore.match_shapes(b, a)

    def test_empty_raises(self):
        m = block_mask(5, 5, 1, 1, 2, 2)
        with pytest.raises(EmptyMask):
            imgcore.match_shapes(np.zeros((5, 5), dtype=bool), m)


class TestRasterizePolygon:
    def test_inclusive_square_has_25_pixels(self):
        pts = [(0, 0), (4, 0), (4, 4), (0, 4)]
        m = imgcore.rasterize_polygon(pts, 8, 8)
        assert m.sum() == 25
        assert m[:5, :5].all()

    def test_two_vertices_rejected(self):
        with pytest.raises(DegeneratePolygon):
            imgcore.rasterize_polygon([(0, 0), (3, 3)], 8, 8)

    def test_fully_outside_is_empty(self):
        pts = [(20, 20), (30, 20), (25, 30)]
        assert not imgcore.rasterize_polygon(pts, 8, 8).any()

    def test_roundtrip_iou_from_traced_contour(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            h, w = int(rng.integers(40, 80)), int(rng.integers(40, 80))
            m = np.zeros((h, w), dtype=bool)
            cy, cx = rng.integers(15, h - 15), rng.integers(15, w - 15)
            yy, xx = np.mgrid[0:h, 0:w]
            ry, rx = rng.integers(10, 14), rng.integers(10, 14)
            m |= ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
            c = imgcore.trace_contours(m)[0]
            back = imgcore.rasterize_polygon(c, w, h)
            inter = (m & back).sum()
            union = (m | back).sum()
            assert inter / union >= 0.95
