import numpy as np
import pytest

from gazekit.imgcore import (
    ColorImage,
    GrayImage,
    Kernel,
    Rect,
    canny,
    convolve,
    gaussian_kernel,
    gaussian_smooth,
    harris_corners,
    integral_image,
    read_image,
    read_pgm,
    read_ppm,
    rect_sum,
    resize_color,
    resize_gray,
    rgb_to_ycbcr,
    sobel_gradients,
    to_grayscale,
    write_pgm,
    write_ppm,
    ycbcr_planes,
)
from support import brute_rect_sum, circle_edge_map, disk_image, gray


def solid_color(r, g, b, h=4, w=4) -> ColorImage:
    px = np.empty((h, w, 3))
    px[:, :, 0], px[:, :, 1], px[:, :, 2] = r, g, b
    return ColorImage(px)


class TestGrayscale:
    def test_white_is_255(self):
        out = to_grayscale(solid_color(255, 255, 255))
        assert np.allclose(out.pixels, 255.0, atol=1e-9)

    def test_black_is_0(self):
        out = to_grayscale(solid_color(0, 0, 0))
        assert np.allclose(out.pixels, 0.0, atol=1e-9)

    def test_pure_red_luma(self):
        out = to_grayscale(solid_color(255, 0, 0))
        assert np.allclose(out.pixels, 76.245, atol=1e-9)


class TestYCbCr:
    def test_neutral_white_and_black(self):
        assert rgb_to_ycbcr(255, 255, 255) == pytest.approx((255.0, 128.0, 128.0), abs=1e-9)
        assert rgb_to_ycbcr(0, 0, 0) == pytest.approx((0.0, 128.0, 128.0), abs=1e-9)

    def test_pure_red(self):
        y, cb, cr = rgb_to_ycbcr(255, 0, 0)
        assert y == pytest.approx(76.245, abs=1e-9)
        assert cb == pytest.approx(84.972, abs=1e-3)
        assert cr == 255.0  # 255.5 before the clamp

    def test_planes_match_scalar(self, rng):
        px = rng.uniform(0, 255, (6, 7, 3))
        y, cb, cr = ycbcr_planes(ColorImage(px))
        for i in range(6):
            for j in range(7):
                expect = rgb_to_ycbcr(*px[i, j])
                assert (y[i, j], cb[i, j], cr[i, j]) == pytest.approx(expect, abs=1e-9)


class TestGaussianKernel:
    def test_sums_to_one(self):
        for sigma, radius in ((0.5, 1), (1.0, 2), (2.5, 5)):
            k = gaussian_kernel(sigma, radius)
            assert abs(k.weights.sum() - 1.0) <= 1e-9

    def test_exponent_ratio(self):
        k = gaussian_kernel(1.0, 2)
        c = k.radius
        assert k.weights[c, c + 1] / k.weights[c, c] == pytest.approx(np.exp(-0.5), abs=1e-12)

    def test_symmetry_and_center_max(self):
        k = gaussian_kernel(1.3, 3)
        w = k.weights
        assert np.allclose(w, w[::-1, ::-1], atol=1e-15)
        assert np.allclose(w, w.T, atol=1e-15)
        assert np.allclose(w, np.rot90(w), atol=1e-15)
        assert w[k.radius, k.radius] == w.max()

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            gaussian_kernel(0.0, 2)
        with pytest.raises(ValueError):
            gaussian_kernel(1.0, 0)


class TestConvolve:
    def test_identity_kernel(self, rng):
        img = gray(rng.uniform(0, 255, (9, 11)))
        w = np.zeros((3, 3))
        w[1, 1] = 1.0
        out = convolve(img, Kernel(1, w))
        assert np.allclose(out.pixels, img.pixels, atol=1e-12)

    def test_constant_image_sum_one_kernel(self):
        img = gray(np.full((8, 8), 42.0))
        out = convolve(img, gaussian_kernel(1.0, 2))
        assert np.allclose(out.pixels, 42.0, atol=1e-9)

    def test_impulse_imprints_flipped_kernel(self):
        img = np.zeros((9, 9))
        img[4, 4] = 1.0
        w = np.arange(9, dtype=np.float64).reshape(3, 3)
        out = convolve(gray(img), Kernel(1, w))
        assert np.allclose(out.pixels[3:6, 3:6], w[::-1, ::-1], atol=1e-12)

    def test_linearity(self, rng):
        i1 = rng.uniform(0, 255, (32, 32))
        i2 = rng.uniform(0, 255, (32, 32))
        a, b = 1.7, -0.4
        k = gaussian_kernel(1.0, 2)
        lhs = convolve(gray(a * i1 + b * i2), k).pixels
        rhs = a * convolve(gray(i1), k).pixels + b * convolve(gray(i2), k).pixels
        assert np.allclose(lhs, rhs, atol=1e-6)

    def test_kernel_larger_than_image(self):
        with pytest.raises(ValueError):
            convolve(gray(np.zeros((3, 3))), gaussian_kernel(1.0, 2))


class TestSobel:
    def test_constant_image(self):
        g = sobel_gradients(gray(np.full((6, 6), 100.0)))
        assert np.allclose(g.gx, 0.0, atol=1e-12)
        assert np.allclose(g.gy, 0.0, atol=1e-12)

    def test_horizontal_ramp(self):
        xx = np.tile(np.arange(12, dtype=np.float64), (8, 1))
        g = sobel_gradients(gray(xx))
        assert np.allclose(g.gx[1:-1, 1:-1], 8.0, atol=1e-12)
        assert np.allclose(g.gy[1:-1, 1:-1], 0.0, atol=1e-12)

    def test_vertical_step_edge(self):
        img = np.zeros((10, 12))
        img[:, 6:] = 200.0
        g = sobel_gradients(gray(img))
        interior = np.abs(g.gx[1:-1, 1:-1])
        peak_cols = {5, 6}  # the two columns bracketing the step
        for row in interior:
            best = set(np.nonzero(row == row.max())[0] + 1)
            assert best == peak_cols
        assert np.allclose(g.gy[1:-1, 1:-1], 0.0, atol=1e-12)

    def test_magnitude_identity(self, rng):
        g = sobel_gradients(gray(rng.uniform(0, 255, (9, 9))))
        assert np.allclose(g.magnitude, np.hypot(g.gx, g.gy), atol=1e-12)

    def test_too_small(self):
        with pytest.raises(ValueError):
            sobel_gradients(gray(np.zeros((2, 5))))


class TestCanny:
    def test_constant_image_no_edges(self):
        out = canny(gray(np.full((16, 16), 77.0)))
        assert not out.pixels.any()

    def test_vertical_step_single_line(self):
        img = np.zeros((20, 24))
        img[:, 12:] = 180.0
        out = canny(gray(img))
        interior = out.pixels[2:-2]
        for row in interior:
            cols = np.nonzero(row)[0]
            assert len(cols) == 1  # one pixel wide
            assert cols[0] in (11, 12)

    def test_circle_outline_coverage(self):
        img = disk_image(100, 100, 50.0, 50.0, 20.0)
        out = canny(img)
        ey, ex = np.nonzero(out.pixels)
        assert len(ex) > 0
        theta = np.linspace(0, 2 * np.pi, 720, endpoint=False)
        tx = 50.0 + 20.0 * np.cos(theta)
        ty = 50.0 + 20.0 * np.sin(theta)
        d = np.hypot(tx[:, None] - ex[None, :], ty[:, None] - ey[None, :]).min(axis=1)
        assert np.mean(d <= 1.0) >= 0.80

    def test_rejects_inverted_thresholds(self):
        with pytest.raises(ValueError):
            canny(gray(np.zeros((8, 8))), low=10.0, high=5.0)


class TestHarris:
    def test_constant_image_empty(self):
        assert harris_corners(gray(np.full((16, 16), 9.0))) == []

    def test_rectangle_corners(self):
        img = np.zeros((40, 50))
        img[10:30, 12:38] = 200.0
        found = harris_corners(gray(img))
        true_corners = [(12, 10), (37, 10), (12, 29), (37, 29)]
        assert len(found) >= 4
        for tx, ty in true_corners:
            d = min(np.hypot(p[0] - tx, p[1] - ty) for p, _ in found[:4])
            assert d <= 2.0

    def test_edge_interior_not_corners(self):
        img = np.zeros((30, 60))
        img[15:, :] = 150.0  # long horizontal edge
        found = harris_corners(gray(img))
        for (x, y), _ in found:
            assert not (20 <= x <= 40 and 13 <= y <= 17)

    def test_min_dist_and_order(self, rng):
        img = rng.uniform(0, 255, (48, 48))
        found = harris_corners(gray(img), min_dist=6)
        responses = [resp for _, resp in found]
        assert responses == sorted(responses, reverse=True)
        for i in range(len(found)):
            for j in range(i + 1, len(found)):
                (x1, y1), (x2, y2) = found[i][0], found[j][0]
                assert np.hypot(x1 - x2, y1 - y2) >= 6


class TestIntegralImage:
    def test_all_ones(self):
        ii = integral_image(gray(np.ones((5, 7))))
        assert ii.table[-1, -1] == 35.0
        assert rect_sum(ii, Rect(0, 0, 7, 5)) == 35.0

    def test_single_pixel(self):
        ii = integral_image(gray([[13.0]]))
        assert np.array_equal(ii.table, [[0.0, 0.0], [0.0, 13.0]])
        assert rect_sum(ii, Rect(0, 0, 1, 1)) == 13.0

    def test_matches_brute_force(self, rng):
        px = rng.integers(0, 256, (16, 16)).astype(np.float64)
        ii = integral_image(gray(px))
        for _ in range(50):
            w = int(rng.integers(1, 17))
            h = int(rng.integers(1, 17))
            x = int(rng.integers(0, 17 - w))
            y = int(rng.integers(0, 17 - h))
            assert rect_sum(ii, Rect(x, y, w, h)) == brute_rect_sum(px, x, y, w, h)

    def test_out_of_bounds_rect(self):
        ii = integral_image(gray(np.ones((4, 4))))
        with pytest.raises(ValueError):
            rect_sum(ii, Rect(2, 2, 3, 3))


class TestPnmIO:
    def test_pgm_roundtrip_bit_exact(self, tmp_path, rng):
        img = gray(rng.integers(0, 256, (11, 13)).astype(np.float64))
        path = tmp_path / "t.pgm"
        write_pgm(path, img)
        back = read_pgm(path)
        assert np.array_equal(back.pixels, img.pixels)

    def test_ppm_roundtrip_bit_exact(self, tmp_path, rng):
        img = ColorImage(rng.integers(0, 256, (7, 9, 3)).astype(np.float64))
        path = tmp_path / "t.ppm"
        write_ppm(path, img)
        back = read_ppm(path)
        assert np.array_equal(back.pixels, img.pixels)

    def test_read_image_dispatch(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", gray(np.zeros((2, 2))))
        write_ppm(tmp_path / "a.ppm", ColorImage(np.zeros((2, 2, 3))))
        assert isinstance(read_image(tmp_path / "a.pgm"), GrayImage)
        assert isinstance(read_image(tmp_path / "a.ppm"), ColorImage)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P5\n11 13\n255\nxx")
        with pytest.raises(ValueError):
            read_pgm(path)


class TestResize:
    def test_gray_shape_and_constant(self):
        out = resize_gray(gray(np.full((10, 20), 33.0)), 7, 5)
        assert (out.width, out.height) == (7, 5)
        assert np.allclose(out.pixels, 33.0, atol=1e-9)

    def test_color_shape_and_constant(self):
        out = resize_color(solid_color(10, 20, 30, h=12, w=16), 8, 6)
        assert (out.width, out.height) == (8, 6)
        assert np.allclose(out.pixels[:, :, 1], 20.0, atol=1e-9)


def test_gaussian_smooth_preserves_constant():
    out = gaussian_smooth(gray(np.full((12, 12), 55.0)), 1.5)
    assert np.allclose(out.pixels, 55.0, atol=1e-9)
