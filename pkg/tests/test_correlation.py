import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from speckleauth import (CorrelationMap, DegenerateInputError,
                         brute_force_correlate, correlate_shifts,
                         export_heatmap, find_peak, load_heatmap_csv,
                         match_with_rotation, rotate_image, zncc)

from conftest import smooth_field, synthetic_speckle

# hand-computed sliding 1D overlap ZNCC for a=[1,2,4,3], b=[2,1,3,5]:
#  dx=-1: pairs (2,2),(4,1),(3,3) -> num -1, va 2, vb 2 -> -1/2
#  dx= 0: num 3.5, va 5, vb 8.75
#  dx=+1: pairs (1,1),(2,3),(4,5) -> num 6, va 42/9, vb 8
HAND_1D_A = np.array([[1.0, 2.0, 4.0, 3.0]])
HAND_1D_B = np.array([[2.0, 1.0, 3.0, 5.0]])
HAND_1D_EXPECTED = {  # dx -> coefficient
    -1: -0.5,
    0: 3.5 / math.sqrt(5 * 8.75),
    1: 6 / math.sqrt((42 / 9) * 8),
}


class TestZncc:
    def test_self_correlation_is_one(self, tiny_pattern):
        assert zncc(tiny_pattern, tiny_pattern) == pytest.approx(1.0, abs=1e-12)

    def test_hand_example_anticorrelated(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[4.0, 3.0], [2.0, 1.0]])  # b = 5 - a
        assert zncc(a, b) == pytest.approx(-1.0, abs=1e-12)

    def test_independent_patterns_are_uncorrelated(self):
        # ten seeded pairs of synthetic speckle images
        for seed in range(10):
            a = synthetic_speckle((256, 256), seed=2 * seed)
            b = synthetic_speckle((256, 256), seed=2 * seed + 1)
            assert abs(zncc(a, b)) < 0.05

    def test_symmetry_is_exact(self, tiny_pattern, tiny_pattern_b):
        assert zncc(tiny_pattern, tiny_pattern_b) == zncc(tiny_pattern_b,
                                                          tiny_pattern)

    def test_constant_input_rejected(self):
        with pytest.raises(DegenerateInputError):
            zncc(np.ones((8, 8)), np.arange(64.0).reshape(8, 8))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            zncc(np.zeros((8, 8)), np.zeros((8, 9)))

    @given(alpha=st.floats(0.1, 10), beta=st.floats(-100, 100))
    def test_affine_invariance(self, alpha, beta):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((16, 16))
        b = rng.standard_normal((16, 16))
        base = zncc(a, b)
        assert zncc(alpha * a + beta, b) == pytest.approx(base, abs=1e-9)
        assert zncc(-alpha * a + beta, b) == pytest.approx(-base, abs=1e-9)


class TestBruteForce:
    def test_identity_peak(self, rng):
        a = rng.integers(0, 255, size=(24, 24)).astype(float)
        cmap = brute_force_correlate(a, a, 4)
        peak, dx, dy = find_peak(cmap)
        assert (peak, dx, dy) == (pytest.approx(1.0, abs=1e-12), 0, 0)

    def test_hand_computed_1d_sliding(self):
        cmap = brute_force_correlate(HAND_1D_A, HAND_1D_B, (1, 0))
        for dx, expected in HAND_1D_EXPECTED.items():
            assert cmap.value_at(dx, 0) == pytest.approx(expected, abs=1e-9)

    def test_anticorrelated_pair(self, rng):
        a = rng.standard_normal((16, 16))
        b = 3.0 - a
        cmap = brute_force_correlate(a, b, 2)
        assert cmap.value_at(0, 0) == pytest.approx(-1.0, abs=1e-12)


class TestCorrelateShifts:
    def test_identity_peak_at_origin(self, tiny_pattern):
        cmap = correlate_shifts(tiny_pattern, tiny_pattern, 8)
        peak, dx, dy = find_peak(cmap)
        assert peak == pytest.approx(1.0, abs=1e-9)
        assert (dx, dy) == (0, 0)

    def test_constructed_shift_is_recovered(self):
        base = smooth_field((96, 96), seed=3)
        a = base[16:80, 16:80]
        dx, dy = 3, -2
        b = base[16 - dy:80 - dy, 16 - dx:80 - dx]
        cmap = correlate_shifts(a, b, 8)
        peak, pdx, pdy = find_peak(cmap)
        assert (pdx, pdy) == (dx, dy)
        assert peak == pytest.approx(1.0, abs=1e-9)

    def test_shift_equivariance(self):
        base = smooth_field((120, 120), seed=11)
        a = base[20:84, 20:84]
        for dx, dy in [(0, 0), (5, 0), (0, -7), (-4, 6)]:
            b = base[20 - dy:84 - dy, 20 - dx:84 - dx]
            _, pdx, pdy = find_peak(correlate_shifts(a, b, 8))
            assert (pdx, pdy) == (dx, dy)

    def test_symmetry_under_argument_swap(self, tiny_pattern, tiny_pattern_b):
        ab = correlate_shifts(tiny_pattern, tiny_pattern_b, 5)
        ba = correlate_shifts(tiny_pattern_b, tiny_pattern, 5)
        assert np.allclose(ab.values, ba.values[::-1, ::-1], atol=1e-12)

    def test_values_bounded(self, tiny_pattern, tiny_pattern_b):
        cmap = correlate_shifts(tiny_pattern, tiny_pattern_b, 16)
        assert np.all(np.abs(cmap.values) <= 1 + 1e-9)

    def test_max_shift_too_large_rejected(self, rng):
        a = rng.standard_normal((16, 16))
        with pytest.raises(ValueError, match="max_shift"):
            correlate_shifts(a, a, 5)

    def test_per_axis_max_shift(self):
        cmap = correlate_shifts(HAND_1D_A, HAND_1D_B, (1, 0))
        assert cmap.values.shape == (1, 3)

    def test_matches_brute_force_on_random_pair(self, rng):
        a = rng.integers(0, 255, size=(16, 16)).astype(float)
        b = rng.integers(0, 255, size=(16, 16)).astype(float)
        fast = correlate_shifts(a, b, 4)
        slow = brute_force_correlate(a, b, 4)
        assert np.abs(fast.values - slow.values).max() <= 1e-6

    @given(st.data())
    def test_matches_brute_force_property(self, data):
        h = data.draw(st.integers(4, 24), label="h")
        w = data.draw(st.integers(4, 24), label="w")
        a = data.draw(arrays(np.int64, (h, w), elements=st.integers(0, 1000)),
                      label="a")
        b = data.draw(arrays(np.int64, (h, w), elements=st.integers(0, 1000)),
                      label="b")
        assume(a.max() > a.min() and b.max() > b.min())
        mdx = data.draw(st.integers(0, w // 4), label="mdx")
        mdy = data.draw(st.integers(0, h // 4), label="mdy")
        fast = correlate_shifts(a.astype(float), b.astype(float), (mdx, mdy))
        slow = brute_force_correlate(a.astype(float), b.astype(float),
                                     (mdx, mdy))
        assert np.abs(fast.values - slow.values).max() <= 1e-6

    def test_degenerate_overlap_defined_as_zero(self):
        # constant stripe meets the shifted window: both paths must agree
        a = np.zeros((12, 12))
        a[:, 6:] = np.arange(72).reshape(12, 6)
        b = np.ones((12, 12))
        b[0, 0] = 2.0
        fast = correlate_shifts(a, b, 3)
        slow = brute_force_correlate(a, b, 3)
        assert np.abs(fast.values - slow.values).max() <= 1e-6


class TestFindPeak:
    def test_single_entry_map(self):
        cmap = CorrelationMap(values=np.array([[0.25]]), shift_range=(0, 0))
        assert find_peak(cmap) == (0.25, 0, 0)

    def test_tie_breaks_toward_smaller_manhattan_distance(self):
        values = np.zeros((1, 7))
        values[0, 4] = values[0, 6] = 0.9  # dx = +1 and dx = +3
        cmap = CorrelationMap(values=values, shift_range=(3, 0))
        assert find_peak(cmap) == (0.9, 1, 0)

    def test_tie_breaks_by_dy_then_dx(self):
        values = np.zeros((3, 3))
        values[2, 1] = values[1, 2] = 0.5  # (dx=0,dy=1) vs (dx=1,dy=0)
        cmap = CorrelationMap(values=values, shift_range=(1, 1))
        assert find_peak(cmap) == (0.5, 1, 0)

    def test_bounds_invariant_enforced(self):
        with pytest.raises(ValueError):
            CorrelationMap(values=np.array([[1.5]]), shift_range=(0, 0))


class TestMatchWithRotation:
    def test_recovers_injected_rotation(self):
        a = smooth_field((256, 256), seed=4)
        theta = math.radians(1.0)
        b = rotate_image(a, theta)
        res = match_with_rotation(a, b, theta_range=math.radians(2),
                                  theta_step=math.radians(0.25), max_shift=4)
        assert abs(res.rotation - theta) <= math.radians(0.25) + 1e-12
        assert res.peak >= 0.9

    def test_zero_range_equals_plain_shift_search(self, tiny_pattern,
                                                  tiny_pattern_b):
        res = match_with_rotation(tiny_pattern, tiny_pattern_b, theta_range=0,
                                  max_shift=6)
        cmap = correlate_shifts(tiny_pattern, tiny_pattern_b, 6)
        peak, dx, dy = find_peak(cmap)
        assert (res.peak, res.dx, res.dy, res.rotation) == (peak, dx, dy, 0.0)

    def test_different_masters_stay_uncorrelated(self, tiny_pattern,
                                                 tiny_pattern_b):
        res = match_with_rotation(tiny_pattern, tiny_pattern_b,
                                  theta_range=math.radians(1),
                                  theta_step=math.radians(0.5), max_shift=6)
        assert res.peak < 0.15

    def test_rejects_bad_sweep_parameters(self, tiny_pattern):
        with pytest.raises(ValueError):
            match_with_rotation(tiny_pattern, tiny_pattern, theta_step=0.0)
        with pytest.raises(ValueError):
            match_with_rotation(tiny_pattern, tiny_pattern, theta_range=-1.0)

    def test_refine_improves_off_grid_angle(self):
        a = smooth_field((256, 256), seed=8)
        theta = math.radians(0.6)
        b = rotate_image(a, theta)
        coarse = match_with_rotation(a, b, theta_range=math.radians(2),
                                     theta_step=math.radians(0.5), max_shift=4)
        fine = match_with_rotation(a, b, theta_range=math.radians(2),
                                   theta_step=math.radians(0.5), max_shift=4,
                                   refine=True)
        assert fine.peak >= coarse.peak
        assert abs(fine.rotation - theta) <= abs(coarse.rotation - theta) + 1e-12

    def test_off_peak_stats_reported(self, tiny_pattern):
        res = match_with_rotation(tiny_pattern, tiny_pattern, max_shift=6)
        mean, std = res.secondary_stats
        assert abs(mean) < 0.5
        assert 0 <= std < 1


class TestRotateImage:
    def test_zero_angle_is_identity(self, rng):
        img = rng.standard_normal((32, 32))
        assert np.array_equal(rotate_image(img, 0.0), img)

    def test_rotation_moves_point_as_documented(self):
        img = np.zeros((65, 65))
        img[32, 52] = 1.0  # 20 px along +x from center
        out = rotate_image(img, math.radians(30))
        y, x = np.unravel_index(np.argmax(out), out.shape)
        assert x - 32 == pytest.approx(20 * math.cos(math.radians(30)), abs=1)
        assert y - 32 == pytest.approx(20 * math.sin(math.radians(30)), abs=1)

    def test_round_trip_preserves_center(self):
        img = smooth_field((128, 128), seed=5)
        back = rotate_image(rotate_image(img, 0.05), -0.05)
        center = (slice(32, 96), slice(32, 96))
        assert zncc(img[center], back[center]) > 0.98


class TestHeatmapExport:
    def test_csv_rows_and_round_trip(self, tmp_path):
        values = np.linspace(-0.5, 0.5, 9).reshape(3, 3)
        cmap = CorrelationMap(values=values, shift_range=(1, 1),
                              rotation=0.125)
        path = tmp_path / "map.csv"
        export_heatmap(cmap, path, format="csv")
        text = path.read_text().strip().splitlines()
        assert text[0] == "dx,dy,value"
        assert len(text) == 1 + 9
        back = load_heatmap_csv(path)
        assert np.abs(back.values - values).max() <= 1e-9
        assert back.rotation == 0.125

    def test_png_brightest_pixel_at_center_for_autocorrelation(
            self, tmp_path, tiny_pattern):
        from PIL import Image

        cmap = correlate_shifts(tiny_pattern, tiny_pattern, 5)
        path = tmp_path / "auto.png"
        export_heatmap(cmap, path, format="png")
        rgb = np.asarray(Image.open(path)).astype(int)
        brightness = rgb.sum(axis=2)
        iy, ix = np.unravel_index(np.argmax(brightness), brightness.shape)
        assert (iy, ix) == (5, 5)

    def test_sidecar_records_scale_and_range(self, tmp_path, tiny_pattern,
                                             tiny_pattern_b):
        import json

        cmap = correlate_shifts(tiny_pattern, tiny_pattern_b, 4)
        path = tmp_path / "m.png"
        export_heatmap(cmap, path, format="png")
        sidecar = json.loads((tmp_path / "m.json").read_text())
        assert sidecar["shift_range"] == [4, 4]
        assert sidecar["vmin"] == pytest.approx(float(cmap.values.min()))
        assert sidecar["vmax"] == pytest.approx(float(cmap.values.max()))

    def test_unknown_format_rejected(self, tmp_path, tiny_pattern):
        cmap = correlate_shifts(tiny_pattern, tiny_pattern, 2)
        with pytest.raises(ValueError):
            export_heatmap(cmap, tmp_path / "m.bmp", format="bmp")
