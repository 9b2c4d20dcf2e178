import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from speckleauth import (HeightMap, SurfaceParams, generate_surface,
                         make_replica, occlude, read_heightmap,
                         write_heightmap, zncc)


def measured_corr_length(heights, pitch):
    """1/e crossing of the measured autocovariance, axis-averaged, meters."""
    x = heights - heights.mean()
    f = np.fft.fft2(x)
    ac = np.fft.ifft2(f * np.conj(f)).real
    ac = ac / ac[0, 0]
    target = 1 / np.e
    lengths = []
    for prof in (ac[0, :], ac[:, 0]):
        half = prof[: len(prof) // 2]
        idx = np.nonzero(half < target)[0][0]
        prev, cur = half[idx - 1], half[idx]
        lengths.append((idx - 1 + (prev - target) / (prev - cur)) * pitch)
    return float(np.mean(lengths))


class TestGenerateSurface:
    def test_rms_matches_target(self):
        params = SurfaceParams(sigma_h=500e-9, corr_len=10e-6, seed=42)
        hm = generate_surface(params, 256, 256, 2e-6)
        assert hm.rms() == pytest.approx(500e-9, rel=1e-12)
        assert hm.rms() == pytest.approx(500e-9, rel=0.05)

    def test_zero_mean(self):
        hm = generate_surface(SurfaceParams(seed=1), 128, 128, 2e-6)
        assert abs(hm.heights.mean()) < 0.01 * hm.rms()

    def test_seeded_determinism(self):
        params = SurfaceParams(seed=42)
        a = generate_surface(params, 64, 64, 2e-6)
        b = generate_surface(params, 64, 64, 2e-6)
        assert np.array_equal(a.heights, b.heights)

    def test_different_seeds_differ(self):
        a = generate_surface(SurfaceParams(seed=1), 64, 64, 2e-6)
        b = generate_surface(SurfaceParams(seed=2), 64, 64, 2e-6)
        assert not np.array_equal(a.heights, b.heights)

    def test_zero_roughness_gives_flat_surface(self):
        hm = generate_surface(SurfaceParams(sigma_h=0.0, seed=5), 64, 64, 2e-6)
        assert np.all(hm.heights == 0)

    def test_rms_convergence_over_seeds(self):
        errs = []
        for seed in range(10):
            hm = generate_surface(SurfaceParams(seed=seed, corr_len=10e-6),
                                  256, 256, 2e-6)
            errs.append(abs(hm.rms() - 500e-9) / 500e-9)
        assert np.mean(errs) < 0.02

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_autocovariance_matches_corr_len(self, seed):
        # measurable regime: corr_len >= 4 * pitch
        corr_len = 10e-6
        hm = generate_surface(SurfaceParams(corr_len=corr_len, seed=seed),
                              512, 512, 2e-6)
        measured = measured_corr_length(hm.heights, hm.pitch)
        assert measured == pytest.approx(corr_len, rel=0.15)

    @pytest.mark.parametrize("nx,ny,pitch", [(1, 64, 2e-6), (64, 0, 2e-6),
                                             (64, 64, 0.0), (64, 64, -1e-6)])
    def test_invalid_arguments(self, nx, ny, pitch):
        with pytest.raises(ValueError):
            generate_surface(SurfaceParams(), nx, ny, pitch)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            SurfaceParams(sigma_h=-1e-9)
        with pytest.raises(ValueError):
            SurfaceParams(corr_len=0.0)

    @given(sigma=st.floats(1e-9, 1e-6), corr_frac=st.floats(0.5, 8.0),
           seed=st.integers(0, 2**32))
    def test_rms_and_mean_property(self, sigma, corr_frac, seed):
        pitch = 2e-6
        params = SurfaceParams(sigma_h=sigma, corr_len=corr_frac * pitch,
                               seed=seed)
        hm = generate_surface(params, 32, 32, pitch)
        assert np.isfinite(hm.heights).all()
        assert hm.rms() == pytest.approx(sigma, rel=1e-9)
        assert abs(hm.heights.mean()) <= 0.01 * sigma


class TestMakeReplica:
    def test_zero_error_is_exact_copy(self, tiny_master):
        rep = make_replica(tiny_master, 0.0, seed=9)
        assert np.array_equal(rep.heights, tiny_master.heights)

    def test_error_rms_is_exact(self, tiny_master):
        lam = 650e-9
        rep = make_replica(tiny_master, lam / 8, seed=3)
        diff = rep.heights - tiny_master.heights
        rms = np.sqrt((diff**2).mean())
        assert rms == pytest.approx(81.25e-9, rel=1e-9)
        assert rms == pytest.approx(81.25e-9, rel=0.05)

    def test_error_fields_of_distinct_seeds_are_uncorrelated(self, tiny_master):
        # near-white error fields make the ZNCC bound tight on a 256^2 grid
        r1 = make_replica(tiny_master, 65e-9, seed=1, error_corr_len=2e-6)
        r2 = make_replica(tiny_master, 65e-9, seed=2, error_corr_len=2e-6)
        e1 = r1.heights - tiny_master.heights
        e2 = r2.heights - tiny_master.heights
        assert abs(zncc(e1, e2)) < 0.05

    def test_error_field_independent_of_master(self, tiny_master):
        rep = make_replica(tiny_master, 65e-9, seed=7, error_corr_len=2e-6)
        err = rep.heights - tiny_master.heights
        assert abs(zncc(tiny_master.heights, err)) < 0.05

    def test_determinism(self, tiny_master):
        a = make_replica(tiny_master, 65e-9, seed=5)
        b = make_replica(tiny_master, 65e-9, seed=5)
        assert np.array_equal(a.heights, b.heights)

    def test_negative_error_rejected(self, tiny_master):
        with pytest.raises(ValueError):
            make_replica(tiny_master, -1e-9, seed=0)


class TestOcclude:
    def test_zero_fraction_is_identity(self, tiny_master):
        out = occlude(tiny_master, fraction=0.0, fill="flat")
        assert np.array_equal(out.heights, tiny_master.heights)

    def test_left_half_flat(self, tiny_master):
        nx = tiny_master.nx
        out = occlude(tiny_master, rect=(0, 0, nx // 2, tiny_master.ny),
                      fill="flat")
        assert np.all(out.heights[:, : nx // 2] == 0)
        assert np.array_equal(out.heights[:, nx // 2:],
                              tiny_master.heights[:, nx // 2:])

    def test_full_random_replaces_everything(self, tiny_master):
        out = occlude(tiny_master, fraction=1.0, fill="random", seed=99)
        assert abs(zncc(out.heights, tiny_master.heights)) < 0.1
        assert out.rms() == pytest.approx(tiny_master.rms(), rel=0.05)

    def test_rect_outside_grid_rejected(self, tiny_master):
        with pytest.raises(ValueError):
            occlude(tiny_master, rect=(0, 0, tiny_master.nx + 1, 4),
                    fill="flat")
        with pytest.raises(ValueError):
            occlude(tiny_master, rect=(-1, 0, 4, 4), fill="flat")

    def test_fraction_bounds(self, tiny_master):
        with pytest.raises(ValueError):
            occlude(tiny_master, fraction=1.5, fill="flat")

    def test_random_fill_needs_seed(self, tiny_master):
        with pytest.raises(ValueError):
            occlude(tiny_master, fraction=0.5, fill="random")

    def test_exactly_one_region_spec(self, tiny_master):
        with pytest.raises(ValueError):
            occlude(tiny_master, fill="flat")
        with pytest.raises(ValueError):
            occlude(tiny_master, rect=(0, 0, 2, 2), fraction=0.5, fill="flat")

    def test_determinism(self, tiny_master):
        a = occlude(tiny_master, fraction=0.3, fill="random", seed=4)
        b = occlude(tiny_master, fraction=0.3, fill="random", seed=4)
        assert np.array_equal(a.heights, b.heights)


class TestHeightMapFile:
    def test_round_trip(self, tmp_path, tiny_master):
        path = tmp_path / "m.oseh"
        write_heightmap(tiny_master, path)
        back = read_heightmap(path)
        assert back.nx == tiny_master.nx
        assert back.ny == tiny_master.ny
        assert back.pitch == tiny_master.pitch
        # storage is float32; the round trip is exact at that precision
        assert np.array_equal(back.heights,
                              tiny_master.heights.astype("<f4").astype(float))

    def test_header_layout(self, tmp_path):
        hm = generate_surface(SurfaceParams(seed=0), 3, 2, 1e-6)
        path = tmp_path / "t.oseh"
        write_heightmap(hm, path)
        raw = path.read_bytes()
        assert raw[:4] == b"OSEH"
        assert len(raw) == 4 + 2 + 4 + 4 + 8 + 4 * 3 * 2

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.oseh"
        path.write_bytes(b"NOPE" + bytes(30))
        with pytest.raises(ValueError, match="magic"):
            read_heightmap(path)

    def test_truncated_rejected(self, tmp_path, tiny_master):
        path = tmp_path / "trunc.oseh"
        write_heightmap(tiny_master, path)
        path.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(ValueError, match="truncated"):
            read_heightmap(path)


class TestHeightMapInvariants:
    def test_rejects_non_finite(self):
        h = np.zeros((4, 4))
        h[1, 1] = np.nan
        with pytest.raises(ValueError):
            HeightMap(pitch=1e-6, heights=h)

    def test_rejects_tiny_grids(self):
        with pytest.raises(ValueError):
            HeightMap(pitch=1e-6, heights=np.zeros((1, 8)))
