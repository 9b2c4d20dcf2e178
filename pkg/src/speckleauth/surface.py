"""Seeded rough-relief surfaces, imperfect replicas, and damage/occlusion.

Surfaces are stationary Gaussian random fields with a Gaussian autocovariance
C(r) = sigma_h^2 * exp(-(r/corr_len)^2), synthesized by spectral filtering of
seeded white noise. Fields are generated oversized and cropped by one
correlation length so the circular-convolution wrap never reaches the kept
region, then mean-removed and rescaled so the sample RMS equals sigma_h
exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEIGHTMAP_MAGIC = b"OSEH"
HEIGHTMAP_VERSION = 1

DEFAULT_SIGMA_H = 500e-9
DEFAULT_CORR_LEN = 3e-6
# Replication error is modelled as a smooth field: casting/curing errors vary
# over many feature sizes, which is what makes lambda/8-class errors tolerable.
DEFAULT_ERROR_CORR_LEN = 70e-6


@dataclass(frozen=True)
class SurfaceParams:
    """Statistical description of a random rough relief.

    sigma_h: target RMS roughness in meters.
    corr_len: 1/e lateral correlation length of the autocovariance, meters.
    seed: reproducibility seed; identical seeds give bit-identical surfaces.
    """

    sigma_h: float = DEFAULT_SIGMA_H
    corr_len: float = DEFAULT_CORR_LEN
    seed: int = 0

    def __post_init__(self):
        if self.sigma_h < 0:
            raise ValueError(f"sigma_h must be >= 0, got {self.sigma_h}")
        if self.corr_len <= 0:
            raise ValueError(f"corr_len must be > 0, got {self.corr_len}")


@dataclass
class HeightMap:
    """Gridded surface relief in meters with lateral pixel pitch.

    heights has shape (ny, nx), row-major; pitch is the lateral sample
    spacing in meters. provenance records how the map was produced.
    """

    pitch: float
    heights: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=np.float64)
        if self.heights.ndim != 2:
            raise ValueError("heights must be a 2D grid")
        if self.ny < 2 or self.nx < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.nx}x{self.ny}")
        if not self.pitch > 0:
            raise ValueError(f"pitch must be > 0, got {self.pitch}")
        if not np.all(np.isfinite(self.heights)):
            raise ValueError("heights contain non-finite values")

    @property
    def nx(self) -> int:
        return self.heights.shape[1]

    @property
    def ny(self) -> int:
        return self.heights.shape[0]

    @property
    def extent(self) -> tuple[float, float]:
        """Physical size (width, height) in meters."""
        return self.nx * self.pitch, self.ny * self.pitch

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.heights**2)))


def _gaussian_field(ny: int, nx: int, pitch: float, corr_len: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Zero-mean field with Gaussian autocovariance of 1/e-length corr_len.

    Returned un-normalized; callers rescale. A spatial Gaussian kernel of
    std corr_len/2 autocorrelates to exp(-(r/corr_len)^2), so the frequency
    filter is exp(-k^2 (corr_len/2)^2 / 2).
    """
    margin = int(np.ceil(corr_len / pitch))
    big_ny, big_nx = ny + 2 * margin, nx + 2 * margin
    white = rng.standard_normal((big_ny, big_nx))
    ky = 2 * np.pi * np.fft.fftfreq(big_ny, d=pitch)
    kx = 2 * np.pi * np.fft.fftfreq(big_nx, d=pitch)
    k2 = kx[np.newaxis, :] ** 2 + ky[:, np.newaxis] ** 2
    s = corr_len / 2.0
    filt = np.exp(-k2 * (s * s) / 2.0)
    f = np.fft.ifft2(np.fft.fft2(white) * filt).real
    return f[margin:margin + ny, margin:margin + nx]


def _normalized_field(ny, nx, pitch, sigma, corr_len, rng):
    """Mean-removed field rescaled so the sample RMS equals sigma exactly."""
    if sigma == 0:
        return np.zeros((ny, nx))
    f = _gaussian_field(ny, nx, pitch, corr_len, rng)
    f -= f.mean()
    r = np.sqrt(np.mean(f**2))
    if r == 0:
        return np.zeros((ny, nx))
    return f * (sigma / r)


def generate_surface(params: SurfaceParams, nx: int, ny: int, pitch: float) -> HeightMap:
    """Generate a seeded random rough surface.

    Args:
        params: roughness statistics and seed.
        nx, ny: grid dimensions in pixels (each >= 2).
        pitch: lateral sample spacing in meters.

    Returns:
        HeightMap with zero sample mean and sample RMS exactly params.sigma_h.
    """
    if nx < 2 or ny < 2:
        raise ValueError(f"grid must be at least 2x2, got {nx}x{ny}")
    if not pitch > 0:
        raise ValueError(f"pitch must be > 0, got {pitch}")
    rng = np.random.default_rng(params.seed)
    h = _normalized_field(ny, nx, pitch, params.sigma_h, params.corr_len, rng)
    prov = {
        "kind": "generated",
        "sigma_h": params.sigma_h,
        "corr_len": params.corr_len,
        "seed": params.seed,
        "pitch": pitch,
    }
    return HeightMap(pitch=pitch, heights=h, provenance=prov)


def make_replica(master: HeightMap, error_rms: float, seed: int,
                 error_corr_len: float = DEFAULT_ERROR_CORR_LEN) -> HeightMap:
    """Copy a master relief with an independent replication-error field.

    The error field uses the same Gaussian-autocovariance family as the
    surface itself, with its own correlation length (smooth by default),
    zero mean, and sample RMS exactly error_rms.

    Args:
        master: the relief being replicated.
        error_rms: RMS of the height error perpendicular to the surface, meters.
        seed: seed of the error field; independent of the master's seed.
        error_corr_len: 1/e correlation length of the error field, meters.

    Returns:
        HeightMap of the replica (master + error).
    """
    if error_rms < 0:
        raise ValueError(f"error_rms must be >= 0, got {error_rms}")
    if not error_corr_len > 0:
        raise ValueError(f"error_corr_len must be > 0, got {error_corr_len}")
    if error_rms == 0:
        heights = master.heights.copy()
    else:
        rng = np.random.default_rng(seed)
        err = _normalized_field(master.ny, master.nx, master.pitch,
                                error_rms, error_corr_len, rng)
        heights = master.heights + err
    prov = dict(master.provenance)
    prov.update({
        "kind": "replica",
        "error_rms": error_rms,
        "error_corr_len": error_corr_len,
        "error_seed": seed,
    })
    return HeightMap(pitch=master.pitch, heights=heights, provenance=prov)


def occlude(heightmap: HeightMap, rect: tuple[int, int, int, int] | None = None,
            fraction: float | None = None, fill: str = "flat",
            seed: int | None = None,
            params: SurfaceParams | None = None) -> HeightMap:
    """Replace part of a relief, modelling damage or loss of surface.

    Exactly one of rect / fraction selects the region:
      rect: (x0, y0, w, h) in pixels.
      fraction: value in [0, 1]; occludes a left-side vertical band whose
        width is round(fraction * nx) (fraction 0 leaves the map unchanged).

    fill "flat" sets heights in the region to 0; "random" replaces them with
    a fresh surface drawn with the same statistics (params, or the map's own
    generation parameters from provenance) under the given seed.
    """
    if (rect is None) == (fraction is None):
        raise ValueError("specify exactly one of rect or fraction")
    if fill not in ("flat", "random"):
        raise ValueError(f"fill must be 'flat' or 'random', got {fill!r}")

    if fraction is not None:
        if not 0 <= fraction <= 1:
            raise ValueError(f"fraction must be in [0, 1], got {fraction}")
        width = int(round(fraction * heightmap.nx))
        rect = (0, 0, width, heightmap.ny)
    x0, y0, w, h = rect
    if w < 0 or h < 0:
        raise ValueError(f"rectangle size must be non-negative, got {w}x{h}")
    if x0 < 0 or y0 < 0 or x0 + w > heightmap.nx or y0 + h > heightmap.ny:
        raise ValueError(
            f"rectangle {rect} lies outside the {heightmap.nx}x{heightmap.ny} grid")

    heights = heightmap.heights.copy()
    if w > 0 and h > 0:
        if fill == "flat":
            heights[y0:y0 + h, x0:x0 + w] = 0.0
        else:
            if seed is None:
                raise ValueError("fill='random' requires a seed")
            if params is None:
                prov = heightmap.provenance
                try:
                    params = SurfaceParams(sigma_h=prov["sigma_h"],
                                           corr_len=prov["corr_len"], seed=seed)
                except KeyError:
                    raise ValueError(
                        "fill='random' needs SurfaceParams (map provenance "
                        "does not record generation parameters)") from None
            else:
                params = SurfaceParams(sigma_h=params.sigma_h,
                                       corr_len=params.corr_len, seed=seed)
            fresh = generate_surface(params, heightmap.nx, heightmap.ny,
                                     heightmap.pitch)
            heights[y0:y0 + h, x0:x0 + w] = fresh.heights[y0:y0 + h, x0:x0 + w]
    prov = dict(heightmap.provenance)
    prov.setdefault("occlusions", [])
    prov["occlusions"] = list(prov["occlusions"]) + [
        {"rect": [int(v) for v in (x0, y0, w, h)], "fill": fill, "seed": seed}]
    return HeightMap(pitch=heightmap.pitch, heights=heights, provenance=prov)


def write_heightmap(heightmap: HeightMap, path) -> None:
    """Write the binary height-map format.

    Layout (little-endian): magic "OSEH", version u16, nx u32, ny u32,
    pitch f64 in meters, then nx*ny float32 heights in meters, row-major.
    """
    path = Path(path)
    header = HEIGHTMAP_MAGIC + struct.pack(
        "<HIId", HEIGHTMAP_VERSION, heightmap.nx, heightmap.ny, heightmap.pitch)
    body = heightmap.heights.astype("<f4").tobytes(order="C")
    path.write_bytes(header + body)


def read_heightmap(path) -> HeightMap:
    """Read the binary height-map format written by write_heightmap."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != HEIGHTMAP_MAGIC:
        raise ValueError(f"{path}: not a height-map file (bad magic)")
    version, nx, ny, pitch = struct.unpack("<HIId", raw[4:4 + 18])
    if version != HEIGHTMAP_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = 4 + 18 + 4 * nx * ny
    if len(raw) != expected:
        raise ValueError(f"{path}: truncated file ({len(raw)} bytes, "
                         f"expected {expected})")
    heights = np.frombuffer(raw[4 + 18:], dtype="<f4").astype(np.float64)
    heights = heights.reshape(ny, nx)
    return HeightMap(pitch=pitch, heights=heights,
                     provenance={"kind": "file", "path": str(path)})
