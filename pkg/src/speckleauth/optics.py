"""Coherent reflection, aperture-limited imaging, and sensor capture.

The imaging model is scalar Fourier optics with a single pupil-plane low-pass:
the object field reflected by the relief is Fourier transformed, masked by a
circular pupil, transformed back, and its squared modulus is resampled onto
the sensor. The pupil cutoff is calibrated so that the full width at half
maximum of the intensity autocovariance equals the mean speckle diameter
1.22*lambda*z/D quoted for a circular aperture.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from PIL import Image

from .errors import ConfigurationError, DegenerateInputError
from .surface import HeightMap

SPECKLE_DIAMETER_COEFF = 1.22
# Solution of (2 J1(x)/x)^2 = 1/2: half-maximum argument of the Airy
# intensity pattern. FWHM of the speckle autocovariance is x/(pi*f_c).
AIRY_HALF_MAX_X = 1.6163399483107037
SENSOR_MEAN_FRACTION = 0.25
READ_NOISE_COUNTS = 1.0

# Sensor geometry of the reference 5 MP camera: 5.70 mm over 2560 pixels.
REFERENCE_PX_PITCH = 5.70e-3 / 2560


@dataclass(frozen=True)
class SensorSpec:
    """Pixel grid and quantization of the capturing camera."""

    px_w: int = 512
    px_h: int = 512
    px_pitch: float = REFERENCE_PX_PITCH
    bit_depth: int = 16

    def __post_init__(self):
        if self.px_w < 16 or self.px_h < 16:
            raise ValueError(f"sensor must be at least 16x16, got "
                             f"{self.px_w}x{self.px_h}")
        if not self.px_pitch > 0:
            raise ValueError(f"px_pitch must be > 0, got {self.px_pitch}")
        if self.bit_depth not in (8, 12, 16):
            raise ValueError(f"bit_depth must be 8, 12 or 16, got {self.bit_depth}")

    @property
    def full_scale(self) -> int:
        return (1 << self.bit_depth) - 1


@dataclass(frozen=True)
class OpticalConfig:
    """One illumination/capture setup.

    wavelength and all lengths in meters, theta_inc in radians.
    illum_power_scale is a dimensionless exposure factor (1.0 places the
    mean intensity at 25% of the sensor's full scale).
    """

    wavelength: float = 650e-9
    theta_inc: float = 0.0
    aperture_d: float = 5.9e-3
    dist_z: float = 75e-3
    sensor: SensorSpec = field(default_factory=SensorSpec)
    illum_power_scale: float = 1.0

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")
        if not 0 <= self.theta_inc < math.pi / 2:
            raise ValueError(f"theta_inc must be in [0, pi/2), got {self.theta_inc}")
        if not self.aperture_d > 0:
            raise ValueError(f"aperture_d must be > 0, got {self.aperture_d}")
        if not self.dist_z > 0:
            raise ValueError(f"dist_z must be > 0, got {self.dist_z}")
        if not self.illum_power_scale >= 0:
            raise ValueError("illum_power_scale must be >= 0")

    def canonical(self) -> dict:
        """Canonical SI-unit form used for hashing and storage."""
        return {
            "wavelength": self.wavelength,
            "theta_inc": self.theta_inc,
            "aperture_d": self.aperture_d,
            "dist_z": self.dist_z,
            "px_w": self.sensor.px_w,
            "px_h": self.sensor.px_h,
            "px_pitch": self.sensor.px_pitch,
            "bit_depth": self.sensor.bit_depth,
            "illum_power_scale": self.illum_power_scale,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SpecklePattern:
    """Quantized 2D intensity image plus the fingerprint of its config."""

    intensities: np.ndarray
    bit_depth: int
    config_fingerprint: str = ""

    def __post_init__(self):
        self.intensities = np.asarray(self.intensities)
        if self.intensities.dtype != np.uint16:
            self.intensities = self.intensities.astype(np.uint16)
        if self.intensities.ndim != 2:
            raise ValueError("intensities must be a 2D grid")
        if self.width < 16 or self.height < 16:
            raise ValueError(f"pattern must be at least 16x16, got "
                             f"{self.width}x{self.height}")
        if self.bit_depth not in (8, 12, 16):
            raise ValueError(f"bit_depth must be 8, 12 or 16, got {self.bit_depth}")
        if int(self.intensities.max()) > (1 << self.bit_depth) - 1:
            raise ValueError("intensity counts exceed the quantization range")

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def height(self) -> int:
        return self.intensities.shape[0]


def reflection_phase(heightmap: HeightMap, wavelength: float,
                     theta_inc: float = 0.0) -> np.ndarray:
    """Unit-amplitude complex field reflected from a relief.

    The round-trip path difference gives phi = (4*pi/lambda) * h * cos(theta).
    """
    if not wavelength > 0:
        raise ValueError(f"wavelength must be > 0, got {wavelength}")
    if not 0 <= theta_inc < math.pi / 2:
        raise ValueError(f"theta_inc must be in [0, pi/2), got {theta_inc}")
    phase = (4 * np.pi / wavelength) * math.cos(theta_inc) * heightmap.heights
    return np.exp(1j * phase)


def expected_speckle_diameter(config: OpticalConfig) -> float:
    """Mean speckle diameter in the observation plane, 1.22*lambda*z/D, meters."""
    return SPECKLE_DIAMETER_COEFF * config.wavelength * config.dist_z / config.aperture_d


def _pupil_cutoff(config: OpticalConfig) -> float:
    """Pupil cutoff in cycles/meter; calibrated to the speckle-diameter law."""
    return AIRY_HALF_MAX_X / (np.pi * expected_speckle_diameter(config))


def _check_guards(heightmap: HeightMap, config: OpticalConfig) -> None:
    d = expected_speckle_diameter(config)
    px = config.sensor.px_pitch
    if d < 2 * px:
        raise ConfigurationError(
            f"expected speckle diameter {d*1e6:.3f} um is below two sensor "
            f"pixels ({2*px*1e6:.3f} um); offending parameters: "
            f"wavelength={config.wavelength}, dist_z={config.dist_z}, "
            f"aperture_d={config.aperture_d}, sensor.px_pitch={px}")
    f_c = _pupil_cutoff(config)
    f_nyq = 1.0 / (2 * heightmap.pitch)
    if f_c > f_nyq:
        raise ConfigurationError(
            f"pupil cutoff {f_c:.1f} cyc/m exceeds the height-map Nyquist "
            f"{f_nyq:.1f} cyc/m; offending parameters: map pitch="
            f"{heightmap.pitch}, aperture_d={config.aperture_d}, "
            f"wavelength={config.wavelength}, dist_z={config.dist_z}")


def _filter_through_pupil(field: np.ndarray, pitch: float,
                          config: OpticalConfig) -> np.ndarray:
    """Image-plane intensity after the circular pupil low-pass."""
    ny, nx = field.shape
    fx = np.fft.fftfreq(nx, d=pitch)
    fy = np.fft.fftfreq(ny, d=pitch)
    f2 = fx[np.newaxis, :] ** 2 + fy[:, np.newaxis] ** 2
    mask = f2 <= _pupil_cutoff(config) ** 2
    spectrum = sfft.fft2(field)
    image_field = sfft.ifft2(spectrum * mask)
    return np.abs(image_field) ** 2


def speckle_intensity(heightmap: HeightMap, config: OpticalConfig) -> np.ndarray:
    """Continuous observation-plane intensity on the height-map grid.

    This is the pipeline up to (but not including) sensor capture; useful for
    statistics that should not see resampling, noise, or quantization.
    """
    _check_guards(heightmap, config)
    field = reflection_phase(heightmap, config.wavelength, config.theta_inc)
    return _filter_through_pupil(field, heightmap.pitch, config)


def _sample_axis(img: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation of img along one axis at fractional indices."""
    n = img.shape[axis]
    i0 = np.floor(coords).astype(int)
    i0 = np.clip(i0, 0, n - 2)
    frac = np.clip(coords - i0, 0.0, 1.0)
    a = np.take(img, i0, axis=axis)
    b = np.take(img, i0 + 1, axis=axis)
    shape = [1, 1]
    shape[axis] = len(coords)
    frac = frac.reshape(shape)
    return a * (1 - frac) + b * frac


def _resample_to_sensor(intensity: np.ndarray, src_pitch: float,
                        sensor: SensorSpec) -> np.ndarray:
    """Bilinear resample of a centered window onto the sensor grid."""
    ny, nx = intensity.shape
    for n_src, n_dst, name in ((nx, sensor.px_w, "width"),
                               (ny, sensor.px_h, "height")):
        window = n_dst * sensor.px_pitch
        extent = n_src * src_pitch
        if window > extent:
            raise ConfigurationError(
                f"sensor {name} {window*1e3:.3f} mm exceeds the simulated "
                f"field extent {extent*1e3:.3f} mm; offending parameters: "
                f"sensor px counts/pitch vs map size/pitch")
    xs = ((np.arange(sensor.px_w) - (sensor.px_w - 1) / 2)
          * (sensor.px_pitch / src_pitch) + (nx - 1) / 2)
    ys = ((np.arange(sensor.px_h) - (sensor.px_h - 1) / 2)
          * (sensor.px_pitch / src_pitch) + (ny - 1) / 2)
    out = _sample_axis(intensity, xs, axis=1)
    out = _sample_axis(out, ys, axis=0)
    return out


def sensor_capture(intensity: np.ndarray, src_pitch: float, sensor: SensorSpec,
                   exposure_scale: float = 1.0, noise_seed: int = 0,
                   config_fingerprint: str = "") -> SpecklePattern:
    """Resample a non-negative intensity field onto the sensor and quantize.

    Exposure is normalized so that the mean count lands at 25% of full scale
    times exposure_scale. Gaussian read noise of 1 count is added; negative
    excursions are folded to their magnitude rather than clipped, then the
    result is clipped to full scale and rounded.
    """
    intensity = np.asarray(intensity, dtype=np.float64)
    if np.any(intensity < 0):
        raise ValueError("intensity field must be non-negative")
    sampled = _resample_to_sensor(intensity, src_pitch, sensor)
    mean = sampled.mean()
    target = SENSOR_MEAN_FRACTION * sensor.full_scale * exposure_scale
    gain = target / mean if mean > 0 else 0.0
    rng = np.random.default_rng(noise_seed)
    noise = rng.standard_normal(sampled.shape) * READ_NOISE_COUNTS
    counts = np.abs(sampled * gain + noise)
    counts = np.clip(np.rint(counts), 0, sensor.full_scale).astype(np.uint16)
    return SpecklePattern(intensities=counts, bit_depth=sensor.bit_depth,
                          config_fingerprint=config_fingerprint)


def simulate_speckle(heightmap: HeightMap, config: OpticalConfig,
                     noise_seed: int = 0) -> SpecklePattern:
    """Full capture pipeline: reflect, image through the pupil, quantize.

    Deterministic in (heightmap, config, noise_seed).
    """
    intensity = speckle_intensity(heightmap, config)
    return sensor_capture(intensity, heightmap.pitch, config.sensor,
                          config.illum_power_scale, noise_seed,
                          config.fingerprint())


def _holo_replay_field(heightmap: HeightMap, enroll_config: OpticalConfig,
                       challenge_config: OpticalConfig) -> np.ndarray:
    """Field replayed by a hologram that stored the object field at enrollment.

    At the recording configuration the stored field is reproduced exactly.
    Under a different beam the replayed wavefront keeps the recorded optical
    path, so its phase scales by lambda_e/lambda_c and the reconstruction
    geometry magnifies transversely by lambda_c/lambda_e; a true relief would
    instead have its phase recomputed from the heights.
    """
    phase = ((4 * np.pi / enroll_config.wavelength)
             * math.cos(enroll_config.theta_inc) * heightmap.heights)
    same_beam = (challenge_config.wavelength == enroll_config.wavelength
                 and challenge_config.theta_inc == enroll_config.theta_inc)
    if same_beam:
        return np.exp(1j * phase)
    mag = challenge_config.wavelength / enroll_config.wavelength
    ny, nx = phase.shape
    xs = (np.arange(nx) - (nx - 1) / 2) / mag + (nx - 1) / 2
    ys = (np.arange(ny) - (ny - 1) / 2) / mag + (ny - 1) / 2
    sampled = _sample_axis(phase, xs, axis=1)
    sampled = _sample_axis(sampled, ys, axis=0)
    replay_phase = (enroll_config.wavelength / challenge_config.wavelength) * sampled
    return np.exp(1j * replay_phase)


def simulate_hologram_copy(genuine: HeightMap, enroll_config: OpticalConfig,
                           challenge_config: OpticalConfig,
                           noise_seed: int = 0) -> SpecklePattern:
    """Speckle captured from a holographic copy of a genuine relief.

    The fake stored the complex object field at enroll_config. Probing it at
    challenge_config images the replayed field through the challenge optics,
    so it matches the genuine pattern only when the two configs share the
    same beam.
    """
    _check_guards(genuine, challenge_config)
    field = _holo_replay_field(genuine, enroll_config, challenge_config)
    intensity = _filter_through_pupil(field, genuine.pitch, challenge_config)
    return sensor_capture(intensity, genuine.pitch, challenge_config.sensor,
                          challenge_config.illum_power_scale, noise_seed,
                          challenge_config.fingerprint())


def _fwhm_from_profile(profile: np.ndarray) -> float:
    """One-sided half-max crossing (in samples) by linear interpolation."""
    for i in range(1, len(profile)):
        if profile[i] < 0.5:
            prev, cur = profile[i - 1], profile[i]
            return (i - 1) + (prev - 0.5) / (prev - cur)
    raise DegenerateInputError(
        "autocovariance central lobe is wider than the frame")


def measured_speckle_diameter(pattern) -> float:
    """Mean speckle diameter of a pattern, in pixels.

    Defined as the full width at half maximum of the central lobe of the
    normalized intensity autocovariance, averaged over the two axes.
    """
    img = pattern.intensities if isinstance(pattern, SpecklePattern) else pattern
    x = np.asarray(img, dtype=np.float64)
    x = x - x.mean()
    if not np.any(x):
        raise DegenerateInputError("constant image has no speckle to measure")
    spectrum = sfft.fft2(x)
    autocov = sfft.ifft2(spectrum * np.conj(spectrum)).real
    autocov = autocov / autocov[0, 0]
    autocov = np.fft.fftshift(autocov)
    cy, cx = autocov.shape[0] // 2, autocov.shape[1] // 2
    fwhm_x = 2 * _fwhm_from_profile(autocov[cy, cx:])
    fwhm_y = 2 * _fwhm_from_profile(autocov[cy:, cx])
    return (fwhm_x + fwhm_y) / 2


def sidecar_dict(config: OpticalConfig) -> dict:
    """JSON sidecar for a pattern: display units plus exact SI values."""
    return {
        "lambda_nm": config.wavelength * 1e9,
        "theta_deg": math.degrees(config.theta_inc),
        "aperture_mm": config.aperture_d * 1e3,
        "z_mm": config.dist_z * 1e3,
        "px_pitch_um": config.sensor.px_pitch * 1e6,
        "bit_depth": config.sensor.bit_depth,
        "fingerprint": config.fingerprint(),
        "px_w": config.sensor.px_w,
        "px_h": config.sensor.px_h,
        "illum_power_scale": config.illum_power_scale,
        "si": config.canonical(),
    }


def config_from_sidecar(sidecar: dict) -> OpticalConfig:
    """Rebuild an OpticalConfig from a sidecar written by sidecar_dict."""
    si = sidecar["si"]
    sensor = SensorSpec(px_w=int(si["px_w"]), px_h=int(si["px_h"]),
                        px_pitch=si["px_pitch"], bit_depth=int(si["bit_depth"]))
    return OpticalConfig(wavelength=si["wavelength"], theta_inc=si["theta_inc"],
                         aperture_d=si["aperture_d"], dist_z=si["dist_z"],
                         sensor=sensor, illum_power_scale=si["illum_power_scale"])


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def write_pattern(pattern: SpecklePattern, config: OpticalConfig, path) -> None:
    """Write a pattern as 16-bit grayscale PNG plus its JSON sidecar."""
    path = Path(path)
    Image.fromarray(pattern.intensities).save(path, format="PNG")
    _sidecar_path(path).write_text(
        json.dumps(sidecar_dict(config), indent=2, sort_keys=True) + "\n")


def read_pattern(path) -> tuple[SpecklePattern, OpticalConfig]:
    """Read a pattern PNG and its sidecar back."""
    path = Path(path)
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a grayscale PNG")
    sidecar = json.loads(_sidecar_path(path).read_text())
    config = config_from_sidecar(sidecar)
    pattern = SpecklePattern(intensities=arr.astype(np.uint16),
                             bit_depth=int(sidecar["bit_depth"]),
                             config_fingerprint=sidecar["fingerprint"])
    return pattern, config
