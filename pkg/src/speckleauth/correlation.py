"""Shift/rotation speckle matching by overlap-normalized cross-correlation.

Every coefficient is a zero-normalized cross-correlation computed over the
overlap region of that particular shift, so values stay meaningful (and in
[-1, 1]) at large displacements. The fast path evaluates the cross term with
FFTs and the per-shift means/variances with integral images; the brute-force
path is a direct realization of the same definition and serves as the
semantic ground truth in tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy import ndimage

from .errors import DegenerateInputError
from .optics import SpecklePattern

DEFAULT_MAX_SHIFT = 32
DEFAULT_THETA_STEP = math.radians(0.25)
# Overlap patches whose std is below this fraction of the image dynamic
# range carry no signal; their coefficient is defined as 0 in both paths.
_DEGENERATE_REL_STD = 1e-6
_BOUND_SLACK = 1e-9


@dataclass
class CorrelationMap:
    """Coefficient-vs-shift surface: values[dy + max_dy, dx + max_dx]."""

    values: np.ndarray
    shift_range: tuple[int, int]
    rotation: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        mdx, mdy = self.shift_range
        if self.values.shape != (2 * mdy + 1, 2 * mdx + 1):
            raise ValueError(
                f"values shape {self.values.shape} does not match shift range "
                f"(+-{mdx}, +-{mdy})")
        if np.any(np.abs(self.values) > 1 + _BOUND_SLACK):
            raise ValueError("correlation coefficients outside [-1, 1]")

    @property
    def dxs(self) -> np.ndarray:
        return np.arange(-self.shift_range[0], self.shift_range[0] + 1)

    @property
    def dys(self) -> np.ndarray:
        return np.arange(-self.shift_range[1], self.shift_range[1] + 1)

    def value_at(self, dx: int, dy: int) -> float:
        mdx, mdy = self.shift_range
        return float(self.values[dy + mdy, dx + mdx])


@dataclass
class CorrelationResult:
    """Global peak of a shift/rotation search."""

    peak: float
    dx: int
    dy: int
    rotation: float
    secondary_stats: tuple[float, float]  # mean, std of off-peak values


def _to_image(x) -> np.ndarray:
    if isinstance(x, SpecklePattern):
        x = x.intensities
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2D image")
    return arr


def zncc(a, b) -> float:
    """Zero-normalized cross-correlation of two equal-size images.

    sum((a-mean_a)(b-mean_b)) / sqrt(sum((a-mean_a)^2) sum((b-mean_b)^2))
    over the full frame.
    """
    av, bv = _to_image(a), _to_image(b)
    if av.shape != bv.shape:
        raise ValueError(f"shape mismatch: {av.shape} vs {bv.shape}")
    da = av - av.mean()
    db = bv - bv.mean()
    va = float((da * da).sum())
    vb = float((db * db).sum())
    if va == 0 or vb == 0:
        raise DegenerateInputError("constant image in zncc")
    return float(np.clip((da * db).sum() / math.sqrt(va * vb), -1.0, 1.0))


def _parse_max_shift(max_shift) -> tuple[int, int]:
    if np.isscalar(max_shift):
        mdx = mdy = int(max_shift)
    else:
        mdx, mdy = (int(v) for v in max_shift)
    if mdx < 0 or mdy < 0:
        raise ValueError(f"max_shift must be non-negative, got {max_shift}")
    return mdx, mdy


def _validate_pair(a, b, mdx, mdy):
    av, bv = _to_image(a), _to_image(b)
    if av.shape != bv.shape:
        raise ValueError(f"shape mismatch: {av.shape} vs {bv.shape}")
    h, w = av.shape
    if (mdx > 0 and w < 4 * mdx) or (mdy > 0 and h < 4 * mdy):
        raise ValueError(
            f"max_shift (+-{mdx}, +-{mdy}) too large for overlap "
            f"normalization on {w}x{h} images (need 4x max_shift per axis)")
    range_a = float(av.max() - av.min())
    range_b = float(bv.max() - bv.min())
    if range_a == 0 or range_b == 0:
        raise DegenerateInputError("constant image in shift correlation")
    return av, bv, range_a, range_b


def _overlap_bounds(h, w, dxs, dys):
    """Per-shift overlap rectangles in the first image, broadcast grids."""
    dys = dys[:, np.newaxis]
    dxs = dxs[np.newaxis, :]
    ay0 = np.maximum(0, -dys)
    ay1 = h - np.maximum(0, dys)
    ax0 = np.maximum(0, -dxs)
    ax1 = w - np.maximum(0, dxs)
    return ay0, ay1, ax0, ax1


def _integral(img: np.ndarray) -> np.ndarray:
    ii = np.zeros((img.shape[0] + 1, img.shape[1] + 1))
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=ii[1:, 1:])
    return ii


def _rect_sum(ii, y0, y1, x0, x1):
    return ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0]


def brute_force_correlate(a, b, max_shift) -> CorrelationMap:
    """Direct double-loop evaluation of per-shift overlap ZNCC.

    The testing oracle: slow, obviously correct. Intended for small images
    (roughly 64x64 and below).
    """
    mdx, mdy = _parse_max_shift(max_shift)
    av, bv, range_a, range_b = _validate_pair(a, b, mdx, mdy)
    h, w = av.shape
    values = np.zeros((2 * mdy + 1, 2 * mdx + 1))
    for iy, dy in enumerate(range(-mdy, mdy + 1)):
        for ix, dx in enumerate(range(-mdx, mdx + 1)):
            ay0, ay1 = max(0, -dy), h - max(0, dy)
            ax0, ax1 = max(0, -dx), w - max(0, dx)
            pa = av[ay0:ay1, ax0:ax1]
            pb = bv[ay0 + dy:ay1 + dy, ax0 + dx:ax1 + dx]
            n = pa.size
            da = pa - pa.mean()
            db = pb - pb.mean()
            va = float((da * da).sum())
            vb = float((db * db).sum())
            floor_a = (_DEGENERATE_REL_STD * range_a) ** 2 * n
            floor_b = (_DEGENERATE_REL_STD * range_b) ** 2 * n
            if va <= floor_a or vb <= floor_b:
                values[iy, ix] = 0.0
            else:
                values[iy, ix] = (da * db).sum() / math.sqrt(va * vb)
    np.clip(values, -1.0, 1.0, out=values)
    return CorrelationMap(values=values, shift_range=(mdx, mdy))


def _prepare_reference(av: np.ndarray, mdx: int, mdy: int) -> dict:
    """Precompute transforms and running sums of the fixed image."""
    h, w = av.shape
    ny = sfft.next_fast_len(h + mdy, real=True)
    nx = sfft.next_fast_len(w + mdx, real=True)
    return {
        "shape": (h, w),
        "fft_shape": (ny, nx),
        "mdx": mdx,
        "mdy": mdy,
        "fa": sfft.rfft2(av, s=(ny, nx), workers=-1),
        "ii_a": _integral(av),
        "ii_a2": _integral(av * av),
        "range_a": float(av.max() - av.min()),
    }


def _correlate_prepared(prep: dict, bv: np.ndarray, range_b: float) -> np.ndarray:
    h, w = prep["shape"]
    mdx, mdy = prep["mdx"], prep["mdy"]
    ny, nx = prep["fft_shape"]
    fb = sfft.rfft2(bv, s=(ny, nx), workers=-1)
    cross = sfft.irfft2(np.conj(prep["fa"]) * fb, s=(ny, nx), workers=-1)
    lag_y = np.arange(-mdy, mdy + 1) % ny
    lag_x = np.arange(-mdx, mdx + 1) % nx
    cross = cross[np.ix_(lag_y, lag_x)]

    dys = np.arange(-mdy, mdy + 1)
    dxs = np.arange(-mdx, mdx + 1)
    ay0, ay1, ax0, ax1 = _overlap_bounds(h, w, dxs, dys)
    by0, by1 = ay0 + dys[:, np.newaxis], ay1 + dys[:, np.newaxis]
    bx0, bx1 = ax0 + dxs[np.newaxis, :], ax1 + dxs[np.newaxis, :]
    n = ((ay1 - ay0) * (ax1 - ax0)).astype(np.float64)

    ii_b = _integral(bv)
    ii_b2 = _integral(bv * bv)
    sum_a = _rect_sum(prep["ii_a"], ay0, ay1, ax0, ax1)
    sum_a2 = _rect_sum(prep["ii_a2"], ay0, ay1, ax0, ax1)
    sum_b = _rect_sum(ii_b, by0, by1, bx0, bx1)
    sum_b2 = _rect_sum(ii_b2, by0, by1, bx0, bx1)

    cov = cross - sum_a * sum_b / n
    va = np.maximum(sum_a2 - sum_a * sum_a / n, 0.0)
    vb = np.maximum(sum_b2 - sum_b * sum_b / n, 0.0)
    floor_a = (_DEGENERATE_REL_STD * prep["range_a"]) ** 2 * n
    floor_b = (_DEGENERATE_REL_STD * range_b) ** 2 * n
    valid = (va > floor_a) & (vb > floor_b)
    values = np.zeros_like(cov)
    np.divide(cov, np.sqrt(va * vb, where=valid, out=np.ones_like(va)),
              out=values, where=valid)
    np.clip(values, -1.0, 1.0, out=values)
    return values


def correlate_shifts(a, b, max_shift) -> CorrelationMap:
    """ZNCC at every integer shift up to max_shift, FFT-accelerated.

    max_shift is a scalar or a (max_dx, max_dy) pair. The coefficient at
    (dx, dy) compares a[y, x] against b[y + dy, x + dx] over their overlap,
    normalized by that overlap's own means and variances. Agrees with
    brute_force_correlate to well below 1e-6.
    """
    mdx, mdy = _parse_max_shift(max_shift)
    av, bv, _, range_b = _validate_pair(a, b, mdx, mdy)
    prep = _prepare_reference(av, mdx, mdy)
    values = _correlate_prepared(prep, bv, range_b)
    return CorrelationMap(values=values, shift_range=(mdx, mdy))


def find_peak(cmap: CorrelationMap) -> tuple[float, int, int]:
    """Global maximum of a map as (value, dx, dy).

    Ties break deterministically: smallest |dx|+|dy| first, then smallest
    dy, then smallest dx.
    """
    vals = cmap.values
    if vals.size == 0:
        raise ValueError("empty correlation map")
    peak = vals.max()
    iy, ix = np.nonzero(vals == peak)
    mdx, mdy = cmap.shift_range
    dxs = ix - mdx
    dys = iy - mdy
    order = np.lexsort((dxs, dys, np.abs(dxs) + np.abs(dys)))
    best = order[0]
    return float(peak), int(dxs[best]), int(dys[best])


def rotate_image(img: np.ndarray, theta: float) -> np.ndarray:
    """Rotate an image about its center by theta radians, bilinear.

    Positive angles turn the +x (column) axis toward the +y (row) axis.
    Pixels sampled from outside the source are filled with 0; callers are
    expected to crop a safety margin so those never enter a correlation.
    """
    if theta == 0:
        return np.asarray(img, dtype=np.float64)
    c, s = math.cos(theta), math.sin(theta)
    matrix = np.array([[c, -s], [s, c]])
    center = (np.asarray(img.shape, dtype=np.float64) - 1) / 2
    offset = center - matrix @ center
    return ndimage.affine_transform(np.asarray(img, dtype=np.float64), matrix,
                                    offset=offset, order=1,
                                    mode="constant", cval=0.0)


def rotation_crop_margin(shape: tuple[int, int], theta_max: float) -> int:
    """Pixels to trim per side so rotated samples stay inside the source."""
    if theta_max == 0:
        return 0
    t = abs(theta_max)
    half = max(shape) / 2
    return int(math.ceil(half * (math.sin(t) + 1 - math.cos(t)))) + 1


def _off_peak_stats(values: np.ndarray, iy: int, ix: int) -> tuple[float, float]:
    if values.size <= 1:
        return 0.0, 0.0
    mask = np.ones(values.shape, dtype=bool)
    mask[iy, ix] = False
    rest = values[mask]
    return float(rest.mean()), float(rest.std())


def match_with_rotation(a, b, theta_range: float = 0.0,
                        theta_step: float = DEFAULT_THETA_STEP,
                        max_shift=DEFAULT_MAX_SHIFT,
                        refine: bool = False) -> CorrelationResult:
    """Best (rotation, shift) alignment of b against a.

    Sweeps rotations theta in [-theta_range, +theta_range] on a grid of
    theta_step; for each candidate, b is un-rotated by theta (bilinear, about
    the image center) and shift-correlated against a. Both images are cropped
    by a margin that keeps every rotated sample inside the source, so borders
    never enter the normalization. Reports the rotation theta* such that b is
    (approximately) a rotated by theta*.

    With refine=True the step is halved three times around the best angle
    after the sweep; off by default so results depend only on the grid.
    """
    if theta_step <= 0:
        raise ValueError(f"theta_step must be > 0, got {theta_step}")
    if theta_range < 0:
        raise ValueError(f"theta_range must be >= 0, got {theta_range}")
    mdx, mdy = _parse_max_shift(max_shift)
    av = _to_image(a)
    bv = _to_image(b)
    if av.shape != bv.shape:
        raise ValueError(f"shape mismatch: {av.shape} vs {bv.shape}")
    margin_range = theta_range + (theta_step if refine else 0.0)
    m = rotation_crop_margin(av.shape, margin_range)
    h, w = av.shape
    if h - 2 * m < max(2, 4 * mdy if mdy else 2) or \
            w - 2 * m < max(2, 4 * mdx if mdx else 2):
        raise ValueError(
            f"images of {w}x{h} too small for rotation range "
            f"{theta_range} rad plus max_shift (+-{mdx}, +-{mdy})")

    a_crop = av[m:h - m, m:w - m] if m else av
    range_a = float(a_crop.max() - a_crop.min())
    if range_a == 0:
        raise DegenerateInputError("constant image in shift correlation")
    prep = _prepare_reference(a_crop, mdx, mdy)

    def evaluate(theta):
        rot = rotate_image(bv, -theta)
        b_crop = rot[m:h - m, m:w - m] if m else rot
        range_b = float(b_crop.max() - b_crop.min())
        if range_b == 0:
            raise DegenerateInputError("constant image in shift correlation")
        values = _correlate_prepared(prep, b_crop, range_b)
        cmap = CorrelationMap(values=values, shift_range=(mdx, mdy),
                              rotation=theta)
        peak, dx, dy = find_peak(cmap)
        return peak, dx, dy, cmap

    n_steps = int(math.floor(theta_range / theta_step + 1e-9))
    thetas = [k * theta_step for k in range(-n_steps, n_steps + 1)]

    best = None
    for theta in thetas:
        peak, dx, dy, cmap = evaluate(theta)
        # deterministic reduction: larger peak wins, ties prefer small |theta|
        key = (-peak, abs(theta), theta)
        if best is None or key < best[0]:
            best = (key, peak, dx, dy, theta, cmap)

    if refine:
        step = theta_step
        for _ in range(3):
            step /= 2
            for theta in (best[4] - step, best[4] + step):
                peak, dx, dy, cmap = evaluate(theta)
                key = (-peak, abs(theta), theta)
                if key < best[0]:
                    best = (key, peak, dx, dy, theta, cmap)

    _, peak, dx, dy, theta, cmap = best
    stats = _off_peak_stats(cmap.values, dy + mdy, dx + mdx)
    return CorrelationResult(peak=peak, dx=dx, dy=dy, rotation=theta,
                             secondary_stats=stats)


def _heatmap_sidecar(cmap: CorrelationMap, vmin: float, vmax: float) -> dict:
    return {
        "shift_range": [int(cmap.shift_range[0]), int(cmap.shift_range[1])],
        "rotation": cmap.rotation,
        "vmin": vmin,
        "vmax": vmax,
    }


def export_heatmap(cmap: CorrelationMap, path, format: str = "csv") -> Path:
    """Write a correlation map as CSV (dx,dy,value) or color-mapped PNG.

    The PNG color scale is auto-ranged to the map's own min/max; the range
    and shift metadata go to a JSON sidecar next to the file (both formats).
    """
    path = Path(path)
    vmin = float(cmap.values.min())
    vmax = float(cmap.values.max())
    try:
        if format == "csv":
            lines = ["dx,dy,value"]
            mdx, mdy = cmap.shift_range
            for iy, dy in enumerate(range(-mdy, mdy + 1)):
                for ix, dx in enumerate(range(-mdx, mdx + 1)):
                    lines.append(f"{dx},{dy},{float(cmap.values[iy, ix])!r}")
            path.write_text("\n".join(lines) + "\n")
        elif format == "png":
            from matplotlib import cm
            from PIL import Image

            span = vmax - vmin
            norm = (cmap.values - vmin) / span if span > 0 \
                else np.zeros_like(cmap.values)
            rgba = cm.viridis(norm)
            rgb = (rgba[:, :, :3] * 255).round().astype(np.uint8)
            Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
        else:
            raise ValueError(f"unknown heatmap format {format!r}")
        sidecar = path.with_suffix(".json")
        sidecar.write_text(
            json.dumps(_heatmap_sidecar(cmap, vmin, vmax), indent=2) + "\n")
    except OSError as e:
        raise OSError(f"failed to write heat map to {path}: {e}") from e
    return path


def load_heatmap_csv(path) -> CorrelationMap:
    """Read back a CSV heat map written by export_heatmap."""
    path = Path(path)
    rows = path.read_text().strip().splitlines()
    if not rows or rows[0] != "dx,dy,value":
        raise ValueError(f"{path}: not a heat map CSV")
    entries = [r.split(",") for r in rows[1:]]
    dxs = np.array([int(e[0]) for e in entries])
    dys = np.array([int(e[1]) for e in entries])
    vals = np.array([float(e[2]) for e in entries])
    mdx, mdy = int(dxs.max()), int(dys.max())
    values = np.zeros((2 * mdy + 1, 2 * mdx + 1))
    values[dys + mdy, dxs + mdx] = vals
    rotation = 0.0
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        rotation = json.loads(sidecar.read_text()).get("rotation", 0.0)
    return CorrelationMap(values=values, shift_range=(mdx, mdy),
                          rotation=rotation)
