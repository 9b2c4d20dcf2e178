"""Command-line front-end for the whole pipeline.

All physical quantities on flags carry explicit unit suffixes (650nm, 5.9mm,
0.25deg) to keep units unambiguous. Every command that writes files also
writes a run manifest (parameters, seeds, input/output digests, version,
duration) beside its primary output; re-running with the same parameters
reproduces byte-identical outputs.

Exit codes: 0 success / verdict genuine, 2 usage error, 3 verdict
counterfeit, 4 verdict inconclusive, 1 internal error.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
import re
import sys
import time
from decimal import Decimal
from pathlib import Path

import click

from . import __version__
from .auth import (DEFAULT_BAND, DEFAULT_THRESHOLD, ReferenceStore,
                   calibrate_threshold, challenge_verify, verify)
from .correlation import (export_heatmap, find_peak, match_with_rotation,
                          rotation_crop_margin)
from .errors import NonSeparableError, SpeckleAuthError
from .experiment import DeskScale, run_replica_matrix
from .optics import (REFERENCE_PX_PITCH, OpticalConfig, SensorSpec,
                     expected_speckle_diameter, measured_speckle_diameter,
                     read_pattern, simulate_speckle, write_pattern)
from .surface import (SurfaceParams, generate_surface, make_replica, occlude,
                      read_heightmap, write_heightmap)

_LENGTH_EXP = {"nm": -9, "um": -6, "µm": -6, "mm": -3, "cm": -2, "m": 0}
_QTY_RE = re.compile(r"^\s*([+-]?[0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)"
                     r"\s*([a-zA-Zµ]+)\s*$")


class LengthType(click.ParamType):
    """Length with a mandatory unit suffix, e.g. 650nm, 5.9mm, 2um."""

    name = "length"

    def convert(self, value, param, ctx):
        if isinstance(value, (int, float)):
            return float(value)
        m = _QTY_RE.match(value)
        if not m or m.group(2) not in _LENGTH_EXP:
            self.fail(f"{value!r} is not a length with unit "
                      f"({'/'.join(_LENGTH_EXP)})", param, ctx)
        # exact decimal scaling so '5.9mm' equals the float literal 5.9e-3
        return float(Decimal(m.group(1)).scaleb(_LENGTH_EXP[m.group(2)]))


class AngleType(click.ParamType):
    """Angle with a mandatory unit suffix, e.g. 0.25deg or 0.004rad."""

    name = "angle"

    def convert(self, value, param, ctx):
        if isinstance(value, (int, float)):
            return float(value)
        m = _QTY_RE.match(value)
        if not m:
            self.fail(f"{value!r} is not an angle with unit (deg/rad/mrad)",
                      param, ctx)
        num, unit = float(m.group(1)), m.group(2)
        if unit == "deg":
            return math.radians(num)
        if unit == "rad":
            return num
        if unit == "mrad":
            return num * 1e-3
        self.fail(f"unknown angle unit {unit!r}", param, ctx)


LENGTH = LengthType()
ANGLE = AngleType()


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    return v


def _write_manifest(command: str, params: dict, inputs, outputs,
                    t0: float, manifest_path=None) -> Path:
    inputs = [Path(p) for p in inputs]
    outputs = [Path(p) for p in outputs]
    if manifest_path is None:
        primary = outputs[0]
        if primary.is_dir():
            manifest_path = primary / "run_manifest.json"
        else:
            manifest_path = primary.with_name(primary.name + ".manifest.json")
    manifest = {
        "command": command,
        "parameters": {k: _jsonable(v) for k, v in sorted(params.items())},
        "seeds": {k: v for k, v in params.items() if "seed" in k},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs
                    if p.is_file()},
        "version": __version__,
        "duration_s": time.perf_counter() - t0,
    }
    Path(manifest_path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return Path(manifest_path)


def _trap(f):
    """Map domain errors to usage errors (exit 2) and I/O to exit 1."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (SpeckleAuthError, ValueError) as e:
            raise click.UsageError(str(e)) from e
        except OSError as e:
            raise click.ClickException(str(e)) from e

    return wrapper


def _build_config(wavelength, theta, aperture, z, sensor_w, sensor_h,
                  px_pitch, bit_depth, exposure) -> OpticalConfig:
    sensor = SensorSpec(px_w=sensor_w, px_h=sensor_h,
                        px_pitch=px_pitch if px_pitch is not None
                        else REFERENCE_PX_PITCH,
                        bit_depth=bit_depth)
    return OpticalConfig(wavelength=wavelength, theta_inc=theta,
                         aperture_d=aperture, dist_z=z, sensor=sensor,
                         illum_power_scale=exposure)


_OPTICS_FLAGS = [
    click.option("--lambda", "wavelength", type=LENGTH, default="650nm",
                 show_default=True, help="Illumination wavelength."),
    click.option("--theta", "theta", type=ANGLE, default="0deg",
                 show_default=True, help="Incidence angle."),
    click.option("--aperture", type=LENGTH, default="5.9mm",
                 show_default=True, help="Lens aperture diameter D."),
    click.option("--z", "z", type=LENGTH, default="75mm", show_default=True,
                 help="Lens-to-observation-plane distance."),
    click.option("--sensor-w", type=int, default=512, show_default=True),
    click.option("--sensor-h", type=int, default=512, show_default=True),
    click.option("--px-pitch", type=LENGTH, default=None,
                 help="Sensor pixel pitch [default: 2.2265625um]."),
    click.option("--bit-depth", type=click.Choice(["8", "12", "16"]),
                 default="16", show_default=True),
    click.option("--exposure", type=float, default=1.0, show_default=True,
                 help="Exposure factor (1.0 puts the mean at 25% full scale)."),
]


def _with_optics_flags(f):
    for opt in reversed(_OPTICS_FLAGS):
        f = opt(f)
    return f


@click.group(no_args_is_help=False)
@click.version_option(version=__version__)
def cli():
    """Simulate replicable optical security elements and authenticate them
    by speckle cross-correlation."""


@cli.command("gen-surface")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--nx", type=int, default=1024, show_default=True)
@click.option("--ny", type=int, default=1024, show_default=True)
@click.option("--pitch", type=LENGTH, default="2um", show_default=True)
@click.option("--sigma-h", type=LENGTH, default="500nm", show_default=True,
              help="Target RMS roughness.")
@click.option("--corr-len", type=LENGTH, default="3um", show_default=True,
              help="Lateral 1/e correlation length.")
@click.option("-o", "--out", type=click.Path(path_type=Path), required=True)
@click.option("--json", "as_json", is_flag=True)
@_trap
def gen_surface(seed, nx, ny, pitch, sigma_h, corr_len, out, as_json):
    """Generate a seeded random rough master surface."""
    t0 = time.perf_counter()
    params = SurfaceParams(sigma_h=sigma_h, corr_len=corr_len, seed=seed)
    hm = generate_surface(params, nx, ny, pitch)
    write_heightmap(hm, out)
    _write_manifest("gen-surface", locals_params(locals()), [], [out], t0)
    info = {"out": str(out), "nx": nx, "ny": ny, "rms_nm": hm.rms() * 1e9}
    click.echo(json.dumps(info) if as_json
               else f"wrote {out} ({nx}x{ny}, RMS {hm.rms()*1e9:.1f} nm)")


def locals_params(ls: dict) -> dict:
    skip = {"t0", "as_json", "ctx"}
    return {k: _jsonable(v) for k, v in ls.items()
            if k not in skip and isinstance(v, (int, float, str, bool, Path,
                                                tuple, type(None)))}


@cli.command()
@click.option("-i", "--master", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--error-rms", type=LENGTH, required=True,
              help="RMS replication error perpendicular to the surface.")
@click.option("--error-corr-len", type=LENGTH, default="70um",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--out", type=click.Path(path_type=Path), required=True)
@_trap
def replicate(master, error_rms, error_corr_len, seed, out):
    """Derive an imperfect replica from a master surface."""
    t0 = time.perf_counter()
    hm = read_heightmap(master)
    rep = make_replica(hm, error_rms, seed=seed, error_corr_len=error_corr_len)
    write_heightmap(rep, out)
    _write_manifest("replicate", locals_params(locals()), [master], [out], t0)
    diff_rms = float(
        ((rep.heights - hm.heights) ** 2).mean() ** 0.5) * 1e9
    click.echo(f"wrote {out} (error RMS {diff_rms:.2f} nm)")


@cli.command("occlude")
@click.option("-i", "--input", "input_", type=click.Path(exists=True,
              path_type=Path), required=True)
@click.option("--fraction", type=float, default=None,
              help="Occlude a left-side band of this area fraction.")
@click.option("--rect", type=int, nargs=4, default=None,
              help="Rectangle x0 y0 w h in pixels.")
@click.option("--fill", type=click.Choice(["flat", "random"]),
              default="flat", show_default=True)
@click.option("--seed", type=int, default=None,
              help="Seed for random fill.")
@click.option("--sigma-h", type=LENGTH, default="500nm", show_default=True,
              help="Roughness of the random fill.")
@click.option("--corr-len", type=LENGTH, default="3um", show_default=True)
@click.option("-o", "--out", type=click.Path(path_type=Path), required=True)
@_trap
def occlude_cmd(input_, fraction, rect, fill, seed, sigma_h, corr_len, out):
    """Replace part of a surface, modelling damage or loss."""
    t0 = time.perf_counter()
    hm = read_heightmap(input_)
    params = None
    if fill == "random":
        params = SurfaceParams(sigma_h=sigma_h, corr_len=corr_len,
                               seed=seed or 0)
    occluded = occlude(hm, rect=rect or None, fraction=fraction, fill=fill,
                       seed=seed, params=params)
    write_heightmap(occluded, out)
    _write_manifest("occlude", locals_params(locals()), [input_], [out], t0)
    click.echo(f"wrote {out}")


@cli.command()
@click.option("-i", "--surface", type=click.Path(exists=True, path_type=Path),
              required=True)
@_with_optics_flags
@click.option("--noise-seed", type=int, default=0, show_default=True)
@click.option("-o", "--out", type=click.Path(path_type=Path), required=True,
              help="Output PNG (a JSON sidecar is written next to it).")
@_trap
def simulate(surface, wavelength, theta, aperture, z, sensor_w, sensor_h,
             px_pitch, bit_depth, exposure, noise_seed, out):
    """Capture the speckle pattern of a surface under one configuration."""
    t0 = time.perf_counter()
    hm = read_heightmap(surface)
    config = _build_config(wavelength, theta, aperture, z, sensor_w, sensor_h,
                           px_pitch, int(bit_depth), exposure)
    pattern = simulate_speckle(hm, config, noise_seed=noise_seed)
    write_pattern(pattern, config, out)
    _write_manifest("simulate", locals_params(locals()), [surface],
                    [out, Path(out).with_suffix(".json")], t0)
    click.echo(f"wrote {out} (config {config.fingerprint()})")


@cli.command("speckle-size")
@click.option("-i", "--pattern", type=click.Path(exists=True, path_type=Path),
              default=None, help="Measure this pattern's speckle size.")
@_with_optics_flags
@click.option("--json", "as_json", is_flag=True)
@_trap
def speckle_size(pattern, wavelength, theta, aperture, z, sensor_w, sensor_h,
                 px_pitch, bit_depth, exposure, as_json):
    """Report expected (1.22*lambda*z/D) and/or measured speckle size."""
    config = _build_config(wavelength, theta, aperture, z, sensor_w, sensor_h,
                           px_pitch, int(bit_depth), exposure)
    d = expected_speckle_diameter(config)
    info = {
        "expected_um": d * 1e6,
        "expected_px": d / config.sensor.px_pitch,
    }
    if pattern is not None:
        pat, pat_config = read_pattern(pattern)
        info["measured_px"] = measured_speckle_diameter(pat)
        info["measured_um"] = info["measured_px"] * pat_config.sensor.px_pitch * 1e6
    if as_json:
        click.echo(json.dumps(info))
    else:
        for k, v in info.items():
            click.echo(f"{k}: {v:.4f}")


def _search_options(f):
    for opt in reversed([
        click.option("--max-shift", type=int, default=32, show_default=True),
        click.option("--theta-range", type=ANGLE, default="0deg",
                     show_default=True),
        click.option("--theta-step", type=ANGLE, default="0.25deg",
                     show_default=True),
    ]):
        f = opt(f)
    return f


@cli.command()
@click.option("-a", "--first", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("-b", "--second", type=click.Path(exists=True, path_type=Path),
              required=True)
@_search_options
@click.option("--refine", is_flag=True,
              help="Coarse-to-fine rotation refinement.")
@click.option("--json", "as_json", is_flag=True)
@_trap
def correlate(first, second, max_shift, theta_range, theta_step, refine,
              as_json):
    """Find the correlation peak of two patterns over shifts and rotations."""
    pa, _ = read_pattern(first)
    pb, _ = read_pattern(second)
    res = match_with_rotation(pa, pb, theta_range=theta_range,
                              theta_step=theta_step, max_shift=max_shift,
                              refine=refine)
    info = {
        "peak": res.peak, "dx": res.dx, "dy": res.dy,
        "rotation_deg": math.degrees(res.rotation),
        "off_peak_mean": res.secondary_stats[0],
        "off_peak_std": res.secondary_stats[1],
    }
    click.echo(json.dumps(info) if as_json else
               f"peak {res.peak:.4f} at (dx={res.dx}, dy={res.dy}, "
               f"rot={math.degrees(res.rotation):.3f} deg)")


@cli.command()
@click.option("-a", "--first", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("-b", "--second", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--max-shift", type=int, default=32, show_default=True)
@click.option("--rotation", type=ANGLE, default="0deg", show_default=True,
              help="Fixed rotation applied to the second pattern.")
@click.option("--format", "fmt", type=click.Choice(["csv", "png"]),
              default=None, help="Defaults to the output extension.")
@click.option("-o", "--out", type=click.Path(path_type=Path), required=True)
@_trap
def heatmap(first, second, max_shift, rotation, fmt, out):
    """Export the coefficient-vs-shift heat map of two patterns."""
    t0 = time.perf_counter()
    from .correlation import CorrelationMap, _to_image, correlate_shifts, \
        rotate_image

    pa, _ = read_pattern(first)
    pb, _ = read_pattern(second)
    a = _to_image(pa)
    b = _to_image(pb)
    if rotation != 0:
        m = rotation_crop_margin(a.shape, rotation)
        a = a[m:a.shape[0] - m, m:a.shape[1] - m]
        b = rotate_image(b, -rotation)[m:b.shape[0] - m, m:b.shape[1] - m]
    cmap = correlate_shifts(a, b, max_shift)
    cmap = CorrelationMap(values=cmap.values, shift_range=cmap.shift_range,
                          rotation=rotation)
    if fmt is None:
        fmt = Path(out).suffix.lstrip(".").lower()
    export_heatmap(cmap, out, format=fmt)
    _write_manifest("heatmap", locals_params(locals()), [first, second],
                    [out, Path(out).with_suffix(".json")], t0)
    peak, dx, dy = find_peak(cmap)
    click.echo(f"wrote {out} (peak {peak:.4f} at dx={dx}, dy={dy})")


@cli.command()
@click.option("--store", type=click.Path(path_type=Path), required=True)
@click.option("--id", "record_id", type=str, required=True)
@click.option("--created-at", type=str, default=None,
              help="ISO-8601 timestamp (defaults to now).")
@click.argument("patterns", nargs=-1, required=True,
                type=click.Path(exists=True, path_type=Path))
@_trap
def enroll(store, record_id, created_at, patterns):
    """Enroll genuine pattern(s) (PNG + sidecar) under an id."""
    t0 = time.perf_counter()
    entries = [read_pattern(p) for p in patterns]
    ref_store = ReferenceStore(store)
    record = ref_store.enroll(record_id, entries, created_at=created_at)
    record_dir = Path(store) / record_id
    outputs = sorted(p for p in record_dir.iterdir() if p.is_file())
    _write_manifest("enroll", locals_params(locals()), list(patterns),
                    outputs, t0,
                    manifest_path=record_dir / "run_manifest.json")
    click.echo(f"enrolled {record_id!r} with {len(entries)} entries "
               f"(content {record.content_hash[:16]})")


def _emit_decision(ctx, decision, as_json_always=True):
    click.echo(decision.to_json())
    if decision.verdict == "counterfeit":
        ctx.exit(3)
    if decision.verdict == "inconclusive":
        ctx.exit(4)


@cli.command("verify")
@click.option("--store", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--id", "record_id", type=str, required=True)
@click.option("--test", type=click.Path(exists=True, path_type=Path),
              required=True, help="Pattern to verify (PNG with sidecar).")
@click.option("--threshold", type=float, default=DEFAULT_THRESHOLD,
              show_default=True)
@click.option("--band", type=float, default=DEFAULT_BAND, show_default=True,
              help="Half width of the inconclusive band.")
@_search_options
@click.pass_context
@_trap
def verify_cmd(ctx, store, record_id, test, threshold, band, max_shift,
               theta_range, theta_step):
    """Verify a test pattern against an enrolled reference."""
    pattern, config = read_pattern(test)
    decision = verify(ReferenceStore(store), record_id, pattern, config,
                      threshold=threshold, band=band, max_shift=max_shift,
                      theta_range=theta_range, theta_step=theta_step)
    _emit_decision(ctx, decision)


@cli.command("challenge")
@click.option("--store", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--id", "record_id", type=str, required=True)
@click.option("--probe", "probes", multiple=True, required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Probe pattern; repeat for each configuration.")
@click.option("--threshold", type=float, default=DEFAULT_THRESHOLD,
              show_default=True)
@click.option("--band", type=float, default=DEFAULT_BAND, show_default=True)
@_search_options
@click.pass_context
@_trap
def challenge_cmd(ctx, store, record_id, probes, threshold, band, max_shift,
                  theta_range, theta_step):
    """Run the multi-configuration challenge against an enrolled id."""
    probe_entries = [read_pattern(p) for p in probes]
    decision = challenge_verify(ReferenceStore(store), record_id,
                                probe_entries, threshold=threshold, band=band,
                                max_shift=max_shift, theta_range=theta_range,
                                theta_step=theta_step)
    _emit_decision(ctx, decision)


@cli.command()
@click.option("--genuine", "-g", type=float, multiple=True, required=True)
@click.option("--impostor", "-i", type=float, multiple=True, required=True)
@click.option("--json", "as_json", is_flag=True)
def calibrate(genuine, impostor, as_json):
    """Calibrate a threshold from genuine and impostor score populations."""
    try:
        threshold, margin = calibrate_threshold(list(genuine), list(impostor))
    except NonSeparableError as e:
        raise click.ClickException(
            f"populations are not separable: min genuine {e.genuine_min}, "
            f"max impostor {e.impostor_max}") from e
    except ValueError as e:
        raise click.UsageError(str(e)) from e
    info = {"threshold": threshold, "margin": margin}
    click.echo(json.dumps(info) if as_json
               else f"threshold {threshold:.4f}, margin {margin:.4f}")


@cli.command("repro-table1")
@click.option("-o", "--out", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--error-rms", type=LENGTH, default="65nm", show_default=True,
              help="Replication error of the simulated replicas.")
@click.option("--surface-n", type=int, default=1024, show_default=True)
@click.option("--sensor-n", type=int, default=512, show_default=True)
@click.option("--max-shift", type=int, default=32, show_default=True)
@click.pass_context
@_trap
def repro_table1(ctx, out, seed, error_rms, surface_n, sensor_n, max_shift):
    """Reproduce the 2-masters x 2-replicas correlation matrix experiment."""
    t0 = time.perf_counter()
    scale = DeskScale(surface_nx=surface_n, surface_ny=surface_n,
                      sensor_n=sensor_n)
    result = run_replica_matrix(out_dir=out, seed=seed, scale=scale,
                        error_rms=error_rms, max_shift=max_shift)
    for line in result.report_lines():
        click.echo(line)
    _write_manifest("repro-table1", locals_params(locals()), [],
                    [out] + sorted(p for p in Path(out).iterdir()
                                   if p.is_file()), t0,
                    manifest_path=Path(out) / "run_manifest.json")
    if not result.passed:
        ctx.exit(1)


def main(argv=None):
    """Console entry point with the documented exit-code mapping."""
    try:
        rv = cli.main(args=argv, standalone_mode=False)
        if isinstance(rv, int) and rv != 0:
            sys.exit(rv)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.UsageError as e:
        e.show()
        sys.exit(2)
    except click.ClickException as e:
        e.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except Exception as e:  # pragma: no cover - last-resort mapping
        print(f"error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
