"""Enrollment store, verification decisions, and threshold calibration.

The store is a plain directory tree, one subdirectory per enrolled id,
holding pattern PNGs, config sidecars, and a manifest with a content hash.
Everything is human-inspectable and diff-friendly. Writes go to a temp
directory first and are renamed into place.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .correlation import DEFAULT_THETA_STEP, match_with_rotation
from .errors import EnrollConflictError, NonSeparableError, UnknownIdError
from .optics import (OpticalConfig, SpecklePattern, read_pattern,
                     write_pattern)

DEFAULT_THRESHOLD = 0.5
# Scores within +-band of the threshold give an inconclusive verdict instead
# of a forced call; width motivated by the +-0.05 spread of repeated captures.
DEFAULT_BAND = 0.05

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


@dataclass
class ProbeScore:
    fingerprint: str
    peak: float
    dx: int
    dy: int
    rotation: float


@dataclass
class AuthDecision:
    """Verdict with per-challenge scores and the threshold used."""

    verdict: str  # genuine | counterfeit | inconclusive
    scores: list[ProbeScore]
    threshold: float
    protocol: str  # single | challenge
    band: float = DEFAULT_BAND

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "threshold": self.threshold,
            "band": self.band,
            "protocol": self.protocol,
            "scores": [
                {"fingerprint": s.fingerprint, "peak": s.peak, "dx": s.dx,
                 "dy": s.dy, "rotation": s.rotation}
                for s in self.scores
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class ReferenceRecord:
    """Enrolled genuine patterns for one id."""

    id: str
    entries: list[tuple[SpecklePattern, OpticalConfig]]
    created_at: str
    content_hash: str = ""

    def entry_for(self, fingerprint: str):
        for pattern, config in self.entries:
            if config.fingerprint() == fingerprint:
                return pattern, config
        return None


def _content_hash(entries) -> str:
    h = hashlib.sha256()
    for pattern, config in entries:
        h.update(f"{pattern.height}x{pattern.width}:{pattern.bit_depth}".encode())
        h.update(pattern.intensities.tobytes())
        h.update(json.dumps(config.canonical(), sort_keys=True,
                            separators=(",", ":")).encode())
    return h.hexdigest()


class ReferenceStore:
    """Single-writer, multi-reader store of ReferenceRecords on disk."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, record_id: str) -> Path:
        return self.root / record_id

    def has(self, record_id: str) -> bool:
        return (self._dir(record_id) / "manifest.json").exists()

    def ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir()
                      if (p / "manifest.json").exists())

    def enroll(self, record_id: str, entries, created_at: str | None = None
               ) -> ReferenceRecord:
        """Persist genuine patterns under an id.

        Re-enrolling the exact same content is a no-op returning the
        existing record; the same id with different content is a conflict.
        created_at is an ISO-8601 string (defaults to the current UTC time;
        pass it explicitly when byte-identical re-runs are required).
        """
        if not record_id or not _ID_RE.match(record_id):
            raise ValueError(f"invalid record id {record_id!r}")
        entries = list(entries)
        if not entries:
            raise ValueError("enrollment needs at least one entry")
        fingerprints = [config.fingerprint() for _, config in entries]
        if len(set(fingerprints)) != len(fingerprints):
            raise ValueError("duplicate config fingerprints in enrollment")
        new_hash = _content_hash(entries)
        if self.has(record_id):
            existing = self.get(record_id)
            if existing.content_hash == new_hash:
                return existing
            raise EnrollConflictError(
                f"id {record_id!r} already enrolled with different content")
        if created_at is None:
            created_at = datetime.now(timezone.utc).isoformat()

        tmp = Path(tempfile.mkdtemp(prefix=f".enroll-{record_id}-",
                                    dir=self.root))
        try:
            manifest_entries = []
            for i, (pattern, config) in enumerate(entries):
                pattern_file = f"entry{i:02d}.png"
                config_file = f"entry{i:02d}.json"
                write_pattern(pattern, config, tmp / pattern_file)
                manifest_entries.append({
                    "pattern_file": pattern_file,
                    "config_file": config_file,
                    "fingerprint": config.fingerprint(),
                })
            manifest = {
                "id": record_id,
                "created_at": created_at,
                "entries": manifest_entries,
                "content_hash": new_hash,
            }
            (tmp / "manifest.json").write_text(
                json.dumps(manifest, indent=2, sort_keys=True) + "\n")
            os.replace(tmp, self._dir(record_id))
        except Exception:
            for p in tmp.glob("*"):
                p.unlink()
            if tmp.exists():
                tmp.rmdir()
            raise
        return ReferenceRecord(id=record_id, entries=entries,
                               created_at=created_at, content_hash=new_hash)

    def get(self, record_id: str) -> ReferenceRecord:
        path = self._dir(record_id) / "manifest.json"
        if not path.exists():
            raise UnknownIdError(record_id)
        manifest = json.loads(path.read_text())
        entries = []
        for e in manifest["entries"]:
            pattern, config = read_pattern(self._dir(record_id) / e["pattern_file"])
            entries.append((pattern, config))
        record = ReferenceRecord(id=manifest["id"], entries=entries,
                                 created_at=manifest["created_at"],
                                 content_hash=manifest["content_hash"])
        if _content_hash(entries) != record.content_hash:
            raise ValueError(
                f"store content for {record_id!r} does not match its hash")
        return record


def enroll(store: ReferenceStore, record_id: str, entries,
           created_at: str | None = None) -> ReferenceRecord:
    return store.enroll(record_id, entries, created_at)


def _decide(peaks, threshold, band) -> str:
    if all(p >= threshold + band for p in peaks):
        return "genuine"
    if any(p < threshold - band for p in peaks):
        return "counterfeit"
    return "inconclusive"


def verify(store: ReferenceStore, record_id: str, test: SpecklePattern,
           config: OpticalConfig, threshold: float = DEFAULT_THRESHOLD,
           band: float = DEFAULT_BAND, max_shift=32, theta_range: float = 0.0,
           theta_step: float = DEFAULT_THETA_STEP) -> AuthDecision:
    """Verify a test pattern against the enrolled reference for one config.

    Runs the rotation/shift search of the reference against the test and
    decides: genuine when the peak clears threshold + band, counterfeit when
    it falls below threshold - band, inconclusive in between.
    """
    record = store.get(record_id)
    fingerprint = config.fingerprint()
    entry = record.entry_for(fingerprint)
    if entry is None:
        raise UnknownIdError(
            f"id {record_id!r} has no enrolled entry for config {fingerprint}")
    reference, _ = entry
    result = match_with_rotation(reference, test, theta_range=theta_range,
                                 theta_step=theta_step, max_shift=max_shift)
    score = ProbeScore(fingerprint=fingerprint, peak=result.peak, dx=result.dx,
                       dy=result.dy, rotation=result.rotation)
    verdict = _decide([result.peak], threshold, band)
    return AuthDecision(verdict=verdict, scores=[score], threshold=threshold,
                        protocol="single", band=band)


def challenge_verify(store: ReferenceStore, record_id: str, probes,
                     threshold: float = DEFAULT_THRESHOLD,
                     band: float = DEFAULT_BAND, max_shift=32,
                     theta_range: float = 0.0,
                     theta_step: float = DEFAULT_THETA_STEP,
                     allow_single: bool = False) -> AuthDecision:
    """Multi-configuration challenge: every probe must match its enrollment.

    probes is a list of (SpecklePattern, OpticalConfig) captured from the
    object under test with the illumination varied (wavelength and/or
    incidence angle). A relief reproduces all of them; a holographic copy
    reproduces only the configuration it was recorded under. Requires at
    least two probes with distinct configs (allow_single relaxes this for
    test harnesses).
    """
    probes = list(probes)
    if not probes:
        raise ValueError("challenge needs at least one probe")
    fingerprints = [config.fingerprint() for _, config in probes]
    if not allow_single and len(set(fingerprints)) < 2:
        raise ValueError(
            "challenge protocol needs at least 2 probes with distinct configs")
    record = store.get(record_id)
    missing = [fp for fp in fingerprints if record.entry_for(fp) is None]
    if missing:
        raise ValueError(
            f"probe config(s) not enrolled for {record_id!r}: "
            + ", ".join(missing))
    scores = []
    for (test, config), fingerprint in zip(probes, fingerprints):
        reference, _ = record.entry_for(fingerprint)
        result = match_with_rotation(reference, test, theta_range=theta_range,
                                     theta_step=theta_step, max_shift=max_shift)
        scores.append(ProbeScore(fingerprint=fingerprint, peak=result.peak,
                                 dx=result.dx, dy=result.dy,
                                 rotation=result.rotation))
    verdict = _decide([s.peak for s in scores], threshold, band)
    return AuthDecision(verdict=verdict, scores=scores, threshold=threshold,
                        protocol="challenge", band=band)


def calibrate_threshold(genuine_scores, impostor_scores
                        ) -> tuple[float, float]:
    """Midpoint threshold between score populations, with its margin.

    Returns (threshold, margin) where threshold is the midpoint of
    (max impostor, min genuine) and margin is half their gap. Raises
    NonSeparableError when the populations overlap or touch.
    """
    genuine = list(genuine_scores)
    impostor = list(impostor_scores)
    if not genuine or not impostor:
        raise ValueError("both score populations must be nonempty")
    g_min = min(genuine)
    i_max = max(impostor)
    if g_min <= i_max:
        raise NonSeparableError(g_min, i_max)
    return (g_min + i_max) / 2, (g_min - i_max) / 2
