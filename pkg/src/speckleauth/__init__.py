"""Speckle-correlation authentication of replicable optical security elements.

Pipeline: seeded rough surfaces and replicas (surface), coherent imaging onto
a quantizing sensor (optics), shift/rotation cross-correlation (correlation),
and enrollment/verification with a multi-configuration anti-hologram
challenge (auth). experiment bundles desk-scale end-to-end runs.
"""

__version__ = "0.1.0"

from .auth import (AuthDecision, ProbeScore, ReferenceRecord, ReferenceStore,
                   calibrate_threshold, challenge_verify, enroll, verify)
from .correlation import (CorrelationMap, CorrelationResult,
                          brute_force_correlate, correlate_shifts,
                          export_heatmap, find_peak, load_heatmap_csv,
                          match_with_rotation, rotate_image, zncc)
from .errors import (ConfigurationError, DegenerateInputError,
                     EnrollConflictError, NonSeparableError, SpeckleAuthError,
                     UnknownIdError)
from .experiment import (DeskScale, ReplicaMatrixResult, replication_error_sweep,
                         run_replica_matrix)
from .optics import (OpticalConfig, SensorSpec, SpecklePattern,
                     expected_speckle_diameter, measured_speckle_diameter,
                     read_pattern, reflection_phase, sensor_capture,
                     simulate_hologram_copy, simulate_speckle,
                     speckle_intensity, write_pattern)
from .surface import (HeightMap, SurfaceParams, generate_surface,
                      make_replica, occlude, read_heightmap, write_heightmap)

__all__ = [
    "AuthDecision", "ProbeScore", "ReferenceRecord", "ReferenceStore",
    "calibrate_threshold", "challenge_verify", "enroll", "verify",
    "CorrelationMap", "CorrelationResult", "brute_force_correlate",
    "correlate_shifts", "export_heatmap", "find_peak", "load_heatmap_csv",
    "match_with_rotation", "rotate_image", "zncc",
    "ConfigurationError", "DegenerateInputError", "EnrollConflictError",
    "NonSeparableError", "SpeckleAuthError", "UnknownIdError",
    "DeskScale", "ReplicaMatrixResult", "replication_error_sweep", "run_replica_matrix",
    "OpticalConfig", "SensorSpec", "SpecklePattern",
    "expected_speckle_diameter", "measured_speckle_diameter", "read_pattern",
    "reflection_phase", "sensor_capture", "simulate_hologram_copy",
    "simulate_speckle", "speckle_intensity", "write_pattern",
    "HeightMap", "SurfaceParams", "generate_surface", "make_replica",
    "occlude", "read_heightmap", "write_heightmap",
]
