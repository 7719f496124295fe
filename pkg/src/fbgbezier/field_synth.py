"""Rotating-field commands and a synthetic deformation oracle.

The oracle is intentionally simple: the robot bends with uniform curvature
in a plane that follows the field direction with a frequency-proportional
lag, and the curvature magnitude falls off with frequency (first-order
low-pass) and with distance to the coils (dipole-like power law).  It exists
to drive the sensing pipeline and to give the learners a known, smooth
ground truth; it is not a model of the real elastomer.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError
from .frames import write_frames
from .pipeline import ROBOT_LENGTH, reconstruct_frame
from .sensor_model import (CurvatureProfile, FbgFrame, FrameMode, SensorGeometry,
                           strain_from_curvature, wavelength_shifts_from_strain, wrap_angle)

log = logging.getLogger(__name__)

FEATURE_COLUMNS = ["bx_mT", "by_mT", "bmag_mT", "freq_Hz", "dist_mm"]
TARGET_COLUMNS = [f"p{i}{ax}" for i in range(4) for ax in "xyz"]


@dataclass(frozen=True)
class FieldCommand:
    amplitude: float
    frequency: float
    time: float
    b: np.ndarray


def field_at(amplitude: float, frequency: float, t: float) -> FieldCommand:
    """In-plane rotating field ``A * (-sin wt, cos wt, 0)`` in mT."""
    if amplitude < 0:
        raise DomainError("field amplitude must be non-negative")
    if not frequency > 0:
        raise DomainError("rotation frequency must be positive")
    wt = 2.0 * math.pi * frequency * t
    b = np.array([-amplitude * math.sin(wt), amplitude * math.cos(wt), 0.0])
    return FieldCommand(amplitude, frequency, t, b)


@dataclass(frozen=True)
class ScenarioGrid:
    amplitudes: tuple = (2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0)
    frequencies: tuple = (0.2, 0.4, 0.6, 0.8, 1.0)
    distances: tuple = (100.0, 90.0)
    frame_rate: float = 30.0
    duration: float = 2.5

    def __post_init__(self):
        for name in ("amplitudes", "frequencies", "distances"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if any(not 0 <= a <= 14 for a in self.amplitudes):
            raise DomainError("amplitudes must lie in [0, 14] mT")
        if any(not 0.2 <= f <= 1.0 for f in self.frequencies):
            raise DomainError("frequencies must lie in [0.2, 1.0] Hz")
        if any(not 90 <= d <= 100 for d in self.distances):
            raise DomainError("tip distances must lie in [90, 100] mm")
        if not self.frame_rate > 0:
            raise DomainError("frame rate must be positive")
        if self.duration < 0:
            raise DomainError("duration must be non-negative")

    @property
    def frames_per_scenario(self) -> int:
        return int(round(self.duration * self.frame_rate))

    def scenarios(self):
        """``(index, amplitude, frequency, distance)`` in a fixed order."""
        idx = 0
        for d in self.distances:
            for f in self.frequencies:
                for a in self.amplitudes:
                    yield idx, a, f, d
                    idx += 1

    def __len__(self):
        return len(self.amplitudes) * len(self.frequencies) * len(self.distances)


@dataclass(frozen=True)
class SynthParams:
    gain: float = 2.5e-4          # (1/mm)/mT
    corner_frequency: float = 0.6  # Hz
    phase_lag: float = 0.3         # rad/Hz
    distance_exponent: float = 3.0
    noise_std: float = 2.0         # microstrain
    reference_distance: float = 100.0  # mm

    def __post_init__(self):
        for name in ("gain", "corner_frequency", "phase_lag", "distance_exponent",
                     "reference_distance"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.noise_std < 0:
            raise DomainError("noise_std must be non-negative")


def synth_deformation(cmd: FieldCommand, d_tip: float, p: SynthParams,
                      n_nodes: int = 5) -> CurvatureProfile:
    """Uniform-curvature robot profile (``n_nodes`` gratings) for one field sample."""
    if not 90 <= d_tip <= 100:
        raise DomainError("tip distance must lie in [90, 100] mm")
    if cmd.amplitude < 0 or not cmd.frequency > 0:
        raise DomainError("invalid field command")
    bx, by = float(cmd.b[0]), float(cmd.b[1])
    amp = math.hypot(bx, by)
    kappa = (p.gain * amp * (p.reference_distance / d_tip) ** p.distance_exponent
             / math.sqrt(1.0 + (cmd.frequency / p.corner_frequency) ** 2))
    theta = float(wrap_angle(math.atan2(by, bx) - p.phase_lag * cmd.frequency))
    return CurvatureProfile(np.full(n_nodes, kappa), np.full(n_nodes, theta))


def fiber_profile(robot: CurvatureProfile, geom: SensorGeometry) -> CurvatureProfile:
    """Straight fiber with ``robot`` occupying the distal gratings."""
    n = len(robot)
    kappa = np.zeros(geom.n_gratings)
    theta = np.zeros(geom.n_gratings)
    kappa[-n:] = robot.kappa
    theta[-n:] = robot.theta_b
    return CurvatureProfile(kappa, theta)


def synth_frame(profile: CurvatureProfile, geom: SensorGeometry, t: float, rng=None,
                noise_std: float = 0.0, mode: FrameMode = FrameMode.STRAIN) -> FbgFrame:
    """Interrogator frame for a full-fiber profile, with optional Gaussian core noise (microstrain)."""
    eps = strain_from_curvature(profile.kappa, profile.theta_b, geom)
    micro = np.zeros((geom.n_gratings, geom.n_cores))
    micro[:, 1:] = eps * 1e6
    if noise_std > 0:
        micro += rng.normal(0.0, noise_std, size=micro.shape)
    if FrameMode(mode) is FrameMode.STRAIN:
        return FbgFrame(t, FrameMode.STRAIN, micro)
    strain = (micro[:, 1:] - micro[:, :1]) * 1e-6
    central = micro[:, 0] * 1e-6 * geom.strain_sensitivity * geom.base_wavelengths[:, 0]
    return FbgFrame(t, FrameMode.WAVELENGTH_SHIFT,
                    wavelength_shifts_from_strain(strain, geom, central))


@dataclass
class GeneratedData:
    features: np.ndarray
    targets: np.ndarray
    scenario_index: np.ndarray
    frames: dict = field(default_factory=dict)
    fit_rmse: np.ndarray = None


def scenario_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0x5CE7, int(index)]))


def generate_dataset(grid: ScenarioGrid, p: SynthParams, seed: int,
                     geom: SensorGeometry | None = None, robot_length: float = ROBOT_LENGTH,
                     mode: FrameMode = FrameMode.STRAIN, frames_dir=None) -> GeneratedData:
    """Simulate every scenario at the grid frame rate and run the sensing pipeline.

    Targets are the Bezier control points reconstructed from the (noisy)
    frames, exactly as the batch ``reconstruct`` path would produce them.
    When ``frames_dir`` is given, one ``scenario_XXX.ndjson`` file is written
    per scenario.
    """
    geom = geom or SensorGeometry()
    n_nodes = int(round(robot_length / geom.grating_spacing)) + 1
    n_per = grid.frames_per_scenario
    feats, targs, scen, rmses = [], [], [], []
    all_frames = {}
    for idx, amp, freq, dist in grid.scenarios():
        rng = scenario_rng(seed, idx)
        frames = []
        for k in range(n_per):
            t = k / grid.frame_rate
            cmd = field_at(amp, freq, t)
            robot = synth_deformation(cmd, dist, p, n_nodes)
            frame = synth_frame(fiber_profile(robot, geom), geom, t, rng, p.noise_std, mode)
            rec = reconstruct_frame(frame, geom, robot_length)
            frames.append(frame)
            bx, by = cmd.b[0], cmd.b[1]
            feats.append((bx, by, math.hypot(bx, by), freq, dist))
            targs.append(rec.fit.curve.to_vector())
            scen.append(idx)
            rmses.append(rec.fit.rmse)
        all_frames[idx] = frames
        if frames_dir is not None:
            write_frames(Path(frames_dir) / f"scenario_{idx:03d}.ndjson", frames)
    if n_per == 0:
        log.warning("scenario duration yields zero frames; dataset is empty")
    return GeneratedData(
        features=np.asarray(feats, dtype=float).reshape(-1, 5),
        targets=np.asarray(targs, dtype=float).reshape(-1, 12),
        scenario_index=np.asarray(scen, dtype=int),
        frames=all_frames,
        fit_rmse=np.asarray(rmses, dtype=float),
    )


def params_dict(p: SynthParams) -> dict:
    return asdict(p)
