"""Multi-core FBG fiber model.

Converts Bragg-wavelength shifts (or interrogator strains) into per-grating
curvature magnitude and bending-plane angle, and synthesizes core strains
from a known curvature for simulation.

Core ordering everywhere: column 0 is the central core, columns 1..N are the
outer cores in the order of ``SensorGeometry.core_angles``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import CalibrationError, DimensionError, DomainError, FrameError, GeometryError

MICRO = 1e-6


class FrameMode(str, Enum):
    WAVELENGTH_SHIFT = "wl"
    STRAIN = "strain"


@dataclass(frozen=True)
class SensorGeometry:
    """Fiber layout and calibration constants.

    Lengths are in mm, angles in rad.  ``base_wavelengths`` has shape
    ``(n_gratings, 1 + n_outer)`` in nm.
    """

    n_gratings: int = 26
    grating_spacing: float = 10.0
    sensing_length: float = 250.0
    core_radius: float = 0.0375
    core_angles: tuple = (0.0, 2 * math.pi / 3, 4 * math.pi / 3)
    strain_sensitivity: float = 0.78
    temp_sensitivity: float = 6.7e-6
    base_wavelengths: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_gratings < 2:
            raise GeometryError("need at least two gratings")
        if not math.isclose((self.n_gratings - 1) * self.grating_spacing, self.sensing_length,
                            rel_tol=1e-12):
            raise GeometryError(
                f"{self.n_gratings} gratings at {self.grating_spacing} mm do not span "
                f"{self.sensing_length} mm")
        angles = tuple(float(a) for a in self.core_angles)
        object.__setattr__(self, "core_angles", angles)
        if len(angles) < 2:
            raise GeometryError("need at least two outer cores")
        wrapped = np.mod(np.asarray(angles), 2 * np.pi)
        wrapped[np.isclose(wrapped, 2 * np.pi)] = 0.0
        diffs = np.abs(wrapped[:, None] - wrapped[None, :])
        diffs = np.minimum(diffs, 2 * np.pi - diffs)
        np.fill_diagonal(diffs, np.inf)
        if np.any(diffs < 1e-9):
            raise GeometryError("outer core angles must be distinct modulo 2*pi")
        if not self.core_radius > 0:
            raise GeometryError("outer core radius must be positive")
        lam = self.base_wavelengths
        if lam is None:
            lam = np.full((self.n_gratings, self.n_cores), 1550.0)
        lam = np.array(lam, dtype=float)
        if lam.shape != (self.n_gratings, self.n_cores):
            raise DimensionError(
                f"base wavelengths have shape {lam.shape}, expected {(self.n_gratings, self.n_cores)}")
        lam.setflags(write=False)
        object.__setattr__(self, "base_wavelengths", lam)

    @property
    def n_outer(self) -> int:
        return len(self.core_angles)

    @property
    def n_cores(self) -> int:
        return 1 + self.n_outer

    @property
    def n_segments(self) -> int:
        return self.n_gratings - 1

    def to_calibration(self) -> dict:
        return {
            "r_mm": self.core_radius,
            "core_angles_deg": [math.degrees(a) for a in self.core_angles],
            "S_eps": self.strain_sensitivity,
            "S_T": self.temp_sensitivity,
            "lambda_B0_nm": self.base_wavelengths.tolist(),
            "n_gratings": self.n_gratings,
            "grating_spacing_mm": self.grating_spacing,
        }

    @classmethod
    def from_calibration(cls, data: dict) -> "SensorGeometry":
        try:
            n = int(data.get("n_gratings", 26))
            ds = float(data.get("grating_spacing_mm", 10.0))
            kwargs = dict(
                n_gratings=n,
                grating_spacing=ds,
                sensing_length=(n - 1) * ds,
                core_radius=float(data["r_mm"]),
                core_angles=tuple(math.radians(a) for a in data["core_angles_deg"]),
                strain_sensitivity=float(data["S_eps"]),
                temp_sensitivity=float(data.get("S_T", 6.7e-6)),
                base_wavelengths=data.get("lambda_B0_nm"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"invalid calibration data: {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "SensorGeometry":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CalibrationError(f"{path}: {exc}") from exc
        return cls.from_calibration(data)


@dataclass(frozen=True)
class FbgFrame:
    """One interrogator reading: ``values`` is ``(n_gratings, n_cores)``.

    Wavelength-shift mode values are nm; strain mode values are microstrain.
    """

    timestamp: float
    mode: FrameMode
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise FrameError(f"frame values must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise FrameError("frame contains non-finite values")
        if not math.isfinite(self.timestamp):
            raise FrameError("frame timestamp is not finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mode", FrameMode(self.mode))


@dataclass(frozen=True)
class CurvatureProfile:
    """Per-grating curvature (1/mm, >= 0) and bending-plane angle in (-pi, pi]."""

    kappa: np.ndarray
    theta_b: np.ndarray
    straight: np.ndarray = None

    def __post_init__(self):
        kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        theta = np.atleast_1d(np.asarray(self.theta_b, dtype=float))
        if kappa.shape != theta.shape:
            raise DimensionError("kappa and theta_b lengths differ")
        if np.any(kappa < 0):
            raise DomainError("curvature magnitude must be non-negative")
        straight = kappa == 0 if self.straight is None else np.asarray(self.straight, dtype=bool)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "theta_b", wrap_angle(theta))
        object.__setattr__(self, "straight", straight)

    def __len__(self):
        return len(self.kappa)


def wrap_angle(theta):
    """Wrap angles to (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    # in-range values pass through untouched so no bits are lost to the shift
    return np.where((theta > -np.pi) & (theta <= np.pi), theta, wrapped)


def _check_frame(frame: FbgFrame, geom: SensorGeometry):
    if frame.values.shape != (geom.n_gratings, geom.n_cores):
        raise DimensionError(
            f"frame shape {frame.values.shape} does not match geometry "
            f"{(geom.n_gratings, geom.n_cores)}")


def compensated_strain(frame: FbgFrame, geom: SensorGeometry) -> np.ndarray:
    """Temperature-compensated outer-core strains, shape ``(n_gratings, n_outer)``.

    In wavelength mode each core's shift is normalized by its base wavelength
    and the strain sensitivity, and the central core's normalized shift is
    subtracted; a common-mode (thermal) shift cancels exactly.  In strain mode
    the central-core strain is subtracted from the outer-core strains.
    """
    _check_frame(frame, geom)
    v = frame.values
    if frame.mode is FrameMode.STRAIN:
        return (v[:, 1:] - v[:, :1]) * MICRO
    s_eps = geom.strain_sensitivity
    lam0 = geom.base_wavelengths
    if s_eps == 0 or not np.all(lam0 > 0):
        raise CalibrationError("strain sensitivity must be non-zero and base wavelengths positive")
    normalized = v / (s_eps * lam0)
    return normalized[:, 1:] - normalized[:, :1]


def wavelength_shifts_from_strain(strain: np.ndarray, geom: SensorGeometry,
                                  central_shift=0.0) -> np.ndarray:
    """Inverse of :func:`compensated_strain` in wavelength mode.

    ``central_shift`` (nm, scalar or per grating) is the central-core shift,
    e.g. a thermal offset; it is added to the outer cores in normalized form.
    """
    strain = np.asarray(strain, dtype=float)
    lam0 = geom.base_wavelengths
    s_eps = geom.strain_sensitivity
    central = np.broadcast_to(np.asarray(central_shift, dtype=float), (geom.n_gratings,))
    central_norm = central / (s_eps * lam0[:, 0])
    out = np.empty((geom.n_gratings, geom.n_cores))
    out[:, 0] = central
    out[:, 1:] = (strain + central_norm[:, None]) * s_eps * lam0[:, 1:]
    return out


def strain_from_curvature(kappa, theta_b, geom: SensorGeometry) -> np.ndarray:
    """Bending strain in each outer core for curvature ``kappa`` in plane ``theta_b``.

    Broadcasts over ``kappa``/``theta_b``; the last output axis is the core.
    """
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa < 0):
        raise DomainError("curvature magnitude must be non-negative")
    theta_b = np.asarray(theta_b, dtype=float)
    angles = np.asarray(geom.core_angles)
    return -kappa[..., None] * geom.core_radius * np.sin(
        theta_b[..., None] - 1.5 * np.pi - angles)


def curvature_from_strain(strains, geom: SensorGeometry) -> CurvatureProfile:
    """Per-grating curvature and bending-plane angle from outer-core strains.

    ``strains`` is ``(n_gratings, n_outer)``.  Gratings whose apparent
    curvature vector is exactly zero get ``theta_b = 0`` and are flagged
    straight.
    """
    strains = np.atleast_2d(np.asarray(strains, dtype=float))
    if strains.shape[1] != geom.n_outer:
        raise DimensionError(f"expected {geom.n_outer} outer-core columns, got {strains.shape[1]}")
    r = geom.core_radius
    if r == 0:
        raise GeometryError("core radius is zero")
    angles = np.asarray(geom.core_angles)
    kx = -(strains / r) @ np.cos(angles)
    ky = -(strains / r) @ np.sin(angles)
    kappa = 2.0 * np.hypot(kx, ky) / geom.n_outer
    straight = (kx == 0) & (ky == 0)
    theta = np.where(straight, 0.0, np.arctan2(ky, kx))
    return CurvatureProfile(kappa=kappa, theta_b=theta, straight=straight)


def profile_from_frame(frame: FbgFrame, geom: SensorGeometry) -> CurvatureProfile:
    return curvature_from_strain(compensated_strain(frame, geom), geom)
