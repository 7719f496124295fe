"""Piecewise-constant-curvature centerline reconstruction.

Each inter-grating segment is a circular arc (or a straight run when the
curvature is negligible).  Segment transforms are composed from the base,
which sits at the origin with its tangent along +z.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .sensor_model import CurvatureProfile, SensorGeometry

KAPPA_STRAIGHT_TOL = 1e-9  # 1/mm


@dataclass(frozen=True)
class Centerline:
    """Reconstructed backbone.

    ``points`` is ``(n, 3)`` in mm, ``frames`` is ``(n, 3, 3)`` with the local
    tangent in the third column.  ``segment_lengths`` holds the exact arc
    length of each of the ``n - 1`` segments.
    """

    points: np.ndarray
    frames: np.ndarray
    segment_lengths: np.ndarray

    @property
    def arc_length(self) -> float:
        return float(np.sum(self.segment_lengths))

    @property
    def chord_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def __len__(self):
        return len(self.points)

    def to_csv_rows(self):
        return [(i, *p) for i, p in enumerate(self.points)]


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix to ``R`` (polar factor via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def segment_transform(kappa: float, theta_b: float, ds: float,
                      straight_tol: float = KAPPA_STRAIGHT_TOL):
    """Rotation and translation of one constant-curvature segment in its local frame.

    The arc bends towards the direction ``theta_b`` measured in the local
    x-y plane; the frame is rotated back about z afterwards so no torsion is
    introduced.
    """
    if kappa < straight_tol:
        return np.eye(3), np.array([0.0, 0.0, ds])
    theta = kappa * ds
    radius = 1.0 / kappa
    c, s = math.cos(theta), math.sin(theta)
    # 1 - cos(theta) written to stay accurate for small angles
    one_minus_c = 2.0 * math.sin(0.5 * theta) ** 2
    Ry = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    p_plane = np.array([radius * one_minus_c, 0.0, radius * s])
    Rz = _rot_z(theta_b)
    return Rz @ Ry @ Rz.T, Rz @ p_plane


def _segment_curvatures(profile: CurvatureProfile, midpoint: bool):
    kappa, theta = profile.kappa, profile.theta_b
    if not midpoint:
        return kappa[:-1], theta[:-1]
    # average the curvature vectors of the two bounding gratings
    kx = kappa * np.cos(theta)
    ky = kappa * np.sin(theta)
    mx = 0.5 * (kx[:-1] + kx[1:])
    my = 0.5 * (ky[:-1] + ky[1:])
    return np.hypot(mx, my), np.arctan2(my, mx)


def integrate_pcc(profile: CurvatureProfile, geom: SensorGeometry, midpoint: bool = False,
                  straight_tol: float = KAPPA_STRAIGHT_TOL) -> Centerline:
    """Compose per-segment PCC transforms into a centerline.

    Segment ``k`` uses grating ``k``'s curvature unless ``midpoint`` is set,
    in which case the curvature vectors of gratings ``k`` and ``k + 1`` are
    averaged.  The accumulated rotation is re-orthonormalized after every
    composition.
    """
    if len(profile) != geom.n_gratings:
        raise DimensionError(f"profile has {len(profile)} gratings, geometry {geom.n_gratings}")
    ds = geom.grating_spacing
    kappas, thetas = _segment_curvatures(profile, midpoint)
    n = geom.n_gratings
    points = np.zeros((n, 3))
    frames = np.zeros((n, 3, 3))
    R = np.eye(3)
    p = np.zeros(3)
    frames[0] = R
    for k in range(n - 1):
        dR, dp = segment_transform(float(kappas[k]), float(thetas[k]), ds, straight_tol)
        p = p + R @ dp
        R = orthonormalize(R @ dR)
        points[k + 1] = p
        frames[k + 1] = R
    return Centerline(points, frames, np.full(n - 1, ds))


def rescale_to_length(c: Centerline, target_length: float) -> Centerline:
    """Scale uniformly about the base point so the arc length equals ``target_length``."""
    length = c.arc_length
    if not length > 0:
        raise DomainError("cannot rescale a zero-length centerline")
    scale = target_length / length
    if scale == 1.0:
        return c
    base = c.points[0]
    points = base + (c.points - base) * scale
    return Centerline(points, c.frames, c.segment_lengths * scale)


def trim_to_robot(c: Centerline, robot_length: float) -> Centerline:
    """Keep the distal ``robot_length`` of the centerline, re-based at its first point.

    The retained part is expressed in the frame of its own base point, so the
    returned centerline starts at the origin with tangent +z.
    """
    ds = float(np.mean(c.segment_lengths))
    if robot_length > c.arc_length * (1 + 1e-12):
        raise DomainError(f"robot length {robot_length} mm exceeds sensing length {c.arc_length} mm")
    n_seg = math.ceil(robot_length / ds - 1e-9)
    if n_seg < 1:
        raise DomainError("robot length must cover at least one segment")
    start = len(c) - 1 - n_seg
    R0 = c.frames[start]
    p0 = c.points[start]
    points = (c.points[start:] - p0) @ R0
    frames = np.einsum("ji,njk->nik", R0, c.frames[start:])
    points[0] = 0.0
    frames[0] = np.eye(3)
    return Centerline(points, frames, c.segment_lengths[start:].copy())
