"""Frame-to-Bezier reconstruction shared by batch, streaming and data generation."""
from __future__ import annotations

from dataclasses import dataclass

from .bezier import FitResult, fit_fixed_endpoints
from .sensor_model import FbgFrame, SensorGeometry, profile_from_frame
from .shape_recon import Centerline, integrate_pcc, rescale_to_length, trim_to_robot

ROBOT_LENGTH = 40.0  # mm


@dataclass(frozen=True)
class Reconstruction:
    timestamp: float
    fiber: Centerline
    robot: Centerline
    fit: FitResult


def reconstruct_frame(frame: FbgFrame, geom: SensorGeometry, robot_length: float = ROBOT_LENGTH,
                      midpoint: bool = False, parameterization: str = "chord") -> Reconstruction:
    """Strain -> curvature -> PCC centerline -> trimmed robot -> Bezier fit."""
    profile = profile_from_frame(frame, geom)
    fiber = integrate_pcc(profile, geom, midpoint=midpoint)
    fiber = rescale_to_length(fiber, geom.sensing_length)
    robot = trim_to_robot(fiber, robot_length)
    fit = fit_fixed_endpoints(robot.points, parameterization=parameterization,
                              target_length=robot.arc_length)
    return Reconstruction(frame.timestamp, fiber, robot, fit)


CSV_HEADER = "frame,t_s," + ",".join(
    f"p{i}{ax}_mm" for i in range(4) for ax in "xyz") + ",fit_rmse_mm"


def format_row(index: int, rec: Reconstruction, fmt: str = "%.6g") -> str:
    vals = rec.fit.curve.to_vector()
    return ",".join([str(index), fmt % rec.timestamp, *(fmt % v for v in vals), fmt % rec.fit.rmse])
