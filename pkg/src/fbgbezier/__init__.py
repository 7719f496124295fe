"""Fiber Bragg grating shape sensing, cubic Bezier shape encoding and
field-to-shape regression for magnetically steered continuum robots."""

__version__ = "0.1.0"

from .bezier import BezierCurve, fit_fixed_endpoints
from .errors import FbgBezierError
from .sensor_model import FbgFrame, FrameMode, SensorGeometry
from .shape_recon import Centerline, integrate_pcc

__all__ = ["BezierCurve", "Centerline", "FbgBezierError", "FbgFrame", "FrameMode",
           "SensorGeometry", "fit_fixed_endpoints", "integrate_pcc", "__version__"]
