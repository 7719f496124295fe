"""Cubic Bezier curves: evaluation, fixed-endpoint least-squares fitting, length."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, FitError

CSV_COLUMNS = [f"p{i}{ax}" for i in range(4) for ax in "xyz"]


@dataclass(frozen=True)
class BezierCurve:
    """Four 3-D control points in mm; ``p0`` is the base, ``p3`` the tip."""

    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray

    def __post_init__(self):
        for name in ("p0", "p1", "p2", "p3"):
            v = np.array(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(v)):
                raise DomainError(f"control point {name} is not finite")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def control_points(self) -> np.ndarray:
        return np.stack([self.p0, self.p1, self.p2, self.p3])

    def to_vector(self) -> np.ndarray:
        """The 12-element learning target ``p0x, p0y, ..., p3z``."""
        return self.control_points.reshape(12)

    @classmethod
    def from_vector(cls, v) -> "BezierCurve":
        v = np.asarray(v, dtype=float).reshape(4, 3)
        return cls(*v)

    def to_csv_row(self, fmt: str = "%.6g") -> str:
        return ",".join(fmt % x for x in self.to_vector())


@dataclass(frozen=True)
class FitResult:
    curve: BezierCurve
    rmse: float
    max_err: float
    scale_applied: float = 1.0
    params: np.ndarray = None


def bernstein(s) -> np.ndarray:
    """Cubic Bernstein basis, shape ``(len(s), 4)``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = 1.0 - s
    return np.stack([t ** 3, 3 * s * t ** 2, 3 * s ** 2 * t, s ** 3], axis=-1)


def evaluate(curve: BezierCurve, s):
    """Point(s) on the curve.  Scalar ``s`` gives a 3-vector, arrays give ``(n, 3)``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(s_arr)) or np.any(s_arr < 0) or np.any(s_arr > 1):
        raise DomainError("Bezier parameter must lie in [0, 1]")
    pts = bernstein(s_arr) @ curve.control_points
    # exact endpoint interpolation, independent of rounding in the basis
    pts[s_arr.reshape(-1) == 0.0] = curve.p0
    pts[s_arr.reshape(-1) == 1.0] = curve.p3
    return pts[0] if s_arr.ndim == 0 else pts


def derivative(curve: BezierCurve, s) -> np.ndarray:
    """Tangent ``dB/ds``, shaped like :func:`evaluate`'s output."""
    s_arr = np.asarray(s, dtype=float)
    s1 = np.atleast_1d(s_arr)
    d = 3.0 * np.diff(curve.control_points, axis=0)
    t = 1.0 - s1
    out = np.stack([t ** 2, 2 * s1 * t, s1 ** 2], axis=-1) @ d
    return out[0] if s_arr.ndim == 0 else out


def chord_params(points) -> np.ndarray:
    """Normalized cumulative chord length of a polyline."""
    points = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] == 0:
        raise FitError("all points coincide; chord parameterization undefined")
    return cum / cum[-1]


def uniform_params(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def arc_length(curve: BezierCurve, rtol: float = 1e-8) -> float:
    """Length of the curve by adaptive quadrature of its speed."""
    P = curve.control_points
    if np.all(P == P[0]):
        return 0.0

    def speed(s):
        return float(np.linalg.norm(derivative(curve, s)))

    # the speed can have a kink where it vanishes; split at a few interior points
    value, _ = integrate.quad(speed, 0.0, 1.0, epsabs=0.0, epsrel=rtol, limit=200,
                              points=(0.25, 0.5, 0.75))
    return float(value)


def fit_fixed_endpoints(points, params=None, *, parameterization: str = "chord",
                        target_length: float | None = None) -> FitResult:
    """Least-squares cubic Bezier through ``points`` with clamped endpoints.

    ``p0`` and ``p3`` are set to the first and last point.  With their
    Bernstein contributions moved to the right-hand side, the interior points
    solve the normal equations ``(A^T A)^+ A^T C`` per axis, where ``A`` holds
    the two interior basis functions at ``params``.

    If ``target_length`` is given, ``p1..p3`` are scaled about ``p0`` so the
    curve length matches it (this moves ``p3`` off the last point by the same
    factor).  Residuals are reported for the final curve.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise FitError(f"expected (N, 3) points, got {points.shape}")
    if len(points) < 4:
        raise FitError("need at least 4 points for a cubic fit")
    if params is None:
        if parameterization == "chord":
            params = chord_params(points)
        elif parameterization == "uniform":
            params = uniform_params(len(points))
        else:
            raise FitError(f"unknown parameterization {parameterization!r}")
    s = np.asarray(params, dtype=float)
    if s.shape != (len(points),):
        raise FitError("one parameter per point required")
    if np.any(s < 0) or np.any(s > 1) or np.any(np.diff(s) <= 0):
        raise FitError("parameters must be strictly increasing within [0, 1]")

    p0, p3 = points[0], points[-1]
    B = bernstein(s)
    A = B[:, 1:3]
    rhs = points - np.outer(B[:, 0], p0) - np.outer(B[:, 3], p3)
    AtA = A.T @ A
    if np.linalg.matrix_rank(AtA) < 2:
        raise FitError("interior basis is rank deficient for these parameters")
    X = np.linalg.pinv(AtA) @ (A.T @ rhs)
    curve = BezierCurve(p0, X[0], X[1], p3)

    scale = 1.0
    if target_length is not None:
        length = arc_length(curve)
        if length > 0:
            scale = target_length / length
            P = curve.control_points
            curve = BezierCurve(p0, *(p0 + scale * (P[1:] - p0)))

    resid = np.linalg.norm(evaluate(curve, s) - points, axis=1)
    return FitResult(curve=curve, rmse=float(np.sqrt(np.mean(resid ** 2))),
                     max_err=float(resid.max()), scale_applied=scale, params=s)


def sse(curve_points, points, params) -> float:
    """Sum of squared residuals of control points ``(4, 3)`` against ``points``."""
    return float(np.sum((bernstein(params) @ np.asarray(curve_points) - points) ** 2))


def shape_error(a: BezierCurve, b: BezierCurve, n_samples: int = 100) -> dict:
    """Pointwise distance between two curves at common uniform parameters.

    Returns mean, 95th percentile (linear interpolation between order
    statistics) and maximum distance in mm.
    """
    if n_samples < 2:
        raise DomainError("need at least two samples")
    s = np.linspace(0.0, 1.0, n_samples)
    d = np.linalg.norm(evaluate(a, s) - evaluate(b, s), axis=1)
    return {"mae": float(d.mean()), "p95": float(np.percentile(d, 95)), "max": float(d.max())}


def shape_errors(pred, truth, n_samples: int = 100) -> np.ndarray:
    """All per-sample distances for batches of 12-vectors, shape ``(n, n_samples)``."""
    pred = np.asarray(pred, dtype=float).reshape(-1, 4, 3)
    truth = np.asarray(truth, dtype=float).reshape(-1, 4, 3)
    B = bernstein(np.linspace(0.0, 1.0, n_samples))
    diff = np.einsum("sk,nkd->nsd", B, pred - truth)
    return np.linalg.norm(diff, axis=2)


def from_shape_parameter(p0, p3, t0, t3, lam: float) -> BezierCurve:
    """Place ``p1``/``p2`` at fraction ``lam`` of the chord along the end tangents.

    Smaller ``lam`` gives tighter bends.  Used for synthetic test curves only;
    fitting never goes through this.
    """
    p0, p3 = np.asarray(p0, dtype=float), np.asarray(p3, dtype=float)
    t0 = np.asarray(t0, dtype=float) / np.linalg.norm(t0)
    t3 = np.asarray(t3, dtype=float) / np.linalg.norm(t3)
    chord = np.linalg.norm(p3 - p0)
    return BezierCurve(p0, p0 + lam * chord * t0, p3 - lam * chord * t3, p3)
