import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbgbezier.errors import CalibrationError, DimensionError, DomainError, FrameError, GeometryError
from fbgbezier.sensor_model import (FbgFrame, FrameMode, SensorGeometry, compensated_strain,
                                    curvature_from_strain, profile_from_frame,
                                    strain_from_curvature, wavelength_shifts_from_strain,
                                    wrap_angle)

GEOM = SensorGeometry()


def test_default_geometry_layout():
    assert GEOM.n_gratings == 26
    assert GEOM.n_outer == 3
    assert GEOM.n_cores == 4
    assert GEOM.n_segments == 25
    assert GEOM.base_wavelengths.shape == (26, 4)


def test_geometry_rejects_inconsistent_length():
    with pytest.raises(GeometryError):
        SensorGeometry(sensing_length=260.0)


def test_geometry_rejects_coincident_cores():
    with pytest.raises(GeometryError):
        SensorGeometry(core_angles=(0.0, 2 * np.pi))


def test_geometry_rejects_nonpositive_radius():
    with pytest.raises(GeometryError):
        SensorGeometry(core_radius=0.0)


def test_calibration_round_trip(tmp_path):
    g = SensorGeometry(core_radius=0.04, strain_sensitivity=0.8)
    path = tmp_path / "cal.json"
    path.write_text(json.dumps(g.to_calibration()))
    h = SensorGeometry.load(path)
    assert h.core_radius == 0.04
    assert h.strain_sensitivity == 0.8
    np.testing.assert_allclose(h.core_angles, g.core_angles, atol=1e-12)
    np.testing.assert_array_equal(h.base_wavelengths, g.base_wavelengths)


def test_calibration_missing_key_is_reported(tmp_path):
    path = tmp_path / "cal.json"
    path.write_text(json.dumps({"r_mm": 0.03}))
    with pytest.raises(CalibrationError):
        SensorGeometry.load(path)


def test_frame_rejects_nan():
    v = np.zeros((26, 4))
    v[3, 2] = np.nan
    with pytest.raises(FrameError):
        FbgFrame(0.0, FrameMode.STRAIN, v)


def test_frame_values_are_read_only():
    f = FbgFrame(0.0, FrameMode.STRAIN, np.zeros((26, 4)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_wrap_angle_range():
    x = np.array([-np.pi, np.pi, 3 * np.pi, -3 * np.pi + 1e-3, 0.5, 7.0])
    w = wrap_angle(x)
    assert np.all(w > -np.pi) and np.all(w <= np.pi)
    np.testing.assert_allclose(np.cos(w), np.cos(x), atol=1e-12)
    assert wrap_angle(0.5) == 0.5


def test_straight_fiber_gives_zero_curvature():
    prof = curvature_from_strain(np.zeros((26, 3)), GEOM)
    assert np.all(prof.kappa == 0)
    assert np.all(prof.straight)
    assert np.all(prof.theta_b == 0)


def test_strain_antisymmetric_cores():
    # bending towards +x stretches the core opposite the bend direction
    eps = strain_from_curvature(0.01, 0.0, GEOM)
    expected = -0.01 * GEOM.core_radius * np.cos(np.asarray(GEOM.core_angles))
    np.testing.assert_allclose(eps, expected, atol=1e-18)
    assert abs(eps.sum()) < 1e-18


def test_curvature_round_trip_bulk():
    rng = np.random.default_rng(0)
    k = rng.uniform(0, 0.2, 10000)
    th = rng.uniform(-np.pi, np.pi, 10000)
    prof = curvature_from_strain(strain_from_curvature(k, th, GEOM), GEOM)
    np.testing.assert_allclose(prof.kappa, k, atol=1e-10, rtol=0)
    dth = np.angle(np.exp(1j * (prof.theta_b - th)))
    assert np.max(np.abs(dth)[k > 1e-6]) <= 1e-10


@given(st.floats(1e-4, 0.2), st.floats(-math.pi, math.pi),
       st.lists(st.floats(0, 2 * math.pi), min_size=3, max_size=6, unique=True))
def test_round_trip_holds_for_symmetric_layouts(kappa, theta, _unused):
    for n in (3, 4, 6):
        angles = tuple(2 * np.pi * i / n for i in range(n))
        g = SensorGeometry(core_angles=angles, base_wavelengths=np.full((26, n + 1), 1550.0))
        prof = curvature_from_strain(strain_from_curvature(np.array([kappa]), np.array([theta]), g), g)
        assert abs(prof.kappa[0] - kappa) < 1e-12
        assert abs(math.remainder(prof.theta_b[0] - theta, 2 * math.pi)) < 1e-9


def test_wavelength_mode_cancels_common_thermal_shift():
    rng = np.random.default_rng(1)
    strain = rng.normal(0, 1e-4, (26, 3))
    thermal = rng.normal(0, 0.05, 26)
    shifts = wavelength_shifts_from_strain(strain, GEOM, thermal)
    frame = FbgFrame(0.0, FrameMode.WAVELENGTH_SHIFT, shifts)
    np.testing.assert_allclose(compensated_strain(frame, GEOM), strain, atol=1e-15)


def test_strain_mode_subtracts_central_core():
    v = np.zeros((26, 4))
    v[:, 0] = 50.0
    v[:, 1:] = 50.0 + np.arange(3)
    out = compensated_strain(FbgFrame(0.0, FrameMode.STRAIN, v), GEOM)
    np.testing.assert_allclose(out, np.tile(np.arange(3) * 1e-6, (26, 1)))


def test_profile_dimension_mismatch():
    with pytest.raises(DimensionError):
        profile_from_frame(FbgFrame(0.0, FrameMode.STRAIN, np.zeros((20, 4))), GEOM)


def test_negative_curvature_rejected():
    with pytest.raises(DomainError):
        strain_from_curvature(-0.1, 0.0, GEOM)
