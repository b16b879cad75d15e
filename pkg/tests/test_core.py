import math
import random

import pytest

from xlmesh.core import (
    EARTH_RADIUS_M,
    EnergyState,
    GeoCoordinate,
    NodeId,
    TransmissionStrategy,
    ValidationError,
    haversine_distance,
    offset_coordinate,
    residual_fraction,
)


def test_haversine_identical_points_is_zero():
    p = GeoCoordinate(45.0, -75.0)
    assert haversine_distance(p, p) == 0.0


def test_haversine_one_degree_meridian():
    # one degree along a meridian is R * pi / 180
    expected = EARTH_RADIUS_M * math.pi / 180.0
    d = haversine_distance(GeoCoordinate(0.0, 0.0), GeoCoordinate(1.0, 0.0))
    assert abs(d - 111_194.9) < 0.1
    assert abs(d - expected) < 1e-6


def test_haversine_symmetry():
    rng = random.Random(7)
    for _ in range(100):
        a = GeoCoordinate(rng.uniform(-89, 89), rng.uniform(-179, 179))
        b = GeoCoordinate(rng.uniform(-89, 89), rng.uniform(-179, 179))
        assert haversine_distance(a, b) == haversine_distance(b, a)


def test_haversine_triangle_inequality():
    rng = random.Random(13)
    for _ in range(200):
        pts = [
            GeoCoordinate(rng.uniform(-80, 80), rng.uniform(-170, 170))
            for _ in range(3)
        ]
        ab = haversine_distance(pts[0], pts[1])
        bc = haversine_distance(pts[1], pts[2])
        ac = haversine_distance(pts[0], pts[2])
        assert ac <= ab + bc + 1e-6 * max(1.0, ac)


def test_haversine_non_negative():
    rng = random.Random(3)
    for _ in range(100):
        a = GeoCoordinate(rng.uniform(-90, 90), rng.uniform(-180, 180))
        b = GeoCoordinate(rng.uniform(-90, 90), rng.uniform(-180, 180))
        assert haversine_distance(a, b) >= 0.0


def test_offset_coordinate_roundtrip_distance():
    origin = GeoCoordinate(44.0, -75.5)
    moved = offset_coordinate(origin, 900.0, 0.0)
    assert abs(haversine_distance(origin, moved) - 900.0) < 1.0


def test_residual_fraction_full_battery():
    assert residual_fraction(EnergyState(100.0, 100.0, False)) == 1.0


def test_residual_fraction_ten_percent():
    assert residual_fraction(EnergyState(100.0, 10.0, False)) == pytest.approx(0.10)


def test_residual_fraction_dc_always_full():
    assert residual_fraction(EnergyState(100.0, 5.0, True)) == 1.0


def test_residual_fraction_monotone_in_residual():
    last = -1.0
    for r in range(0, 101, 5):
        f = residual_fraction(EnergyState(100.0, float(r), False))
        assert f >= last
        last = f


def test_coordinate_validation():
    with pytest.raises(ValidationError):
        GeoCoordinate(91.0, 0.0)
    with pytest.raises(ValidationError):
        GeoCoordinate(0.0, 181.0)
    with pytest.raises(ValidationError):
        GeoCoordinate(float("nan"), 0.0)


def test_strategy_validation():
    TransmissionStrategy(5.5, 2.0)
    with pytest.raises(ValidationError):
        TransmissionStrategy(3.0, 2.0)
    with pytest.raises(ValidationError):
        TransmissionStrategy(2.0, 0.5)
    with pytest.raises(ValidationError):
        TransmissionStrategy(2.0, 4.0)


def test_energy_state_validation():
    with pytest.raises(ValidationError):
        EnergyState(0.0, 0.0, False)
    with pytest.raises(ValidationError):
        EnergyState(10.0, 11.0, False)


def test_node_id():
    n = NodeId(3, "10.0.0.3")
    assert n.id == 3
    with pytest.raises(ValidationError):
        NodeId(-1, "x")
