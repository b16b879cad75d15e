"""Shared domain types, geodesic math, and energy bookkeeping.

Everything in here is a plain value type or a pure function; the rest of
the stack builds on these primitives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0

SUPPORTED_RATES_MBPS = (1.0, 2.0, 5.5, 11.0)
MIN_TX_POWER_W = 1.0
MAX_TX_POWER_W = 3.5


class ValidationError(ValueError):
    """Raised when a domain value violates its invariants."""


@dataclass(frozen=True)
class NodeId:
    """Node identity: small integer id plus a display address."""

    id: int
    addr: str

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValidationError(f"node id must be non-negative, got {self.id}")


def default_addr(node_id: int) -> str:
    """Dotted-quad style display address derived from the integer id."""
    return f"10.0.0.{node_id}"


@dataclass(frozen=True)
class GeoCoordinate:
    latitude: float
    longitude: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.latitude) and math.isfinite(self.longitude)):
            raise ValidationError("coordinates must be finite")
        if not -90.0 <= self.latitude <= 90.0:
            raise ValidationError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValidationError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class TransmissionStrategy:
    """Radio operating point: data rate plus transmit power."""

    rate_mbps: float
    power_w: float

    def __post_init__(self) -> None:
        if self.rate_mbps not in SUPPORTED_RATES_MBPS:
            raise ValidationError(
                f"rate {self.rate_mbps} not in {SUPPORTED_RATES_MBPS}"
            )
        if not MIN_TX_POWER_W <= self.power_w <= MAX_TX_POWER_W:
            raise ValidationError(
                f"power {self.power_w} W outside [{MIN_TX_POWER_W}, {MAX_TX_POWER_W}]"
            )


@dataclass
class EnergyState:
    """Battery bookkeeping for one node.

    DC-powered nodes keep draining nothing and always report a full
    effective charge.
    """

    initial_j: float
    residual_j: float
    dc_powered: bool = False

    def __post_init__(self) -> None:
        if self.initial_j <= 0:
            raise ValidationError("initial energy must be > 0")
        if not 0.0 <= self.residual_j <= self.initial_j:
            raise ValidationError("residual energy must lie in [0, initial]")


def residual_fraction(energy: EnergyState) -> float:
    """Effective remaining charge in [0, 1]; 1.0 for DC-powered nodes."""
    if energy.dc_powered:
        return 1.0
    return energy.residual_j / energy.initial_j


def haversine_distance(a: GeoCoordinate, b: GeoCoordinate) -> float:
    """Great-circle distance in meters between two coordinates."""
    lat1 = math.radians(a.latitude)
    lat2 = math.radians(b.latitude)
    dlat = lat2 - lat1
    dlon = math.radians(b.longitude - a.longitude)
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def offset_coordinate(origin: GeoCoordinate, east_m: float, north_m: float) -> GeoCoordinate:
    """Coordinate displaced by the given local east/north meters.

    Small-offset approximation used by scenario builders; distances are
    always recomputed with the haversine afterwards, so the approximation
    only shifts where nodes sit, never how far apart the model thinks
    they are.
    """
    meters_per_deg = EARTH_RADIUS_M * math.pi / 180.0
    lat = origin.latitude + north_m / meters_per_deg
    lon = origin.longitude + east_m / (meters_per_deg * math.cos(math.radians(origin.latitude)))
    return GeoCoordinate(lat, lon)
