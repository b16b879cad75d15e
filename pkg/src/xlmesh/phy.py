"""Statistical physical-layer model.

Per-link packet success probability, airtime, and capacity, calibrated
from measured (distance, rate, payload, reliability) points. The model
replaces a real DSSS/CCK radio front end with two fitted ingredients per
rate:

* a per-bit error probability ``e_b`` that grows with distance
  (piecewise log-linear between calibration anchors), and
* a payload-independent ``sync_bits`` exponent that captures
  frame-acquisition loss; it is identifiable only when the calibration
  table carries several payload sizes for one (rate, distance) point and
  is zero otherwise.

``packet_success_prob`` is then ``(1 - e_b) ** (8*payload + overhead_bits
+ sync_bits)``.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

from .core import SUPPORTED_RATES_MBPS, MAX_TX_POWER_W

PREAMBLE_S = 192e-6
OVERHEAD_BITS = 432          # preamble at base-rate bit time + 30 B MAC header
MAC_HEADER_BYTES = 30

# Measured outdoor link reliabilities used as the default calibration set:
# (distance m, rate Mbps, payload bytes, delivery ratio).
DEFAULT_CALIBRATION: tuple[tuple[float, float, int, float], ...] = (
    (495.2, 2.0, 1000, 0.999),
    (771.2, 2.0, 1000, 0.9977),
    (1019.0, 2.0, 1000, 0.9808),
    (495.2, 5.5, 1000, 0.9962),
    (771.2, 5.5, 1000, 0.9603),
    (1019.0, 5.5, 1000, 0.9716),
    (495.2, 11.0, 1000, 0.8528),
    (771.2, 11.0, 1000, 0.3156),
    (1019.0, 11.0, 1000, 0.139),
    (1019.0, 11.0, 100, 0.30),
)

_MIN_LN_E = math.log(1e-12)
_MAX_E = 0.5
_FALLBACK_SLOPE = 5e-3       # per meter, when a curve has a single anchor
_ANCHOR_NUDGE = 1e-9         # keeps pooled anchors strictly increasing


class CalibrationError(ValueError):
    """Raised when the measured table cannot be fitted within tolerance."""

    def __init__(self, message: str, offending_rows: list[tuple] | None = None):
        super().__init__(message)
        self.offending_rows = offending_rows or []


class InvalidRateError(ValueError):
    pass


def _check_rate(rate_mbps: float) -> None:
    if rate_mbps not in SUPPORTED_RATES_MBPS:
        raise InvalidRateError(f"unsupported rate {rate_mbps} Mbps")


def airtime(rate_mbps: float, frame_bytes: float) -> float:
    """Seconds on air for a frame of the given total size."""
    _check_rate(rate_mbps)
    return (8.0 * frame_bytes) / (rate_mbps * 1e6) + PREAMBLE_S


@dataclass
class RateCurve:
    """Fitted per-bit error curve for one rate: ln(e_b) vs distance."""

    distances: list[float]
    ln_errors: list[float]
    sync_bits: float = 0.0

    def ln_e(self, distance: float) -> float:
        d = self.distances
        v = self.ln_errors
        if len(d) == 1:
            return v[0] + _FALLBACK_SLOPE * (distance - d[0])
        if distance <= d[0]:
            slope = self._edge_slope(0)
            return v[0] + slope * (distance - d[0])
        if distance >= d[-1]:
            slope = self._edge_slope(-1)
            return v[-1] + slope * (distance - d[-1])
        i = bisect_right(d, distance)
        frac = (distance - d[i - 1]) / (d[i] - d[i - 1])
        return v[i - 1] + frac * (v[i] - v[i - 1])

    def _edge_slope(self, end: int) -> float:
        d, v = self.distances, self.ln_errors
        overall = (v[-1] - v[0]) / (d[-1] - d[0]) if d[-1] > d[0] else 0.0
        if end == 0:
            seg = (v[1] - v[0]) / (d[1] - d[0])
        else:
            seg = (v[-1] - v[-2]) / (d[-1] - d[-2])
        # An interior plateau (pooled anchors) would otherwise freeze the
        # extrapolation; never extrapolate flatter than the overall trend.
        slope = max(seg, overall)
        return slope if slope > 0 else _FALLBACK_SLOPE


@dataclass
class LinkModel:
    """Immutable-after-calibration link quality model."""

    curves: dict[float, RateCurve]
    overhead_bits: int = OVERHEAD_BITS
    residuals: dict[tuple, float] = field(default_factory=dict)
    distance_exponent: float = 3.0
    max_range_m: float = field(default=0.0)

    def __post_init__(self) -> None:
        if self.max_range_m <= 0.0:
            self.max_range_m = self._solve_max_range()

    def _curve_for(self, rate_mbps: float) -> RateCurve:
        if rate_mbps in self.curves:
            return self.curves[rate_mbps]
        higher = [r for r in sorted(self.curves) if r > rate_mbps]
        if higher:
            return self.curves[higher[0]]
        return self.curves[max(self.curves)]

    def bit_error_rate(self, distance_m: float, rate_mbps: float) -> float:
        """e_b, non-decreasing in both distance and rate."""
        _check_rate(rate_mbps)
        if distance_m < 0:
            raise ValueError("distance must be >= 0")
        own = self._curve_for(rate_mbps).ln_e(distance_m)
        # Lower rates can never be worse than higher ones at one distance.
        for r, curve in self.curves.items():
            if r <= rate_mbps:
                own = max(own, curve.ln_e(distance_m))
        return min(_MAX_E, math.exp(max(own, _MIN_LN_E)))

    def sync_bits(self, rate_mbps: float) -> float:
        return self._curve_for(rate_mbps).sync_bits

    def success_exponent_bits(self, rate_mbps: float, payload_bytes: float) -> float:
        return 8.0 * payload_bytes + self.overhead_bits + self.sync_bits(rate_mbps)

    def packet_success_prob(
        self, distance_m: float, rate_mbps: float, payload_bytes: float
    ) -> float:
        if payload_bytes <= 0:
            raise ValueError("payload must be > 0")
        e = self.bit_error_rate(distance_m, rate_mbps)
        bits = self.success_exponent_bits(rate_mbps, payload_bytes)
        return math.exp(bits * math.log1p(-e))

    def capacity_bps(self, rate_mbps: float) -> float:
        _check_rate(rate_mbps)
        return rate_mbps * 1e6

    def effective_distance(self, distance_m: float, power_w: float) -> float:
        """Distance argument scaled for reduced transmit power."""
        if power_w >= MAX_TX_POWER_W:
            return distance_m
        return distance_m * (MAX_TX_POWER_W / power_w) ** (1.0 / self.distance_exponent)

    def in_range(self, distance_m: float, power_w: float = MAX_TX_POWER_W) -> bool:
        return self.effective_distance(distance_m, power_w) <= self.max_range_m

    def _solve_max_range(self) -> float:
        """Distance where base-rate 1000 B success crosses 0.5.

        Doubles as the carrier-sense range: one decode radius per power
        setting.
        """
        base = min(SUPPORTED_RATES_MBPS)

        def ok(d: float) -> bool:
            return self.packet_success_prob(d, base, 1000) >= 0.5

        lo = max(c.distances[-1] for c in self.curves.values())
        if not ok(lo):
            lo = 1.0
        hi = lo
        while ok(hi):
            hi *= 2.0
            if hi > 1e7:
                return 1e7
        while hi - lo > 0.5:
            mid = (lo + hi) / 2.0
            if ok(mid):
                lo = mid
            else:
                hi = mid
        return lo


def _pava_non_decreasing(values: list[float], weights: list[float]) -> list[float]:
    """Pool-adjacent-violators: least-squares monotone projection."""
    level_val: list[float] = []
    level_w: list[float] = []
    level_n: list[int] = []
    for v, w in zip(values, weights):
        level_val.append(v)
        level_w.append(w)
        level_n.append(1)
        while len(level_val) > 1 and level_val[-2] > level_val[-1]:
            v2, w2, n2 = level_val.pop(), level_w.pop(), level_n.pop()
            v1, w1, n1 = level_val.pop(), level_w.pop(), level_n.pop()
            w = w1 + w2
            level_val.append((v1 * w1 + v2 * w2) / w)
            level_w.append(w)
            level_n.append(n1 + n2)
    out: list[float] = []
    for v, n in zip(level_val, level_n):
        out.extend([v] * n)
    return out


def _implied_ln_e(reliability: float, bits: float) -> float:
    # (1-e)^bits = R  =>  ln(1-e) = ln(R)/bits
    ln_one_minus_e = math.log(reliability) / bits
    e = -math.expm1(ln_one_minus_e)
    return math.log(max(e, 1e-300))


def _fit_sync_bits(rows: list[tuple[float, float, int, float]], overhead: int) -> float:
    """Per-rate frame-acquisition exponent from multi-payload points.

    For two payloads p1 < p2 at one distance with reliabilities R1, R2:
    ln R / (8p + overhead + s) must be a common per-bit log-survival, so
    s follows in closed form. Averaged over all such pairs, floored at 0.
    """
    by_distance: dict[float, list[tuple[int, float]]] = {}
    for d, _r, payload, rel in rows:
        by_distance.setdefault(d, []).append((payload, rel))
    estimates: list[float] = []
    for pts in by_distance.values():
        pts = sorted(set(pts))
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                (p1, r1), (p2, r2) = pts[i], pts[j]
                ln1, ln2 = math.log(r1), math.log(r2)
                if ln1 == ln2:
                    continue
                b1 = 8.0 * p1 + overhead
                b2 = 8.0 * p2 + overhead
                s = (b1 * ln2 - b2 * ln1) / (ln1 - ln2)
                estimates.append(s)
    if not estimates:
        return 0.0
    return max(0.0, sum(estimates) / len(estimates))


def calibrate(
    table: list[tuple[float, float, int, float]],
    tolerance: float = 0.02,
    overhead_bits: int = OVERHEAD_BITS,
) -> LinkModel:
    """Fit a LinkModel reproducing every table row within ``tolerance``.

    Rows are (distance_m, rate_mbps, payload_bytes, reliability). Raises
    CalibrationError listing the offending rows when the monotone fit
    cannot reach the tolerance.
    """
    if not table:
        raise CalibrationError("empty calibration table")
    by_rate: dict[float, list[tuple[float, float, int, float]]] = {}
    for row in table:
        d, r, payload, rel = row
        _check_rate(r)
        if not (0.0 < rel <= 1.0) or payload <= 0 or d < 0:
            raise CalibrationError(f"invalid calibration row {row}", [row])
        by_rate.setdefault(r, []).append(row)

    curves: dict[float, RateCurve] = {}
    for rate, rows in by_rate.items():
        sync = _fit_sync_bits(rows, overhead_bits)
        per_distance: dict[float, list[float]] = {}
        for d, _r, payload, rel in rows:
            bits = 8.0 * payload + overhead_bits + sync
            per_distance.setdefault(d, []).append(_implied_ln_e(rel, bits))
        distances = sorted(per_distance)
        raw = [sum(per_distance[d]) / len(per_distance[d]) for d in distances]
        iso = _pava_non_decreasing(raw, [float(len(per_distance[d])) for d in distances])
        iso = [v + i * _ANCHOR_NUDGE for i, v in enumerate(iso)]
        curves[rate] = RateCurve(distances, iso, sync)

    # Pooled log-log slope across all curves stands in for the path-loss
    # exponent used by the reduced-power distance scaling.
    slopes = []
    for curve in curves.values():
        if len(curve.distances) >= 2 and curve.distances[-1] > curve.distances[0]:
            num = curve.ln_errors[-1] - curve.ln_errors[0]
            den = math.log(curve.distances[-1]) - math.log(curve.distances[0])
            if den > 0 and num > 0:
                slopes.append(num / den)
    exponent = sum(slopes) / len(slopes) if slopes else 3.0

    model = LinkModel(curves=curves, overhead_bits=overhead_bits, distance_exponent=exponent)

    offending: list[tuple] = []
    for row in table:
        d, r, payload, rel = row
        predicted = model.packet_success_prob(d, r, payload)
        model.residuals[row] = predicted - rel
        if abs(predicted - rel) > tolerance:
            offending.append(row)
    if offending:
        raise CalibrationError(
            f"{len(offending)} rows outside ±{tolerance} after monotone projection",
            offending,
        )
    return model


def load_calibration_csv(path: str | Path) -> list[tuple[float, float, int, float]]:
    """Read a calibration table: distance_m,rate_mbps,payload_bytes,reliability."""
    rows: list[tuple[float, float, int, float]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"distance_m", "rate_mbps", "payload_bytes", "reliability"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise CalibrationError(
                f"calibration CSV must have header {sorted(expected)}"
            )
        for rec in reader:
            rows.append(
                (
                    float(rec["distance_m"]),
                    float(rec["rate_mbps"]),
                    int(rec["payload_bytes"]),
                    float(rec["reliability"]),
                )
            )
    return rows


_default_model: LinkModel | None = None


def default_link_model() -> LinkModel:
    """The model calibrated from the shipped measurement table (cached)."""
    global _default_model
    if _default_model is None:
        _default_model = calibrate(list(DEFAULT_CALIBRATION))
    return _default_model
