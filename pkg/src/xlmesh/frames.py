"""Over-the-air frame kinds.

A frame is one of: Data, Beacon, Rts, Cts, SegmentAck, Control. Sizes are
logical byte counts used for airtime and loss draws; no real bit layout
is modeled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

RTS_BYTES = 20
CTS_BYTES = 14
SEG_ACK_BYTES = 18
BEACON_BYTES = 46
CONTROL_BYTES = 60

BROADCAST = -1


@dataclass
class DataFrame:
    uid: int
    src: int
    dst: int
    payload_bytes: int
    injected_us: int
    session: int = -1
    # last node that transmitted this frame; identifies the relay on the
    # final hop for per-relay accounting
    last_hop: int = -1
    kind: str = "data"


@dataclass
class BeaconFrame:
    src: int
    seq: int
    latitude: float
    longitude: float
    battery_percent: int
    backlog: int
    timestamp_us: int
    kind: str = "beacon"


@dataclass
class RtsFrame:
    src: int
    dst: int
    burst_us: int            # declared duration of the segment to follow
    kind: str = "rts"


@dataclass
class CtsFrame:
    src: int
    dst: int
    burst_us: int
    kind: str = "cts"


@dataclass
class SegmentAckFrame:
    src: int
    dst: int
    acked_uids: tuple[int, ...]
    kind: str = "seg_ack"


@dataclass
class ControlFrame:
    """Control-plane message; payload is command-specific."""

    ckind: str
    origin: int
    target: int              # BROADCAST or a node id
    sequence: int
    payload: dict[str, Any] = field(default_factory=dict)
    kind: str = "control"

    def dedup_key(self) -> tuple[int, str, int]:
        return (self.origin, self.ckind, self.sequence)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "kind": self.ckind,
            "origin": self.origin,
            "target": "all" if self.target == BROADCAST else self.target,
            "sequence": self.sequence,
            "payload": dict(sorted(self.payload.items())),
        }

    @staticmethod
    def from_json_dict(d: dict[str, Any]) -> "ControlFrame":
        target = d["target"]
        return ControlFrame(
            ckind=d["kind"],
            origin=int(d["origin"]),
            target=BROADCAST if target == "all" else int(target),
            sequence=int(d["sequence"]),
            payload=dict(d.get("payload", {})),
        )


def frame_bytes(frame) -> int:
    """Total bytes that ride the link for loss/airtime purposes."""
    k = frame.kind
    if k == "data":
        return frame.payload_bytes
    if k == "beacon":
        return BEACON_BYTES
    if k == "rts":
        return RTS_BYTES
    if k == "cts":
        return CTS_BYTES
    if k == "seg_ack":
        return SEG_ACK_BYTES + (len(frame.acked_uids) + 7) // 8
    if k == "control":
        return CONTROL_BYTES
    raise ValueError(f"unknown frame kind {k!r}")
