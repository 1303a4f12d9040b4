"""Alert model shared by the three detection layers."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Layer(str, Enum):
    VERIFIER = "verifier"
    SIGNATURE = "signature"
    ANOMALY = "anomaly"


class AlertClass(str, Enum):
    ROGUE_DHCP = "rogue_dhcp"
    DOS = "dos"
    U2R = "u2r"
    R2L = "r2l"
    PROBE = "probe"
    MASQUERADE = "masquerade"
    TAMPER = "tamper"
    EXHAUSTION = "exhaustion"
    NEGLIGENCE = "negligence"
    FLOODING = "flooding"
    RETRANSMISSION_FAILURE = "retransmission_failure"
    RANGE_VIOLATION = "range_violation"
    PATTERN_REPLICATION = "pattern_replication"


class Severity(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


# Layer-distinct code prefixes; layer_of_sign() must stay the inverse of
# every sign the layers produce.
SIGN_PREFIXES = {
    "VR": Layer.VERIFIER,
    "SG": Layer.SIGNATURE,
    "AN": Layer.ANOMALY,
}


def layer_of_sign(unique_sign: str) -> Layer:
    prefix = unique_sign.split("-", 1)[0]
    try:
        return SIGN_PREFIXES[prefix]
    except KeyError:
        raise ValueError(f"unknown alert sign {unique_sign!r}") from None


@dataclass(frozen=True)
class Alert:
    """One detection verdict.

    ``evidence`` holds the indices of the trace events that triggered the
    alert (the offending event first).  ``unique_sign`` is a layer-distinct
    code; its prefix always identifies the originating layer.
    """

    time: float
    layer: Layer
    attack_class: AlertClass
    severity: Severity
    evidence: tuple[int, ...]
    unique_sign: str

    def __post_init__(self):
        if layer_of_sign(self.unique_sign) is not self.layer:
            raise ValueError(f"sign {self.unique_sign!r} does not match layer {self.layer}")

    def to_json(self) -> dict:
        return {
            "time": self.time,
            "layer": self.layer.value,
            "attack_class": self.attack_class.value,
            "severity": self.severity.value,
            "evidence": list(self.evidence),
            "unique_sign": self.unique_sign,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Alert":
        return cls(
            time=float(data["time"]),
            layer=Layer(data["layer"]),
            attack_class=AlertClass(data["attack_class"]),
            severity=Severity(data["severity"]),
            evidence=tuple(int(i) for i in data["evidence"]),
            unique_sign=str(data["unique_sign"]),
        )
