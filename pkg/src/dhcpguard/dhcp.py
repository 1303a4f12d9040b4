"""DHCP message model, wire codec, lease pool and DORA state machines.

Everything the simulator and the detector share lives here: the message
dataclass, a fixed 32-byte wire image, the server-side address pool and
the client/server handshake logic.

Wire layout (32 bytes, all integers big-endian):

    offset  size  field
    ------  ----  -----
    0       1     message type (1 DISCOVER, 2 OFFER, 3 REQUEST,
                  5 ACK, 6 NAK, 7 RELEASE)
    1       4     transaction id
    5       6     client MAC
    11      4     your_ip (offered / assigned address)
    15      4     server_id (identity of the answering server)
    19      4     gateway option
    23      4     dns option
    27      3     lease seconds (24-bit)
    30      2     checksum: ones-complement 16-bit sum of bytes 0..29

This layout is a deliberate fixed-size reduction of the real protocol:
wide enough to carry every field the detector inspects, small enough
that tampering stays byte-exact and cheap to test.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Optional

Ipv4Addr = ipaddress.IPv4Address

UNASSIGNED = Ipv4Addr("0.0.0.0")

WIRE_SIZE = 32
BODY_SIZE = 30
MAX_LEASE_SECS = (1 << 24) - 1


class MsgType(IntEnum):
    DISCOVER = 1
    OFFER = 2
    REQUEST = 3
    ACK = 5
    NAK = 6
    RELEASE = 7


class DhcpCodecError(ValueError):
    """Base class for wire-level decode failures."""


class BadLength(DhcpCodecError):
    pass


class BadChecksum(DhcpCodecError):
    """Checksum mismatch; the message was tampered with in transit."""


class UnknownType(DhcpCodecError):
    pass


class InvalidField(DhcpCodecError):
    """Well-formed frame whose fields violate message invariants."""


class PoolExhausted(Exception):
    """No free address left in the pool (the starvation symptom)."""


@dataclass(frozen=True, order=True)
class MacAddr:
    """A six-octet hardware address."""

    octets: bytes

    def __post_init__(self):
        if len(self.octets) != 6:
            raise ValueError(f"MAC must be 6 octets, got {len(self.octets)}")

    @classmethod
    def parse(cls, text: str) -> "MacAddr":
        parts = text.split(":")
        if len(parts) != 6:
            raise ValueError(f"bad MAC {text!r}")
        return cls(bytes(int(p, 16) for p in parts))

    @classmethod
    def from_int(cls, value: int) -> "MacAddr":
        return cls(value.to_bytes(6, "big"))

    @property
    def is_broadcast(self) -> bool:
        return self.octets == b"\xff" * 6

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)


BROADCAST_MAC = MacAddr(b"\xff" * 6)


@dataclass(frozen=True)
class DhcpMessage:
    """One protocol message, the unit the verifier inspects.

    Invariants are enforced at construction: OFFER/ACK carry a non-zero
    server_id, DISCOVER carries your_ip 0.0.0.0, xid fits 32 bits and
    the lease fits the 24-bit wire field.
    """

    msg_type: MsgType
    xid: int
    client_mac: MacAddr
    your_ip: Ipv4Addr = UNASSIGNED
    server_id: Ipv4Addr = UNASSIGNED
    gateway: Ipv4Addr = UNASSIGNED
    dns: Ipv4Addr = UNASSIGNED
    lease_secs: int = 0

    def __post_init__(self):
        if not 0 <= self.xid < (1 << 32):
            raise ValueError(f"xid out of range: {self.xid}")
        if not 0 <= self.lease_secs <= MAX_LEASE_SECS:
            raise ValueError(f"lease_secs out of range: {self.lease_secs}")
        if self.msg_type in (MsgType.OFFER, MsgType.ACK) and int(self.server_id) == 0:
            raise ValueError(f"{self.msg_type.name} requires a non-zero server_id")
        if self.msg_type is MsgType.DISCOVER and int(self.your_ip) != 0:
            raise ValueError("DISCOVER must carry your_ip 0.0.0.0")


def checksum16(data: bytes) -> int:
    """Ones-complement sum of 16-bit big-endian words (odd tail zero-padded)."""
    if len(data) % 2:
        data = data + b"\x00"
    total = 0
    for i in range(0, len(data), 2):
        total += (data[i] << 8) | data[i + 1]
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def encode_message(msg: DhcpMessage) -> bytes:
    """Serialize to the fixed 32-byte wire image."""
    body = (
        struct.pack(">BI6s", int(msg.msg_type), msg.xid, msg.client_mac.octets)
        + msg.your_ip.packed
        + msg.server_id.packed
        + msg.gateway.packed
        + msg.dns.packed
        + msg.lease_secs.to_bytes(3, "big")
    )
    assert len(body) == BODY_SIZE
    return body + checksum16(body).to_bytes(2, "big")


def decode_message(data: bytes) -> DhcpMessage:
    """Inverse of :func:`encode_message`; validates length, checksum and type."""
    if len(data) != WIRE_SIZE:
        raise BadLength(f"expected {WIRE_SIZE} bytes, got {len(data)}")
    body, stored = data[:BODY_SIZE], int.from_bytes(data[BODY_SIZE:], "big")
    if checksum16(body) != stored:
        raise BadChecksum("checksum mismatch")
    type_byte, xid, mac = struct.unpack(">BI6s", body[:11])
    try:
        msg_type = MsgType(type_byte)
    except ValueError:
        raise UnknownType(f"unknown message type {type_byte}") from None
    try:
        return DhcpMessage(
            msg_type=msg_type,
            xid=xid,
            client_mac=MacAddr(mac),
            your_ip=Ipv4Addr(body[11:15]),
            server_id=Ipv4Addr(body[15:19]),
            gateway=Ipv4Addr(body[19:23]),
            dns=Ipv4Addr(body[23:27]),
            lease_secs=int.from_bytes(body[27:30], "big"),
        )
    except ValueError as exc:
        raise InvalidField(str(exc)) from None


@dataclass
class Lease:
    ip: Ipv4Addr
    expires: float


class AddressPool:
    """Lease bookkeeping over an inclusive IPv4 range.

    Allocation is lowest-free-address so traces stay reproducible.
    Active leases are injective MAC -> IP; expired leases are reclaimed
    silently.
    """

    def __init__(self, start: Ipv4Addr, end: Ipv4Addr, default_lease_secs: int = 3600):
        if int(start) > int(end):
            raise ValueError("pool range start exceeds end")
        self.start = start
        self.end = end
        self.default_lease_secs = default_lease_secs
        self._leases: dict[MacAddr, Lease] = {}

    @property
    def size(self) -> int:
        return int(self.end) - int(self.start) + 1

    def __contains__(self, ip: Ipv4Addr) -> bool:
        return int(self.start) <= int(ip) <= int(self.end)

    def active_leases(self, now: float) -> dict[MacAddr, Ipv4Addr]:
        return {mac: l.ip for mac, l in self._leases.items() if l.expires > now}

    def lease_for(self, mac: MacAddr, now: float) -> Optional[Ipv4Addr]:
        lease = self._leases.get(mac)
        if lease is not None and lease.expires > now:
            return lease.ip
        return None

    def free_count(self, now: float) -> int:
        return self.size - len(self.active_leases(now))

    def allocate(self, mac: MacAddr, now: float, lease_secs: Optional[int] = None) -> Ipv4Addr:
        """Return the active lease for ``mac``, or the lowest free address.

        Raises :class:`PoolExhausted` when no address is free.
        """
        secs = self.default_lease_secs if lease_secs is None else lease_secs
        existing = self.lease_for(mac, now)
        if existing is not None:
            self._leases[mac] = Lease(existing, now + secs)
            return existing
        taken = set(self.active_leases(now).values())
        for value in range(int(self.start), int(self.end) + 1):
            ip = Ipv4Addr(value)
            if ip not in taken:
                self._leases[mac] = Lease(ip, now + secs)
                return ip
        raise PoolExhausted(f"no free address in {self.start}-{self.end}")

    def release(self, mac: MacAddr) -> None:
        self._leases.pop(mac, None)


class DhcpServer:
    """Server half of the DORA exchange.

    ``step`` consumes one inbound message and returns the reply to send,
    or ``None`` when the protocol calls for silence (exhausted pool on
    DISCOVER, REQUEST naming some other server).
    """

    def __init__(
        self,
        server_id: Ipv4Addr,
        mac: MacAddr,
        pool: AddressPool,
        gateway: Ipv4Addr,
        dns: Ipv4Addr,
        lease_secs: int = 3600,
    ):
        self.server_id = server_id
        self.mac = mac
        self.pool = pool
        self.gateway = gateway
        self.dns = dns
        self.lease_secs = lease_secs
        self._offered: dict[tuple[int, MacAddr], Ipv4Addr] = {}

    def _reply(self, msg_type: MsgType, msg: DhcpMessage, your_ip: Ipv4Addr) -> DhcpMessage:
        return DhcpMessage(
            msg_type=msg_type,
            xid=msg.xid,
            client_mac=msg.client_mac,
            your_ip=your_ip,
            server_id=self.server_id,
            gateway=self.gateway,
            dns=self.dns,
            lease_secs=self.lease_secs,
        )

    def step(self, msg: DhcpMessage, now: float) -> Optional[DhcpMessage]:
        if msg.msg_type is MsgType.DISCOVER:
            try:
                ip = self.pool.allocate(msg.client_mac, now, self.lease_secs)
            except PoolExhausted:
                return None
            self._offered[(msg.xid, msg.client_mac)] = ip
            return self._reply(MsgType.OFFER, msg, ip)

        if msg.msg_type is MsgType.REQUEST:
            if msg.server_id != self.server_id:
                # Client chose another server; free the tentative lease.
                self.pool.release(msg.client_mac)
                self._offered.pop((msg.xid, msg.client_mac), None)
                return None
            promised = self._offered.get((msg.xid, msg.client_mac))
            if promised is None:
                promised = self.pool.lease_for(msg.client_mac, now)
            if promised is None or promised != msg.your_ip:
                return self._reply(MsgType.NAK, msg, UNASSIGNED)
            self.pool.allocate(msg.client_mac, now, self.lease_secs)
            return self._reply(MsgType.ACK, msg, promised)

        if msg.msg_type is MsgType.RELEASE:
            self.pool.release(msg.client_mac)
            return None

        return None


@dataclass(frozen=True)
class Binding:
    """Network parameters a client ends up holding after DORA."""

    ip: Ipv4Addr
    server_id: Ipv4Addr
    gateway: Ipv4Addr
    dns: Ipv4Addr
    lease_secs: int


class ClientState(IntEnum):
    INIT = 0
    SELECTING = 1
    REQUESTING = 2
    BOUND = 3


class DhcpClient:
    """Naive client half of DORA: the first matching OFFER wins the race."""

    def __init__(self, mac: MacAddr, xid_source: Callable[[], int]):
        self.mac = mac
        self._next_xid = xid_source
        self.state = ClientState.INIT
        self.xid = 0
        self.binding: Optional[Binding] = None

    def discover(self) -> DhcpMessage:
        """Start (or restart) the exchange with a fresh transaction id."""
        self.xid = self._next_xid()
        self.state = ClientState.SELECTING
        return DhcpMessage(MsgType.DISCOVER, self.xid, self.mac)

    def step(self, msg: DhcpMessage) -> Optional[DhcpMessage]:
        if msg.client_mac != self.mac or msg.xid != self.xid:
            return None
        if self.state is ClientState.SELECTING and msg.msg_type is MsgType.OFFER:
            self.state = ClientState.REQUESTING
            return DhcpMessage(
                MsgType.REQUEST,
                self.xid,
                self.mac,
                your_ip=msg.your_ip,
                server_id=msg.server_id,
                lease_secs=msg.lease_secs,
            )
        if self.state is ClientState.REQUESTING and msg.msg_type is MsgType.ACK:
            self.state = ClientState.BOUND
            self.binding = Binding(
                ip=msg.your_ip,
                server_id=msg.server_id,
                gateway=msg.gateway,
                dns=msg.dns,
                lease_secs=msg.lease_secs,
            )
            return None
        if self.state is ClientState.REQUESTING and msg.msg_type is MsgType.NAK:
            self.state = ClientState.INIT
            self.binding = None
            return None
        return None
