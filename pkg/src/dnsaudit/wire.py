"""DNS wire types and the live socket transport.

Messages are encoded and decoded with dnspython; everything above the byte
level (retries, truncation fallback, observation parsing) lives in
:mod:`dnsaudit.probe`.
"""

from __future__ import annotations

import enum
import ipaddress
import re
import socket
import struct
import time
from dataclasses import dataclass, field
from typing import Protocol

import dns.exception
import dns.flags
import dns.message
import dns.rcode
import dns.rdatatype

UDP_PAYLOAD_LIMIT = 512
MALFORMED = "MALFORMED"

_LABEL = re.compile(r"^[a-z0-9_*]([a-z0-9_-]*[a-z0-9_])?$")


class InvalidName(ValueError):
    pass


class TransportError(OSError):
    """Local socket failure (bind error, no route), as opposed to a remote timeout."""


class RType(str, enum.Enum):
    A = "A"
    AAAA = "AAAA"
    NS = "NS"
    SOA = "SOA"
    MX = "MX"
    PTR = "PTR"
    CNAME = "CNAME"
    TXT = "TXT"
    DS = "DS"
    DNSKEY = "DNSKEY"
    RRSIG = "RRSIG"
    AXFR = "AXFR"


class Transport(str, enum.Enum):
    UDP = "UDP"
    TCP = "TCP"


def normalize_name(name: str) -> str:
    """Lowercase ``name`` and give it a trailing dot, validating label sizes."""
    name = name.strip().lower()
    if name in ("", "."):
        return "."
    if name.endswith("."):
        name = name[:-1]
    if len(name) > 253:
        raise InvalidName(f"name too long ({len(name)} octets): {name}")
    for label in name.split("."):
        if not label:
            raise InvalidName(f"empty label in {name!r}")
        if len(label) > 63:
            raise InvalidName(f"label longer than 63 octets in {name!r}")
        if not _LABEL.match(label):
            raise InvalidName(f"invalid characters in label {label!r}")
    return name + "."


def is_subdomain(name: str, zone: str) -> bool:
    """True when ``name`` is ``zone`` or lies below it (both normalized)."""
    return zone == "." or name == zone or name.endswith("." + zone)


def parent_name(name: str) -> str:
    if name == ".":
        return "."
    rest = name.split(".", 1)[1]
    return rest or "."


def address_key(address: str) -> tuple[int, int]:
    ip = ipaddress.ip_address(address)
    return ip.version, int(ip)


def sort_addresses(addresses) -> tuple[str, ...]:
    return tuple(sorted({str(ipaddress.ip_address(a)) for a in addresses}, key=address_key))


@dataclass(frozen=True)
class DnsQuestion:
    qname: str
    qtype: RType
    recursion_desired: bool = False

    def __post_init__(self):
        object.__setattr__(self, "qname", normalize_name(self.qname))
        object.__setattr__(self, "qtype", RType(self.qtype))


@dataclass(frozen=True)
class Record:
    section: str
    name: str
    rtype: str
    ttl: int
    rdata: str


@dataclass(frozen=True)
class DnsObservation:
    responded: bool
    transport: Transport
    authoritative_answer: bool = False
    recursion_available: bool = False
    truncated: bool = False
    rcode: str | None = None
    records: tuple[Record, ...] = ()
    rtt: float = 0.0
    error: str | None = None

    def section(self, section: str, rtype: str | None = None, name: str | None = None) -> list[Record]:
        return [
            r
            for r in self.records
            if r.section == section
            and (rtype is None or r.rtype == rtype)
            and (name is None or r.name == name)
        ]

    def answer(self, rtype: str | None = None, name: str | None = None) -> list[Record]:
        return self.section("answer", rtype, name)

    def authority(self, rtype: str | None = None) -> list[Record]:
        return self.section("authority", rtype)

    def additional(self, rtype: str | None = None) -> list[Record]:
        return self.section("additional", rtype)

    @property
    def referral(self) -> tuple[str, list[str]] | None:
        """(zone, ns names) when this is a non-authoritative delegation answer."""
        if not self.responded or self.authoritative_answer or self.rcode != "NOERROR":
            return None
        if self.answer():
            return None
        ns = self.authority("NS")
        if not ns:
            return None
        zone = ns[0].name
        return zone, sorted({r.rdata for r in ns if r.name == zone})


def no_response(transport: Transport, error: str | None = None) -> DnsObservation:
    return DnsObservation(responded=False, transport=transport, error=error)


_NAME_TYPES = {"NS", "CNAME", "PTR", "MX", "SOA", "SRV", "DNAME"}


def parse_observation(payloads: list[bytes], transport: Transport, rtt: float = 0.0) -> DnsObservation:
    """Turn raw response payloads into an observation; never raises."""
    records: list[Record] = []
    try:
        messages = [dns.message.from_wire(p, one_rr_per_rrset=True) for p in payloads]
    except (dns.exception.DNSException, ValueError, struct.error):
        return DnsObservation(responded=True, transport=transport, rcode=MALFORMED, rtt=rtt)
    if not messages:
        return DnsObservation(responded=True, transport=transport, rcode=MALFORMED, rtt=rtt)
    for msg in messages:
        for section, rrsets in (("answer", msg.answer), ("authority", msg.authority), ("additional", msg.additional)):
            for rrset in rrsets:
                rtype = dns.rdatatype.to_text(rrset.rdtype)
                owner = rrset.name.to_text().lower()
                for rd in rrset:
                    text = rd.to_text()
                    if rtype in _NAME_TYPES:
                        text = text.lower()
                    records.append(Record(section, owner, rtype, rrset.ttl, text))
    first = messages[0]
    return DnsObservation(
        responded=True,
        transport=transport,
        authoritative_answer=bool(first.flags & dns.flags.AA),
        recursion_available=bool(first.flags & dns.flags.RA),
        truncated=bool(first.flags & dns.flags.TC),
        rcode=dns.rcode.to_text(first.rcode()),
        records=tuple(records),
        rtt=rtt,
    )


def stream_complete(payloads: list[bytes]) -> bool:
    """True once an AXFR stream has carried its closing SOA (or an error)."""
    soa_seen = 0
    for p in payloads:
        try:
            msg = dns.message.from_wire(p, one_rr_per_rrset=True)
        except (dns.exception.DNSException, ValueError, struct.error):
            return True
        if msg.rcode() != dns.rcode.NOERROR:
            return True
        soa_seen += sum(1 for rrset in msg.answer if rrset.rdtype == dns.rdatatype.SOA)
        if not msg.answer:
            return True
    return soa_seen >= 2


class DnsTransport(Protocol):
    """Moves encoded DNS messages to a server address and back.

    ``exchange`` returns the response payloads (several for a zone transfer
    stream) or None when the server does not answer.
    """

    simulated: bool

    def exchange(self, server: str, payload: bytes, *, tcp: bool, timeout: float, stream: bool = False) -> list[bytes] | None: ...


class SocketTransport:
    """Real UDP/TCP sockets.

    ``port_map`` redirects server addresses to (host, port) pairs, which is
    how the loopback fixture server is reached. With ``strict`` set,
    addresses missing from the map are treated as silent servers.
    """

    simulated = False

    def __init__(self, port: int = 53, port_map: dict[str, tuple[str, int]] | None = None, strict: bool = False):
        self.port = port
        self.port_map = dict(port_map or {})
        self.strict = strict

    def _endpoint(self, server: str) -> tuple[str, int] | None:
        if server in self.port_map:
            return self.port_map[server]
        if self.strict:
            return None
        return server, self.port

    def exchange(self, server, payload, *, tcp, timeout, stream=False):
        endpoint = self._endpoint(server)
        if endpoint is None:
            return None
        if tcp:
            return self._tcp(endpoint, payload, timeout, stream)
        return self._udp(endpoint, payload, timeout)

    @staticmethod
    def _family(host: str) -> int:
        return socket.AF_INET6 if ipaddress.ip_address(host).version == 6 else socket.AF_INET

    def _udp(self, endpoint, payload, timeout):
        query_id = payload[:2]
        try:
            sock = socket.socket(self._family(endpoint[0]), socket.SOCK_DGRAM)
        except OSError as exc:
            raise TransportError(f"socket: {exc}") from exc
        with sock:
            sock.settimeout(timeout)
            try:
                sock.connect(endpoint)
                sock.send(payload)
            except (ConnectionRefusedError, socket.timeout):
                return None
            except OSError as exc:
                raise TransportError(f"udp send to {endpoint[0]}: {exc}") from exc
            deadline = time.monotonic() + timeout
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                sock.settimeout(remaining)
                try:
                    data = sock.recv(65535)
                except (socket.timeout, ConnectionRefusedError, ConnectionResetError):
                    return None
                except OSError as exc:
                    raise TransportError(f"udp recv from {endpoint[0]}: {exc}") from exc
                # ignore stray datagrams for other queries
                if data[:2] == query_id:
                    return [data]

    def _tcp(self, endpoint, payload, timeout, stream):
        try:
            sock = socket.socket(self._family(endpoint[0]), socket.SOCK_STREAM)
        except OSError as exc:
            raise TransportError(f"socket: {exc}") from exc
        with sock:
            sock.settimeout(timeout)
            try:
                sock.connect(endpoint)
            except (ConnectionRefusedError, ConnectionResetError, socket.timeout):
                return None
            except OSError as exc:
                raise TransportError(f"tcp connect to {endpoint[0]}: {exc}") from exc
            try:
                sock.sendall(struct.pack("!H", len(payload)) + payload)
                messages: list[bytes] = []
                while True:
                    msg = _read_framed(sock)
                    if msg is None:
                        break
                    messages.append(msg)
                    if not stream or stream_complete(messages):
                        break
            except (socket.timeout, ConnectionError):
                pass
            return messages or None


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


def _read_framed(sock: socket.socket) -> bytes | None:
    head = _read_exact(sock, 2)
    if head is None:
        return None
    (length,) = struct.unpack("!H", head)
    return _read_exact(sock, length)


@dataclass(frozen=True)
class ServerEndpoint:
    """A name server's reachable addresses.

    Two endpoints denote the same machine when their address sets
    intersect (see :meth:`same_server`); equality stays structural.
    """

    ns_name: str | None
    addresses: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "addresses", sort_addresses(self.addresses))

    def same_server(self, other: ServerEndpoint) -> bool:
        return bool(set(self.addresses) & set(other.addresses))
