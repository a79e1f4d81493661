"""Targeted DNS probes and a small iterative resolver built on them."""

from __future__ import annotations

import ipaddress
import time
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import dns.flags
import dns.message
import dns.reversename

from dnsaudit.wire import (
    DnsObservation,
    DnsQuestion,
    DnsTransport,
    Record,
    RType,
    Transport,
    TransportError,
    is_subdomain,
    no_response,
    normalize_name,
    parse_observation,
    sort_addresses,
)

UDP_TIMEOUT = 3.0
UDP_RETRIES = 2
TCP_TIMEOUT = 5.0
MAX_CNAME_CHAIN = 8
MAX_DEPTH = 16


class ZoneTransfer(NamedTuple):
    granted: bool
    record_count: int
    reason: str


class RecursionCheck(NamedTuple):
    offers_recursion: bool
    reason: str


class Prober:
    """Sends single questions to explicit server addresses."""

    def __init__(
        self,
        transport: DnsTransport,
        udp_timeout: float = UDP_TIMEOUT,
        udp_retries: int = UDP_RETRIES,
        tcp_timeout: float = TCP_TIMEOUT,
    ):
        self.transport = transport
        self.udp_timeout = udp_timeout
        self.udp_retries = udp_retries
        self.tcp_timeout = tcp_timeout

    def query(
        self,
        server: str,
        question: DnsQuestion,
        transport: Transport = Transport.UDP,
        timeout: float | None = None,
    ) -> DnsObservation:
        ipaddress.ip_address(server)
        transport = Transport(transport)
        if question.qtype is RType.AXFR and transport is not Transport.TCP:
            raise ValueError("AXFR questions are only sent over TCP")
        tcp = transport is Transport.TCP
        if timeout is None:
            timeout = self.tcp_timeout if tcp else self.udp_timeout
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        msg = dns.message.make_query(question.qname, question.qtype.value)
        if not question.recursion_desired:
            msg.flags &= ~dns.flags.RD
        payload = msg.to_wire()
        attempts = 1 if tcp else self.udp_retries + 1
        for _ in range(attempts):
            start = time.perf_counter()
            payloads = self.transport.exchange(
                server, payload, tcp=tcp, timeout=timeout, stream=question.qtype is RType.AXFR
            )
            if payloads is not None:
                rtt = 0.0 if self.transport.simulated else (time.perf_counter() - start) * 1000.0
                return parse_observation(payloads, transport, rtt)
        return no_response(transport)

    def ask(self, addresses: Iterable[str], name: str, rtype: RType | str, rd: bool = False) -> DnsObservation:
        """Query each address in turn (UDP, falling back to TCP on truncation
        or silence) and return the first answer obtained."""
        question = DnsQuestion(name, RType(rtype), rd)
        last = no_response(Transport.UDP)
        for address in addresses:
            try:
                obs = self.query(address, question, Transport.UDP)
            except TransportError as exc:
                last = no_response(Transport.UDP, str(exc))
                obs = last
            if obs.responded and not obs.truncated:
                return obs
            try:
                over_tcp = self.query(address, question, Transport.TCP)
            except TransportError as exc:
                over_tcp = no_response(Transport.TCP, str(exc))
            if over_tcp.responded:
                return over_tcp
            if obs.responded:
                return obs
        return last

    def attempt_zone_transfer(self, server: str, zone: str) -> ZoneTransfer:
        zone = normalize_name(zone)
        try:
            obs = self.query(server, DnsQuestion(zone, RType.AXFR), Transport.TCP)
        except TransportError as exc:
            return ZoneTransfer(False, 0, f"transport error: {exc}")
        if not obs.responded:
            return ZoneTransfer(False, 0, "unreachable")
        if obs.rcode != "NOERROR":
            return ZoneTransfer(False, 0, obs.rcode or "no rcode")
        answers = obs.answer()
        if len(answers) < 2:
            return ZoneTransfer(False, 0, "incomplete")
        first, last = answers[0], answers[-1]
        if first.rtype != "SOA" or last.rtype != "SOA" or first.name != zone or last.name != zone:
            return ZoneTransfer(False, 0, "incomplete")
        return ZoneTransfer(True, len(answers) - 1, "granted")

    def check_recursion(self, server: str, canary: str) -> RecursionCheck:
        try:
            obs = self.query(server, DnsQuestion(canary, RType.A, recursion_desired=True))
        except TransportError as exc:
            return RecursionCheck(False, f"transport error: {exc}")
        if not obs.responded:
            return RecursionCheck(False, "timeout")
        if not obs.recursion_available:
            return RecursionCheck(False, "RA=0")
        if not obs.answer():
            return RecursionCheck(False, f"RA=1 without answer ({obs.rcode})")
        return RecursionCheck(True, "resolved foreign name")

    def fetch_soa_serial(self, server: str, zone: str) -> int | None:
        zone = normalize_name(zone)
        obs = self.ask([server], zone, RType.SOA)
        return soa_serial(obs, zone)


def soa_serial(obs: DnsObservation, zone: str) -> int | None:
    if not obs.responded or not obs.authoritative_answer:
        return None
    for rec in obs.answer("SOA", zone):
        return int(rec.rdata.split()[2])
    return None


@dataclass(frozen=True)
class Lookup:
    rcode: str | None
    records: tuple[Record, ...] = ()
    chain: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.rcode is not None

    def values(self, rtype: str) -> list[str]:
        return [r.rdata for r in self.records if r.rtype == rtype]


class Resolver:
    """Iterative resolution from the root hints, cached for one audit only."""

    def __init__(self, prober: Prober, roots: Iterable[str], max_depth: int = MAX_DEPTH):
        self.prober = prober
        self.roots = [(a,) for a in roots]
        self.max_depth = max_depth
        self._cache: dict[tuple[str, str], Lookup] = {}
        self._active: set[tuple[str, str]] = set()

    def lookup(self, name: str, rtype: RType | str) -> Lookup:
        name = normalize_name(name)
        rtype = RType(rtype).value
        key = (name, rtype)
        if key in self._cache:
            return self._cache[key]
        if key in self._active:
            return Lookup(None)
        self._active.add(key)
        try:
            result = self._chase(name, rtype)
        finally:
            self._active.discard(key)
        self._cache[key] = result
        return result

    def _chase(self, name: str, rtype: str) -> Lookup:
        chain: list[str] = []
        records: list[Record] = []
        for _ in range(MAX_CNAME_CHAIN + 1):
            result = self._iterate(name, rtype)
            records.extend(result.records)
            if not result.ok:
                return Lookup(None, tuple(records), tuple(chain))
            targets = [r.rdata for r in result.records if r.rtype == "CNAME" and r.name == name]
            if rtype == "CNAME" or not targets or any(r.rtype == rtype for r in result.records):
                return Lookup(result.rcode, tuple(records), tuple(chain))
            chain.append(name)
            name = targets[0]
        return Lookup(None, tuple(records), tuple(chain))

    def _iterate(self, name: str, rtype: str) -> Lookup:
        servers = self.roots
        zone = "."
        for _ in range(self.max_depth):
            next_servers = None
            for addrs in servers:
                obs = self.prober.ask(addrs, name, rtype)
                if not obs.responded or obs.rcode not in ("NOERROR", "NXDOMAIN"):
                    continue
                answers = [r for r in obs.answer() if r.name == name and r.rtype in (rtype, "CNAME")]
                if answers:
                    return Lookup(obs.rcode, tuple(answers))
                if obs.authoritative_answer:
                    return Lookup(obs.rcode)
                ref = obs.referral
                if ref is None:
                    continue
                cut, ns_names = ref
                if cut == zone or not is_subdomain(cut, zone) or not is_subdomain(name, cut):
                    continue
                next_servers = self._referral_servers(obs, ns_names)
                if next_servers:
                    zone = cut
                    break
            if not next_servers:
                return Lookup(None)
            servers = next_servers
        return Lookup(None)

    def _referral_servers(self, obs: DnsObservation, ns_names: list[str]) -> list[tuple[str, ...]]:
        glue: dict[str, list[str]] = {}
        for rec in obs.additional():
            if rec.rtype in ("A", "AAAA"):
                glue.setdefault(rec.name, []).append(rec.rdata)
        out = []
        for ns in ns_names:
            addrs = glue.get(ns) or self.addresses(ns)
            if addrs:
                out.append(sort_addresses(addrs))
        return out

    def addresses(self, name: str) -> tuple[str, ...]:
        found: list[str] = []
        for rtype in ("A", "AAAA"):
            found.extend(self.lookup(name, rtype).values(rtype))
        return sort_addresses(found)

    def reverse_lookup(self, address: str) -> str | None:
        rname = dns.reversename.from_address(address).to_text()
        result = self.lookup(rname, RType.PTR)
        values = result.values("PTR")
        return values[0] if values else None
