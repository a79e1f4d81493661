"""The thirteen misconfiguration checks.

Each check maps a :class:`DelegationTrace` plus live probes to a
:class:`TestOutcome`. The functions are named ``test_*`` after the checks
they implement; import the module rather than the names in pytest files.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field
from typing import Callable

from dnsaudit.probe import Prober, Resolver, soa_serial
from dnsaudit.tracer import DelegationTrace, ServerRef, classify_servers
from dnsaudit.wire import DnsObservation, DnsQuestion, RType, Transport, TransportError, no_response

DEFAULT_CANARY = "example.com."
IPV4_PREFIX = 24
IPV6_PREFIX = 48


class DomainExcluded(Exception):
    """The domain has no authoritative server and is left out of analysis."""


class TestId(enum.IntEnum):
    UDP = 1
    TCP = 2
    SINGLE_AUTH = 3
    PARENT_NONAUTH = 4
    STEALTH = 5
    LOOP = 6
    ZONE_TRANSFER = 7
    RECURSION = 8
    SECONDARY_SYNC = 9
    COLOCATION = 10
    REVERSE = 11
    IPV6 = 12
    DNSSEC = 13

    __test__ = False


TEST_NAMES = {
    TestId.UDP: "Unavailability via UDP",
    TestId.TCP: "Unavailability via TCP",
    TestId.SINGLE_AUTH: "Only one authoritative server",
    TestId.PARENT_NONAUTH: "Non-authoritative server on parent",
    TestId.STEALTH: "Stealth servers",
    TestId.LOOP: "Loops in resolution",
    TestId.ZONE_TRANSFER: "Public zone transfer",
    TestId.RECURSION: "Public recursion",
    TestId.SECONDARY_SYNC: "Secondary synchronization",
    TestId.COLOCATION: "Close server locations",
    TestId.REVERSE: "Reverse mapping (PTR)",
    TestId.IPV6: "IPv6 support",
    TestId.DNSSEC: "DNSSEC support",
}


@dataclass(frozen=True)
class TestOutcome:
    test_id: TestId
    indicator: int
    n_err: int
    n_tot: int
    evidence: tuple[str, ...] = ()
    applicable: bool = True
    servers: tuple[str, ...] = ()

    __test__ = False

    def __post_init__(self):
        object.__setattr__(self, "test_id", TestId(self.test_id))
        if not 0 <= self.n_err <= self.n_tot:
            raise ValueError(f"test {int(self.test_id)}: need 0 <= n_err <= n_tot, got {self.n_err}/{self.n_tot}")
        if self.indicator != (1 if self.n_err >= 1 else 0):
            raise ValueError(f"test {int(self.test_id)}: indicator must be 1 exactly when n_err >= 1")
        if not self.applicable and self.indicator:
            raise ValueError(f"test {int(self.test_id)}: an inapplicable test cannot fail")

    @property
    def failed(self) -> bool:
        return self.indicator == 1

    def to_dict(self) -> dict:
        return {
            "test_id": int(self.test_id),
            "indicator": self.indicator,
            "n_err": self.n_err,
            "n_tot": self.n_tot,
            "applicable": self.applicable,
            "servers": list(self.servers),
            "evidence": list(self.evidence),
        }

    @classmethod
    def from_dict(cls, data: dict) -> TestOutcome:
        return cls(
            test_id=TestId(data["test_id"]),
            indicator=data["indicator"],
            n_err=data["n_err"],
            n_tot=data["n_tot"],
            evidence=tuple(data.get("evidence", ())),
            applicable=data.get("applicable", True),
            servers=tuple(data.get("servers", ())),
        )


def _counted(test_id, failing: list[ServerRef], total: int, evidence) -> TestOutcome:
    return TestOutcome(
        test_id, 1 if failing else 0, len(failing), total, tuple(evidence),
        servers=tuple(sorted({s.identity for s in failing})),
    )


def _flag(test_id, failed: bool, evidence, servers=(), applicable=True) -> TestOutcome:
    n = 1 if failed else 0
    return TestOutcome(test_id, n, n, n, tuple(evidence), applicable, tuple(sorted(set(servers))) if failed else ())


@dataclass
class Probes:
    """Probe access for one audit, with per-server answers cached."""

    prober: Prober
    resolver: Resolver
    canary: str = DEFAULT_CANARY
    _cache: dict = field(default_factory=dict)

    def soa(self, ref: ServerRef, domain: str, transport: Transport) -> DnsObservation:
        key = ("soa", ref.identity, transport)
        if key not in self._cache:
            obs = no_response(transport)
            for address in ref.addresses:
                try:
                    obs = self.prober.query(address, DnsQuestion(domain, RType.SOA), transport)
                except TransportError as exc:
                    obs = no_response(transport, str(exc))
                if obs.responded:
                    break
            self._cache[key] = obs
        return self._cache[key]

    def ask_authoritative(self, trace: DelegationTrace, name: str, rtype: RType) -> DnsObservation | None:
        """First authoritative answer for ``name`` from the domain's own servers."""
        for ref in trace.servers:
            if ref.is_authoritative:
                obs = self.prober.ask(ref.addresses, name, rtype)
                if obs.responded and obs.authoritative_answer:
                    return obs
        return None


def _require(trace: DelegationTrace) -> None:
    if trace.unresolvable:
        raise DomainExcluded(f"{trace.domain}: no authoritative server found")


def test_udp_availability(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    dead = [s for s in trace.servers if not probes.soa(s, trace.domain, Transport.UDP).responded]
    return _counted(TestId.UDP, dead, len(trace.servers),
                    [f"{s.ns_name} ({', '.join(s.addresses) or 'no address'}) does not answer over UDP" for s in dead])


def test_tcp_availability(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    failing = [
        s for s in trace.servers
        if probes.soa(s, trace.domain, Transport.UDP).responded
        and not probes.soa(s, trace.domain, Transport.TCP).responded
    ]
    return _counted(TestId.TCP, failing, len(trace.servers),
                    [f"{s.ns_name} answers UDP but not TCP" for s in failing])


def test_single_authoritative(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    auth = [s for s in trace.servers if s.is_authoritative]
    failed = len(auth) == 1
    evidence = []
    if failed:
        only = auth[0]
        evidence.append(f"only {only.ns_name} ({', '.join(only.addresses)}) is authoritative")
        if only.aliases:
            evidence.append(f"{', '.join(only.aliases)} share its address")
    return _flag(TestId.SINGLE_AUTH, failed, evidence, [s.identity for s in auth])


def test_parent_nonauth(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    classes = classify_servers(trace)
    looping = trace.loop_servers
    # servers that bounce queries back up a detected loop are scored by the loop check
    lame = [s for s in classes.lame_parent_set if not set(s.names) & looping]
    return _counted(TestId.PARENT_NONAUTH, lame, len(classes.parent_set),
                    [f"{s.ns_name} is listed by the parent but {s.note or 'not authoritative'}" for s in lame])


def test_stealth(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    classes = classify_servers(trace)
    stealth = list(classes.stealth_set)
    return _counted(TestId.STEALTH, stealth, len(classes.child_set),
                    [f"{s.ns_name} is in the zone's NS set but not delegated by the parent" for s in stealth])


def test_loops(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    evidence = []
    servers = []
    if trace.loop_detected:
        evidence.append("referral loop: " + " -> ".join(f"{z} @ {n}" for z, n in trace.loop_path))
        servers = [s.identity for s in trace.servers if set(s.names) & trace.loop_servers]
    return _flag(TestId.LOOP, trace.loop_detected, evidence, servers)


def test_public_zone_transfer(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    granting, evidence = [], []
    for s in trace.servers:
        for address in s.addresses:
            result = probes.prober.attempt_zone_transfer(address, trace.domain)
            if result.granted:
                granting.append(s)
                evidence.append(f"{s.ns_name} ({address}) transferred {result.record_count} records")
                break
    return _counted(TestId.ZONE_TRANSFER, granting, len(trace.servers), evidence)


def test_public_recursion(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    open_servers, evidence = [], []
    for s in trace.servers:
        for address in s.addresses:
            if probes.prober.check_recursion(address, probes.canary).offers_recursion:
                open_servers.append(s)
                evidence.append(f"{s.ns_name} ({address}) resolved {probes.canary} for us")
                break
    return _counted(TestId.RECURSION, open_servers, len(trace.servers), evidence)


def test_secondary_sync(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    serials: dict[str, tuple[ServerRef, int]] = {}
    for s in trace.servers:
        if not s.is_authoritative:
            continue
        for address in s.addresses:
            serial = soa_serial(probes.prober.ask([address], trace.domain, RType.SOA), trace.domain)
            if serial is not None:
                serials[s.ns_name] = (s, serial)
                break
    if len(serials) < 2:
        return _flag(TestId.SECONDARY_SYNC, False, ["fewer than two authoritative serials to compare"],
                     applicable=False)
    newest = max(v for _, v in serials.values())
    stale = [s for s, v in serials.values() if v != newest]
    evidence = [f"{n}: serial {v}" for n, (_, v) in sorted(serials.items())] if stale else []
    return _flag(TestId.SECONDARY_SYNC, bool(stale), evidence, [s.identity for s in stale])


def _prefix(address: str) -> ipaddress.IPv4Network | ipaddress.IPv6Network:
    ip = ipaddress.ip_address(address)
    bits = IPV4_PREFIX if ip.version == 4 else IPV6_PREFIX
    return ipaddress.ip_network(f"{ip}/{bits}", strict=False)


def test_server_colocation(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    located = [s for s in trace.servers if s.addresses]
    if len(located) < 2:
        return _flag(TestId.COLOCATION, False, ["fewer than two servers to compare"], applicable=False)
    networks: dict[int, set] = {}
    for s in located:
        for a in s.addresses:
            net = _prefix(a)
            networks.setdefault(net.version, set()).add(net)
    # a family is spread when its addresses fall in two or more networks
    failed = not any(len(nets) > 1 for nets in networks.values())
    evidence = []
    if failed:
        evidence.append("all servers share " + ", ".join(str(n) for v in sorted(networks) for n in networks[v]))
    return _flag(TestId.COLOCATION, failed, evidence, [s.identity for s in located])


class PtrClass(str, enum.Enum):
    NO_PTR = "no_ptr"
    DANGLING = "ptr_dangling"
    MISMATCH = "ptr_forward_mismatch"
    CONSISTENT = "consistent"


def classify_reverse(address: str, resolver: Resolver) -> tuple[PtrClass, str | None]:
    name = resolver.reverse_lookup(address)
    if name is None:
        return PtrClass.NO_PTR, None
    forward = resolver.addresses(name)
    if not forward:
        return PtrClass.DANGLING, name
    if ipaddress.ip_address(address).compressed not in forward:
        return PtrClass.MISMATCH, name
    return PtrClass.CONSISTENT, name


def test_reverse_mapping(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    total, failing, evidence, servers = 0, 0, [], set()
    for s in trace.servers:
        for address in s.addresses:
            total += 1
            cls, name = classify_reverse(address, probes.resolver)
            evidence.append(f"{address}: {cls.value}" + (f" ({name})" if name else ""))
            if cls is not PtrClass.CONSISTENT:
                failing += 1
                servers.add(s.identity)
    return TestOutcome(TestId.REVERSE, 1 if failing else 0, failing, total, tuple(evidence),
                       servers=tuple(sorted(servers)))


def test_ipv6_support(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    resolver = probes.resolver
    categories: dict[str, bool] = {}
    ns_names = sorted({n for s in trace.servers for n in s.names})
    categories["NS"] = any(resolver.lookup(n, RType.AAAA).values("AAAA") for n in ns_names)
    exchanges = sorted({r.split()[-1] for r in resolver.lookup(trace.domain, RType.MX).values("MX")})
    if exchanges:
        categories["MX"] = any(resolver.lookup(x, RType.AAAA).values("AAAA") for x in exchanges)
    www = "www." + trace.domain
    www_v6 = resolver.lookup(www, RType.AAAA).values("AAAA")
    if www_v6 or resolver.lookup(www, RType.A).values("A"):
        categories["WWW"] = bool(www_v6)
    missing = [c for c, ok in categories.items() if not ok]
    evidence = [f"{c}: {'AAAA present' if ok else 'no AAAA'}" for c, ok in categories.items()]
    evidence += [f"{c}: no records, skipped" for c in ("MX", "WWW") if c not in categories]
    return _flag(TestId.IPV6, bool(missing), evidence)


def _covered(obs: DnsObservation | None, owner: str) -> set[str]:
    if obs is None:
        return set()
    return {r.rdata.split()[0].upper() for r in obs.answer("RRSIG", owner)}


def test_dnssec_support(trace: DelegationTrace, probes: Probes) -> TestOutcome:
    _require(trace)
    domain = trace.domain
    www = "www." + domain
    dnskey = probes.ask_authoritative(trace, domain, RType.DNSKEY)
    has_key = bool(dnskey and dnskey.answer("DNSKEY", domain))
    apex_sigs = _covered(probes.ask_authoritative(trace, domain, RType.RRSIG), domain)
    missing = []
    if not has_key:
        missing.append("DNSKEY")
    if "NS" not in apex_sigs:
        missing.append("RRSIG(NS)")
    apex_a = probes.ask_authoritative(trace, domain, RType.A)
    if apex_a and apex_a.answer("A", domain):
        if "A" not in apex_sigs:
            missing.append("RRSIG(A) at apex")
    else:
        www_a = probes.ask_authoritative(trace, www, RType.A)
        if www_a and www_a.answer():
            www_sigs = _covered(probes.ask_authoritative(trace, www, RType.RRSIG), www)
            if not www_sigs & {"A", "CNAME"}:
                missing.append("RRSIG(A) at www")
    ds = False
    for addrs in trace.parent_servers:
        obs = probes.prober.ask(addrs, domain, RType.DS)
        if obs.answer("DS", domain):
            ds = True
            break
    if missing:
        evidence = ["missing " + ", ".join(missing)]
    else:
        evidence = ["full chain" if ds else "island, awaiting parent"]
    return _flag(TestId.DNSSEC, bool(missing), evidence)


CHECKS: dict[TestId, Callable[[DelegationTrace, Probes], TestOutcome]] = {
    TestId.UDP: test_udp_availability,
    TestId.TCP: test_tcp_availability,
    TestId.SINGLE_AUTH: test_single_authoritative,
    TestId.PARENT_NONAUTH: test_parent_nonauth,
    TestId.STEALTH: test_stealth,
    TestId.LOOP: test_loops,
    TestId.ZONE_TRANSFER: test_public_zone_transfer,
    TestId.RECURSION: test_public_recursion,
    TestId.SECONDARY_SYNC: test_secondary_sync,
    TestId.COLOCATION: test_server_colocation,
    TestId.REVERSE: test_reverse_mapping,
    TestId.IPV6: test_ipv6_support,
    TestId.DNSSEC: test_dnssec_support,
}


def run_all(trace: DelegationTrace, probes: Probes) -> list[TestOutcome]:
    """Run all thirteen checks in table order."""
    _require(trace)
    return [CHECKS[t](trace, probes) for t in TestId]
