"""Delegation tracing from the root hints down to a domain's name servers."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

from dnsaudit.probe import MAX_DEPTH, Prober, Resolver
from dnsaudit.wire import (
    DnsObservation,
    RType,
    ServerEndpoint,
    is_subdomain,
    normalize_name,
    sort_addresses,
)


class ContractViolation(ValueError):
    pass


class Source(str, enum.Enum):
    PARENT_ONLY = "parent_only"
    CHILD_ONLY = "child_only"
    BOTH = "both"


@dataclass(frozen=True)
class ServerRef:
    ns_name: str
    endpoint: ServerEndpoint
    source: Source
    is_authoritative: bool | None
    aliases: tuple[str, ...] = ()
    note: str = ""

    @property
    def addresses(self) -> tuple[str, ...]:
        return self.endpoint.addresses

    @property
    def names(self) -> tuple[str, ...]:
        return (self.ns_name, *self.aliases)

    @property
    def identity(self) -> str:
        """Stable server identity: its lowest address, else its name."""
        return self.addresses[0] if self.addresses else self.ns_name

    @property
    def in_parent(self) -> bool:
        return self.source in (Source.PARENT_ONLY, Source.BOTH)

    @property
    def in_child(self) -> bool:
        return self.source in (Source.CHILD_ONLY, Source.BOTH)


@dataclass(frozen=True)
class DelegationTrace:
    domain: str
    parent_zone: str | None
    servers: tuple[ServerRef, ...]
    glue: dict[str, tuple[str, ...]] = field(default_factory=dict)
    loop_detected: bool = False
    loop_path: tuple[tuple[str, str], ...] = ()
    unresolvable: bool = False
    depth: int = 0
    parent_servers: tuple[tuple[str, ...], ...] = ()
    evidence: tuple[str, ...] = ()

    @property
    def loop_servers(self) -> frozenset[str]:
        """Names of the domain's own servers that take part in the loop."""
        return frozenset(n for z, n in self.loop_path if z == self.domain)


class ServerClasses(NamedTuple):
    parent_set: tuple[ServerRef, ...]
    child_set: tuple[ServerRef, ...]
    stealth_set: tuple[ServerRef, ...]
    lame_parent_set: tuple[ServerRef, ...]


def classify_servers(trace: DelegationTrace) -> ServerClasses:
    if trace.unresolvable:
        raise ContractViolation(f"{trace.domain} is unresolvable; nothing to classify")
    parent = tuple(s for s in trace.servers if s.in_parent)
    child = tuple(s for s in trace.servers if s.in_child)
    stealth = tuple(s for s in trace.servers if s.source is Source.CHILD_ONLY)
    lame = tuple(s for s in parent if s.is_authoritative is False)
    return ServerClasses(parent, child, stealth, lame)


# root hints -------------------------------------------------------------------


def parse_root_hints(text: str) -> list[tuple[str, str]]:
    hints = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"root hints line {lineno}: expected '<ns_name> <ip_address>'")
        hints.append((normalize_name(parts[0]), sort_addresses([parts[1]])[0]))
    if not hints:
        raise ValueError("root hints file lists no servers")
    return hints


def load_root_hints(path: str | Path | None = None) -> list[tuple[str, str]]:
    if path is None:
        text = resources.files("dnsaudit").joinpath("data").joinpath("root.hints").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_root_hints(text)


# tracing ----------------------------------------------------------------------


class _Step(NamedTuple):
    zone: str
    servers: tuple[tuple[str, tuple[str, ...]], ...]
    chain: tuple[tuple[str, str, tuple[str, str]], ...]


def _glue(obs: DnsObservation) -> dict[str, list[str]]:
    glue: dict[str, list[str]] = {}
    for rec in obs.additional():
        if rec.rtype in ("A", "AAAA"):
            glue.setdefault(rec.name, []).append(rec.rdata)
    return glue


def _is_authoritative_for(obs: DnsObservation, domain: str) -> bool:
    return (
        obs.responded
        and obs.authoritative_answer
        and obs.rcode == "NOERROR"
        and bool(obs.answer("SOA", domain))
    )


def _authority_note(obs: DnsObservation) -> str:
    if not obs.responded:
        return "no response"
    if obs.referral is not None:
        return f"non-authoritative referral to {obs.referral[0]}"
    if obs.rcode != "NOERROR":
        return f"answered {obs.rcode}"
    return "answered without AA for the domain"


def trace(
    domain: str,
    prober: Prober,
    roots: list[tuple[str, str]],
    max_depth: int = MAX_DEPTH,
    resolver: Resolver | None = None,
) -> DelegationTrace:
    """Walk every referral path from all roots to ``domain``'s servers.

    Zone cuts are processed breadth-first. A loop is a cycle in the graph of
    referrals between (zone, server address) pairs.
    """
    if not roots:
        raise ValueError("no root hints")
    domain = normalize_name(domain)
    resolver = resolver or Resolver(prober, [ip for _, ip in roots], max_depth)
    evidence: list[str] = []

    grouped: dict[str, list[str]] = {}
    for name, ip in roots:
        grouped.setdefault(name, []).append(ip)
    queue = deque([_Step(".", tuple((n, sort_addresses(a)) for n, a in sorted(grouped.items())), ())])

    explored: set[tuple[str, str]] = set()
    parent_names: list[str] = []
    parent_glue: dict[str, set[str]] = {}
    parent_zone: str | None = None
    parent_servers: list[tuple[str, ...]] = []
    domain_addrs: dict[str, tuple[str, ...]] = {}
    authority: dict[str, tuple[bool | None, str]] = {}
    cohosted: list[tuple[str, tuple[str, ...]]] = []
    edges: dict = {}
    labels: dict[tuple[str, str], tuple[str, str]] = {}
    depth = 0
    depth_hit = False

    def resolve_domain_server(ns_name: str) -> tuple[str, ...]:
        if ns_name not in domain_addrs:
            glue = sort_addresses(parent_glue.get(ns_name, ()))
            found = resolver.addresses(ns_name)
            if found and glue and set(found) != set(glue):
                evidence.append(f"glue for {ns_name} ({', '.join(glue)}) differs from "
                                f"authoritative data ({', '.join(found)}); using the latter")
            domain_addrs[ns_name] = found or glue
        return domain_addrs[ns_name]

    while queue:
        step = queue.popleft()
        if len(step.chain) >= max_depth:
            depth_hit = True
            continue
        came_from = step.chain[-1][2] if step.chain else None
        for ns_name, addrs in step.servers:
            if step.zone == domain:
                addrs = resolve_domain_server(ns_name)
            elif not addrs:
                addrs = resolver.addresses(ns_name)
            key = (step.zone, addrs[0] if addrs else ns_name)
            edges.setdefault(came_from, []).append(key)
            if key in explored:
                continue
            explored.add(key)
            labels[key] = (step.zone, ns_name)
            chain = step.chain + ((step.zone, ns_name, key),)
            if step.zone == domain and not depth:
                depth = len(chain)
            if not addrs:
                evidence.append(f"{ns_name} (listed for {step.zone}) has no address")
                if step.zone == domain:
                    authority[ns_name] = (None, "no address")
                continue
            obs = prober.ask(addrs, domain, RType.SOA)
            if step.zone == domain:
                authority[ns_name] = (_is_authoritative_for(obs, domain) if obs.responded else None,
                                      _authority_note(obs))
            if not obs.responded:
                continue
            if _is_authoritative_for(obs, domain):
                if step.zone != domain:
                    cohosted.append((ns_name, addrs))
                continue
            if obs.authoritative_answer and obs.rcode == "NXDOMAIN":
                evidence.append(f"{ns_name} ({step.zone}) reports {domain} does not exist")
                continue
            ref = obs.referral
            if ref is None:
                if step.zone != domain:
                    evidence.append(f"{ns_name} ({step.zone}) gave no referral towards {domain} ({_authority_note(obs)})")
                continue
            cut, ns_names = ref
            glue = _glue(obs)
            downward = cut != step.zone and is_subdomain(cut, step.zone) and is_subdomain(domain, cut)
            if downward and cut == domain:
                if parent_zone is None:
                    parent_zone = step.zone
                if addrs not in parent_servers:
                    parent_servers.append(addrs)
                for n in ns_names:
                    if n not in parent_names:
                        parent_names.append(n)
                    parent_glue.setdefault(n, set()).update(glue.get(n, ()))
            elif not downward:
                evidence.append(f"{ns_name} (asked as server for {step.zone}) referred to {cut}")
            queue.append(_Step(cut, tuple((n, sort_addresses(glue.get(n, ()))) for n in ns_names), chain))

    loop_path = _find_cycle(edges, labels)
    if depth_hit:
        evidence.append(f"delegation depth bound ({max_depth}) reached")

    if not parent_names and cohosted:
        evidence.append(f"{domain} is served by the same servers as its parent zone")
        for ns_name, addrs in cohosted:
            obs = prober.ask(addrs, domain, RType.NS)
            for rec in obs.answer("NS", domain):
                if rec.rdata not in parent_names:
                    parent_names.append(rec.rdata)
        for n in parent_names:
            if n not in authority:
                addrs = resolve_domain_server(n)
                obs = prober.ask(addrs, domain, RType.SOA) if addrs else None
                authority[n] = ((_is_authoritative_for(obs, domain) if obs.responded else None, _authority_note(obs))
                                if obs else (None, "no address"))

    child_names: list[str] = []
    for n in parent_names:
        if authority.get(n, (None, ""))[0]:
            obs = prober.ask(domain_addrs[n], domain, RType.NS)
            if obs.authoritative_answer:
                for rec in obs.answer("NS", domain):
                    if rec.rdata not in child_names:
                        child_names.append(rec.rdata)
    for n in child_names:
        if n not in authority:
            addrs = resolve_domain_server(n)
            if addrs:
                obs = prober.ask(addrs, domain, RType.SOA)
                authority[n] = (_is_authoritative_for(obs, domain) if obs.responded else None, _authority_note(obs))
            else:
                authority[n] = (None, "no address")

    servers = _merge_servers(parent_names, child_names, domain_addrs, authority)
    unresolvable = not any(s.is_authoritative for s in servers)
    if unresolvable and not evidence:
        evidence.append(f"no authoritative server found for {domain}")
    return DelegationTrace(
        domain=domain,
        parent_zone=parent_zone,
        servers=servers,
        glue={n: sort_addresses(a) for n, a in parent_glue.items() if a},
        loop_detected=bool(loop_path),
        loop_path=loop_path,
        unresolvable=unresolvable,
        depth=depth,
        parent_servers=tuple(parent_servers),
        evidence=tuple(evidence),
    )


def _find_cycle(edges: dict, labels: dict) -> tuple[tuple[str, str], ...]:
    """First referral cycle met by a depth-first walk from the roots.

    Every reachable (zone, server) pair is explored exactly once, but its
    outgoing referrals are all recorded, so a cycle closed through an
    already-explored pair is still found here.
    """
    state: dict = {}
    stack: list = []

    def visit(node) -> tuple | None:
        state[node] = 1
        stack.append(node)
        for nxt in edges.get(node, ()):
            if state.get(nxt) == 1:
                cycle = stack[stack.index(nxt):] + [nxt]
                return tuple(labels[k] for k in cycle)
            if nxt not in state:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        state[node] = 2
        return None

    for start in edges.get(None, ()):
        if start not in state:
            found = visit(start)
            if found:
                return found
    return ()


def _merge_servers(parent_names, child_names, addrs, authority) -> tuple[ServerRef, ...]:
    names = sorted(set(parent_names) | set(child_names))
    groups: list[list[str]] = []
    for name in names:
        mine = set(addrs.get(name, ()))
        hits = [g for g in groups if mine and mine & {a for n in g for a in addrs.get(n, ())}]
        merged = [name]
        for g in hits:
            merged.extend(g)
            groups.remove(g)
        groups.append(sorted(merged))
    refs = []
    for group in groups:
        in_parent = any(n in parent_names for n in group)
        in_child = any(n in child_names for n in group)
        source = Source.BOTH if in_parent and in_child else (Source.PARENT_ONLY if in_parent else Source.CHILD_ONLY)
        verdicts = [authority.get(n, (None, "not probed")) for n in group]
        if any(v[0] for v in verdicts):
            auth = True
        elif any(v[0] is False for v in verdicts):
            auth = False
        else:
            auth = None
        note = "; ".join(f"{n}: {v[1]}" for n, v in zip(group, verdicts) if v[0] is not True)
        endpoint = ServerEndpoint(group[0], tuple(a for n in group for a in addrs.get(n, ())))
        refs.append(ServerRef(group[0], endpoint, source, auth, tuple(group[1:]), note))
    refs.sort(key=lambda r: (r.ns_name,))
    return tuple(refs)
