"""Programmatic construction of fixture universes.

:class:`UniverseBuilder` writes ``.zl`` text for a ``.test`` hierarchy with
healthy defaults (two servers in separate networks, PTRs, IPv6 services,
a signed zone with DS), so that a scenario only states its defect. The
bundled ``scenarios.zl``, ``loops.zl`` and ``batch20.zl`` are produced by the
functions below; ``python -m dnsaudit.sim.synth DIR`` rewrites them.
"""

from __future__ import annotations

import ipaddress
import random
import sys
from dataclasses import dataclass
from pathlib import Path

from dnsaudit.sim.universe import FixtureUniverse, parse_universe

ROOT = ("a.root.test", "198.51.100.1")
DS_DIGEST = "9f86d081884c7d659a2feaa0c55ad015a3bf4f1b2b0b822cd15d6c15b0f00a08"


@dataclass
class Host:
    name: str
    ips: tuple[str, ...]
    udp: bool = True
    tcp: bool = True
    rd: str = "off"
    alias: bool = False
    ptr: str = "consistent"  # consistent | none | dangling | mismatch

    def line(self) -> str:
        parts = [f"server {self.name} ip={','.join(self.ips)}"]
        if not self.udp:
            parts.append("udp=off")
        if not self.tcp:
            parts.append("tcp=off")
        if self.rd != "off":
            parts.append(f"rd={self.rd}")
        if self.alias:
            parts.append("alias=on")
        return " ".join(parts)


def _reverse(address: str) -> tuple[str, str]:
    ip = ipaddress.ip_address(address)
    return ("in-addr.arpa" if ip.version == 4 else "ip6.arpa"), ip.reverse_pointer


class UniverseBuilder:
    def __init__(self, title: str, tlds: tuple[str, ...] = ("test",)):
        self.title = title
        self.tlds = tlds
        self.hosts: dict[str, Host] = {}
        self.body: list[str] = []
        self._services = 0
        self.host(ROOT[0], [ROOT[1]])
        for i, tld in enumerate(tlds):
            self.host(f"a.nic.{tld}", [f"198.51.100.{53 + i}"])

    def host(self, name: str, ips, **flags) -> Host:
        if name in self.hosts:
            raise ValueError(f"host {name} declared twice")
        h = Host(name, tuple(ips), **flags)
        self.hosts[name] = h
        return h

    def line(self, text: str) -> None:
        self.body.append(text)

    def comment(self, text: str) -> None:
        self.body += ["", f"# {text}"]

    def _service_addrs(self) -> tuple[str, str]:
        self._services += 1
        n = self._services
        return f"100.64.{n // 250}.{n % 250 + 1}", f"2001:db8:ffff:{n:x}::1"

    def domain(self, name: str, hosts: list[str], *, parent: str | None = None, parent_ns: list[str] | None = None,
               child_ns: list[str] | None = None, serial: int = 2014102901, serials: dict[str, int] | None = None,
               axfr: tuple[str, ...] = (), signed: bool = True, ds: bool = True, apex_a: bool = True,
               mx: bool = True, www: bool = True, v6_services: bool = True) -> None:
        parent = parent or name.split(".", 1)[1]
        serials = serials or {}
        for h in hosts:
            opts = [f"serial={serials.get(h, serial)}"]
            if h in axfr:
                opts.append("axfr=open")
            opts.append(f"signed={'yes' if signed else 'no'}")
            self.line(f"zone {name} on {h} {' '.join(opts)}")
        self.line(f"delegate {name} from {parent} ns={','.join(parent_ns or hosts)}")
        if child_ns is not None and child_ns != hosts:
            for n in child_ns:
                self.line(f"rr {name} @ NS {n}")
        if signed and ds:
            self.line(f"rr {parent} {name} DS 4242 13 2 {DS_DIGEST}")
        v4, v6 = self._service_addrs()
        if apex_a:
            self.line(f"rr {name} @ A {v4}")
        if mx:
            self.line(f"rr {name} @ MX 10 mail.{name}")
            self.line(f"rr {name} mail.{name} A {v4}")
            if v6_services:
                self.line(f"rr {name} mail.{name} AAAA {v6}")
        if www:
            self.line(f"rr {name} www.{name} A {v4}")
            if v6_services:
                self.line(f"rr {name} www.{name} AAAA {v6}")

    def loop(self, zone: str, host: str, refer: str) -> None:
        self.line(f"loop {zone} on {host} refer={refer}")

    def render(self) -> str:
        out = [f"# {self.title}", "# Generated by dnsaudit.sim.synth; edit the generator, not this file.", ""]
        out.append(f"root {ROOT[0]} {ROOT[1]}")
        out.append(f"canary www.canary.{self.tlds[0]}")
        out.append("")
        out += [h.line() for h in self.hosts.values()]
        out.append("")
        out.append(f"zone . on {ROOT[0]} serial=2014102900 signed=yes")
        out.append(f"zone in-addr.arpa on {ROOT[0]} serial=1")
        out.append(f"zone ip6.arpa on {ROOT[0]} serial=1")
        for tld in self.tlds:
            out.append(f"zone {tld} on a.nic.{tld} serial=2014102900 signed=yes")
            out.append(f"delegate {tld} from . ns=a.nic.{tld}")
        out.append(f"rr {self.tlds[0]} www.canary.{self.tlds[0]} A 198.51.100.99")
        out += self.body
        ptrs = []
        infra = {ROOT[0]} | {f"a.nic.{t}" for t in self.tlds}
        for h in self.hosts.values():
            if h.name in infra or h.ptr == "none":
                continue
            for a in h.ips:
                zone, owner = _reverse(a)
                target = {"consistent": h.name, "dangling": f"gone.{h.name}",
                          "mismatch": ROOT[0]}[h.ptr]
                ptrs.append(f"rr {zone} {owner} PTR {target}")
        if ptrs:
            out += ["", "# reverse mappings"] + sorted(set(ptrs))
        return "\n".join(out) + "\n"

    def build(self) -> FixtureUniverse:
        return parse_universe(self.render())


# bundled scenarios ---------------------------------------------------------------

# domain -> the single test it is built to fail (0: none)
ISOLATION = {f"t{i:02d}.test.": i for i in range(1, 14)}


def _pair(b: UniverseBuilder, k: int, domain: str, **flags_b) -> list[str]:
    a = b.host(f"ns1.{domain}", [f"10.{k}.1.53", f"2001:db8:{k:x}::53"]).name
    c = b.host(f"ns2.{domain}", [f"10.{k}.2.53"], **flags_b).name
    return [a, c]


def scenarios() -> UniverseBuilder:
    b = UniverseBuilder("One domain per misconfiguration; tNN.test fails exactly test NN.")

    b.comment("healthy.test: every check passes")
    b.domain("healthy.test", _pair(b, 100, "healthy.test"))

    b.comment("t01: ns2 does not answer over UDP")
    b.domain("t01.test", _pair(b, 1, "t01.test", udp=False))

    b.comment("t02: ns2 answers over UDP only")
    b.domain("t02.test", _pair(b, 2, "t02.test", tcp=False))

    b.comment("t03: a single authoritative server")
    b.host("ns1.t03.test", ["10.3.1.53", "2001:db8:3::53"])
    b.domain("t03.test", ["ns1.t03.test"])

    b.comment("t04: the parent lists ns3, which does not serve the zone")
    hosts = _pair(b, 4, "t04.test")
    b.host("ns3.t04.test", ["10.4.3.53"])
    b.domain("t04.test", hosts, parent_ns=hosts + ["ns3.t04.test"], child_ns=hosts)

    b.comment("t05: ns3 serves the zone and is in its NS set, but the parent omits it")
    hosts = _pair(b, 5, "t05.test")
    b.host("ns3.t05.test", ["10.5.3.53"])
    b.domain("t05.test", hosts + ["ns3.t05.test"], parent_ns=hosts)

    b.comment("t06: ns3 refers queries for the zone back up to test.")
    hosts = _pair(b, 6, "t06.test")
    b.host("ns3.t06.test", ["10.6.3.53"])
    b.domain("t06.test", hosts, parent_ns=hosts + ["ns3.t06.test"], child_ns=hosts)
    b.loop("t06.test", "ns3.t06.test", "test")

    b.comment("t07: ns2 hands out the zone by AXFR")
    hosts = _pair(b, 7, "t07.test")
    b.domain("t07.test", hosts, axfr=("ns2.t07.test",))

    b.comment("t08: ns2 recurses for anyone")
    b.domain("t08.test", _pair(b, 8, "t08.test", rd="on"))

    b.comment("t09: ns2 lags behind with an older serial")
    hosts = _pair(b, 9, "t09.test")
    b.domain("t09.test", hosts, serials={"ns2.t09.test": 2014102801})

    b.comment("t10: both servers sit in 10.10.1.0/24 and 2001:db8:a::/48")
    b.host("ns1.t10.test", ["10.10.1.53", "2001:db8:a::53"])
    b.host("ns2.t10.test", ["10.10.1.54", "2001:db8:a::54"])
    b.domain("t10.test", ["ns1.t10.test", "ns2.t10.test"])

    b.comment("t11: ns2's address has no PTR")
    b.domain("t11.test", _pair(b, 11, "t11.test", ptr="none"))

    b.comment("t12: no name server has an IPv6 address")
    b.host("ns1.t12.test", ["10.12.1.53"])
    b.host("ns2.t12.test", ["10.12.2.53"])
    b.domain("t12.test", ["ns1.t12.test", "ns2.t12.test"])

    b.comment("t13: unsigned zone")
    b.domain("t13.test", _pair(b, 13, "t13.test"), signed=False)

    b.comment("island.test: signed but the parent has no DS (passes, noted as an island)")
    b.domain("island.test", _pair(b, 101, "island.test"), ds=False)

    b.comment("nomx.test: no MX, so the IPv6 check skips the mail category")
    b.domain("nomx.test", _pair(b, 102, "nomx.test"), mx=False)

    b.comment("pair.test: two NS names for one address count as one server")
    b.host("ns1.pair.test", ["10.103.1.53", "2001:db8:67::53"], alias=True)
    b.host("ns2.pair.test", ["10.103.1.53", "2001:db8:67::53"], alias=True, ptr="none")
    b.domain("pair.test", ["ns1.pair.test", "ns2.pair.test"])

    b.comment("worst.test: lame parent entry, open AXFR and open recursion together")
    hosts = _pair(b, 104, "worst.test", rd="on")
    b.host("ns3.worst.test", ["10.104.3.53"])
    b.domain("worst.test", hosts, parent_ns=hosts + ["ns3.worst.test"], child_ns=hosts, axfr=("ns1.worst.test",))

    b.comment("advertise.test: RA=1 on every reply, but nothing is ever resolved (not recursion)")
    b.domain("advertise.test", _pair(b, 105, "advertise.test", rd="advertise"))

    b.comment("bigns.test: seven signed NS records overflow a 512-byte UDP reply")
    big = [b.host(f"nameserver-{i}.bigns.test", [f"10.106.{i}.53", f"2001:db8:6a:{i}::53"]).name
           for i in range(1, 8)]
    b.domain("bigns.test", big)

    b.comment("lame.test: delegated to a server that does not serve it (unresolvable)")
    b.host("ns1.lame.test", ["10.107.1.53"])
    b.line("delegate lame.test from test ns=ns1.lame.test")

    b.comment("missing.test is not delegated at all (unresolvable, NXDOMAIN)")
    return b


# referral loops ------------------------------------------------------------------

CYCLIC = ("up.test.", "self.test.", "side-a.test.", "cross.test.", "toroot.test.")
ACYCLIC = ("plain.test.", "deep.sub.chain.test.", "alias.test.", "dead-end.test.", "cohosted.test.")


def _referring(b: UniverseBuilder, k: int, domain: str, refer: str) -> None:
    """Two healthy servers plus a parent-listed ns3 that refers to ``refer``."""
    hosts = _pair(b, k, domain)
    b.host(f"ns3.{domain}", [f"10.{k}.3.53"])
    b.domain(domain, hosts, parent_ns=hosts + [f"ns3.{domain}"], child_ns=hosts)
    b.loop(domain, f"ns3.{domain}", refer)


def loops() -> UniverseBuilder:
    b = UniverseBuilder("Referral loop variants: five cyclic and five acyclic delegations.", tlds=("test", "alt"))

    b.comment("up.test: one of three servers refers back to test.")
    _referring(b, 1, "up.test", "test")

    b.comment("self.test: the only delegated server refers to the zone itself")
    b.host("ns1.self.test", ["10.2.1.53"])
    b.host("hidden.self.test", ["10.2.2.53"])
    b.domain("self.test", ["hidden.self.test"], parent_ns=["ns1.self.test"], child_ns=["ns1.self.test"])
    b.loop("self.test", "ns1.self.test", "self.test")

    b.comment("side-a.test and side-b.test refer to each other")
    b.host("ns1.side-a.test", ["10.3.1.53"])
    b.host("ns1.side-b.test", ["10.3.2.53"])
    b.host("hidden.side-a.test", ["10.3.3.53"])
    b.domain("side-a.test", ["hidden.side-a.test"], parent_ns=["ns1.side-a.test"], child_ns=["ns1.side-a.test"])
    b.domain("side-b.test", ["ns1.side-b.test"])
    b.loop("side-a.test", "ns1.side-a.test", "side-b.test")
    b.loop("side-a.test", "ns1.side-b.test", "side-a.test")

    b.comment("cross.test: ns3 refers to alt., whose server refers back to test.")
    _referring(b, 4, "cross.test", "alt")
    b.loop("cross.test", "a.nic.alt", "test")

    b.comment("toroot.test: ns3 refers to the root")
    _referring(b, 5, "toroot.test", ".")

    b.comment("plain.test: ordinary delegation")
    b.domain("plain.test", _pair(b, 6, "plain.test"))

    b.comment("deep.sub.chain.test: three nested zone cuts")
    b.domain("chain.test", _pair(b, 7, "chain.test"))
    b.host("ns1.sub.chain.test", ["10.7.3.53"])
    b.domain("sub.chain.test", ["ns1.sub.chain.test", "ns1.chain.test"])
    b.domain("deep.sub.chain.test", ["ns1.sub.chain.test", "ns2.chain.test"])

    b.comment("alias.test: two NS names share one address")
    b.host("ns1.alias.test", ["10.8.1.53"], alias=True)
    b.host("ns2.alias.test", ["10.8.1.53"], alias=True)
    b.domain("alias.test", ["ns1.alias.test", "ns2.alias.test"])

    b.comment("dead-end.test: ns3 refers sideways to alt., which refuses")
    _referring(b, 9, "dead-end.test", "alt")

    b.comment("cohosted.test: served by the TLD server itself")
    b.line("zone cohosted.test on a.nic.test serial=1 signed=yes")
    b.line("delegate cohosted.test from test ns=a.nic.test")
    return b


# random universes ----------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    domains: int = 200
    servers: int = 30  # including the root and TLD servers
    unresolvable: int = 0
    seed: int = 2014


def synthetic(spec: SyntheticSpec) -> tuple[UniverseBuilder, list[str]]:
    """A random but reproducible hosting landscape.

    Server-level defects (open AXFR, open recursion, UDP or TCP off, missing
    PTR) are concentrated on a few servers, domain-level defects (lame or
    stealth entries, stale serials, unsigned zones) are sprinkled per domain.
    Returns the builder and the domain names in creation order.
    """
    rng = random.Random(spec.seed)
    b = UniverseBuilder(f"Synthetic universe: {spec.domains} domains over {spec.servers} servers, seed {spec.seed}.")
    pool = []
    n_hosts = spec.servers - 2
    if n_hosts < 3:
        raise ValueError("need at least 5 servers")
    for i in range(1, n_hosts + 1):
        net = rng.randrange(1, max(2, n_hosts // 3) + 1)
        ips = [f"172.16.{net}.{i}"]
        if rng.random() < 0.6:
            ips.append(f"2001:db8:{net:x}::{i:x}")
        flags = {}
        r = rng.random()
        if r < 0.05:
            flags["udp"] = False
        elif r < 0.10:
            flags["tcp"] = False
        elif r < 0.20:
            flags["rd"] = "on"
        if rng.random() < 0.12:
            flags["ptr"] = rng.choice(("none", "dangling", "mismatch"))
        pool.append(b.host(f"ns{i:02d}.test", ips, **flags).name)
    axfr_open = set(rng.sample(pool, max(1, n_hosts // 6)))

    names = []
    for d in range(1, spec.domains + 1):
        name = f"d{d:03d}.test"
        names.append(name + ".")
        if d <= spec.unresolvable:
            b.comment(f"{name}: unresolvable, delegated to a server that does not serve it")
            b.line(f"delegate {name} from test ns={rng.choice(pool)}")
            continue
        k = 1 if rng.random() < 0.06 else rng.choice((2, 2, 2, 3))
        hosts = rng.sample(pool, k)
        kwargs: dict = {}
        parent_ns, child_ns, lame = list(hosts), None, None
        if rng.random() < 0.10:
            lame = rng.choice([p for p in pool if p not in hosts])
            parent_ns.append(lame)
            child_ns = list(hosts)
        if len(hosts) > 1 and rng.random() < 0.08:
            parent_ns.remove(hosts[-1])
            child_ns = list(hosts)
        if len(hosts) > 1 and rng.random() < 0.07:
            kwargs["serials"] = {hosts[-1]: 2014102801}
        kwargs["axfr"] = tuple(h for h in hosts if h in axfr_open)
        kwargs["signed"] = rng.random() < 0.3
        kwargs["v6_services"] = rng.random() < 0.6
        kwargs["mx"] = rng.random() < 0.8
        b.domain(name, hosts, parent_ns=parent_ns, child_ns=child_ns, **kwargs)
        if lame and rng.random() < 0.25:
            b.loop(name, lame, "test")
    return b, names


BATCH20 = SyntheticSpec(domains=20, servers=12, unresolvable=2, seed=20)


def bundled() -> dict[str, str]:
    """Every generated bundled fixture file, by file name."""
    batch, names = synthetic(BATCH20)
    return {
        "scenarios.zl": scenarios().render(),
        "loops.zl": loops().render(),
        "batch20.zl": batch.render(),
        "batch20.txt": "# 20 domains of batch20.zl; the first two are unresolvable\n"
                       + "".join(f"{n}\n" for n in names),
    }


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m dnsaudit.sim.synth OUTPUT_DIR", file=sys.stderr)
        return 64
    out = Path(argv[0])
    out.mkdir(parents=True, exist_ok=True)
    for name, text in bundled().items():
        (out / name).write_text(text, encoding="utf-8")
        print(out / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
