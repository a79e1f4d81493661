"""In-process DNS hierarchy loaded from ``.zl`` fixture files.

Grammar (one directive per line, ``#`` starts a comment)::

    root <ns_name> <ip>
    canary <name>
    server <ns_name> ip=<addr>[,<addr>...] [udp=on|off] [tcp=on|off]
           [rd=on|off|advertise] [alias=on|off]
    zone <name> on <ns_name> serial=<n> [axfr=open|closed] [signed=yes|no]
    rr <zone> <owner> <type> <rdata...>
    delegate <child> from <parent> ns=<name>[,<name>...] [glue=<name>:<ip>[,...]]
    loop <zone> on <ns_name> refer=<zone>

Names may omit the trailing dot; ``@`` as an rr owner means the zone apex.
``rd=advertise`` sets RA=1 without ever resolving. ``alias=on`` permits the
server to share addresses with another aliased server.

Data synthesized at load time:

* the SOA of each zone copy (serial from its ``zone`` line);
* the apex NS RRset, from the hosting servers, when no ``rr ... NS`` is given;
* A/AAAA records for declared server names inside a hosted zone;
* glue for delegations whose NS names are declared servers below the cut;
* DNSKEY at the apex and RRSIG over every authoritative RRset of a
  ``signed=yes`` copy (placeholder key and signature bytes).
"""

from __future__ import annotations

import base64
import ipaddress
from dataclasses import dataclass, field
from pathlib import Path

import dns.exception
import dns.flags
import dns.message
import dns.name
import dns.opcode
import dns.rcode
import dns.rdata
import dns.rdataclass
import dns.rdatatype
import dns.rrset

from dnsaudit.wire import UDP_PAYLOAD_LIMIT, InvalidName, is_subdomain, normalize_name, sort_addresses

TTL = 3600
AXFR_CHUNK = 16
_KEY = base64.b64encode(bytes(64)).decode()
_SIG = base64.b64encode(bytes(32)).decode()
_IN = dns.rdataclass.IN


class FixtureError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


@dataclass
class ZoneCopy:
    serial: int
    axfr_open: bool = False
    signed: bool = False


@dataclass
class FixtureServer:
    name: str
    addresses: tuple[str, ...]
    udp_enabled: bool = True
    tcp_enabled: bool = True
    recursion: str = "off"
    alias: bool = False
    zones: dict[str, ZoneCopy] = field(default_factory=dict)
    referral_overrides: dict[str, str] = field(default_factory=dict)

    @property
    def recursion_offered(self) -> bool:
        return self.recursion == "on"

    @property
    def axfr_allowed(self) -> set[str]:
        return {z for z, c in self.zones.items() if c.axfr_open}

    def deepest_zone(self, qname: str) -> str | None:
        best = None
        for z in self.zones:
            if is_subdomain(qname, z) and (best is None or _depth(z) > _depth(best)):
                best = z
        return best

    def deepest_override(self, qname: str) -> str | None:
        best = None
        for z in self.referral_overrides:
            if is_subdomain(qname, z) and (best is None or _depth(z) > _depth(best)):
                best = z
        return best


@dataclass
class Delegation:
    child: str
    ns: list[str]
    glue: dict[str, list[str]]


@dataclass
class Zone:
    name: str
    hosts: list[str] = field(default_factory=list)
    records: dict[str, dict[str, list]] = field(default_factory=dict)
    delegations: dict[str, Delegation] = field(default_factory=dict)
    names: set[str] = field(default_factory=set)

    def add(self, owner: str, rtype: str, rdata) -> None:
        bucket = self.records.setdefault(owner, {}).setdefault(rtype, [])
        if rdata not in bucket:
            bucket.append(rdata)

    def cut_for(self, qname: str) -> str | None:
        best = None
        for child in self.delegations:
            if is_subdomain(qname, child) and (best is None or _depth(child) > _depth(best)):
                best = child
        return best

    def exists(self, qname: str) -> bool:
        return qname in self.names


def _depth(name: str) -> int:
    return 0 if name == "." else name.count(".")


def _rdata(rtype: str, text: str):
    return dns.rdata.from_text(_IN, rtype, text, origin=dns.name.root, relativize=False)


def _labels(owner: str) -> int:
    return 0 if owner == "." else owner.rstrip(".").count(".") + 1


@dataclass
class FixtureUniverse:
    servers: dict[str, FixtureServer]
    zones: dict[str, Zone]
    roots: list[tuple[str, str]]
    canary_name: str | None = None
    by_address: dict[str, FixtureServer] = field(default_factory=dict)

    @property
    def root_addresses(self) -> list[str]:
        return [ip for _, ip in self.roots]

    # zone contents --------------------------------------------------------

    def apex_ns(self, zone: str) -> list[str]:
        z = self.zones[zone]
        explicit = z.records.get(zone, {}).get("NS")
        if explicit:
            return [r.target.to_text().lower() for r in explicit]
        return list(z.hosts)

    def rrsets_at(self, zone: str, owner: str, copy: ZoneCopy) -> dict[str, list]:
        z = self.zones[zone]
        data = {t: list(v) for t, v in z.records.get(owner, {}).items()}
        if owner == zone:
            ns = self.apex_ns(zone)
            data["SOA"] = [_rdata("SOA", f"{ns[0] if ns else zone} hostmaster.{'' if zone == '.' else zone} "
                                         f"{copy.serial} 3600 600 86400 300")]
            data.setdefault("NS", [_rdata("NS", n) for n in ns])
            if copy.signed:
                data["DNSKEY"] = [_rdata("DNSKEY", f"257 3 13 {_KEY}")]
        return data

    def glue_for(self, zone: str, cut: str) -> dict[str, list[str]]:
        d = self.zones[zone].delegations[cut]
        glue = {k: list(v) for k, v in d.glue.items()}
        for ns in d.ns:
            if ns not in glue and is_subdomain(ns, cut) and ns in self.servers:
                glue[ns] = list(self.servers[ns].addresses)
        return glue

    def zone_of(self, name: str) -> str | None:
        best = None
        for z in self.zones:
            if self.zones[z].hosts and is_subdomain(name, z) and (best is None or _depth(z) > _depth(best)):
                best = z
        return best

    # answering ------------------------------------------------------------

    def handle(self, address: str, payload: bytes, tcp: bool) -> list[bytes] | None:
        """Serve one encoded query the way the server at ``address`` would."""
        server = self.by_address.get(address)
        if server is None:
            return None
        if (tcp and not server.tcp_enabled) or (not tcp and not server.udp_enabled):
            return None
        try:
            query = dns.message.from_wire(payload)
        except (dns.exception.DNSException, ValueError):
            return None
        messages = self.respond(server, query, tcp)
        # dnspython shuffles rdatas by default; fixtures answer in declared order
        wires = [m.to_wire(want_shuffle=False) for m in messages]
        if not tcp and len(wires[0]) > UDP_PAYLOAD_LIMIT:
            first = messages[0]
            first.answer, first.authority, first.additional = [], [], []
            first.flags |= dns.flags.TC
            wires = [first.to_wire(want_shuffle=False)]
        return wires

    def respond(self, server: FixtureServer, query: dns.message.Message, tcp: bool) -> list[dns.message.Message]:
        resp = dns.message.make_response(query)
        resp.flags &= ~(dns.flags.AA | dns.flags.RA)
        if server.recursion in ("on", "advertise"):
            resp.flags |= dns.flags.RA
        if query.opcode() != dns.opcode.QUERY or len(query.question) != 1:
            resp.set_rcode(dns.rcode.FORMERR)
            return [resp]
        q = query.question[0]
        qname = q.name.to_text().lower()
        qtype = dns.rdatatype.to_text(q.rdtype)
        if qtype == "AXFR":
            return self._axfr(server, qname, query, tcp)
        hosted = server.deepest_zone(qname)
        override = server.deepest_override(qname)
        if override is not None and (hosted is None or _depth(override) > _depth(hosted)):
            self._referral(resp, server.referral_overrides[override], self.apex_ns(server.referral_overrides[override]))
            return [resp]
        if query.flags & dns.flags.RD and server.recursion == "on" and hosted is None:
            self._recurse(resp, qname, qtype)
            return [resp]
        if hosted is None:
            resp.set_rcode(dns.rcode.REFUSED)
            return [resp]
        self._authoritative(resp, server, hosted, qname, qtype)
        return [resp]

    def _referral(self, resp, cut: str, ns_names: list[str], glue: dict[str, list[str]] | None = None) -> None:
        resp.authority.append(dns.rrset.from_rdata_list(cut, TTL, [_rdata("NS", n) for n in ns_names]))
        if glue is None:
            glue = {n: list(self.servers[n].addresses) for n in ns_names if n in self.servers}
        for name in ns_names:
            self._add_addresses(resp.additional, name, glue.get(name, []))

    @staticmethod
    def _add_addresses(section, name: str, addresses) -> None:
        for rtype, version in (("A", 4), ("AAAA", 6)):
            rds = [_rdata(rtype, a) for a in addresses if ipaddress.ip_address(a).version == version]
            if rds:
                section.append(dns.rrset.from_rdata_list(name, TTL, rds))

    def _authoritative(self, resp, server: FixtureServer, zone: str, qname: str, qtype: str) -> None:
        z = self.zones[zone]
        copy = server.zones[zone]
        cut = z.cut_for(qname)
        if cut is not None and not (qtype == "DS" and qname == cut):
            self._referral(resp, cut, z.delegations[cut].ns, self.glue_for(zone, cut))
            return
        resp.flags |= dns.flags.AA
        data = self.rrsets_at(zone, qname, copy)
        if qtype == "RRSIG":
            if copy.signed and data:
                for t in sorted(data):
                    resp.answer.append(dns.rrset.from_rdata(qname, TTL, self._rrsig(t, qname, zone)))
            else:
                self._negative(resp, zone, copy, qname)
            return
        if qtype in data:
            self._answer(resp, zone, copy, qname, qtype, data[qtype])
            if qtype in ("NS", "MX"):
                for rd in data[qtype]:
                    target = (rd.target if qtype == "NS" else rd.exchange).to_text().lower()
                    if is_subdomain(target, zone) and z.cut_for(target) is None:
                        t_data = self.rrsets_at(zone, target, copy)
                        for rtype in ("A", "AAAA"):
                            if rtype in t_data:
                                resp.additional.append(dns.rrset.from_rdata_list(target, TTL, t_data[rtype]))
            return
        if "CNAME" in data:
            self._answer(resp, zone, copy, qname, "CNAME", data["CNAME"])
            target = data["CNAME"][0].target.to_text().lower()
            if is_subdomain(target, zone) and z.cut_for(target) is None:
                t_data = self.rrsets_at(zone, target, copy)
                if qtype in t_data:
                    self._answer(resp, zone, copy, target, qtype, t_data[qtype])
            return
        self._negative(resp, zone, copy, qname)

    def _answer(self, resp, zone, copy, owner, rtype, rdatas) -> None:
        resp.answer.append(dns.rrset.from_rdata_list(owner, TTL, rdatas))
        if copy.signed:
            resp.answer.append(dns.rrset.from_rdata_list(owner, TTL, [self._rrsig(rtype, owner, zone)]))

    def _negative(self, resp, zone, copy, qname) -> None:
        if not self.zones[zone].exists(qname):
            resp.set_rcode(dns.rcode.NXDOMAIN)
        soa = self.rrsets_at(zone, zone, copy)["SOA"]
        resp.authority.append(dns.rrset.from_rdata_list(zone, TTL, soa))

    @staticmethod
    def _rrsig(covered: str, owner: str, zone: str):
        return _rdata("RRSIG", f"{covered} 13 {_labels(owner)} {TTL} 20300101000000 20200101000000 4242 {zone} {_SIG}")

    def _recurse(self, resp, qname: str, qtype: str) -> None:
        name = qname
        for _ in range(9):
            zone = self.zone_of(name)
            if zone is None:
                return
            z = self.zones[zone]
            if z.cut_for(name) is not None:
                return
            copy = self.servers[z.hosts[0]].zones[zone]
            data = self.rrsets_at(zone, name, copy)
            if qtype in data:
                resp.answer.append(dns.rrset.from_rdata_list(name, TTL, data[qtype]))
                return
            if "CNAME" not in data:
                if not z.exists(name):
                    resp.set_rcode(dns.rcode.NXDOMAIN)
                return
            resp.answer.append(dns.rrset.from_rdata_list(name, TTL, data["CNAME"]))
            name = data["CNAME"][0].target.to_text().lower()

    def zone_contents(self, zone: str, copy: ZoneCopy) -> list[tuple[str, str, object]]:
        """Every record of one zone copy as (owner, type, rdata), SOA first."""
        z = self.zones[zone]
        out = []
        owners = set(z.records) | {zone} | {n for n in z.names if self.zone_of(n) == zone}
        for owner in sorted(owners, key=lambda n: tuple(reversed(n.split(".")))):
            if z.cut_for(owner) is not None:
                continue
            data = self.rrsets_at(zone, owner, copy)
            for rtype in sorted(data):
                if rtype == "SOA":
                    continue
                out.extend((owner, rtype, rd) for rd in data[rtype])
                if copy.signed:
                    out.append((owner, "RRSIG", self._rrsig(rtype, owner, zone)))
        for cut in sorted(z.delegations):
            out.extend((cut, "NS", _rdata("NS", n)) for n in z.delegations[cut].ns)
            for owner, addrs in sorted(self.glue_for(zone, cut).items()):
                for a in addrs:
                    out.append((owner, "AAAA" if ":" in a else "A", _rdata("AAAA" if ":" in a else "A", a)))
            # DS records live in the parent at the cut
            for rd in z.records.get(cut, {}).get("DS", []):
                out.append((cut, "DS", rd))
        soa = self.rrsets_at(zone, zone, copy)["SOA"][0]
        return [(zone, "SOA", soa)] + out

    def _axfr(self, server: FixtureServer, qname: str, query, tcp: bool) -> list[dns.message.Message]:
        copy = server.zones.get(qname)
        if not tcp or copy is None or not copy.axfr_open:
            resp = dns.message.make_response(query)
            resp.set_rcode(dns.rcode.REFUSED)
            return [resp]
        records = self.zone_contents(qname, copy)
        records.append(records[0])
        messages = []
        for i in range(0, len(records), AXFR_CHUNK):
            resp = dns.message.make_response(query)
            resp.flags |= dns.flags.AA
            for owner, _rtype, rd in records[i:i + AXFR_CHUNK]:
                resp.answer.append(dns.rrset.from_rdata(owner, TTL, rd))
            messages.append(resp)
        return messages


# loading ---------------------------------------------------------------------


def _options(tokens: list[str], allowed: dict[str, tuple[str, ...] | None], lineno: int) -> dict[str, str]:
    out: dict[str, str] = {}
    for tok in tokens:
        if "=" not in tok:
            raise FixtureError(f"expected key=value, got {tok!r}", lineno)
        key, value = tok.split("=", 1)
        if key not in allowed:
            raise FixtureError(f"unknown option {key!r}", lineno)
        choices = allowed[key]
        if choices is not None and value not in choices:
            raise FixtureError(f"{key} must be one of {', '.join(choices)}", lineno)
        if key in out and key != "glue":
            raise FixtureError(f"duplicate option {key!r}", lineno)
        out[key] = f"{out[key]},{value}" if key in out else value
    return out


def _name(text: str, lineno: int) -> str:
    try:
        return normalize_name(text)
    except InvalidName as exc:
        raise FixtureError(str(exc), lineno) from None


def _ip(text: str, lineno: int) -> str:
    try:
        return str(ipaddress.ip_address(text))
    except ValueError:
        raise FixtureError(f"invalid IP address {text!r}", lineno) from None


def parse_universe(text: str) -> FixtureUniverse:
    servers: dict[str, FixtureServer] = {}
    zones: dict[str, Zone] = {}
    roots: list[tuple[str, str, int]] = []
    canary = None
    pending_zone_lines: list[tuple[int, list[str]]] = []
    pending: list[tuple[int, str, list[str]]] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        directive, *args = line.split()
        if directive == "root":
            if len(args) != 2:
                raise FixtureError("usage: root <ns_name> <ip>", lineno)
            roots.append((_name(args[0], lineno), _ip(args[1], lineno), lineno))
        elif directive == "canary":
            if len(args) != 1:
                raise FixtureError("usage: canary <name>", lineno)
            canary = _name(args[0], lineno)
        elif directive == "server":
            if not args:
                raise FixtureError("usage: server <ns_name> ip=<addr>,...", lineno)
            name = _name(args[0], lineno)
            if name in servers:
                raise FixtureError(f"server {name} declared twice", lineno)
            opts = _options(args[1:], {"ip": None, "udp": ("on", "off"), "tcp": ("on", "off"),
                                       "rd": ("on", "off", "advertise"), "alias": ("on", "off")}, lineno)
            if "ip" not in opts:
                raise FixtureError(f"server {name} has no ip=", lineno)
            addrs = [_ip(a, lineno) for a in opts["ip"].split(",") if a]
            if len(set(addrs)) != len(addrs):
                raise FixtureError(f"server {name} lists an address twice", lineno)
            servers[name] = FixtureServer(
                name=name,
                addresses=sort_addresses(addrs),
                udp_enabled=opts.get("udp", "on") == "on",
                tcp_enabled=opts.get("tcp", "on") == "on",
                recursion=opts.get("rd", "off"),
                alias=opts.get("alias", "off") == "on",
            )
        elif directive == "zone":
            pending_zone_lines.append((lineno, args))
        elif directive in ("rr", "delegate", "loop"):
            pending.append((lineno, directive, args))
        else:
            raise FixtureError(f"unknown directive {directive!r}", lineno)

    if not roots:
        raise FixtureError("no roots declared")

    def need_server(name: str, lineno: int) -> FixtureServer:
        if name not in servers:
            raise FixtureError(f"undeclared server {name}", lineno)
        return servers[name]

    for lineno, args in pending_zone_lines:
        if len(args) < 4 or args[1] != "on":
            raise FixtureError("usage: zone <name> on <ns_name> serial=<n> [axfr=..] [signed=..]", lineno)
        zname = _name(args[0], lineno)
        server = need_server(_name(args[2], lineno), lineno)
        opts = _options(args[3:], {"serial": None, "axfr": ("open", "closed"), "signed": ("yes", "no")}, lineno)
        if "serial" not in opts or not opts["serial"].isdigit() or int(opts["serial"]) >= 2**32:
            raise FixtureError("zone needs serial=<32-bit number>", lineno)
        if zname in server.zones:
            raise FixtureError(f"duplicate zone ownership: {zname} on {server.name}", lineno)
        server.zones[zname] = ZoneCopy(int(opts["serial"]), opts.get("axfr") == "open", opts.get("signed") == "yes")
        zones.setdefault(zname, Zone(zname)).hosts.append(server.name)

    ns_targets: list[tuple[str, int]] = []
    for lineno, directive, args in pending:
        if directive == "rr":
            if len(args) < 4:
                raise FixtureError("usage: rr <zone> <owner> <type> <rdata>", lineno)
            zname = _name(args[0], lineno)
            if zname not in zones:
                raise FixtureError(f"rr for undeclared zone {zname}", lineno)
            owner = zname if args[1] == "@" else _name(args[1], lineno)
            if not is_subdomain(owner, zname):
                raise FixtureError(f"owner {owner} is outside zone {zname}", lineno)
            rtype = args[2].upper()
            try:
                rd = _rdata(rtype, " ".join(args[3:]))
            except (dns.exception.DNSException, ValueError) as exc:
                raise FixtureError(f"bad {rtype} rdata: {exc}", lineno) from None
            if rtype == "NS":
                ns_targets.append((rd.target.to_text().lower(), lineno))
            zones[zname].add(owner, rtype, rd)
        elif directive == "delegate":
            if len(args) < 4 or args[1] != "from":
                raise FixtureError("usage: delegate <child> from <parent> ns=<names> [glue=..]", lineno)
            child, parent = _name(args[0], lineno), _name(args[2], lineno)
            if parent not in zones:
                raise FixtureError(f"delegation from undeclared zone {parent}", lineno)
            if child == parent or not is_subdomain(child, parent):
                raise FixtureError(f"{child} is not below {parent}", lineno)
            if any(child in z.delegations for z in zones.values()):
                raise FixtureError(f"duplicate zone ownership: {child} delegated twice", lineno)
            opts = _options(args[3:], {"ns": None, "glue": None}, lineno)
            ns = [_name(n, lineno) for n in opts.get("ns", "").split(",") if n]
            if not ns:
                raise FixtureError("delegation needs ns=", lineno)
            glue: dict[str, list[str]] = {}
            for item in filter(None, opts.get("glue", "").split(",")):
                if ":" not in item:
                    raise FixtureError(f"glue entry {item!r} is not <name>:<ip>", lineno)
                gname, gip = item.split(":", 1)
                glue.setdefault(_name(gname, lineno), []).append(_ip(gip, lineno))
            ns_targets.extend((n, lineno) for n in ns)
            zones[parent].delegations[child] = Delegation(child, ns, glue)
        else:
            if len(args) != 4 or args[1] != "on" or not args[3].startswith("refer="):
                raise FixtureError("usage: loop <zone> on <ns_name> refer=<zone>", lineno)
            zname = _name(args[0], lineno)
            server = need_server(_name(args[2], lineno), lineno)
            target = _name(args[3][len("refer="):], lineno)
            if target not in zones:
                raise FixtureError(f"loop refers to undeclared zone {target}", lineno)
            server.referral_overrides[zname] = target

    by_address: dict[str, FixtureServer] = {}
    for server in servers.values():
        for a in server.addresses:
            other = by_address.get(a)
            if other is not None and not (other.alias and server.alias):
                raise FixtureError(f"servers {other.name} and {server.name} share {a} without alias=on")
            by_address.setdefault(a, server)

    for name, ip, lineno in roots:
        server = need_server(name, lineno)
        if ip not in server.addresses:
            raise FixtureError(f"root {name} is not declared with address {ip}", lineno)

    known_names = set(servers)
    for z in zones.values():
        for owner, types in z.records.items():
            if {"A", "AAAA", "CNAME"} & set(types):
                known_names.add(owner)
        for d in z.delegations.values():
            known_names.update(d.glue)
    for target, lineno in ns_targets:
        if target not in known_names:
            raise FixtureError(f"NS target {target} is not a declared server", lineno)

    universe = FixtureUniverse(servers, zones, [(n, ip) for n, ip, _ in roots], canary, by_address)
    _index_names(universe)
    return universe


def _index_names(universe: FixtureUniverse) -> None:
    for zname, z in universe.zones.items():
        owners = set(z.records) | {zname} | set(z.delegations)
        for d in z.delegations.values():
            owners.update(g for g in d.glue)
        owners.update(s for s in universe.servers if is_subdomain(s, zname) and universe.zone_of(s) == zname)
        names = set()
        for owner in owners:
            if not is_subdomain(owner, zname):
                continue
            name = owner
            while name != zname and name not in names:
                names.add(name)
                name = name.split(".", 1)[1] or "."
            names.add(zname)
        z.names = names
    for name, server in universe.servers.items():
        zone = universe.zone_of(name)
        if zone is None or universe.zones[zone].cut_for(name) is not None:
            continue
        z = universe.zones[zone]
        existing = z.records.get(name, {})
        if {"A", "AAAA", "CNAME"} & set(existing):
            continue
        for a in server.addresses:
            z.add(name, "AAAA" if ":" in a else "A", _rdata("AAAA" if ":" in a else "A", a))


def load_universe(path: str | Path) -> FixtureUniverse:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FixtureError(f"cannot read {path}: {exc}") from None
    return parse_universe(text)
