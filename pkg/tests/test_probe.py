import pytest

from dnsaudit.probe import UDP_RETRIES, Prober, Resolver
from dnsaudit.sim import SimTransport
from dnsaudit.wire import DnsQuestion, RType, Transport

from conftest import inline

NS1 = "192.0.2.10"


def prober(universe):
    return Prober(SimTransport(universe))


def test_healthy_ns_query(healthy):
    # hand check: example.test is delegated to ns1/ns2 and both serve it
    obs = prober(healthy).query(NS1, DnsQuestion("example.test", RType.NS), Transport.UDP)
    assert obs.responded and obs.authoritative_answer
    assert sorted(r.rdata for r in obs.answer("NS")) == ["ns1.example.test.", "ns2.example.test."]
    assert obs.rtt == 0.0


def test_udp_disabled_server_is_silent(scenarios):
    obs = prober(scenarios).query("10.1.2.53", DnsQuestion("t01.test", RType.SOA), Transport.UDP)
    assert not obs.responded and obs.records == ()


def test_oversized_udp_answer_is_truncated(scenarios):
    # 7 signed NS records plus glue: well over 512 bytes
    p = prober(scenarios)
    obs = p.query("10.106.1.53", DnsQuestion("bigns.test", RType.NS), Transport.UDP)
    assert obs.truncated and obs.answer() == []
    full = p.ask(["10.106.1.53"], "bigns.test", RType.NS)
    assert full.transport is Transport.TCP and len(full.answer("NS")) == 7


def test_unknown_server_address_is_silent(healthy):
    obs = prober(healthy).query("203.0.113.250", DnsQuestion("example.test", RType.SOA))
    assert not obs.responded


class CountingSilence:
    simulated = True

    def __init__(self):
        self.calls = []

    def exchange(self, server, payload, *, tcp, timeout, stream=False):
        self.calls.append(tcp)
        return None


def test_udp_retries_then_gives_up():
    t = CountingSilence()
    obs = Prober(t).query("192.0.2.1", DnsQuestion("x.test", RType.A))
    assert not obs.responded
    assert t.calls == [False] * (UDP_RETRIES + 1)


def test_query_preconditions(healthy):
    p = prober(healthy)
    with pytest.raises(ValueError):
        p.query("not-an-ip", DnsQuestion("x.test", RType.A))
    with pytest.raises(ValueError):
        p.query(NS1, DnsQuestion("x.test", RType.A), timeout=0)
    with pytest.raises(ValueError):
        p.query(NS1, DnsQuestion("example.test", RType.AXFR), Transport.UDP)


TEN_RECORDS = """
server ns1.x.test ip=192.0.2.1
server ns2.x.test ip=192.0.2.2 tcp=off
zone x.test on ns1.x.test serial=7 axfr=open
zone x.test on ns2.x.test serial=7 axfr=open
delegate x.test from test ns=ns1.x.test
rr x.test @ NS ns1.x.test
rr x.test @ A 192.0.2.80
rr x.test @ MX 10 mail.x.test
rr x.test mail.x.test A 192.0.2.25
rr x.test www.x.test A 192.0.2.80
rr x.test ftp.x.test CNAME www.x.test
rr x.test @ TXT "v=spf1 -all"
"""


def test_zone_transfer_counts_records():
    # SOA, NS, A(ns1 synthesized), ns2 A, apex A, MX, mail A, www A, ftp CNAME, TXT = 10
    u = inline(TEN_RECORDS)
    result = prober(u).attempt_zone_transfer("192.0.2.1", "x.test")
    assert result.granted and result.record_count == 10


def test_zone_transfer_refusals():
    u = inline(TEN_RECORDS)
    p = prober(u)
    assert not p.attempt_zone_transfer("192.0.2.2", "x.test").granted  # TCP unreachable
    assert p.attempt_zone_transfer("192.0.2.2", "x.test").reason == "unreachable"
    closed = p.attempt_zone_transfer("198.51.100.53", "test")
    assert not closed.granted and closed.reason == "REFUSED"


def test_recursion_check(scenarios):
    p = prober(scenarios)
    assert p.check_recursion("10.8.2.53", "www.canary.test").offers_recursion
    assert not p.check_recursion("10.8.1.53", "www.canary.test").offers_recursion
    advertised = p.check_recursion("10.105.2.53", "www.canary.test")
    assert not advertised.offers_recursion and advertised.reason.startswith("RA=1 without answer")


def test_soa_serial(scenarios):
    p = prober(scenarios)
    assert p.fetch_soa_serial("10.9.1.53", "t09.test") == 2014102901
    assert p.fetch_soa_serial("10.9.2.53", "t09.test") == 2014102801
    assert p.fetch_soa_serial("10.8.1.53", "t09.test") is None


def test_resolver_follows_cname_and_reverse(healthy):
    u = inline("""
server ns1.c.test ip=192.0.2.1
zone c.test on ns1.c.test serial=1
delegate c.test from test ns=ns1.c.test
rr c.test alias.c.test CNAME target.c.test
rr c.test target.c.test A 192.0.2.44
rr in-addr.arpa 1.2.0.192.in-addr.arpa PTR ns1.c.test
""")
    r = Resolver(prober(u), u.root_addresses)
    assert r.addresses("alias.c.test") == ("192.0.2.44",)
    assert r.lookup("alias.c.test", "A").chain == ("alias.c.test.",)
    assert r.reverse_lookup("192.0.2.1") == "ns1.c.test."
    assert r.reverse_lookup("192.0.2.9") is None
    missing = r.lookup("nope.c.test", "A")
    assert missing.rcode == "NXDOMAIN" and missing.values("A") == []
