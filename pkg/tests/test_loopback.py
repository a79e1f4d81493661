"""The same audits over real loopback sockets and in-process must agree."""

import pytest

from dnsaudit.audit import Auditor
from dnsaudit.probe import Prober
from dnsaudit.sim import SimTransport, loopback_transport, serve_loopback
from dnsaudit.wire import DnsQuestion, RType, Transport

pytestmark = pytest.mark.slow

DOMAINS = ["t01.test", "t02.test", "t04.test", "t06.test", "t07.test", "t08.test", "bigns.test", "pair.test"]


def fast(transport):
    # silent servers cost a full timeout per attempt; keep raw probes short
    return Prober(transport, udp_timeout=0.3, udp_retries=0, tcp_timeout=1.0)


@pytest.fixture(scope="module")
def served(scenarios):
    with serve_loopback(scenarios) as port_map:
        yield loopback_transport(port_map)


def test_raw_queries_agree(scenarios, served):
    q = DnsQuestion("bigns.test", RType.NS)
    sim = Prober(SimTransport(scenarios)).query("10.106.1.53", q, Transport.UDP)
    net = fast(served).query("10.106.1.53", q, Transport.UDP)
    assert net.truncated == sim.truncated is True
    assert not fast(served).query("10.1.2.53", DnsQuestion("t01.test", RType.SOA), Transport.UDP).responded
    assert not fast(served).query("10.2.2.53", DnsQuestion("t02.test", RType.SOA), Transport.TCP).responded


@pytest.mark.parametrize("domain", DOMAINS)
def test_audits_agree(scenarios, served, domain):
    sim = Auditor(SimTransport(scenarios), scenarios.roots, canary=scenarios.canary_name).audit(domain)
    net = Auditor(served, scenarios.roots, canary=scenarios.canary_name).audit(domain)
    assert net.outcomes == sim.outcomes
    assert net.trace == sim.trace
