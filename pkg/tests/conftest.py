import pytest

from dnsaudit.audit import Auditor
from dnsaudit.probe import Prober, Resolver
from dnsaudit.sim import SimTransport, bundled_fixture, load_universe, parse_universe
from dnsaudit.suite import Probes


@pytest.fixture(scope="session")
def healthy():
    return load_universe(bundled_fixture("healthy.zl"))


@pytest.fixture(scope="session")
def scenarios():
    return load_universe(bundled_fixture("scenarios.zl"))


@pytest.fixture(scope="session")
def loops():
    return load_universe(bundled_fixture("loops.zl"))


def auditor_for(universe, **kwargs) -> Auditor:
    return Auditor(SimTransport(universe), universe.roots, canary=universe.canary_name, **kwargs)


def probes_for(universe):
    prober = Prober(SimTransport(universe))
    resolver = Resolver(prober, universe.root_addresses)
    return prober, resolver, Probes(prober, resolver, universe.canary_name)


# A small hierarchy reused by inline scenarios: root, .test, and whatever the
# test appends.
BASE = """
root a.root.test 198.51.100.1
canary www.canary.test
server a.root.test ip=198.51.100.1
server a.nic.test ip=198.51.100.53
zone . on a.root.test serial=1
zone in-addr.arpa on a.root.test serial=1
zone ip6.arpa on a.root.test serial=1
zone test on a.nic.test serial=1
delegate test from . ns=a.nic.test
rr test www.canary.test A 198.51.100.99
"""


def inline(extra: str):
    return parse_universe(BASE + extra)


# acceptance reporting ------------------------------------------------------------
# Tests marked ``acceptance(n, title)`` get one PASS/FAIL line each in the
# terminal summary, whatever the capture mode.

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None and (report.when == "call" or report.failed or report.skipped):
        n, title = marker.args
        results = item.config.stash[_ACCEPTANCE]
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        if results.get(n, ("PASS",))[0] == "PASS":
            results[n] = (status, title)
    return report


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_ACCEPTANCE]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        status, title = results[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}")
