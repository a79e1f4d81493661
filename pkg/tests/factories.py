"""Builders for stored reports without running any audits."""

import random

from hypothesis import strategies as st

from dnsaudit.audit import ServerSummary, Status, StoredReport
from dnsaudit.metric import domain_metric
from dnsaudit.suite import TestId, TestOutcome


def summary(identity):
    return ServerSummary(identity, f"ns.{identity}.", (), (identity,), "both", True)


def completed(domain, failing=None, servers=(), run_id="r1", ts=0.0):
    """``failing`` maps test ids to the implicated servers (or ``(n_err, n_tot)``)."""
    failing = failing or {}
    outs = []
    for t in TestId:
        spec = failing.get(t, failing.get(int(t)))
        if spec is None:
            outs.append(TestOutcome(t, 0, 0, max(1, len(servers))))
        elif isinstance(spec, tuple) and spec and isinstance(spec[0], int):
            outs.append(TestOutcome(t, 1, spec[0], spec[1]))
        else:
            implicated = tuple(sorted(spec))
            outs.append(TestOutcome(t, 1, len(implicated), max(len(implicated), len(servers)), servers=implicated))
    raw = domain_metric(outs).raw
    return StoredReport(domain, run_id, ts, Status.COMPLETED, tuple(outs), raw,
                        tuple(summary(s) for s in servers))


def excluded(domain, run_id="r1", ts=0.0):
    return StoredReport(domain, run_id, ts, Status.EXCLUDED, note="no authoritative server reachable")


def aborted(domain, run_id="r1", ts=0.0):
    return StoredReport(domain, run_id, ts, Status.ABORTED, note="RuntimeError: boom")


def random_store(rnd: random.Random, n_domains=50, n_servers=12):
    """A store where each domain uses 1..4 of a small server pool and fails tests at random."""
    pool = [f"192.0.2.{i}" for i in range(1, n_servers + 1)]
    reports = []
    for i in range(n_domains):
        used = rnd.sample(pool, rnd.randint(1, 4))
        failing = {}
        for t in TestId:
            if rnd.random() < 0.3:
                failing[t] = rnd.sample(used, rnd.randint(1, len(used)))
        reports.append(completed(f"d{i:03d}.test.", failing, used))
    return reports


@st.composite
def stored_reports(draw):
    domain = draw(st.text("abcdefghijklmnopqrstuvwxyz0123456789", min_size=1, max_size=10)) + ".test."
    run_id = draw(st.text("abcdef0123456789-", min_size=1, max_size=12))
    ts = draw(st.floats(0, 2e9, allow_nan=False))
    status = draw(st.sampled_from(list(Status)))
    if status is Status.EXCLUDED:
        return excluded(domain, run_id, ts)
    if status is Status.ABORTED:
        return StoredReport(domain, run_id, ts, status, note=draw(st.text(max_size=40)))
    servers = draw(st.lists(st.ip_addresses(v=4).map(str), min_size=1, max_size=4, unique=True))
    failing = draw(st.dictionaries(st.sampled_from(list(TestId)),
                                   st.lists(st.sampled_from(servers), min_size=1, unique=True)))
    return completed(domain, failing, servers, run_id, ts)
