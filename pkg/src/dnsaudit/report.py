"""Dataset aggregation: per-test failure rates, metric CDF and server impact.

CSV outputs, all UTF-8 with a header row and ``\\n`` line endings:

``summary.csv``
    ``scope,test_id,test_name,quantity,value``. Dataset rows (empty
    ``test_id``) give label, total/completed/excluded/aborted counts,
    excluded_fraction, observed_servers and m_max; four rows per test give
    failing_domains, domain_fraction, failing_servers, server_fraction.
``cdf.csv``
    ``threshold,fraction``, both with four decimals.
``impact.csv``
    ``test_id,rank,server,affected_domains,domain_fraction,cumulative_fixed_fraction``.

Fractions other than the CDF carry six decimals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from dnsaudit.audit import Status, StoredReport
from dnsaudit.metric import WeightTable, domain_metric, normalize
from dnsaudit.suite import TEST_NAMES, TestId

CDF_STEP = 0.1
CDF_TOP = 10.0
IMPACT_TESTS = (TestId.PARENT_NONAUTH, TestId.STEALTH, TestId.ZONE_TRANSFER, TestId.RECURSION)
IMPACT_K = 5


class EmptyDataset(ValueError):
    pass


class ReportWriteError(OSError):
    pass


@dataclass(frozen=True)
class TestRate:
    test_id: TestId
    failing_domains: int
    domain_fraction: float
    failing_servers: int
    server_fraction: float

    __test__ = False


@dataclass(frozen=True)
class DatasetSummary:
    label: str
    total: int
    completed: int
    excluded: int
    aborted: int
    observed_servers: int
    m_max: float
    per_test: tuple[TestRate, ...]
    cdf: tuple[tuple[float, float], ...]
    raw: dict[str, float]
    normalized: dict[str, float]

    @property
    def excluded_fraction(self) -> float:
        return self.excluded / self.total if self.total else 0.0

    def rate(self, test_id: TestId | int) -> TestRate:
        return self.per_test[int(test_id) - 1]


@dataclass(frozen=True)
class ImpactEntry:
    server: str
    affected_domains: int
    domain_fraction: float
    cumulative_fixed_fraction: float


@dataclass(frozen=True)
class ServerImpact:
    test_id: TestId
    failing_domains: int
    entries: tuple[ImpactEntry, ...]


def latest(reports: Iterable[StoredReport], run_id: str | None = None) -> list[StoredReport]:
    """One record per domain: the newest one, optionally within one run."""
    chosen: dict[str, StoredReport] = {}
    for r in reports:
        if run_id is not None and r.run_id != run_id:
            continue
        prev = chosen.get(r.domain)
        if prev is None or r.ts >= prev.ts:
            chosen[r.domain] = r
    return [chosen[d] for d in sorted(chosen)]


def cdf_thresholds(step: float = CDF_STEP, top: float = CDF_TOP) -> list[float]:
    if not step > 0:
        raise ValueError("CDF step must be positive")
    n = int(round(top / step, 9))
    points = [round(i * step, 10) for i in range(n + 1) if round(i * step, 10) <= top]
    if points[-1] < top:
        points.append(top)
    return points


def metric_cdf(metrics: Sequence[float], thresholds: Sequence[float]) -> list[tuple[float, float]]:
    """Fraction of ``metrics`` at or below each threshold."""
    if not metrics:
        raise ValueError("no metrics to build a CDF from")
    if list(thresholds) != sorted(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    ordered = sorted(metrics)
    n = len(ordered)
    points, i = [], 0
    for t in thresholds:
        while i < n and ordered[i] <= t:
            i += 1
        points.append((t, i / n))
    return points


def summarize(reports: Iterable[StoredReport], weights: WeightTable | None = None, literal: bool = False,
              run_id: str | None = None, label: str = "", cdf_step: float = CDF_STEP) -> DatasetSummary:
    records = latest(reports, run_id)
    completed = [r for r in records if r.status is Status.COMPLETED]
    if not completed:
        raise EmptyDataset("the store holds no completed reports")
    excluded = sum(1 for r in records if r.status is Status.EXCLUDED)
    aborted = sum(1 for r in records if r.status is Status.ABORTED)

    raw = {r.domain: domain_metric(r.outcomes, weights, literal).raw for r in completed}
    m_max, norm = normalize(raw[d] for d in sorted(raw))
    normalized = dict(zip(sorted(raw), norm))

    observed = {s.identity for r in completed for s in r.servers}
    per_test = []
    for t in TestId:
        outcomes = [next(o for o in r.outcomes if o.test_id == t) for r in completed]
        failing = [o for o in outcomes if o.failed]
        bad_servers = {s for o in failing for s in o.servers}
        per_test.append(TestRate(
            t, len(failing), len(failing) / len(completed),
            len(bad_servers), len(bad_servers) / len(observed) if observed else 0.0,
        ))
    cdf = metric_cdf(norm, cdf_thresholds(cdf_step))
    return DatasetSummary(label, len(completed) + excluded, len(completed), excluded, aborted, len(observed),
                          m_max, tuple(per_test), tuple(cdf), raw, normalized)


def server_impact(reports: Iterable[StoredReport], test_id: TestId | int, k: int | None = None,
                  run_id: str | None = None) -> ServerImpact:
    """Rank servers by the number of domains they make fail ``test_id``.

    Fixing the top ``j`` servers fixes a domain only when every server
    implicated for it is among them.
    """
    if k is not None and k < 1:
        raise ValueError("k must be at least 1")
    test_id = TestId(test_id)
    implicated: list[frozenset[str]] = []
    for r in latest(reports, run_id):
        if r.status is not Status.COMPLETED:
            continue
        outcome = next(o for o in r.outcomes if o.test_id == test_id)
        if outcome.failed and outcome.servers:
            implicated.append(frozenset(outcome.servers))
    counts: dict[str, int] = {}
    for servers in implicated:
        for s in servers:
            counts[s] = counts.get(s, 0) + 1
    ranking = sorted(counts, key=lambda s: (-counts[s], s))
    rank = {s: i for i, s in enumerate(ranking)}
    # a domain is fixed once the last of its servers (by rank) is fixed
    fixed_at = [0] * len(ranking)
    for servers in implicated:
        fixed_at[max(rank[s] for s in servers)] += 1
    total = len(implicated)
    entries, cumulative = [], 0
    for i, s in enumerate(ranking):
        cumulative += fixed_at[i]
        entries.append(ImpactEntry(s, counts[s], counts[s] / total, cumulative / total))
    return ServerImpact(test_id, total, tuple(entries[:k] if k else entries))


def _fmt(x: float, places: int = 6) -> str:
    return f"{x:.{places}f}"


def _write(path: Path, header: list[str], rows: list[list]) -> Path:
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise ReportWriteError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def emit_reports(summary: DatasetSummary, impacts: Sequence[ServerImpact], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportWriteError(f"cannot create {out}: {exc.strerror or exc}") from exc

    rows: list[list] = [
        ["dataset", "", "", "label", summary.label],
        ["dataset", "", "", "total_domains", summary.total],
        ["dataset", "", "", "completed_domains", summary.completed],
        ["dataset", "", "", "excluded_domains", summary.excluded],
        ["dataset", "", "", "excluded_fraction", _fmt(summary.excluded_fraction)],
        ["dataset", "", "", "aborted_domains", summary.aborted],
        ["dataset", "", "", "observed_servers", summary.observed_servers],
        ["dataset", "", "", "m_max", _fmt(summary.m_max)],
    ]
    for rate in summary.per_test:
        name = TEST_NAMES[rate.test_id]
        tid = int(rate.test_id)
        rows += [
            ["test", tid, name, "failing_domains", rate.failing_domains],
            ["test", tid, name, "domain_fraction", _fmt(rate.domain_fraction)],
            ["test", tid, name, "failing_servers", rate.failing_servers],
            ["test", tid, name, "server_fraction", _fmt(rate.server_fraction)],
        ]
    paths = [_write(out / "summary.csv", ["scope", "test_id", "test_name", "quantity", "value"], rows)]
    paths.append(_write(out / "cdf.csv", ["threshold", "fraction"],
                        [[_fmt(t, 4), _fmt(f, 4)] for t, f in summary.cdf]))
    impact_rows = [
        [int(imp.test_id), i, e.server, e.affected_domains, _fmt(e.domain_fraction), _fmt(e.cumulative_fixed_fraction)]
        for imp in impacts
        for i, e in enumerate(imp.entries, 1)
    ]
    paths.append(_write(out / "impact.csv", ["test_id", "rank", "server", "affected_domains", "domain_fraction",
                                             "cumulative_fixed_fraction"], impact_rows))
    return paths
