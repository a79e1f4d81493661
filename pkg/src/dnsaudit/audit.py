"""Single-domain audit: trace, run the checks, score, and package the result."""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field

from dnsaudit.metric import DomainMetric, WeightTable, domain_metric, single_domain_normalized
from dnsaudit.probe import MAX_DEPTH, Prober, Resolver
from dnsaudit.suite import DEFAULT_CANARY, DomainExcluded, Probes, TestOutcome, run_all
from dnsaudit.tracer import DelegationTrace, ServerRef, trace
from dnsaudit.wire import DnsTransport, normalize_name


class Status(str, enum.Enum):
    COMPLETED = "completed"
    EXCLUDED = "excluded_unresolvable"
    ABORTED = "aborted"


@dataclass(frozen=True)
class ServerSummary:
    identity: str
    ns_name: str
    aliases: tuple[str, ...]
    addresses: tuple[str, ...]
    source: str
    authoritative: bool | None

    @classmethod
    def of(cls, ref: ServerRef) -> ServerSummary:
        return cls(ref.identity, ref.ns_name, ref.aliases, ref.addresses, ref.source.value, ref.is_authoritative)

    def to_dict(self) -> dict:
        return {
            "identity": self.identity,
            "ns_name": self.ns_name,
            "aliases": list(self.aliases),
            "addresses": list(self.addresses),
            "source": self.source,
            "authoritative": self.authoritative,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ServerSummary:
        return cls(data["identity"], data["ns_name"], tuple(data.get("aliases", ())),
                   tuple(data.get("addresses", ())), data["source"], data.get("authoritative"))


@dataclass(frozen=True)
class StoredReport:
    """One persisted audit record; the unit of the batch store."""

    domain: str
    run_id: str
    ts: float
    status: Status
    outcomes: tuple[TestOutcome, ...] = ()
    raw_metric: float | None = None
    servers: tuple[ServerSummary, ...] = ()
    note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "status", Status(self.status))
        if self.status is not Status.COMPLETED and (self.outcomes or self.raw_metric is not None):
            raise ValueError(f"{self.domain}: only completed reports carry outcomes and a metric")
        if self.status is Status.COMPLETED and (len(self.outcomes) != 13 or self.raw_metric is None):
            raise ValueError(f"{self.domain}: a completed report needs 13 outcomes and a metric")

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "run_id": self.run_id,
            "ts": self.ts,
            "status": self.status.value,
            "outcomes": [o.to_dict() for o in self.outcomes],
            "raw_metric": self.raw_metric,
            "servers": [s.to_dict() for s in self.servers],
            "note": self.note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: dict) -> StoredReport:
        return cls(
            domain=data["domain"],
            run_id=data["run_id"],
            ts=data["ts"],
            status=Status(data["status"]),
            outcomes=tuple(TestOutcome.from_dict(o) for o in data.get("outcomes", ())),
            raw_metric=data.get("raw_metric"),
            servers=tuple(ServerSummary.from_dict(s) for s in data.get("servers", ())),
            note=data.get("note", ""),
        )


@dataclass(frozen=True)
class Audit:
    domain: str
    trace: DelegationTrace
    outcomes: tuple[TestOutcome, ...] = ()
    metric: DomainMetric | None = None
    theoretical_normalized: float | None = None

    @property
    def excluded(self) -> bool:
        return self.trace.unresolvable


@dataclass
class Auditor:
    """Everything needed to audit domains against one DNS universe."""

    transport: DnsTransport
    roots: list[tuple[str, str]]
    weights: WeightTable = field(default_factory=WeightTable)
    canary: str = DEFAULT_CANARY
    eq3_literal: bool = False
    max_depth: int = MAX_DEPTH

    def audit(self, domain: str) -> Audit:
        domain = normalize_name(domain)
        # fresh prober and resolver per domain: audits never share caches
        prober = Prober(self.transport)
        resolver = Resolver(prober, [ip for _, ip in self.roots], self.max_depth)
        result = trace(domain, prober, self.roots, self.max_depth, resolver)
        if result.unresolvable:
            return Audit(domain, result)
        try:
            outcomes = tuple(run_all(result, Probes(prober, resolver, self.canary)))
        except DomainExcluded:
            return Audit(domain, result)
        metric = domain_metric(outcomes, self.weights, self.eq3_literal)
        normalized = single_domain_normalized(metric.raw, self.weights, self.eq3_literal)
        return Audit(domain, result, outcomes, metric, normalized)

    def report(self, domain: str, run_id: str, ts: float | None = None) -> StoredReport:
        ts = time.time() if ts is None else ts
        try:
            audit = self.audit(domain)
        except Exception as exc:  # noqa: BLE001 - one bad domain must not sink a batch
            return StoredReport(domain, run_id, ts, Status.ABORTED, note=f"{type(exc).__name__}: {exc}")
        return to_stored(audit, run_id, ts)


def to_stored(audit: Audit, run_id: str, ts: float) -> StoredReport:
    servers = tuple(ServerSummary.of(s) for s in audit.trace.servers)
    if audit.excluded:
        note = "; ".join(audit.trace.evidence)
        return StoredReport(audit.domain, run_id, ts, Status.EXCLUDED, servers=servers, note=note)
    return StoredReport(audit.domain, run_id, ts, Status.COMPLETED, audit.outcomes, audit.metric.raw, servers)
