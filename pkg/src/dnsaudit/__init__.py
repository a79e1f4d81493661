"""DNS misconfiguration auditing: delegation tracing, 13 checks, scoring, batch reports."""

from dnsaudit.audit import Audit, Auditor, Status, StoredReport
from dnsaudit.metric import DomainMetric, WeightTable, domain_metric, normalize
from dnsaudit.suite import TestId, TestOutcome
from dnsaudit.tracer import DelegationTrace, trace

__version__ = "0.1.0"

__all__ = [
    "Audit",
    "Auditor",
    "DelegationTrace",
    "DomainMetric",
    "Status",
    "StoredReport",
    "TestId",
    "TestOutcome",
    "WeightTable",
    "domain_metric",
    "normalize",
    "trace",
]
