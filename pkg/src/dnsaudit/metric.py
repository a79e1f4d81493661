"""Weighted, per-server scaled domain metric and its dataset normalization.

Contributions are accumulated as exact fractions and rounded once, so the
raw metric is the correctly rounded value of the weighted sum (and an exact
integer whenever only fixed-scale checks fail under integral weights).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from dnsaudit.suite import TestId, TestOutcome

NORMALIZED_MAX = 10.0
DIMENSIONING_PROBABILITY = Fraction(1, 2)


class Scaling(str, enum.Enum):
    PER_SERVER = "S"
    FIXED = "1"


DEFAULT_WEIGHTS = (10, 4, 8, 8, 4, 6, 5, 5, 2, 2, 2, 2, 2)
DEFAULT_SCALING = tuple(Scaling(c) for c in "SS1SS11S11111")


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class WeightTable:
    weights: tuple[float, ...] = tuple(float(w) for w in DEFAULT_WEIGHTS)
    scaling: tuple[Scaling, ...] = DEFAULT_SCALING

    def __post_init__(self):
        if len(self.weights) != len(TestId) or len(self.scaling) != len(TestId):
            raise WeightError("a weight table needs exactly 13 entries")
        for i, w in enumerate(self.weights, 1):
            if not 0 <= w <= 10:
                raise WeightError(f"weight for test {i} must be within [0, 10], got {w}")

    def weight(self, test_id: TestId | int) -> float:
        return self.weights[int(test_id) - 1]

    def mode(self, test_id: TestId | int) -> Scaling:
        return self.scaling[int(test_id) - 1]

    def with_weight(self, test_id: TestId | int, weight: float, mode: Scaling | None = None) -> WeightTable:
        i = int(test_id) - 1
        weights = list(self.weights)
        weights[i] = float(weight)
        scaling = list(self.scaling)
        if mode is not None:
            scaling[i] = Scaling(mode)
        return replace(self, weights=tuple(weights), scaling=tuple(scaling))


def parse_weights(text: str) -> WeightTable:
    """Parse ``<ordinal> <weight> <S|1>`` lines over the default table."""
    table = WeightTable()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise WeightError(f"line {lineno}: expected '<ordinal> <weight> <S|1>'")
        try:
            ordinal = int(parts[0])
            weight = float(parts[1])
        except ValueError:
            raise WeightError(f"line {lineno}: ordinal and weight must be numbers") from None
        if ordinal not in range(1, len(TestId) + 1):
            raise WeightError(f"line {lineno}: unknown test ordinal {ordinal}")
        if ordinal in seen:
            raise WeightError(f"line {lineno}: test {ordinal} given twice")
        if parts[2] not in ("S", "1"):
            raise WeightError(f"line {lineno}: scaling must be S or 1")
        seen.add(ordinal)
        table = table.with_weight(ordinal, weight, Scaling(parts[2]))
    return table


def load_weights(path: str | Path | None) -> WeightTable:
    if path is None:
        return WeightTable()
    return parse_weights(Path(path).read_text(encoding="utf-8"))


def failure_probability(n_err: int, n_tot: int) -> float:
    if n_tot < 1:
        raise ValueError("failure probability is undefined without servers (n_tot = 0)")
    if not 0 <= n_err <= n_tot:
        raise ValueError(f"need 0 <= n_err <= n_tot, got {n_err}/{n_tot}")
    return n_err / n_tot


def _scale(p: Fraction, mode: Scaling, literal: bool) -> Fraction:
    if Scaling(mode) is Scaling.FIXED:
        return Fraction(1)
    ratio = p / DIMENSIONING_PROBABILITY
    return max(Fraction(1), ratio) if literal else min(Fraction(1), ratio)


def scaled_factor(p: float, mode: Scaling | str = Scaling.PER_SERVER, literal: bool = False) -> float:
    """Scale for a failure probability ``p``.

    Per-server checks reach full weight at 50% failing servers and saturate
    there; ``literal`` selects ``max(1, p / 0.5)`` instead.
    """
    if not 0 <= p <= 1:
        raise ValueError(f"probability out of range: {p}")
    return float(_scale(Fraction(p), Scaling(mode), literal))


@dataclass(frozen=True)
class DomainMetric:
    raw: float
    contributions: tuple[tuple[TestId, float], ...]
    normalized: float | None = None


def domain_metric(outcomes: Sequence[TestOutcome], weights: WeightTable | None = None,
                  literal: bool = False) -> DomainMetric:
    weights = weights or WeightTable()
    ids = [o.test_id for o in outcomes]
    if sorted(ids) != list(TestId):
        raise ValueError("domain_metric needs exactly one outcome per test")
    total = Fraction(0)
    contributions = []
    for outcome in sorted(outcomes, key=lambda o: o.test_id):
        term = Fraction(0)
        if outcome.applicable and outcome.indicator:
            mode = weights.mode(outcome.test_id)
            p = Fraction(outcome.n_err, outcome.n_tot) if mode is Scaling.PER_SERVER else Fraction(1)
            term = Fraction(weights.weight(outcome.test_id)) * _scale(p, mode, literal)
        total += term
        contributions.append((outcome.test_id, float(term)))
    return DomainMetric(float(total), tuple(contributions))


def normalize(metrics: Iterable[float]) -> tuple[float, list[float]]:
    values = list(metrics)
    if not values:
        raise ValueError("cannot normalize an empty list of metrics")
    m_max = max(values)
    if m_max == 0:
        return 0.0, [0.0 for _ in values]
    return m_max, [NORMALIZED_MAX * (m / m_max) for m in values]


def theoretical_max(weights: WeightTable | None = None, literal: bool = False) -> float:
    """Largest raw metric a single domain can reach under ``weights``."""
    weights = weights or WeightTable()
    top = sum(
        Fraction(w) * (_scale(Fraction(1), m, literal))
        for w, m in zip(weights.weights, weights.scaling)
    )
    return float(top)


def single_domain_normalized(raw: float, weights: WeightTable | None = None, literal: bool = False) -> float:
    top = theoretical_max(weights, literal)
    return 0.0 if top == 0 else NORMALIZED_MAX * (raw / top)
