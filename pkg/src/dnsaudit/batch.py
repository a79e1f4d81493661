"""Rate-limited, shuffled mass audits persisted to an append-only NDJSON store.

Store records carry the fields ``domain, run_id, ts, status, outcomes[],
raw_metric, servers[], note``; ``ts`` is the audit start time (Unix seconds).
A dispatcher hands domains to a worker pool after taking a slot from the
rate limiter, and a single writer thread appends finished reports.
"""

from __future__ import annotations

import json
import math
import queue
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from dnsaudit.audit import Auditor, Status, StoredReport
from dnsaudit.wire import normalize_name

DEFAULT_RATE = 1.0
DEFAULT_PARALLELISM = 8
# keeps consecutive starts strictly more than 1/rate apart despite clock granularity
_SLACK = 0.002


class StoreError(OSError):
    pass


def read_domains(path: str | Path) -> list[str]:
    """Domain list: one per line, ``#`` comments, blanks ignored, first occurrence kept."""
    domains: list[str] = []
    seen = set()
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name = normalize_name(line)
        if name not in seen:
            seen.add(name)
            domains.append(name)
    return domains


@dataclass(frozen=True)
class BatchPlan:
    domains: tuple[str, ...]
    rate: float
    seed: int
    parallelism: int

    @property
    def interval(self) -> float:
        return 0.0 if math.isinf(self.rate) else 1.0 / self.rate

    @property
    def projected_duration(self) -> float:
        """Lower bound on wall time, in seconds, imposed by the rate alone."""
        return len(self.domains) * self.interval

    def summary(self) -> str:
        rate = "unlimited" if math.isinf(self.rate) else f"{self.rate:g}/s"
        return (f"{len(self.domains)} domains, rate {rate}, parallelism {self.parallelism}, "
                f"seed {self.seed}, projected duration >= {self.projected_duration:.0f} s")


def plan(domains: Iterable[str], seed: int | None = None, rate: float = DEFAULT_RATE,
         parallelism: int = DEFAULT_PARALLELISM) -> BatchPlan:
    domains = list(domains)
    if not domains:
        raise ValueError("empty domain list")
    if len(set(domains)) != len(domains):
        raise ValueError("domain list contains duplicates")
    if not rate > 0:
        raise ValueError("rate must be positive")
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    if seed is None:
        seed = random.SystemRandom().randrange(2**32)
    order = domains[:]
    random.Random(seed).shuffle(order)
    return BatchPlan(tuple(order), float(rate), seed, parallelism)


class RateLimiter:
    """Hands out start slots at most once per ``1/rate`` seconds."""

    def __init__(self, rate: float):
        self.interval = 0.0 if math.isinf(rate) else 1.0 / rate + _SLACK
        self._lock = threading.Lock()
        self._last: float | None = None

    def acquire(self) -> float:
        """Block until the next slot; returns the slot's wall-clock start time."""
        with self._lock:
            if self._last is not None and self.interval:
                delay = self._last + self.interval - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            self._last = time.monotonic()
            return time.time()

    def drain(self) -> None:
        """Wait out the interval owned by the last slot handed out."""
        with self._lock:
            if self._last is not None and self.interval:
                delay = self._last + self.interval - time.monotonic()
                if delay > 0:
                    time.sleep(delay)


class ReportStore:
    """Append-only newline-delimited JSON file of :class:`StoredReport`."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def read(self) -> list[StoredReport]:
        if not self.path.exists():
            return []
        reports = []
        with self.path.open("r", encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        # a final fragment without newline is a write cut short by a crash
        for lineno, line in enumerate(lines[:-1], 1):
            if not line.strip():
                continue
            try:
                reports.append(StoredReport.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise StoreError(f"{self.path}:{lineno}: unreadable record ({exc})") from None
        return reports

    def done(self, run_id: str) -> set[str]:
        return {r.domain for r in self.read() if r.run_id == run_id}

    def append(self, report: StoredReport) -> None:
        try:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(report.to_json() + "\n")
        except OSError as exc:
            raise StoreError(f"cannot append to {self.path}: {exc}") from exc


@dataclass
class BatchStats:
    completed: int = 0
    excluded: int = 0
    aborted: int = 0
    skipped: int = 0
    elapsed: float = 0.0
    configured_rate: float = DEFAULT_RATE
    interrupted: bool = False
    error: str = ""
    order: list[str] = field(default_factory=list)

    @property
    def written(self) -> int:
        return self.completed + self.excluded + self.aborted

    @property
    def effective_rate(self) -> float:
        return self.written / self.elapsed if self.elapsed > 0 else 0.0

    def count(self, report: StoredReport) -> None:
        if report.status is Status.COMPLETED:
            self.completed += 1
        elif report.status is Status.EXCLUDED:
            self.excluded += 1
        else:
            self.aborted += 1


def run(batch: BatchPlan, auditor: Auditor, store: ReportStore, run_id: str,
        progress: Callable[[BatchStats], None] | None = None) -> BatchStats:
    """Audit every planned domain not yet stored under ``run_id``.

    A store failure stops dispatching; reports already written stay in place
    and ``interrupted`` is set. The call returns once every dispatched audit
    has finished and the last rate slot has elapsed.
    """
    stats = BatchStats(configured_rate=batch.rate)
    done = store.done(run_id)
    pending = [d for d in batch.domains if d not in done]
    stats.skipped = len(batch.domains) - len(pending)

    limiter = RateLimiter(batch.rate)
    stop = threading.Event()
    slots = threading.Semaphore(batch.parallelism)
    results: queue.Queue = queue.Queue()
    lock = threading.Lock()

    def writer() -> None:
        while True:
            report = results.get()
            if report is None:
                return
            if stop.is_set():
                continue
            try:
                store.append(report)
            except OSError as exc:
                stats.error = str(exc)
                stats.interrupted = True
                stop.set()
                continue
            with lock:
                stats.count(report)
            if progress is not None:
                progress(stats)

    def work(domain: str, ts: float) -> None:
        try:
            results.put(auditor.report(domain, run_id, ts))
        finally:
            slots.release()

    start = time.monotonic()
    drain = threading.Thread(target=writer, name="store-writer", daemon=True)
    drain.start()
    try:
        with ThreadPoolExecutor(max_workers=batch.parallelism, thread_name_prefix="audit") as pool:
            for domain in pending:
                slots.acquire()
                if stop.is_set():
                    slots.release()
                    break
                ts = limiter.acquire()
                stats.order.append(domain)
                pool.submit(work, domain, ts)
        if not stop.is_set():
            limiter.drain()
    except KeyboardInterrupt:
        stats.interrupted = True
        stats.error = "interrupted"
        stop.set()
        raise
    finally:
        results.put(None)
        drain.join()
        stats.elapsed = time.monotonic() - start
    return stats
