"""``dnsaudit`` command line.

Exit codes: 0 success (all checks passed), 1 some check failed, 2 domain
unresolvable, 3 batch stopped early, 64 usage error, 65 bad input data,
66 input file missing, 73 output not writable.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

from dnsaudit.audit import Audit, Auditor, to_stored
from dnsaudit.batch import DEFAULT_PARALLELISM, DEFAULT_RATE, BatchStats, ReportStore, StoreError, plan, read_domains
from dnsaudit.batch import run as run_batch
from dnsaudit.metric import WeightError, load_weights, theoretical_max
from dnsaudit.report import IMPACT_K, IMPACT_TESTS, EmptyDataset, ReportWriteError, emit_reports, server_impact, summarize
from dnsaudit.sim import FixtureError, SimTransport, bundled_fixture, bundled_fixtures, load_universe, serve_loopback
from dnsaudit.suite import DEFAULT_CANARY, TEST_NAMES, TestId
from dnsaudit.tracer import load_root_hints
from dnsaudit.wire import InvalidName, SocketTransport, normalize_name

EX_OK, EX_FAILED, EX_UNRESOLVABLE, EX_ABORTED = 0, 1, 2, 3
EX_USAGE, EX_DATAERR, EX_NOINPUT, EX_CANTCREAT = 64, 65, 66, 73


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _fixture_path(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    try:
        return bundled_fixture(name)
    except FileNotFoundError:
        raise CliError(f"fixture not found: {name}", EX_NOINPUT) from None


def _load_fixture(name: str):
    try:
        return load_universe(_fixture_path(name))
    except FixtureError as exc:
        raise CliError(f"{name}: {exc}", EX_DATAERR) from None


def _auditor(args) -> Auditor:
    if args.fixture and args.roots:
        raise CliError("--fixture and --roots are mutually exclusive", EX_USAGE)
    try:
        weights = load_weights(args.weights)
    except FileNotFoundError:
        raise CliError(f"weights file not found: {args.weights}", EX_NOINPUT) from None
    except WeightError as exc:
        raise CliError(f"{args.weights}: {exc}", EX_DATAERR) from None
    if args.fixture:
        universe = _load_fixture(args.fixture)
        return Auditor(SimTransport(universe), universe.roots, weights,
                       universe.canary_name or DEFAULT_CANARY, args.eq3_literal)
    try:
        roots = load_root_hints(args.roots)
    except FileNotFoundError:
        raise CliError(f"root hints not found: {args.roots}", EX_NOINPUT) from None
    except ValueError as exc:
        raise CliError(f"{args.roots}: {exc}", EX_DATAERR) from None
    return Auditor(SocketTransport(), roots, weights, DEFAULT_CANARY, args.eq3_literal)


# check -------------------------------------------------------------------------


def render_check(audit: Audit, auditor: Auditor) -> str:
    t = audit.trace
    lines = [f"domain   {audit.domain}", f"parent   {t.parent_zone or '-'} (depth {t.depth})"]
    for i, s in enumerate(t.servers):
        auth = {True: "authoritative", False: "not authoritative", None: "not probed"}[s.is_authoritative]
        names = s.ns_name + (f" ({', '.join(s.aliases)})" if s.aliases else "")
        lines.append(f"{'servers' if i == 0 else '':<8} {names}  {', '.join(s.addresses) or 'no address'}"
                     f"  [{s.source.value}, {auth}]")
    if audit.excluded:
        lines.append("")
        lines += [f"  {e}" for e in t.evidence]
        lines.append("unresolvable: no authoritative server, excluded from analysis")
        return "\n".join(lines) + "\n"
    lines += ["", f"{'#':>2}  {'test':<36} {'result':<6} {'n_err/n_tot':>11}  {'weight':>6}"]
    for o in audit.outcomes:
        result = "FAIL" if o.failed else ("pass" if o.applicable else "n/a")
        weight = auditor.weights.weight(o.test_id)
        lines.append(f"{int(o.test_id):>2}  {TEST_NAMES[o.test_id]:<36} {result:<6} "
                     f"{f'{o.n_err}/{o.n_tot}':>11}  {weight:>6g}")
        lines += [f"{'':>6}{e}" for e in o.evidence if o.failed or not o.applicable]
    passed = sum(1 for o in audit.outcomes if not o.failed)
    top = theoretical_max(auditor.weights, auditor.eq3_literal)
    lines += [
        "",
        f"raw metric      {audit.metric.raw:g}",
        f"normalized      {audit.theoretical_normalized:.2f} / 10 (against the theoretical maximum {top:g})",
        f"{passed}/{len(audit.outcomes)} passed",
    ]
    return "\n".join(lines) + "\n"


def cmd_check(args) -> int:
    try:
        domain = normalize_name(args.domain)
    except InvalidName as exc:
        raise CliError(f"invalid domain {args.domain!r}: {exc}", EX_USAGE) from None
    auditor = _auditor(args)
    audit = auditor.audit(domain)
    if args.format == "ndjson":
        sys.stdout.write(to_stored(audit, "check", time.time()).to_json() + "\n")
    else:
        sys.stdout.write(render_check(audit, auditor))
    if audit.excluded:
        return EX_UNRESOLVABLE
    return EX_FAILED if any(o.failed for o in audit.outcomes) else EX_OK


# batch -------------------------------------------------------------------------


def cmd_batch(args) -> int:
    try:
        domains = read_domains(args.input)
    except FileNotFoundError:
        raise CliError(f"input file not found: {args.input}", EX_NOINPUT) from None
    except InvalidName as exc:
        raise CliError(f"{args.input}: {exc}", EX_DATAERR) from None
    except ValueError as exc:
        raise CliError(f"{args.input}: {exc}", EX_DATAERR) from None
    try:
        batch = plan(domains, args.seed, args.rate, args.parallelism)
    except ValueError as exc:
        raise CliError(str(exc), EX_USAGE if domains else EX_DATAERR) from None
    auditor = _auditor(args)
    run_id = args.run_id or time.strftime("run-%Y%m%dT%H%M%SZ", time.gmtime())
    print(f"plan: {batch.summary()}; run id {run_id}", file=sys.stderr)

    def progress(stats: BatchStats) -> None:
        if args.progress_every and stats.written % args.progress_every == 0:
            print(f"progress: {stats.written}/{len(batch.domains) - stats.skipped} "
                  f"(completed {stats.completed}, excluded {stats.excluded}, aborted {stats.aborted})",
                  file=sys.stderr)

    try:
        stats = run_batch(batch, auditor, ReportStore(args.store), run_id, progress)
    except StoreError as exc:
        raise CliError(str(exc), EX_DATAERR) from None
    except KeyboardInterrupt:
        print("interrupted; stored reports are kept, rerun with the same --run-id to resume", file=sys.stderr)
        return EX_ABORTED
    rate = "unlimited" if math.isinf(stats.configured_rate) else f"{stats.configured_rate:g}/s"
    print(f"completed {stats.completed}, excluded {stats.excluded}, aborted {stats.aborted}, "
          f"skipped {stats.skipped}; elapsed {stats.elapsed:.1f} s; "
          f"configured rate {rate}, effective rate {stats.effective_rate:.2f}/s")
    if stats.interrupted:
        print(f"batch stopped early: {stats.error}", file=sys.stderr)
        return EX_ABORTED
    return EX_OK


# report ------------------------------------------------------------------------


def cmd_report(args) -> int:
    store = ReportStore(args.store)
    if not store.path.exists():
        raise CliError(f"store not found: {args.store}", EX_NOINPUT)
    try:
        weights = load_weights(args.weights)
    except FileNotFoundError:
        raise CliError(f"weights file not found: {args.weights}", EX_NOINPUT) from None
    except WeightError as exc:
        raise CliError(f"{args.weights}: {exc}", EX_DATAERR) from None
    try:
        reports = store.read()
        summary = summarize(reports, weights, args.eq3_literal, args.run_id, args.label or store.path.stem,
                            args.cdf_step)
    except StoreError as exc:
        raise CliError(str(exc), EX_DATAERR) from None
    except EmptyDataset as exc:
        raise CliError(f"{args.store}: {exc}", EX_DATAERR) from None
    except ValueError as exc:
        raise CliError(str(exc), EX_USAGE) from None
    tests = args.top_servers or list(IMPACT_TESTS)
    impacts = [server_impact(reports, t, args.k, args.run_id) for t in tests]
    try:
        paths = emit_reports(summary, impacts, args.out)
    except ReportWriteError as exc:
        raise CliError(str(exc), EX_CANTCREAT) from None
    print(f"{summary.completed} completed, {summary.excluded} excluded of {summary.total}; "
          f"M_max {summary.m_max:g}")
    for p in paths:
        print(f"wrote {p}")
    return EX_OK


# fixtures ----------------------------------------------------------------------


def cmd_fixtures(args) -> int:
    if args.action == "list":
        for name in bundled_fixtures():
            print(name)
        return EX_OK
    if not args.fixture:
        raise CliError(f"fixtures {args.action} needs a fixture name or path", EX_USAGE)
    universe = _load_fixture(args.fixture)
    if args.action == "check":
        print(f"{args.fixture}: {len(universe.servers)} servers, {len(universe.zones)} zones, "
              f"{len(universe.roots)} root(s)")
        return EX_OK
    with serve_loopback(universe, args.host) as port_map:
        for address, (host, port) in sorted(port_map.items()):
            print(f"{address} -> {host}:{port}", flush=True)
        print("serving; press Ctrl-C to stop", file=sys.stderr, flush=True)
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            pass
    return EX_OK


# parser ------------------------------------------------------------------------


def _rate(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("rate must be positive (use 'inf' for unlimited)")
    return value


def _test_id(text: str) -> TestId:
    try:
        return TestId(int(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"no test with ordinal {text}") from None


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dnsaudit", description="Audit DNS delegations for common misconfigurations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def audit_options(p):
        p.add_argument("--fixture", metavar="F", help="query a simulated universe (.zl path or bundled name)")
        p.add_argument("--weights", metavar="W", help="weights file: '<ordinal> <weight> <S|1>' per line")
        p.add_argument("--roots", metavar="R", help="root hints file for live queries")
        p.add_argument("--eq3-literal", action="store_true", help="scale per-server tests with max(1, P/0.5)")

    check = sub.add_parser("check", help="audit one domain")
    check.add_argument("domain")
    audit_options(check)
    check.add_argument("--format", choices=("table", "ndjson"), default="table")
    check.set_defaults(func=cmd_check)

    batch = sub.add_parser("batch", help="audit a list of domains into a store")
    batch.add_argument("--input", required=True, metavar="FILE")
    batch.add_argument("--store", required=True, metavar="FILE")
    batch.add_argument("--rate", type=_rate, default=DEFAULT_RATE, help="audits started per second")
    batch.add_argument("--seed", type=int, help="shuffle seed (random when omitted)")
    batch.add_argument("--parallelism", type=_positive_int, default=DEFAULT_PARALLELISM)
    batch.add_argument("--run-id", metavar="ID", help="resume key; reuse it to continue an interrupted run")
    batch.add_argument("--progress-every", type=int, default=10, metavar="N")
    audit_options(batch)
    batch.set_defaults(func=cmd_batch)

    report = sub.add_parser("report", help="write CSV analyses of a store")
    report.add_argument("--store", required=True, metavar="FILE")
    report.add_argument("--out", required=True, metavar="DIR")
    report.add_argument("--top-servers", type=_test_id, action="append", metavar="TESTID",
                        help="rank servers for this test (repeatable; default 4, 5, 7, 8)")
    report.add_argument("--k", type=_positive_int, default=IMPACT_K, metavar="N")
    report.add_argument("--cdf-step", type=float, default=0.1, metavar="X")
    report.add_argument("--weights", metavar="W")
    report.add_argument("--eq3-literal", action="store_true")
    report.add_argument("--run-id", metavar="ID", help="only use records of this run")
    report.add_argument("--label", help="dataset label (default: store file name)")
    report.set_defaults(func=cmd_report)

    fixtures = sub.add_parser("fixtures", help="list, validate or serve fixture universes")
    fixtures.add_argument("action", choices=("list", "check", "serve"))
    fixtures.add_argument("fixture", nargs="?")
    fixtures.add_argument("--host", default="127.0.0.1")
    fixtures.set_defaults(func=cmd_fixtures)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"dnsaudit: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
