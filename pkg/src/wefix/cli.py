"""Command-line entry point wiring the pipeline together.

Subcommands: instrument, analyze, fix, simulate, report, strip.  Every run
is deterministic for fixed inputs and --seed (default 0, never entropy);
timestamps in outputs come from the logs, never the clock.

Exit codes: 0 success, 1 usage error, 2 data error (malformed log, source
that cannot be parsed, mismatched inputs), 3 partial success (some files
skipped; details on stderr).
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import analyzer, fsm, simulator, transformer
from .trace import LogFormatError, MutationLog, parse_log

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3

_DEFAULT_STRATEGIES = "none,implicit:100,implicit:500,implicit:1000,implicit:2000,explicit"


class _Usage(Exception):
    pass


class _DataError(Exception):
    pass


def _read(path: str) -> str:
    # bytes first: read_text would fold CRLF and break byte-exact round trips
    try:
        return Path(path).read_bytes().decode("utf-8")
    except OSError as exc:
        raise _DataError(f"{path}: {exc.strerror or exc}") from exc


def _write(path: Path, text: str) -> None:
    path.write_bytes(text.encode("utf-8"))


def _load_log(path: str) -> MutationLog:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise _DataError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return parse_log(data)
    except LogFormatError as exc:
        raise _DataError(f"{path}: {exc}") from exc


def _write_csv(path: str, header: list[str], rows: list[list[object]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt_ms(value: float | None) -> str:
    return "-" if value is None else f"{value:.1f}"


# --- instrument ---------------------------------------------------------------


def _iter_js_files(root: Path) -> list[Path]:
    if root.is_file():
        return [root]
    return sorted(p for p in root.rglob("*.js") if p.is_file())


def _cmd_instrument(args: argparse.Namespace) -> int:
    src_root = Path(args.path)
    if not src_root.exists():
        raise _DataError(f"{args.path}: no such file or directory")
    out_root = Path(args.out)
    files = _iter_js_files(src_root)
    if not files:
        raise _DataError(f"{args.path}: no .js files found")

    def work(path: Path) -> tuple[Path, str | None, str | None]:
        rel = path.relative_to(src_root) if src_root.is_dir() else Path(path.name)
        source = _read(str(path))
        try:
            scan = transformer.scan_source(source, args.framework, file=str(path))
        except transformer.ParseFailure as exc:
            return rel, None, str(exc)
        if scan.issues:
            notes = "; ".join(f"line {i.line}: {i.message}" for i in scan.issues)
            return rel, None, f"{path}: skipped ({notes})"
        if not scan.sites:
            return rel, source, None  # nothing to hook; copy through
        try:
            return rel, transformer.instrument_recording(source, args.framework, file=str(path)), None
        except transformer.AlreadyInstrumented as exc:
            return rel, None, f"{path}: {exc}"

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(work, files))

    skipped = 0
    for rel, text, err in results:
        if text is None:
            skipped += 1
            print(f"skip: {err}", file=sys.stderr)
            continue
        dest = out_root / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        _write(dest, text)
    for asset in transformer.RUNTIME_ASSETS[args.framework]:
        _write(out_root / asset, transformer.runtime_source(asset))
    done = len(results) - skipped
    print(f"instrumented {done} file(s) -> {out_root}")
    return EXIT_PARTIAL if skipped else EXIT_OK


# --- analyze -------------------------------------------------------------------


def _analyze_log(args: argparse.Namespace) -> tuple[MutationLog, analyzer.SuiteStats, dict[int, analyzer.PruneResult]]:
    log = _load_log(args.log)
    baseline = _load_log(args.baseline) if args.baseline else None
    pruned_log, details = analyzer.prune_log(
        log,
        baseline,
        min_occurrences=args.min_occurrences,
        cv_threshold=args.cv_threshold,
    )
    try:
        stats = analyzer.compute_stats(pruned_log)
    except analyzer.EmptyLog as exc:
        raise _DataError(f"{args.log}: {exc}") from exc
    return pruned_log, stats, details


def _print_stats(stats: analyzer.SuiteStats, pruned_log: MutationLog, details: dict[int, analyzer.PruneResult]) -> None:
    dropped = sum(len(d.pruned) for d in details.values())
    print(f"suite: {stats.suite_name or '(unnamed)'}")
    print(f"commands: {stats.command_count}  mutations kept: {stats.mutation_count}  pruned: {dropped}")
    print(
        f"avg RT: {_fmt_ms(stats.avg_rt_ms)} ms  "
        f"avg latest RT: {_fmt_ms(stats.avg_latest_rt_ms)} ms  "
        f"flaky-prone: {stats.pct_flaky_prone:.1f}%"
    )
    print()
    print(f"{'cmd':>4}  {'name':<14}{'loc':<28}{'muts':>5}  {'latest RT':>10}  flaky")
    for span, cmd in zip(pruned_log.spans, stats.per_command):
        loc = str(span.source_loc)
        print(
            f"{cmd.cmd_id:>4}  {cmd.name:<14}{loc:<28}{cmd.mutation_count:>5}  "
            f"{_fmt_ms(cmd.latest_rt_ms):>10}  {'yes' if cmd.flaky_prone else 'no'}"
        )


def _cmd_analyze(args: argparse.Namespace) -> int:
    pruned_log, stats, details = _analyze_log(args)
    _print_stats(stats, pruned_log, details)
    if args.stats_csv:
        _write_csv(
            args.stats_csv,
            ["suite", "command_count", "mutation_count", "avg_rt_ms", "avg_latest_rt_ms", "pct_flaky_prone"],
            [[
                stats.suite_name,
                stats.command_count,
                stats.mutation_count,
                "" if stats.avg_rt_ms is None else f"{stats.avg_rt_ms:.3f}",
                "" if stats.avg_latest_rt_ms is None else f"{stats.avg_latest_rt_ms:.3f}",
                f"{stats.pct_flaky_prone:.3f}",
            ]],
        )
    if args.cdf_csv:
        cdf = analyzer.rt_cdf(pruned_log, bucket_ms=args.bucket_ms)
        _write_csv(args.cdf_csv, ["rt_ms", "cum_fraction"], [[ms, f"{frac:.6f}"] for ms, frac in cdf])
    return EXIT_OK


# --- fix -----------------------------------------------------------------------


def _infer_dialect(source: str, file: str, log: MutationLog) -> str:
    """Pick the dialect whose command sites line up with the recorded spans."""
    matches = []
    for dialect in transformer.DIALECTS:
        try:
            sites = transformer.find_commands(source, dialect, file=file)
        except transformer.ParseFailure:
            continue
        if len(sites) == len(log.spans) and all(s.name == sp.name for s, sp in zip(sites, log.spans)):
            matches.append(dialect)
    if len(matches) == 1:
        return matches[0]
    if not matches:
        raise _DataError(
            f"{file}: no dialect matches the log ({len(log.spans)} recorded commands); pass --framework"
        )
    raise _DataError(f"{file}: ambiguous dialect ({', '.join(matches)}); pass --framework")


def build_fix_plan(
    source: str,
    log: MutationLog,
    *,
    file: str = "<memory>",
    framework: str | None = None,
    max_props: int = fsm.DEFAULT_MAX_PROPS,
    poll_ms: int = fsm.DEFAULT_POLL_MS,
    timeout_ms: int = fsm.DEFAULT_TIMEOUT_MS,
    min_occurrences: int = analyzer.MIN_BACKGROUND_OCCURRENCES,
    cv_threshold: float = analyzer.BACKGROUND_CV_THRESHOLD,
    baseline: MutationLog | None = None,
) -> transformer.FixPlan:
    """Match recorded spans to source sites and plan one wait per flaky-prone
    command.  Span k corresponds to site k in the scan order."""
    dialect = framework or _infer_dialect(source, file, log)
    sites = transformer.find_commands(source, dialect, file=file)
    if len(sites) != len(log.spans):
        raise _DataError(
            f"{file}: {len(sites)} command site(s) for dialect {dialect} "
            f"but the log records {len(log.spans)}"
        )
    for site, span in zip(sites, log.spans):
        if site.name != span.name:
            raise _DataError(
                f"{file}:{site.line}: command {site.name!r} does not match recorded {span.name!r} "
                f"(cmd {span.cmd_id})"
            )
    pruned_log, _ = analyzer.prune_log(
        log, baseline, min_occurrences=min_occurrences, cv_threshold=cv_threshold
    )
    insertions = []
    for site, span in zip(sites, pruned_log.spans):
        if not analyzer.classify_flaky_prone(span, span.mutations):
            continue
        machine = fsm.build_fsm(span)
        end = fsm.end_state(machine)
        try:
            oracle = fsm.generate_oracle(end, max_props=max_props, poll_ms=poll_ms, timeout_ms=timeout_ms)
        except fsm.NoMutatedProperty:
            continue
        snippet = fsm.render_oracle(oracle, dialect, driver_var=site.chain_root or "driver")
        insertions.append((site, snippet))
    return transformer.FixPlan(
        file=file,
        dialect=dialect,
        mode=transformer.PlanMode.EXPLICIT_WAITS,
        insertions=tuple(insertions),
    )


def _cmd_fix(args: argparse.Namespace) -> int:
    source = _read(args.file)
    log = _load_log(args.log)
    plan = build_fix_plan(
        source,
        log,
        file=args.file,
        framework=args.framework,
        max_props=args.max_props,
        poll_ms=args.poll_ms,
        timeout_ms=args.timeout_ms,
        min_occurrences=args.min_occurrences,
        cv_threshold=args.cv_threshold,
        baseline=_load_log(args.baseline) if args.baseline else None,
    )
    if args.dry_run:
        if not plan.insertions:
            print("no flaky-prone commands; nothing to do")
            return EXIT_OK
        for site, snippet in plan.insertions:
            print(f"{site.file}:{site.line} after {site.name}:")
            for line in snippet.splitlines():
                print(f"    {line}")
            print()
        return EXIT_OK
    fixed = transformer.insert_waits(source, plan)
    out = args.out or args.file
    _write(Path(out), fixed)
    print(f"wrote {out} ({len(plan.insertions)} wait(s))")
    return EXIT_OK


# --- simulate ------------------------------------------------------------------


def _parse_strategies(text: str) -> list[simulator.Strategy]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        try:
            if bits[0] == "none" and len(bits) == 1:
                out.append(simulator.Strategy.none())
            elif bits[0] == "implicit" and len(bits) == 2:
                out.append(simulator.Strategy.implicit(float(bits[1])))
            elif bits[0] == "explicit" and len(bits) == 1:
                out.append(simulator.Strategy.explicit())
            elif bits[0] == "explicit" and len(bits) == 3:
                out.append(simulator.Strategy.explicit(int(bits[1]), int(bits[2])))
            else:
                raise ValueError(f"unknown strategy {part!r}")
        except ValueError as exc:
            raise _Usage(str(exc)) from exc
    if not out:
        raise _Usage("empty strategy list")
    return out


def _run_simulation(args: argparse.Namespace) -> tuple[simulator.SimReport, simulator.CorpusSummary]:
    strategies = _parse_strategies(args.strategies)
    suite, summary = simulator.gen_corpus(simulator.CorpusSpec(), args.tests, args.seed)
    report = simulator.evaluate(suite, strategies, reruns=args.reruns, seed=args.seed)
    return report, summary


def _print_sim(report: simulator.SimReport, summary: simulator.CorpusSummary) -> None:
    print(
        f"corpus: {summary.test_count} tests, {summary.command_count} commands "
        f"({summary.flaky_command_count} flaky-prone), "
        f"p95 delay {summary.achieved_p95_delay_ms:.0f} ms, "
        f"mean latest RT {summary.mean_primary_delay_ms:.0f} ms"
    )
    print(f"reruns: {report.reruns}  seed: {report.seed}")
    print(
        f"recording pass: {report.recording_time_ms / 1000:.1f} s "
        f"({report.recording_overhead:.2f}x baseline, one-time)"
    )
    print()
    print(f"{'strategy':<16}{'fix rate':>9}  {'fixed':>11}  {'overhead':>9}  {'timeouts':>9}")
    for s in report.strategies:
        print(
            f"{s.label:<16}{s.fix_rate:>9.3f}  {s.fixed_count:>5}/{s.test_count:<5}  "
            f"{s.overhead:>8.2f}x  {s.timeout_count:>9}"
        )


def _sim_csv_rows(report: simulator.SimReport) -> list[list[object]]:
    return [
        [s.label, f"{s.fix_rate:.6f}", s.fixed_count, s.test_count, f"{s.overhead:.6f}",
         f"{s.mean_suite_time_ms:.3f}", s.timeout_count]
        for s in report.strategies
    ]


def _cmd_simulate(args: argparse.Namespace) -> int:
    report, summary = _run_simulation(args)
    _print_sim(report, summary)
    if args.csv:
        _write_csv(
            args.csv,
            ["strategy", "fix_rate", "fixed", "tests", "overhead", "mean_suite_ms", "timeouts"],
            _sim_csv_rows(report),
        )
    return EXIT_OK


# --- report --------------------------------------------------------------------


def _cmd_report(args: argparse.Namespace) -> int:
    pruned_log, stats, details = _analyze_log(args)
    print("== recorded suite ==")
    _print_stats(stats, pruned_log, details)
    print()
    print("== wait-strategy simulation ==")
    report, summary = _run_simulation(args)
    _print_sim(report, summary)
    if args.stats_csv or args.cdf_csv:
        _cmd_analyze(args)
    if args.csv:
        _write_csv(
            args.csv,
            ["strategy", "fix_rate", "fixed", "tests", "overhead", "mean_suite_ms", "timeouts"],
            _sim_csv_rows(report),
        )
    return EXIT_OK


# --- strip ---------------------------------------------------------------------


def _cmd_strip(args: argparse.Namespace) -> int:
    root = Path(args.path)
    if not root.exists():
        raise _DataError(f"{args.path}: no such file or directory")
    files = _iter_js_files(root)
    skipped = 0
    for path in files:
        source = _read(str(path))
        try:
            stripped = transformer.strip_hooks(source)
        except transformer.UnbalancedSentinels as exc:
            skipped += 1
            print(f"skip: {path}: {exc}", file=sys.stderr)
            continue
        if args.out:
            dest = Path(args.out) / path.relative_to(root) if root.is_dir() else Path(args.out)
            dest.parent.mkdir(parents=True, exist_ok=True)
        else:
            dest = path
        if stripped != source or dest != path:
            _write(dest, stripped)
            if stripped != source:
                print(f"stripped {path}")
    return EXIT_PARTIAL if skipped else EXIT_OK


# --- parser --------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        # argparse exits 2 on usage problems; the contract reserves 2 for data
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_analyze_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("log", help="mutation log recorded by an instrumented run")
    p.add_argument("--baseline", help="idle-page mutation log for background filtering")
    p.add_argument("--min-occurrences", type=int, default=analyzer.MIN_BACKGROUND_OCCURRENCES)
    p.add_argument("--cv-threshold", type=float, default=analyzer.BACKGROUND_CV_THRESHOLD)
    p.add_argument("--bucket-ms", type=int, default=100, help="CDF bucket width")
    p.add_argument("--stats-csv", help="write suite stats CSV here")
    p.add_argument("--cdf-csv", help="write RT CDF CSV here")


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tests", type=int, default=170, help="synthetic corpus size")
    p.add_argument("--reruns", type=int, default=simulator.DEFAULT_RERUNS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strategies", default=_DEFAULT_STRATEGIES,
                   help="comma list: none, implicit:<ms>, explicit[:<poll>:<timeout>]")
    p.add_argument("--csv", help="write per-strategy results CSV here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wefix", description="Record, diagnose, and repair UI-timing flakiness in e2e suites.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    p = sub.add_parser("instrument", parents=[], help="add recording hooks to test files")
    p.add_argument("path", help="test file or directory")
    p.add_argument("--framework", required=True, choices=transformer.DIALECTS)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_instrument)

    p = sub.add_parser("analyze", help="summarize a mutation log")
    _add_analyze_flags(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("fix", help="insert explicit waits from a recording")
    p.add_argument("file", help="original (uninstrumented) test file")
    p.add_argument("--log", required=True, help="mutation log for this file's commands")
    p.add_argument("--out", help="output file (default: overwrite input)")
    p.add_argument("--framework", choices=transformer.DIALECTS, help="override dialect inference")
    p.add_argument("--dry-run", action="store_true", help="print planned waits, write nothing")
    p.add_argument("--max-props", type=int, default=fsm.DEFAULT_MAX_PROPS)
    p.add_argument("--poll-ms", type=int, default=fsm.DEFAULT_POLL_MS)
    p.add_argument("--timeout-ms", type=int, default=fsm.DEFAULT_TIMEOUT_MS)
    p.add_argument("--baseline", help="idle-page mutation log for background filtering")
    p.add_argument("--min-occurrences", type=int, default=analyzer.MIN_BACKGROUND_OCCURRENCES)
    p.add_argument("--cv-threshold", type=float, default=analyzer.BACKGROUND_CV_THRESHOLD)
    p.set_defaults(func=_cmd_fix)

    p = sub.add_parser("simulate", help="compare wait strategies on a synthetic corpus")
    _add_sim_flags(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("report", help="analyze a log and run the simulation in one summary")
    _add_analyze_flags(p)
    _add_sim_flags(p)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("strip", help="remove recording hooks and inserted waits")
    p.add_argument("path", help="test file or directory")
    p.add_argument("--out", help="output file or directory (default: in place)")
    p.set_defaults(func=_cmd_strip)
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse raises for -h too; preserve its code unless it used 2
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
        return EXIT_USAGE if code == 2 else code
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _Usage as exc:
        print(f"wefix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DataError as exc:
        print(f"wefix: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (LogFormatError, transformer.ParseFailure, transformer.StaleSites,
            transformer.DialectMismatch, transformer.AlreadyInstrumented,
            transformer.UnbalancedSentinels, analyzer.EmptyLog, ValueError) as exc:
        print(f"wefix: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    raise SystemExit(run_cli())


if __name__ == "__main__":
    main()
