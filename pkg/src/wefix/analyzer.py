"""Trace analysis: pruning, background detection, flakiness classification, stats.

A command is flaky-prone when at least one GUI-relevant mutation lands
strictly after the command's promise settles: an assertion scheduled right
after the command could then run against a DOM that is still changing.

A mutation's relative time (RT) is measured against the start of the next
command; for the last command there is no successor, so RT falls back to that
command's own settle time.  Negative RT means the mutation finished before
the reference point.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, replace
from enum import Enum

from .trace import MutationLog, MutationRecord, CommandSpan

# Background/periodic mutation detection defaults: a signature must repeat at
# least this often and tick this regularly before it is written off as
# animation noise unrelated to any command.
MIN_BACKGROUND_OCCURRENCES = 3
BACKGROUND_CV_THRESHOLD = 0.2


class EmptyLog(ValueError):
    """Raised when stats are requested for a log without command spans."""


class PruneReason(str, Enum):
    OUTSIDE_BODY = "outside_body"
    NO_CSS_EFFECT = "no_css_effect"
    INVISIBLE_TARGET = "invisible_target"
    BACKGROUND = "background"


@dataclass(frozen=True, slots=True)
class PruneResult:
    kept: tuple[MutationRecord, ...]
    pruned: tuple[tuple[MutationRecord, PruneReason], ...]


def prune_gui_irrelevant(mutations: tuple[MutationRecord, ...]) -> PruneResult:
    """Drop mutations a user could never see; first matching rule wins."""
    kept: list[MutationRecord] = []
    pruned: list[tuple[MutationRecord, PruneReason]] = []
    for m in mutations:
        if not m.in_body:
            pruned.append((m, PruneReason.OUTSIDE_BODY))
        elif not m.css_effective:
            pruned.append((m, PruneReason.NO_CSS_EFFECT))
        elif not m.visible:
            pruned.append((m, PruneReason.INVISIBLE_TARGET))
        else:
            kept.append(m)
    return PruneResult(kept=tuple(kept), pruned=tuple(pruned))


def background_signature(m: MutationRecord) -> tuple[str, str, str | None]:
    attr = m.attr_change.name if m.attr_change is not None else None
    return (m.target.xpath, m.kind, attr)


def _interarrival_cv(times: list[int]) -> float:
    intervals = [b - a for a, b in zip(times, times[1:])]
    mean = statistics.fmean(intervals)
    if mean <= 0:
        return 0.0 if all(i == 0 for i in intervals) else float("inf")
    return statistics.pstdev(intervals) / mean


def detect_background(
    log: MutationLog,
    baseline: MutationLog | None = None,
    *,
    min_occurrences: int = MIN_BACKGROUND_OCCURRENCES,
    cv_threshold: float = BACKGROUND_CV_THRESHOLD,
) -> set[tuple[int, int]]:
    """Identify periodic/background mutations as (cmd_id, seq) pairs.

    Two routes flag a signature (xpath, kind, attr_name): it also fired in a
    no-interaction baseline recording, or it repeats >= min_occurrences times
    with inter-arrival coefficient of variation below cv_threshold.  Both
    routes stay active when a baseline is supplied.
    """
    if min_occurrences < 2:
        raise ValueError("min_occurrences must allow at least one interval")
    baseline_signatures = set()
    if baseline is not None:
        for _, m in baseline.iter_mutations():
            baseline_signatures.add(background_signature(m))

    by_signature: dict[tuple, list[tuple[int, int, int]]] = {}
    for span, m in log.iter_mutations():
        by_signature.setdefault(background_signature(m), []).append((m.t_ms, span.cmd_id, m.seq))

    flagged: set[tuple[int, int]] = set()
    for sig, hits in by_signature.items():
        if sig in baseline_signatures:
            flagged.update((cmd_id, seq) for _, cmd_id, seq in hits)
            continue
        if len(hits) >= min_occurrences:
            times = [t for t, _, _ in sorted(hits)]
            if _interarrival_cv(times) < cv_threshold:
                flagged.update((cmd_id, seq) for _, cmd_id, seq in hits)
    return flagged


def prune_log(
    log: MutationLog,
    baseline: MutationLog | None = None,
    *,
    min_occurrences: int = MIN_BACKGROUND_OCCURRENCES,
    cv_threshold: float = BACKGROUND_CV_THRESHOLD,
) -> tuple[MutationLog, dict[int, PruneResult]]:
    """Apply GUI-irrelevance rules then background removal to every span.

    Returns the pruned log plus the per-command prune verdicts.  GUI
    irrelevance is judged per mutation and takes priority; background
    detection runs over the original log so regular ticks stay detectable
    even when some occurrences were already pruned for other reasons.
    """
    background = detect_background(
        log, baseline, min_occurrences=min_occurrences, cv_threshold=cv_threshold
    )
    results: dict[int, PruneResult] = {}
    new_spans = []
    for span in log.spans:
        base = prune_gui_irrelevant(span.mutations)
        kept = []
        pruned = list(base.pruned)
        for m in base.kept:
            if (span.cmd_id, m.seq) in background:
                pruned.append((m, PruneReason.BACKGROUND))
            else:
                kept.append(m)
        results[span.cmd_id] = PruneResult(kept=tuple(kept), pruned=tuple(pruned))
        new_spans.append(replace(span, mutations=tuple(kept)))
    pruned_log = replace(log, spans=tuple(new_spans))
    return pruned_log, results


def classify_flaky_prone(span: CommandSpan, kept: tuple[MutationRecord, ...]) -> bool:
    """Flaky-prone: some kept mutation lands strictly after the settle time."""
    return any(m.t_ms > span.settle_ms for m in kept)


def _rt_reference_ms(log: MutationLog, index: int) -> int:
    if index + 1 < len(log.spans):
        return log.spans[index + 1].start_ms
    return log.spans[index].settle_ms


def iter_rts(log: MutationLog):
    """Yield (span, mutation, rt_ms) over every mutation in the log."""
    for i, span in enumerate(log.spans):
        ref = _rt_reference_ms(log, i)
        for m in span.mutations:
            yield span, m, m.t_ms - ref


@dataclass(frozen=True, slots=True)
class CommandStats:
    cmd_id: int
    name: str
    mutation_count: int
    latest_rt_ms: int | None
    flaky_prone: bool


@dataclass(frozen=True, slots=True)
class SuiteStats:
    suite_name: str
    command_count: int
    mutation_count: int
    avg_rt_ms: float | None
    avg_latest_rt_ms: float | None
    pct_flaky_prone: float
    per_command: tuple[CommandStats, ...]


def compute_stats(log: MutationLog) -> SuiteStats:
    """Summarize a pruned log; the caller applies pruning first.

    avg_latest_rt_ms averages the last mutation's RT across commands that
    kept at least one mutation; commands without mutations still count in the
    flaky-prone denominator.
    """
    if not log.spans:
        raise EmptyLog("log has no command spans")
    all_rts: list[int] = []
    per_command: list[CommandStats] = []
    latest_rts: list[int] = []
    flaky_count = 0
    for i, span in enumerate(log.spans):
        ref = _rt_reference_ms(log, i)
        rts = [m.t_ms - ref for m in span.mutations]
        all_rts.extend(rts)
        latest = rts[-1] if rts else None
        if latest is not None:
            latest_rts.append(latest)
        flaky = classify_flaky_prone(span, span.mutations)
        flaky_count += flaky
        per_command.append(
            CommandStats(
                cmd_id=span.cmd_id,
                name=span.name,
                mutation_count=len(span.mutations),
                latest_rt_ms=latest,
                flaky_prone=flaky,
            )
        )
    return SuiteStats(
        suite_name=log.suite_name,
        command_count=len(log.spans),
        mutation_count=len(all_rts),
        avg_rt_ms=statistics.fmean(all_rts) if all_rts else None,
        avg_latest_rt_ms=statistics.fmean(latest_rts) if latest_rts else None,
        pct_flaky_prone=100.0 * flaky_count / len(log.spans),
        per_command=tuple(per_command),
    )


def rt_cdf(log: MutationLog, bucket_ms: int = 100) -> list[tuple[int, float]]:
    """Cumulative RT distribution over bucket upper bounds.

    Buckets are consecutive multiples of bucket_ms from the lowest to the
    highest occupied bound, so the curve plots as monotone steps ending at 1.
    """
    if bucket_ms <= 0:
        raise ValueError("bucket_ms must be positive")
    rts = [rt for _, _, rt in iter_rts(log)]
    if not rts:
        return []
    bounds = [-(-rt // bucket_ms) * bucket_ms for rt in rts]
    lo, hi = min(bounds), max(bounds)
    total = len(bounds)
    rows: list[tuple[int, float]] = []
    seen = 0
    bound = lo
    counts: dict[int, int] = {}
    for b in bounds:
        counts[b] = counts.get(b, 0) + 1
    while bound <= hi:
        seen += counts.get(bound, 0)
        rows.append((bound, seen / total))
        bound += bucket_ms
    return rows
