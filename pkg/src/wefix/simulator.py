"""Discrete-event model of wait strategies over a flaky e2e suite.

Each command settles after its base duration; its mutations land at
settle + delay, with delays resampled per rerun.  An assertion executes
immediately after the preceding command's strategy wait (evaluation itself
costs nothing) and passes when every mutation it depends on has happened by
then; a mutation is visible from its occurrence time onward.

Strategies:
  none       no waiting; the next command starts at settle.
  implicit   a fixed wait after every command.
  explicit   a synthesized oracle after every command the recording run saw
             as flaky-prone; at trial time it polls until the command's
             dependency mutations have landed, bounded by the timeout.

The explicit strategy models a repaired test: which commands carry oracles
is decided by a recording pass with its own sampled delays, while each trial
resamples, so a recording that saw nothing after settle leaves a command
unprotected.  Overhead compares suite time against the none strategy; the
recording pass itself (base durations plus listen windows) is reported as a
separate one-time cost.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .trace import (
    AttrChange,
    ChildChange,
    CommandSpan,
    ElementLocator,
    MutationLog,
    MutationRecord,
    SourceLoc,
    TextChange,
)
from .window import compute_window

DEFAULT_POLL_MS = 100
DEFAULT_TIMEOUT_MS = 4000
DEFAULT_RERUNS = 10


class BadDistribution(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class DelaySpec:
    """Sampling spec for a mutation delay (ms relative to settle).

    kinds: fixed(value) | uniform(lo, hi) | lognormal(mu, sigma[, cap_ms])
           | scaled_primary(factor) which reuses the command's first sampled
           delay times factor, keeping the first mutation the latest one.
    """

    kind: str
    value: float | None = None
    lo: float | None = None
    hi: float | None = None
    mu: float | None = None
    sigma: float | None = None
    cap_ms: float | None = None
    factor: float | None = None

    def __post_init__(self) -> None:
        if self.kind == "fixed":
            if self.value is None:
                raise BadDistribution("fixed delay needs value")
        elif self.kind == "uniform":
            if self.lo is None or self.hi is None or self.hi < self.lo:
                raise BadDistribution("uniform delay needs lo <= hi")
        elif self.kind == "lognormal":
            if self.mu is None or self.sigma is None or self.sigma <= 0:
                raise BadDistribution("lognormal delay needs mu and sigma > 0")
            if self.cap_ms is not None and self.cap_ms <= 0:
                raise BadDistribution("cap_ms must be positive")
        elif self.kind == "scaled_primary":
            if self.factor is None or not 0 < self.factor <= 1:
                raise BadDistribution("scaled_primary needs factor in (0, 1]")
        else:
            raise BadDistribution(f"unknown delay kind {self.kind!r}")

    def sample(self, rng: random.Random, primary: float | None = None) -> float:
        if self.kind == "fixed":
            return float(self.value)  # type: ignore[arg-type]
        if self.kind == "uniform":
            return rng.uniform(float(self.lo), float(self.hi))  # type: ignore[arg-type]
        if self.kind == "lognormal":
            v = rng.lognormvariate(float(self.mu), float(self.sigma))  # type: ignore[arg-type]
            return min(v, float(self.cap_ms)) if self.cap_ms is not None else v
        if primary is None:
            raise BadDistribution("scaled_primary delay outside a command context")
        return float(self.factor) * primary  # type: ignore[arg-type]


@dataclass(frozen=True, slots=True)
class SimMutation:
    prop: str  # synthetic property label, e.g. "text@//*[@id=\"e1\"]"
    delay: DelaySpec


@dataclass(frozen=True, slots=True)
class SimCommand:
    base_duration_ms: float
    mutations: tuple[SimMutation, ...] = ()

    def __post_init__(self) -> None:
        if self.base_duration_ms <= 0:
            raise ValueError("base_duration_ms must be positive")


@dataclass(frozen=True, slots=True)
class SimAssertion:
    after_cmd: int  # 0-based command index
    depends_on: tuple[tuple[int, int], ...]  # (cmd index, mutation index)


@dataclass(frozen=True, slots=True)
class SimTest:
    test_id: str
    commands: tuple[SimCommand, ...]
    assertions: tuple[SimAssertion, ...] = ()

    def __post_init__(self) -> None:
        for a in self.assertions:
            if not 0 <= a.after_cmd < len(self.commands):
                raise ValueError(f"{self.test_id}: assertion after unknown command {a.after_cmd}")
            for cmd_idx, mut_idx in a.depends_on:
                if cmd_idx > a.after_cmd:
                    raise ValueError(f"{self.test_id}: dependency on a later command {cmd_idx}")
                if not 0 <= mut_idx < len(self.commands[cmd_idx].mutations):
                    raise ValueError(f"{self.test_id}: dependency on unknown mutation {cmd_idx}/{mut_idx}")


@dataclass(frozen=True, slots=True)
class SimSuite:
    tests: tuple[SimTest, ...]


@dataclass(frozen=True, slots=True)
class Strategy:
    kind: str  # "none" | "implicit" | "explicit"
    wait_ms: float = 0.0
    poll_ms: int = DEFAULT_POLL_MS
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    @staticmethod
    def none() -> "Strategy":
        return Strategy("none")

    @staticmethod
    def implicit(wait_ms: float) -> "Strategy":
        if wait_ms < 0:
            raise ValueError("implicit wait must be >= 0")
        return Strategy("implicit", wait_ms=wait_ms)

    @staticmethod
    def explicit(poll_ms: int = DEFAULT_POLL_MS, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> "Strategy":
        if not 10 <= poll_ms <= 1000:
            raise ValueError("poll_ms out of range 10..1000")
        if not 500 <= timeout_ms <= 60000:
            raise ValueError("timeout_ms out of range 500..60000")
        return Strategy("explicit", poll_ms=poll_ms, timeout_ms=timeout_ms)

    @property
    def label(self) -> str:
        if self.kind == "implicit":
            w = self.wait_ms / 1000.0
            return f"implicit-{w:g}s"
        if self.kind == "explicit":
            return "explicit-oracle"
        return "none"


# --- deterministic seeding ----------------------------------------------------

_REC_STREAM = 0x5EC0
_TRIAL_STREAM = 0x7A1A


def _mix(*parts: int) -> int:
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h ^= (p & 0xFFFFFFFFFFFFFFFF) + 0x9E3779B97F4A7C15 + ((h << 6) & 0xFFFFFFFFFFFFFFFF) + (h >> 2)
        h &= 0xFFFFFFFFFFFFFFFF
    return h


def _sample_test_delays(test: SimTest, rng: random.Random) -> list[list[float]]:
    """Sample every mutation delay; draw order is fixed by suite structure."""
    delays: list[list[float]] = []
    for cmd in test.commands:
        primary: float | None = None
        cmd_delays: list[float] = []
        for mut in cmd.mutations:
            d = mut.delay.sample(rng, primary)
            if primary is None:
                primary = d
            cmd_delays.append(d)
        delays.append(cmd_delays)
    return delays


@dataclass(frozen=True, slots=True)
class RecordedProfile:
    """Per-test set of command indices the recording run saw as flaky-prone,
    plus the recording run's total duration (bases + listen windows)."""

    flaky_commands: tuple[frozenset[int], ...]
    recording_time_ms: float


def record_suite(suite: SimSuite, recording_seed: int) -> RecordedProfile:
    """One recording pass: sample delays, mark flaky-prone commands, and
    charge each command its dynamic listen window."""
    flaky: list[frozenset[int]] = []
    total_ms = 0.0
    for t_idx, test in enumerate(suite.tests):
        rng = random.Random(_mix(recording_seed, _REC_STREAM, t_idx))
        delays = _sample_test_delays(test, rng)
        marked = set()
        for c_idx, cmd in enumerate(test.commands):
            post_settle = [d for d in delays[c_idx] if d > 0]
            if post_settle:
                marked.add(c_idx)
            rels = sorted(max(0.0, d) / 1000.0 for d in delays[c_idx])
            window_s = compute_window(rels).omega_final_s
            total_ms += cmd.base_duration_ms + window_s * 1000.0
        flaky.append(frozenset(marked))
    return RecordedProfile(flaky_commands=tuple(flaky), recording_time_ms=total_ms)


@dataclass(frozen=True, slots=True)
class TestOutcome:
    test_id: str
    passed: bool
    failed_assertions: int
    timed_out: bool
    duration_ms: float


@dataclass(frozen=True, slots=True)
class TrialResult:
    outcomes: tuple[TestOutcome, ...]
    suite_time_ms: float


def _dependents_by_command(test: SimTest) -> dict[int, set[int]]:
    deps: dict[int, set[int]] = {}
    for a in test.assertions:
        for cmd_idx, mut_idx in a.depends_on:
            deps.setdefault(cmd_idx, set()).add(mut_idx)
    return deps


def run_trial(
    suite: SimSuite,
    strategy: Strategy,
    seed: int,
    profile: RecordedProfile | None = None,
) -> TrialResult:
    """Run every test once with freshly sampled delays.

    The explicit strategy needs the recording profile; when absent one is
    derived from the same seed, which keeps (suite, strategy, seed) -> result
    a pure function.
    """
    if strategy.kind == "explicit" and profile is None:
        profile = record_suite(suite, seed)
    outcomes: list[TestOutcome] = []
    suite_time = 0.0
    for t_idx, test in enumerate(suite.tests):
        rng = random.Random(_mix(seed, _TRIAL_STREAM, t_idx))
        delays = _sample_test_delays(test, rng)
        dep_map = _dependents_by_command(test)

        occurrence: dict[tuple[int, int], float] = {}
        wait_after: list[float] = []
        timed_out = False
        t = 0.0
        for c_idx, cmd in enumerate(test.commands):
            settle = t + cmd.base_duration_ms
            for m_idx, d in enumerate(delays[c_idx]):
                occurrence[(c_idx, m_idx)] = settle + d
            if strategy.kind == "none":
                wait = 0.0
            elif strategy.kind == "implicit":
                wait = strategy.wait_ms
            else:
                wait = 0.0
                assert profile is not None
                if c_idx in profile.flaky_commands[t_idx]:
                    watched = dep_map.get(c_idx, set())
                    if watched:
                        latest = max(occurrence[(c_idx, m)] for m in watched) - settle
                        if latest > 0:
                            quantized = math.ceil(latest / strategy.poll_ms) * strategy.poll_ms
                            wait = float(min(quantized, strategy.timeout_ms))
                            if latest > strategy.timeout_ms:
                                timed_out = True
            wait_after.append(wait)
            t = settle + wait

        failed = 0
        for a in test.assertions:
            exec_t = sum(c.base_duration_ms for c in test.commands[: a.after_cmd + 1])
            exec_t += sum(wait_after[: a.after_cmd + 1])
            if any(occurrence[dep] > exec_t for dep in a.depends_on):
                failed += 1
        outcomes.append(
            TestOutcome(
                test_id=test.test_id,
                passed=failed == 0,
                failed_assertions=failed,
                timed_out=timed_out,
                duration_ms=t,
            )
        )
        suite_time += t
    return TrialResult(outcomes=tuple(outcomes), suite_time_ms=suite_time)


@dataclass(frozen=True, slots=True)
class StrategyReport:
    label: str
    fix_rate: float
    fixed_count: int
    test_count: int
    overhead: float
    mean_suite_time_ms: float
    timeout_count: int


@dataclass(frozen=True, slots=True)
class SimReport:
    seed: int
    reruns: int
    baseline_suite_time_ms: float
    recording_time_ms: float
    recording_overhead: float
    strategies: tuple[StrategyReport, ...]


def evaluate(
    suite: SimSuite,
    strategies: list[Strategy] | tuple[Strategy, ...],
    reruns: int = DEFAULT_RERUNS,
    seed: int = 0,
) -> SimReport:
    """Rerun the suite under each strategy; a test counts as fixed only when
    it passes every rerun.  Rerun seeds do not depend on the strategy, so the
    same delay samples are replayed across the whole ladder."""
    if not suite.tests:
        raise ValueError("suite has no tests")
    if reruns < 1:
        raise ValueError("reruns must be >= 1")
    profile = record_suite(suite, _mix(seed, _REC_STREAM))
    baseline = sum(c.base_duration_ms for t in suite.tests for c in t.commands)

    reports: list[StrategyReport] = []
    for strategy in strategies:
        passes: dict[str, int] = {t.test_id: 0 for t in suite.tests}
        timeouts = 0
        times: list[float] = []
        for rerun in range(reruns):
            trial = run_trial(suite, strategy, _mix(seed, rerun), profile=profile)
            times.append(trial.suite_time_ms)
            for outcome in trial.outcomes:
                passes[outcome.test_id] += outcome.passed
                timeouts += outcome.timed_out
        fixed = sum(count == reruns for count in passes.values())
        mean_time = sum(times) / len(times)
        reports.append(
            StrategyReport(
                label=strategy.label,
                fix_rate=fixed / len(suite.tests),
                fixed_count=fixed,
                test_count=len(suite.tests),
                overhead=mean_time / baseline,
                mean_suite_time_ms=mean_time,
                timeout_count=timeouts,
            )
        )
    return SimReport(
        seed=seed,
        reruns=reruns,
        baseline_suite_time_ms=baseline,
        recording_time_ms=profile.recording_time_ms,
        recording_overhead=profile.recording_time_ms / baseline,
        strategies=tuple(reports),
    )


# --- corpus generation ---------------------------------------------------------

# Delay calibration: lognormal(mu=5.95, sigma=1.0) has its 95th percentile
# near 1.95s and, clipped at 1999ms, a mean around 570ms, matching observed
# post-settle mutation timing at suite scale.
DELAY_MU = 5.95
DELAY_SIGMA = 1.0
DELAY_CAP_MS = 1999.0

# Command base durations: mean ~800ms keeps a 2s implicit wait between 2x
# and 5x of the unpadded suite runtime.
BASE_MU = 6.6234
BASE_SIGMA = 0.35


@dataclass(frozen=True, slots=True)
class CorpusSpec:
    commands_per_test: tuple[int, int] = (2, 6)
    flaky_fraction: float = 0.657
    mutations_per_flaky: tuple[int, int] = (1, 3)
    base_duration: DelaySpec = field(default_factory=lambda: DelaySpec("lognormal", mu=BASE_MU, sigma=BASE_SIGMA))
    delay: DelaySpec = field(default_factory=lambda: DelaySpec("lognormal", mu=DELAY_MU, sigma=DELAY_SIGMA, cap_ms=DELAY_CAP_MS))
    quiet_mutation_delay: DelaySpec = field(default_factory=lambda: DelaySpec("uniform", lo=-300.0, hi=-10.0))

    def __post_init__(self) -> None:
        lo, hi = self.commands_per_test
        if not 1 <= lo <= hi:
            raise ValueError("commands_per_test must satisfy 1 <= lo <= hi")
        if not 0 <= self.flaky_fraction <= 1:
            raise ValueError("flaky_fraction must be in [0, 1]")
        lo, hi = self.mutations_per_flaky
        if not 1 <= lo <= hi:
            raise ValueError("mutations_per_flaky must satisfy 1 <= lo <= hi")


@dataclass(frozen=True, slots=True)
class CorpusSummary:
    test_count: int
    command_count: int
    flaky_command_count: int
    achieved_p95_delay_ms: float
    mean_primary_delay_ms: float


def gen_corpus(spec: CorpusSpec, n_tests: int, seed: int) -> tuple[SimSuite, CorpusSummary]:
    """Generate a synthetic suite; deterministic for a fixed seed.

    Flaky commands get one primary post-settle mutation drawn from the
    calibrated delay distribution plus scaled echoes of it, and an assertion
    depending on all of them.  Quiet commands may mutate before settle only.
    The summary reports the achieved p95 over 10k delay samples.
    """
    if n_tests < 1:
        raise ValueError("n_tests must be >= 1")
    rng = random.Random(_mix(seed, 0xC0B5))
    tests: list[SimTest] = []
    command_count = 0
    flaky_count = 0
    for t_idx in range(n_tests):
        n_cmds = rng.randint(*spec.commands_per_test)
        commands: list[SimCommand] = []
        assertions: list[SimAssertion] = []
        for c_idx in range(n_cmds):
            base = spec.base_duration.sample(rng)
            if rng.random() < spec.flaky_fraction:
                n_muts = rng.randint(*spec.mutations_per_flaky)
                muts = [SimMutation(prop=f"text@//*[@id=\"t{t_idx}c{c_idx}m0\"]", delay=spec.delay)]
                for m_idx in range(1, n_muts):
                    muts.append(
                        SimMutation(
                            prop=f"attr@//*[@id=\"t{t_idx}c{c_idx}m{m_idx}\"]",
                            delay=DelaySpec("scaled_primary", factor=round(0.15 + 0.75 * rng.random(), 3)),
                        )
                    )
                commands.append(SimCommand(base_duration_ms=base, mutations=tuple(muts)))
                assertions.append(
                    SimAssertion(after_cmd=c_idx, depends_on=tuple((c_idx, m) for m in range(len(muts))))
                )
                flaky_count += 1
            else:
                muts = []
                if rng.random() < 0.5:
                    muts.append(
                        SimMutation(prop=f"child@//*[@id=\"t{t_idx}c{c_idx}q\"]", delay=spec.quiet_mutation_delay)
                    )
                commands.append(SimCommand(base_duration_ms=base, mutations=tuple(muts)))
            command_count += 1
        tests.append(SimTest(test_id=f"t{t_idx:04d}", commands=tuple(commands), assertions=tuple(assertions)))

    probe = random.Random(_mix(seed, 0x95))
    samples = sorted(spec.delay.sample(probe) for _ in range(10000))
    p95 = samples[int(0.95 * len(samples))]
    mean_primary = sum(samples) / len(samples)
    return SimSuite(tests=tuple(tests)), CorpusSummary(
        test_count=n_tests,
        command_count=command_count,
        flaky_command_count=flaky_count,
        achieved_p95_delay_ms=p95,
        mean_primary_delay_ms=mean_primary,
    )


def suite_to_mutation_log(suite: SimSuite, seed: int, suite_name: str = "sim") -> MutationLog:
    """Flatten one recording pass into a mutation log for the analyzer.

    Commands chain at settle time the way fast test runners drive them, so a
    mutation's RT against the next command's start equals its sampled delay.
    Listen windows land in the span metadata.
    """
    spans: list[CommandSpan] = []
    cmd_id = 0
    clock = 0
    for t_idx, test in enumerate(suite.tests):
        rng = random.Random(_mix(seed, _REC_STREAM, t_idx))
        delays = _sample_test_delays(test, rng)
        for c_idx, cmd in enumerate(test.commands):
            cmd_id += 1
            start = clock
            settle = start + int(round(cmd.base_duration_ms))
            rels = sorted(max(0.0, d) / 1000.0 for d in delays[c_idx])
            omega = compute_window(rels).omega_final_s
            close = settle + int(round(omega * 1000))
            muts = []
            for m_idx, d in enumerate(sorted(delays[c_idx])):
                t_ms = settle + int(round(d))
                locator = ElementLocator(f'//*[@id="t{t_idx}c{c_idx}m{m_idx}"]', f"t{t_idx}c{c_idx}m{m_idx}")
                kind = ("characterData", "attributes", "childList")[m_idx % 3]
                record = MutationRecord(
                    seq=m_idx + 1,
                    t_ms=t_ms,
                    cmd_id=cmd_id,
                    kind=kind,
                    target=locator,
                    in_body=True,
                    visible=True,
                    css_effective=True,
                    attr_change=AttrChange("class", "a", "b") if kind == "attributes" else None,
                    text_change=TextChange("", "done") if kind == "characterData" else None,
                    child_change=ChildChange(1, 0, m_idx + 1) if kind == "childList" else None,
                    late=t_ms > close,
                )
                muts.append(record)
            spans.append(
                CommandSpan(
                    cmd_id=cmd_id,
                    name="click",
                    source_loc=SourceLoc(f"{test.test_id}.js", c_idx + 1),
                    start_ms=start,
                    settle_ms=settle,
                    window_close_ms=close,
                    omega_final_s=omega,
                    mutations=tuple(muts),
                )
            )
            clock = settle
    return MutationLog(version=1, suite_name=suite_name, started_at_ms=0, spans=tuple(spans))
