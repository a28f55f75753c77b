"""Record DOM-mutation timing in e2e suites, find flaky-prone commands, and
repair them with synthesized explicit waits.

Pipeline: instrument tests -> run them once to record a mutation log ->
analyze -> insert waits -> (optionally) quantify strategies in simulation.
"""

from .analyzer import (
    BACKGROUND_CV_THRESHOLD,
    MIN_BACKGROUND_OCCURRENCES,
    EmptyLog,
    PruneReason,
    PruneResult,
    SuiteStats,
    classify_flaky_prone,
    compute_stats,
    detect_background,
    prune_gui_irrelevant,
    prune_log,
    rt_cdf,
)
from .cli import build_fix_plan, run_cli
from .fsm import (
    DEFAULT_MAX_PROPS,
    DEFAULT_POLL_MS,
    DEFAULT_TIMEOUT_MS,
    DomState,
    ElementStatus,
    MutationFSM,
    NoMutatedProperty,
    PropertyValue,
    WaitOracle,
    WaitPredicate,
    build_fsm,
    end_state,
    eval_oracle,
    generate_oracle,
    initial_state,
    render_oracle,
    select_properties,
)
from .simulator import (
    CorpusSpec,
    DelaySpec,
    SimReport,
    SimSuite,
    Strategy,
    evaluate,
    gen_corpus,
    record_suite,
    run_trial,
    suite_to_mutation_log,
)
from .trace import (
    FORMAT_VERSION,
    VALUE_LIMIT,
    AttrChange,
    ChildChange,
    CommandSpan,
    ElementLocator,
    LogFormatError,
    MalformedRecord,
    MutationLog,
    MutationRecord,
    NonMonotonicTime,
    OrphanMutation,
    SourceLoc,
    TextChange,
    parse_log,
    serialize_log,
)
from .transformer import (
    DIALECTS,
    AlreadyInstrumented,
    CommandSite,
    DialectMismatch,
    FixPlan,
    ParseFailure,
    PlanMode,
    ScanIssue,
    ScanResult,
    StaleSites,
    UnbalancedSentinels,
    find_commands,
    instrument_recording,
    insert_waits,
    scan_source,
    strip_hooks,
)
from .window import (
    WINDOW_CAP_S,
    WINDOW_INIT_S,
    UnsortedInput,
    WindowTrace,
    compute_window,
    replay_window,
)

__version__ = "0.1.0"

__all__ = [
    "AttrChange",
    "AlreadyInstrumented",
    "BACKGROUND_CV_THRESHOLD",
    "ChildChange",
    "CommandSite",
    "CommandSpan",
    "CorpusSpec",
    "DEFAULT_MAX_PROPS",
    "DEFAULT_POLL_MS",
    "DEFAULT_TIMEOUT_MS",
    "DIALECTS",
    "DelaySpec",
    "DialectMismatch",
    "DomState",
    "ElementLocator",
    "ElementStatus",
    "EmptyLog",
    "FORMAT_VERSION",
    "FixPlan",
    "LogFormatError",
    "MIN_BACKGROUND_OCCURRENCES",
    "MalformedRecord",
    "MutationFSM",
    "MutationLog",
    "MutationRecord",
    "NoMutatedProperty",
    "NonMonotonicTime",
    "OrphanMutation",
    "ParseFailure",
    "PlanMode",
    "PropertyValue",
    "PruneReason",
    "PruneResult",
    "ScanIssue",
    "ScanResult",
    "SimReport",
    "SimSuite",
    "SourceLoc",
    "StaleSites",
    "Strategy",
    "SuiteStats",
    "TextChange",
    "UnbalancedSentinels",
    "UnsortedInput",
    "VALUE_LIMIT",
    "WINDOW_CAP_S",
    "WINDOW_INIT_S",
    "WaitOracle",
    "WaitPredicate",
    "WindowTrace",
    "build_fix_plan",
    "build_fsm",
    "classify_flaky_prone",
    "compute_stats",
    "compute_window",
    "detect_background",
    "end_state",
    "eval_oracle",
    "evaluate",
    "find_commands",
    "gen_corpus",
    "generate_oracle",
    "initial_state",
    "insert_waits",
    "instrument_recording",
    "parse_log",
    "prune_gui_irrelevant",
    "prune_log",
    "record_suite",
    "render_oracle",
    "replay_window",
    "rt_cdf",
    "run_cli",
    "run_trial",
    "scan_source",
    "select_properties",
    "serialize_log",
    "strip_hooks",
    "suite_to_mutation_log",
]
