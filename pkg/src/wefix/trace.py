"""Mutation-trace data model and the line-delimited recording log format.

A recording run produces one log file per suite. Every line is a flat JSON
object whose ``rec`` field names the record kind:

    meta          version, suite, started_at_ms
    cmd_start     cmd_id, name, loc, t_ms
    cmd_settle    cmd_id, t_ms
    mutation      cmd_id, seq, t_ms, kind, xpath, flags and per-kind fields
    window_close  cmd_id, t_ms, omega_s

Field order inside a line is irrelevant on input and unknown fields are
ignored, which leaves room for additive format revisions.  Timestamps are
integer epoch-relative milliseconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

FORMAT_VERSION = 1

# Attribute and text values are clipped at capture time so a record always
# fits the recorder's per-cookie budget.
VALUE_LIMIT = 256

MUTATION_KINDS = ("attributes", "childList", "characterData")


class LogFormatError(Exception):
    """Base class for recording-log format violations."""


class MalformedRecord(LogFormatError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class OrphanMutation(LogFormatError):
    def __init__(self, seq: int, cmd_id: int):
        super().__init__(f"mutation seq {seq} references unknown command {cmd_id}")
        self.seq = seq
        self.cmd_id = cmd_id


class NonMonotonicTime(LogFormatError):
    def __init__(self, cmd_id: int, seq: int):
        super().__init__(f"command {cmd_id}: time decreases at mutation seq {seq}")
        self.cmd_id = cmd_id
        self.seq = seq


def clip_value(value: str) -> tuple[str, bool]:
    """Clip a captured value to VALUE_LIMIT chars; second item flags clipping."""
    if len(value) <= VALUE_LIMIT:
        return value, False
    return value[:VALUE_LIMIT], True


@dataclass(frozen=True, slots=True)
class ElementLocator:
    """Stable address of a DOM element: an XPath plus the id it hangs off, if any."""

    xpath: str
    dom_id: str | None = None

    def __post_init__(self) -> None:
        if not self.xpath:
            raise ValueError("locator xpath must be non-empty")


@dataclass(frozen=True, slots=True)
class SourceLoc:
    file: str
    line: int

    def __post_init__(self) -> None:
        if self.line < 0:
            raise ValueError("source line must be >= 0")

    def __str__(self) -> str:
        return f"{self.file}:{self.line}"


@dataclass(frozen=True, slots=True)
class AttrChange:
    name: str
    old: str | None
    new: str | None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("attribute name must be non-empty")
        for v in (self.old, self.new):
            if v is not None and len(v) > VALUE_LIMIT:
                raise ValueError("attribute value exceeds VALUE_LIMIT; clip at capture")


@dataclass(frozen=True, slots=True)
class TextChange:
    old: str
    new: str

    def __post_init__(self) -> None:
        for v in (self.old, self.new):
            if len(v) > VALUE_LIMIT:
                raise ValueError("text value exceeds VALUE_LIMIT; clip at capture")


@dataclass(frozen=True, slots=True)
class ChildChange:
    added: int
    removed: int
    resulting_count: int

    def __post_init__(self) -> None:
        if min(self.added, self.removed, self.resulting_count) < 0:
            raise ValueError("child-list counts must be >= 0")


@dataclass(frozen=True, slots=True)
class MutationRecord:
    """One observed DOM mutation, attributed to the command that caused it.

    Exactly one of attr_change / text_change / child_change is present and it
    must agree with ``kind``.  ``late`` marks a mutation that arrived after its
    command's listen window closed but before the next command started.
    """

    seq: int
    t_ms: int
    cmd_id: int
    kind: str
    target: ElementLocator
    in_body: bool
    visible: bool
    css_effective: bool
    attr_change: AttrChange | None = None
    text_change: TextChange | None = None
    child_change: ChildChange | None = None
    truncated: bool = False
    late: bool = False

    def __post_init__(self) -> None:
        if self.kind not in MUTATION_KINDS:
            raise ValueError(f"unknown mutation kind {self.kind!r}")
        if self.seq < 1:
            raise ValueError("seq is 1-based")
        if not isinstance(self.t_ms, int) or isinstance(self.t_ms, bool):
            raise ValueError("t_ms must be an integer millisecond count")
        changes = {
            "attributes": self.attr_change,
            "characterData": self.text_change,
            "childList": self.child_change,
        }
        present = [k for k, v in changes.items() if v is not None]
        if present != [self.kind]:
            raise ValueError(f"kind {self.kind} requires exactly its own change payload, got {present}")


@dataclass(frozen=True, slots=True)
class CommandSpan:
    """One test command plus every mutation attributed to it."""

    cmd_id: int
    name: str
    source_loc: SourceLoc
    start_ms: int
    settle_ms: int
    window_close_ms: int
    omega_final_s: float
    mutations: tuple[MutationRecord, ...] = ()

    def __post_init__(self) -> None:
        if not (self.start_ms <= self.settle_ms <= self.window_close_ms):
            raise ValueError(
                f"command {self.cmd_id}: require start <= settle <= window_close, "
                f"got {self.start_ms}/{self.settle_ms}/{self.window_close_ms}"
            )
        if self.omega_final_s <= 0:
            raise ValueError("omega_final_s must be positive")
        last_seq = 0
        last_t = None
        for m in self.mutations:
            if m.cmd_id != self.cmd_id:
                raise ValueError(f"mutation seq {m.seq} belongs to command {m.cmd_id}, not {self.cmd_id}")
            if m.seq <= last_seq:
                raise ValueError(f"command {self.cmd_id}: seq values must strictly increase")
            if last_t is not None and m.t_ms < last_t:
                raise NonMonotonicTime(self.cmd_id, m.seq)
            if m.late and m.t_ms <= self.window_close_ms:
                raise ValueError(f"command {self.cmd_id}: late mutation seq {m.seq} inside the window")
            if not m.late and m.t_ms > self.window_close_ms:
                raise ValueError(f"command {self.cmd_id}: mutation seq {m.seq} after window_close lacks late flag")
            last_seq = m.seq
            last_t = m.t_ms


@dataclass(frozen=True, slots=True)
class MutationLog:
    """A parsed recording: suite metadata plus command spans ordered by start."""

    version: int
    suite_name: str
    started_at_ms: int
    spans: tuple[CommandSpan, ...] = ()
    # Count of skipped unknown record kinds; informational, not part of identity.
    warning_count: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        for i, span in enumerate(self.spans):
            if span.cmd_id != i + 1:
                raise ValueError(f"cmd_id values must be 1..n consecutive, position {i} holds {span.cmd_id}")
            if i and span.start_ms < self.spans[i - 1].start_ms:
                raise ValueError("spans must be ordered by start_ms")

    def span(self, cmd_id: int) -> CommandSpan:
        return self.spans[cmd_id - 1]

    def iter_mutations(self):
        for span in self.spans:
            for m in span.mutations:
                yield span, m


# --- parsing -----------------------------------------------------------------

def _need(obj: dict, key: str, line_no: int):
    if key not in obj:
        raise MalformedRecord(line_no, f"missing field {key!r}")
    return obj[key]


def _int_field(obj: dict, key: str, line_no: int) -> int:
    v = _need(obj, key, line_no)
    if not isinstance(v, int) or isinstance(v, bool):
        raise MalformedRecord(line_no, f"field {key!r} must be an integer")
    return v


def _str_field(obj: dict, key: str, line_no: int) -> str:
    v = _need(obj, key, line_no)
    if not isinstance(v, str):
        raise MalformedRecord(line_no, f"field {key!r} must be a string")
    return v


def _bool_field(obj: dict, key: str, line_no: int) -> bool:
    v = _need(obj, key, line_no)
    if not isinstance(v, bool):
        raise MalformedRecord(line_no, f"field {key!r} must be a boolean")
    return v


def _opt_str(obj: dict, key: str, line_no: int) -> str | None:
    v = obj.get(key)
    if v is not None and not isinstance(v, str):
        raise MalformedRecord(line_no, f"field {key!r} must be a string")
    return v


def _parse_loc(loc: str, line_no: int) -> SourceLoc:
    file, sep, line = loc.rpartition(":")
    if not sep or not line.isdigit():
        raise MalformedRecord(line_no, f"loc {loc!r} is not file:line")
    return SourceLoc(file, int(line))


def _parse_mutation(obj: dict, line_no: int) -> MutationRecord:
    kind = _str_field(obj, "kind", line_no)
    if kind not in MUTATION_KINDS:
        raise MalformedRecord(line_no, f"unknown mutation kind {kind!r}")
    target = ElementLocator(_str_field(obj, "xpath", line_no), _opt_str(obj, "dom_id", line_no))
    attr_change = text_change = child_change = None
    try:
        if kind == "attributes":
            attr_change = AttrChange(
                name=_str_field(obj, "attr_name", line_no),
                old=_opt_str(obj, "attr_old", line_no),
                new=_opt_str(obj, "attr_new", line_no),
            )
        elif kind == "characterData":
            text_change = TextChange(
                old=_str_field(obj, "text_old", line_no),
                new=_str_field(obj, "text_new", line_no),
            )
        else:
            child_change = ChildChange(
                added=_int_field(obj, "child_added", line_no),
                removed=_int_field(obj, "child_removed", line_no),
                resulting_count=_int_field(obj, "child_count", line_no),
            )
        return MutationRecord(
            seq=_int_field(obj, "seq", line_no),
            t_ms=_int_field(obj, "t_ms", line_no),
            cmd_id=_int_field(obj, "cmd_id", line_no),
            kind=kind,
            target=target,
            in_body=_bool_field(obj, "in_body", line_no),
            visible=_bool_field(obj, "visible", line_no),
            css_effective=_bool_field(obj, "css_effective", line_no),
            attr_change=attr_change,
            text_change=text_change,
            child_change=child_change,
            truncated=bool(obj.get("truncated", False)),
            late=bool(obj.get("late", False)),
        )
    except ValueError as exc:
        raise MalformedRecord(line_no, str(exc)) from exc


def parse_log(data: bytes | str) -> MutationLog:
    """Parse a recording log.

    Referential integrity is checked after the whole file is read, so record
    order only matters within a command's own mutation lines.  Unknown record
    kinds are skipped (counted in ``warning_count``) when the log declares a
    newer format version; under the current version they are malformed.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    version = FORMAT_VERSION
    suite_name = ""
    started_at_ms = 0
    saw_meta = False
    warning_count = 0

    starts: dict[int, tuple[int, dict]] = {}       # cmd_id -> (line_no, obj)
    settles: dict[int, tuple[int, int]] = {}       # cmd_id -> (line_no, t_ms)
    closes: dict[int, tuple[int, int, float]] = {} # cmd_id -> (line_no, t_ms, omega_s)
    mutation_lines: list[tuple[int, MutationRecord]] = []  # file order

    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise MalformedRecord(line_no, "record must be a JSON object")
        rec = obj.get("rec")
        if rec == "meta":
            if saw_meta:
                raise MalformedRecord(line_no, "duplicate meta record")
            saw_meta = True
            version = _int_field(obj, "version", line_no)
            suite_name = _str_field(obj, "suite", line_no)
            started_at_ms = _int_field(obj, "started_at_ms", line_no)
        elif rec == "cmd_start":
            cmd_id = _int_field(obj, "cmd_id", line_no)
            if cmd_id in starts:
                raise MalformedRecord(line_no, f"duplicate cmd_start for command {cmd_id}")
            _str_field(obj, "name", line_no)
            _str_field(obj, "loc", line_no)
            _int_field(obj, "t_ms", line_no)
            starts[cmd_id] = (line_no, obj)
        elif rec == "cmd_settle":
            cmd_id = _int_field(obj, "cmd_id", line_no)
            if cmd_id in settles:
                raise MalformedRecord(line_no, f"duplicate cmd_settle for command {cmd_id}")
            settles[cmd_id] = (line_no, _int_field(obj, "t_ms", line_no))
        elif rec == "window_close":
            cmd_id = _int_field(obj, "cmd_id", line_no)
            if cmd_id in closes:
                raise MalformedRecord(line_no, f"duplicate window_close for command {cmd_id}")
            omega = _need(obj, "omega_s", line_no)
            if isinstance(omega, bool) or not isinstance(omega, (int, float)):
                raise MalformedRecord(line_no, "field 'omega_s' must be a number")
            closes[cmd_id] = (line_no, _int_field(obj, "t_ms", line_no), float(omega))
        elif rec == "mutation":
            mutation_lines.append((line_no, _parse_mutation(obj, line_no)))
        else:
            if version > FORMAT_VERSION:
                warning_count += 1
                continue
            raise MalformedRecord(line_no, f"unknown record kind {rec!r}")

    # Attribution is checked against the whole file, so a mutation line may
    # legally precede its cmd_start line.
    mutations: dict[int, list[tuple[int, MutationRecord]]] = {}
    for line_no, record in mutation_lines:
        if record.cmd_id not in starts:
            raise OrphanMutation(record.seq, record.cmd_id)
        mutations.setdefault(record.cmd_id, []).append((line_no, record))

    spans = []
    for cmd_id in sorted(starts):
        start_line, obj = starts[cmd_id]
        if cmd_id not in settles:
            raise MalformedRecord(start_line, f"command {cmd_id} has no cmd_settle")
        _, settle_ms = settles[cmd_id]
        muts: list[MutationRecord] = []
        last_seq = 0
        last_t: int | None = None
        for m_line, record in mutations.get(cmd_id, []):
            if record.seq <= last_seq:
                raise MalformedRecord(m_line, f"command {cmd_id}: seq values must strictly increase")
            if last_t is not None and record.t_ms < last_t:
                raise NonMonotonicTime(cmd_id, record.seq)
            last_seq = record.seq
            last_t = record.t_ms
            muts.append(record)
        if cmd_id in closes:
            _, close_ms, omega_s = closes[cmd_id]
        else:
            # A truncated recording may miss the close line; assume the
            # initial one-second window, stretched over any recorded tail.
            close_ms = max(settle_ms + 1000, *(m.t_ms for m in muts)) if muts else settle_ms + 1000
            omega_s = (close_ms - settle_ms) / 1000.0
        try:
            spans.append(
                CommandSpan(
                    cmd_id=cmd_id,
                    name=obj["name"],
                    source_loc=_parse_loc(obj["loc"], start_line),
                    start_ms=obj["t_ms"],
                    settle_ms=settle_ms,
                    window_close_ms=close_ms,
                    omega_final_s=omega_s,
                    mutations=tuple(muts),
                )
            )
        except NonMonotonicTime:
            raise
        except ValueError as exc:
            raise MalformedRecord(start_line, str(exc)) from exc

    for cmd_id in settles:
        if cmd_id not in starts:
            raise MalformedRecord(settles[cmd_id][0], f"cmd_settle for unknown command {cmd_id}")
    for cmd_id in closes:
        if cmd_id not in starts:
            raise MalformedRecord(closes[cmd_id][0], f"window_close for unknown command {cmd_id}")

    spans.sort(key=lambda s: s.cmd_id)
    try:
        return MutationLog(
            version=version,
            suite_name=suite_name,
            started_at_ms=started_at_ms,
            spans=tuple(spans),
            warning_count=warning_count,
        )
    except ValueError as exc:
        raise MalformedRecord(0, str(exc)) from exc


# --- serialization -----------------------------------------------------------

def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False)


def _mutation_line(m: MutationRecord) -> str:
    obj: dict = {
        "rec": "mutation",
        "cmd_id": m.cmd_id,
        "seq": m.seq,
        "t_ms": m.t_ms,
        "kind": m.kind,
        "xpath": m.target.xpath,
    }
    if m.target.dom_id is not None:
        obj["dom_id"] = m.target.dom_id
    if m.attr_change is not None:
        obj["attr_name"] = m.attr_change.name
        if m.attr_change.old is not None:
            obj["attr_old"] = m.attr_change.old
        if m.attr_change.new is not None:
            obj["attr_new"] = m.attr_change.new
    if m.text_change is not None:
        obj["text_old"] = m.text_change.old
        obj["text_new"] = m.text_change.new
    if m.child_change is not None:
        obj["child_added"] = m.child_change.added
        obj["child_removed"] = m.child_change.removed
        obj["child_count"] = m.child_change.resulting_count
    obj["in_body"] = m.in_body
    obj["visible"] = m.visible
    obj["css_effective"] = m.css_effective
    if m.truncated:
        obj["truncated"] = True
    if m.late:
        obj["late"] = True
    return _dump(obj)


def serialize_log(log: MutationLog) -> bytes:
    """Serialize a log to its canonical byte form.

    Canonical means: meta first, spans in cmd_id order, each span emitting
    cmd_start, cmd_settle, mutations, window_close, with fixed key order and
    false flags omitted.  parse_log(serialize_log(log)) == log.
    """
    lines = [
        _dump(
            {
                "rec": "meta",
                "version": log.version,
                "suite": log.suite_name,
                "started_at_ms": log.started_at_ms,
            }
        )
    ]
    for span in log.spans:
        lines.append(
            _dump(
                {
                    "rec": "cmd_start",
                    "cmd_id": span.cmd_id,
                    "name": span.name,
                    "loc": str(span.source_loc),
                    "t_ms": span.start_ms,
                }
            )
        )
        lines.append(_dump({"rec": "cmd_settle", "cmd_id": span.cmd_id, "t_ms": span.settle_ms}))
        for m in span.mutations:
            lines.append(_mutation_line(m))
        lines.append(
            _dump(
                {
                    "rec": "window_close",
                    "cmd_id": span.cmd_id,
                    "t_ms": span.window_close_ms,
                    "omega_s": span.omega_final_s,
                }
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")
