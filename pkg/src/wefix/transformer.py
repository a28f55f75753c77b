"""Test-source rewriting: command discovery, recording hooks, wait insertion.

The rewriter understands a statement-level subset of JS/TS test files rather
than the full language: a command is a statement-position call chain rooted
at the framework handle, terminated by a semicolon.  Everything inserted is
delimited by sentinel comments so a later pass can remove it byte-exactly:

    /* wefix:begin <kind> <cmd_id> */ ... /* wefix:end */

with kind one of hook-pre, hook-post, wait.  Bytes outside inserted regions
are never touched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

SENTINEL_BEGIN = "/* wefix:begin"
SENTINEL_END = "/* wefix:end */"

DIALECTS = ("cypress", "selenium")

_IMPORT_LINE = {
    "selenium": 'const __wefix = require("./wefix-runtime.js");\n',
    "cypress": 'const __wefix = require("./wefix-runtime.cy.js");\n',
}

# recording helper files an instrumented suite expects next to its tests
RUNTIME_ASSETS = {
    "selenium": ("wefix-runtime.js", "wefix-observer.js"),
    "cypress": ("wefix-runtime.cy.js",),
}


def runtime_source(asset_name: str) -> str:
    """Return the bundled recording-helper script by file name."""
    from importlib.resources import files

    return files("wefix.assets").joinpath(asset_name).read_text(encoding="utf-8")

_CY_HEADS = {"visit", "get", "contains", "reload"}
_CY_INTERACTIONS = {"click", "type", "select", "check"}
_SEL_HEADS = {"get", "findElement", "navigate", "executeScript", "actions"}
_SEL_INTERACTIONS = {"click", "sendKeys", "clear"}

_HEAD_RE = {
    "cypress": re.compile(r"\bcy\s*\.\s*(visit|get|contains|reload)\s*\("),
    "selenium": re.compile(r"\b([A-Za-z_$][\w$]*)\s*\.\s*(get|findElement|navigate|executeScript|actions)\s*\("),
}


class ParseFailure(ValueError):
    def __init__(self, file: str, line: int, reason: str):
        super().__init__(f"{file}:{line}: {reason}")
        self.file = file
        self.line = line
        self.reason = reason


class AlreadyInstrumented(ValueError):
    pass


class UnbalancedSentinels(ValueError):
    pass


class StaleSites(ValueError):
    pass


class DialectMismatch(ValueError):
    pass


class PlanMode(str, Enum):
    RECORDING_HOOKS = "recording_hooks"
    EXPLICIT_WAITS = "explicit_waits"


@dataclass(frozen=True, slots=True)
class CommandSite:
    """One recognized command statement; byte_range covers it, semicolon included."""

    file: str
    byte_range: tuple[int, int]
    line: int
    name: str
    dialect: str
    chain_root: str
    awaited: bool


@dataclass(frozen=True, slots=True)
class ScanIssue:
    line: int
    message: str


@dataclass(frozen=True, slots=True)
class ScanResult:
    sites: tuple[CommandSite, ...]
    issues: tuple[ScanIssue, ...]


@dataclass(frozen=True, slots=True)
class FixPlan:
    file: str
    dialect: str
    mode: PlanMode
    insertions: tuple[tuple[CommandSite, str], ...]  # (site, rendered snippet)

    def __post_init__(self) -> None:
        ranges = [site.byte_range for site, _ in self.insertions]
        if len(set(ranges)) != len(ranges):
            raise ValueError("at most one insertion per command site")


# --- lexical masking ---------------------------------------------------------

def _mask(source: str, file: str) -> str:
    """Blank out comment and string-literal contents, preserving length.

    Template literals are masked whole, including interpolations; command
    statements inside them are out of the supported subset anyway.
    """
    out = list(source)
    i = 0
    n = len(source)

    def line_of(pos: int) -> int:
        return source.count("\n", 0, pos) + 1

    while i < n:
        c = source[i]
        nxt = source[i + 1] if i + 1 < n else ""
        if c == "/" and nxt == "/":
            j = source.find("\n", i)
            j = n if j == -1 else j
            for k in range(i, j):
                out[k] = " "
            i = j
        elif c == "/" and nxt == "*":
            j = source.find("*/", i + 2)
            if j == -1:
                raise ParseFailure(file, line_of(i), "unterminated block comment")
            for k in range(i, j + 2):
                out[k] = " "
            i = j + 2
        elif c in "'\"":
            j = i + 1
            while j < n:
                if source[j] == "\\":
                    j += 2
                    continue
                if source[j] == c:
                    break
                if source[j] == "\n":
                    raise ParseFailure(file, line_of(i), "unterminated string literal")
                j += 1
            if j >= n:
                raise ParseFailure(file, line_of(i), "unterminated string literal")
            for k in range(i + 1, j):
                out[k] = " "
            i = j + 1
        elif c == "`":
            j = i + 1
            while j < n:
                if source[j] == "\\":
                    j += 2
                    continue
                if source[j] == "`":
                    break
                j += 1
            if j >= n:
                raise ParseFailure(file, line_of(i), "unterminated template literal")
            for k in range(i + 1, j):
                out[k] = " " if source[k] != "\n" else "\n"
            i = j + 1
        else:
            i += 1
    return "".join(out)


def _at_statement_start(masked: str, pos: int) -> tuple[bool, int]:
    """Check statement position; returns (ok, start) where start absorbs await."""
    j = pos - 1
    while j >= 0 and masked[j] in " \t\r\n":
        j -= 1
    # an `await` prefix belongs to the statement
    if j >= 4 and masked[j - 4 : j + 1] == "await" and (j - 5 < 0 or not (masked[j - 5].isalnum() or masked[j - 5] in "_$")):
        start = j - 4
        j = start - 1
        while j >= 0 and masked[j] in " \t\r\n":
            j -= 1
    else:
        start = pos
    ok = j < 0 or masked[j] in "{};"
    return ok, start


_IDENT_RE = re.compile(r"[A-Za-z_$][\w$]*")


def _parse_chain(masked: str, pos: int) -> tuple[list[str], int] | None:
    """Parse `.name(args)` segments starting just after the chain root.

    Returns (method names, end offset after the last closing paren), or None
    when no complete call segment parses or brackets stay open to EOF.
    """
    n = len(masked)
    segments: list[str] = []
    i = pos
    while True:
        j = i
        while j < n and masked[j] in " \t\r\n":
            j += 1
        if j >= n or masked[j] != ".":
            break
        j += 1
        while j < n and masked[j] in " \t\r\n":
            j += 1
        m = _IDENT_RE.match(masked, j)
        if m is None:
            break
        name = m.group(0)
        k = m.end()
        while k < n and masked[k] in " \t\r\n":
            k += 1
        if k >= n or masked[k] != "(":
            break  # property access without a call ends the chain
        depth = 0
        while k < n:
            ch = masked[k]
            if ch in "([{":
                depth += 1
            elif ch in ")]}":
                depth -= 1
                if depth == 0:
                    break
            k += 1
        if k >= n:
            return None
        segments.append(name)
        i = k + 1
    return (segments, i) if segments else None


def _classify(dialect: str, root: str, segments: list[str]) -> str | None:
    """Map a chain to its command name, or None when it is no command."""
    if not segments:
        return None
    head = segments[0]
    if dialect == "cypress":
        if root != "cy" or head not in _CY_HEADS:
            return None
        interactions = [s for s in segments[1:] if s in _CY_INTERACTIONS]
        if interactions:
            return interactions[-1]
        if head in ("visit", "reload", "contains"):
            return head
        return None  # bare cy.get query or assertion chain
    if head == "get":
        return "get"
    if head == "findElement":
        interactions = [s for s in segments[1:] if s in _SEL_INTERACTIONS]
        return interactions[-1] if interactions else None
    if head == "navigate":
        return "navigate"
    if head == "executeScript":
        return "executeScript"
    if head == "actions":
        return "perform" if segments[-1] == "perform" else None
    return None


def scan_source(source: str, dialect: str, *, file: str = "<memory>") -> ScanResult:
    """Find command statements; command-shaped calls in unsupported positions
    are reported as issues and skipped."""
    if dialect not in DIALECTS:
        raise DialectMismatch(f"unknown dialect {dialect!r}")
    masked = _mask(source, file)
    sites: list[CommandSite] = []
    issues: list[ScanIssue] = []
    last_end = 0
    for match in _HEAD_RE[dialect].finditer(masked):
        pos = match.start()
        if pos < last_end:
            continue  # inside the previous statement
        if dialect == "cypress":
            root = "cy"
        else:
            root = match.group(1)
            if root == "cy":
                continue
        line = source.count("\n", 0, pos) + 1
        after_root = pos + (len(root) if dialect == "selenium" else 2)
        parsed = _parse_chain(masked, after_root)
        if parsed is None:
            continue
        segments, chain_end = parsed
        name = _classify(dialect, root, segments)
        if name is None:
            continue
        ok, start = _at_statement_start(masked, pos)
        j = chain_end
        while j < len(masked) and masked[j] in " \t\r\n":
            j += 1
        terminated = j < len(masked) and masked[j] == ";"
        if not ok:
            issues.append(ScanIssue(line, f"{name} call in unsupported position"))
            last_end = chain_end
            continue
        if not terminated:
            issues.append(ScanIssue(line, f"{name} statement lacks a semicolon terminator"))
            last_end = chain_end
            continue
        end = j + 1
        awaited = source[start : start + 5] == "await"
        sites.append(
            CommandSite(
                file=file,
                byte_range=(start, end),
                line=source.count("\n", 0, start) + 1,
                name=name,
                dialect=dialect,
                chain_root=root,
                awaited=awaited,
            )
        )
        last_end = end
    return ScanResult(sites=tuple(sites), issues=tuple(issues))


def find_commands(source: str, dialect: str, *, file: str = "<memory>") -> list[CommandSite]:
    return list(scan_source(source, dialect, file=file).sites)


# --- instrumentation ---------------------------------------------------------

def _indent_of(source: str, pos: int) -> str:
    line_start = source.rfind("\n", 0, pos) + 1
    indent = source[line_start:pos]
    return indent if indent.strip() == "" else ""


def _hook_statements(site: CommandSite, cmd_id: int) -> tuple[str, str]:
    loc = f"{site.file}:{site.line}"
    if site.dialect == "cypress":
        pre = f"__wefix.pre({cmd_id});"
        post = f'__wefix.post({cmd_id}, "{site.name}", "{loc}");'
    else:
        prefix = "await " if site.awaited else ""
        pre = f"{prefix}__wefix.pre({site.chain_root}, {cmd_id});"
        post = f'{prefix}__wefix.post({site.chain_root}, {cmd_id}, "{site.name}", "{loc}");'
    return pre, post


def instrument_recording(source: str, dialect: str, *, file: str = "<memory>") -> str:
    """Wrap every command with recording hooks and add the helper import.

    Hook statements sit inside sentinel regions; strip_hooks restores the
    original file byte-for-byte.
    """
    if SENTINEL_BEGIN in source:
        raise AlreadyInstrumented(f"{file}: sentinel regions already present; strip first")
    if any(line in source for line in _IMPORT_LINE.values()):
        raise AlreadyInstrumented(f"{file}: recording helper import already present; strip first")
    result = scan_source(source, dialect, file=file)
    pieces = source
    for idx in range(len(result.sites) - 1, -1, -1):
        site = result.sites[idx]
        cmd_id = idx + 1
        start, end = site.byte_range
        indent = _indent_of(source, start)
        pre, post = _hook_statements(site, cmd_id)
        post_text = f"\n{indent}/* wefix:begin hook-post {cmd_id} */ {post} {SENTINEL_END}"
        pre_text = f"/* wefix:begin hook-pre {cmd_id} */ {pre} {SENTINEL_END}\n{indent}"
        pieces = pieces[:end] + post_text + pieces[end:]
        pieces = pieces[:start] + pre_text + pieces[start:]
    return _IMPORT_LINE[dialect] + pieces


def insert_waits(source: str, plan: FixPlan) -> str:
    """Insert rendered wait snippets after their sites, back to front.

    Sites are re-scanned and verified against the current text first, so a
    plan built for an older revision fails with StaleSites instead of
    splicing into the wrong place.
    """
    if plan.mode is not PlanMode.EXPLICIT_WAITS:
        raise ValueError("insert_waits requires an explicit_waits plan")
    current = scan_source(source, plan.dialect, file=plan.file)
    by_range = {site.byte_range: (i, site) for i, site in enumerate(current.sites)}
    resolved: list[tuple[int, CommandSite, str]] = []
    for site, snippet in plan.insertions:
        if site.dialect != plan.dialect:
            raise DialectMismatch(f"site {site.name}@{site.line} is {site.dialect}, plan is {plan.dialect}")
        entry = by_range.get(site.byte_range)
        if entry is None or entry[1].name != site.name:
            raise StaleSites(f"site {site.name}@{site.line} no longer matches the source")
        resolved.append((entry[0], entry[1], snippet))

    pieces = source
    for ordinal, site, snippet in sorted(resolved, key=lambda r: r[1].byte_range[0], reverse=True):
        cmd_id = ordinal + 1
        start, end = site.byte_range
        indent = _indent_of(source, start)
        body = snippet.replace("\n", f"\n{indent}")
        region = f"\n{indent}/* wefix:begin wait {cmd_id} */ {body} {SENTINEL_END}"
        pieces = pieces[:end] + region + pieces[end:]
    return pieces


_BEGIN_RE = re.compile(r"/\* wefix:begin (hook-pre|hook-post|wait) (\d+) \*/")


def strip_hooks(source: str) -> str:
    """Remove every sentinel-delimited region and the helper import.

    Inverse of instrument_recording and insert_waits; a begin without its end
    (or a stray end) raises UnbalancedSentinels.
    """
    text = source
    for line in _IMPORT_LINE.values():
        text = text.replace(line, "")
        # import at EOF without trailing newline
        if text.endswith(line.rstrip("\n")):
            text = text[: -len(line.rstrip("\n"))]

    spans: list[tuple[int, int]] = []
    for match in _BEGIN_RE.finditer(text):
        kind = match.group(1)
        end_at = text.find(SENTINEL_END, match.end())
        if end_at == -1:
            raise UnbalancedSentinels(f"begin sentinel at offset {match.start()} has no end")
        b0, e0 = match.start(), end_at + len(SENTINEL_END)
        if kind == "hook-pre":
            # consume the newline + indent inserted after the region
            j = e0
            if j < len(text) and text[j] == "\n":
                j += 1
                while j < len(text) and text[j] in " \t":
                    j += 1
                e0 = j
        else:
            # consume the newline + indent inserted before the region
            j = b0
            while j > 0 and text[j - 1] in " \t":
                j -= 1
            if j > 0 and text[j - 1] == "\n":
                b0 = j - 1
        spans.append((b0, e0))

    out = []
    cursor = 0
    for b0, e0 in spans:
        if b0 < cursor:
            raise UnbalancedSentinels("overlapping sentinel regions")
        out.append(text[cursor:b0])
        cursor = e0
    out.append(text[cursor:])
    stripped = "".join(out)
    if SENTINEL_BEGIN in stripped or SENTINEL_END in stripped:
        raise UnbalancedSentinels("stray sentinel marker outside any region")
    return stripped
