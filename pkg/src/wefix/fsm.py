"""DOM-state machine replay and explicit-wait oracle synthesis.

A command's pruned mutations m_1..m_j replay over an initial DOM snapshot as
a linear chain of states S_0..S_j.  Each element status records, per
property, the value plus the index of the mutation that last wrote it
(0 = untouched since S_0).  The end state S_j is what the page looks like
once the command's GUI effects have finished, so a wait oracle is built from
the properties written last: when they hold, the earlier writes must have
happened too.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .trace import CommandSpan, ElementLocator, MutationRecord

DEFAULT_MAX_PROPS = 3
DEFAULT_POLL_MS = 100
DEFAULT_TIMEOUT_MS = 4000

_KIND_ORDER = ("attr", "child_len", "text")


class NoMutatedProperty(ValueError):
    """End state has no property written by the replayed mutations."""


class UnsupportedDialect(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class InconsistentMutation:
    """A child-list record whose resulting count disagrees with the replay."""

    seq: int
    expected_count: int
    recorded_count: int


@dataclass(frozen=True, slots=True)
class PropertyValue:
    value: str | int | None
    last_mut_idx: int
    truncated: bool = False


@dataclass(frozen=True, slots=True)
class ElementStatus:
    """Status of one element: attributes, text value, child-list size."""

    attrs: dict[str, PropertyValue]
    text: PropertyValue
    child_count: PropertyValue

    @staticmethod
    def empty() -> "ElementStatus":
        return ElementStatus(attrs={}, text=PropertyValue("", 0), child_count=PropertyValue(0, 0))


@dataclass(frozen=True, slots=True)
class DomState:
    """One state in the chain; prev links back so history stays reachable."""

    index: int
    elements: dict[ElementLocator, ElementStatus]
    prev: "DomState | None" = field(default=None, compare=False, repr=False)

    def at(self, index: int) -> "DomState | None":
        """Walk back along prev to the state with the given index."""
        state: DomState | None = self
        while state is not None and state.index > index:
            state = state.prev
        return state if state is not None and state.index == index else None


def initial_state(elements: dict[ElementLocator, ElementStatus] | None = None) -> DomState:
    return DomState(index=0, elements=dict(elements or {}))


@dataclass(frozen=True, slots=True)
class Transition:
    from_idx: int
    seq: int
    to_idx: int


@dataclass(frozen=True, slots=True)
class MutationFSM:
    states: tuple[DomState, ...]
    transitions: tuple[Transition, ...]
    inconsistencies: tuple[InconsistentMutation, ...] = field(default=(), compare=False)


def _apply(state: DomState, m: MutationRecord, idx: int) -> tuple[DomState, InconsistentMutation | None]:
    status = state.elements.get(m.target, ElementStatus.empty())
    problem = None
    if m.attr_change is not None:
        attrs = dict(status.attrs)
        attrs[m.attr_change.name] = PropertyValue(m.attr_change.new, idx, m.truncated)
        status = replace(status, attrs=attrs)
    elif m.text_change is not None:
        status = replace(status, text=PropertyValue(m.text_change.new, idx, m.truncated))
    else:
        change = m.child_change
        assert change is not None
        expected = status.child_count.value
        if isinstance(expected, int):
            expected = expected + change.added - change.removed
            if expected != change.resulting_count:
                problem = InconsistentMutation(m.seq, expected, change.resulting_count)
        # The recorded resulting count wins; the replay only reports the gap.
        status = replace(status, child_count=PropertyValue(change.resulting_count, idx, m.truncated))
    elements = dict(state.elements)
    elements[m.target] = status
    return DomState(index=idx, elements=elements, prev=state), problem


def build_fsm(
    span: CommandSpan,
    kept: tuple[MutationRecord, ...] | None = None,
    initial: DomState | None = None,
) -> MutationFSM:
    """Replay a command's kept mutations into the state chain S_0..S_j.

    Elements absent from the initial snapshot come into view on first
    reference: the recorder only reports what changed, so untouched
    properties keep empty defaults with write index 0.  Replay continues
    from initial.index, which lets callers split a mutation batch and feed
    the intermediate state back in.
    """
    mutations = span.mutations if kept is None else kept
    state = initial if initial is not None else initial_state()
    states = [state]
    transitions = []
    problems = []
    for m in mutations:
        idx = state.index + 1
        state, problem = _apply(state, m, idx)
        if problem is not None:
            problems.append(problem)
        states.append(state)
        transitions.append(Transition(from_idx=idx - 1, seq=m.seq, to_idx=idx))
    return MutationFSM(
        states=tuple(states),
        transitions=tuple(transitions),
        inconsistencies=tuple(problems),
    )


def end_state(fsm: MutationFSM) -> DomState:
    return fsm.states[-1]


@dataclass(frozen=True, slots=True)
class PropertyRef:
    element: ElementLocator
    kind: str  # "attr" | "text" | "child_len"
    attr_name: str | None
    value: str | int | None
    last_mut_idx: int
    truncated: bool = False


def _candidates(end: DomState) -> list[PropertyRef]:
    refs: list[PropertyRef] = []
    for locator, status in end.elements.items():
        for name, pv in status.attrs.items():
            if pv.last_mut_idx > 0:
                refs.append(PropertyRef(locator, "attr", name, pv.value, pv.last_mut_idx, pv.truncated))
        if status.text.last_mut_idx > 0:
            refs.append(
                PropertyRef(locator, "text", None, status.text.value, status.text.last_mut_idx, status.text.truncated)
            )
        if status.child_count.last_mut_idx > 0:
            refs.append(
                PropertyRef(
                    locator, "child_len", None, status.child_count.value,
                    status.child_count.last_mut_idx, status.child_count.truncated,
                )
            )
    refs.sort(
        key=lambda r: (
            -r.last_mut_idx,
            r.element.xpath,
            r.element.dom_id or "",
            _KIND_ORDER.index(r.kind),
            r.attr_name or "",
        )
    )
    return refs


def select_properties(end: DomState, max_props: int = DEFAULT_MAX_PROPS) -> list[PropertyRef]:
    """Pick up to max_props properties with the largest write index.

    Ties break deterministically on (xpath, dom_id, kind, attr name).  The
    selected properties may live on different elements.
    """
    if not 1 <= max_props <= 5:
        raise ValueError("max_props must be in 1..5")
    refs = _candidates(end)
    if not refs:
        raise NoMutatedProperty("end state has no property with last_mut_idx > 0")
    return refs[:max_props]


@dataclass(frozen=True, slots=True)
class WaitPredicate:
    element: ElementLocator
    kind: str  # "attr" | "text" | "child_len"
    attr_name: str | None
    expected: str | int | None
    match: str = "exact"  # "exact" | "prefix" (value clipped at capture)


@dataclass(frozen=True, slots=True)
class WaitOracle:
    predicates: tuple[WaitPredicate, ...]
    poll_ms: int = DEFAULT_POLL_MS
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self) -> None:
        if not self.predicates:
            raise ValueError("oracle needs at least one predicate")
        if not 10 <= self.poll_ms <= 1000:
            raise ValueError("poll_ms out of range 10..1000")
        if not 500 <= self.timeout_ms <= 60000:
            raise ValueError("timeout_ms out of range 500..60000")


def _value_at(state: DomState, ref: PropertyRef) -> tuple[bool, str | int | None]:
    status = state.elements.get(ref.element)
    if status is None:
        return False, None
    if ref.kind == "attr":
        pv = status.attrs.get(ref.attr_name or "")
        return True, (pv.value if pv is not None else None)
    if ref.kind == "text":
        return True, status.text.value
    return True, status.child_count.value


def _distinguishes(end: DomState, ref: PropertyRef) -> bool:
    """True when the property's final write actually changed what we compare.

    A write that re-stored the same value (or restored the original) leaves
    S_{t-1} satisfying the predicate, which would make the oracle true before
    the command's effects finished.  A missing element counts as changed.
    """
    before = end.at(ref.last_mut_idx - 1)
    if before is None:
        # History not available; assume the write was a real change.
        return True
    exists, value = _value_at(before, ref)
    return (not exists) or value != ref.value


def generate_oracle(
    end: DomState,
    *,
    max_props: int = DEFAULT_MAX_PROPS,
    poll_ms: int = DEFAULT_POLL_MS,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> WaitOracle:
    """Build a conjunction oracle from the latest-written end-state properties.

    The top pick must be a write that changed its value: otherwise the pick
    shifts down to the latest property whose final write did, keeping the
    oracle false right up to that write.  When no such property exists the
    raw latest-first selection stands.
    """
    if not 1 <= max_props <= 5:
        raise ValueError("max_props must be in 1..5")
    refs = _candidates(end)
    if not refs:
        raise NoMutatedProperty("end state has no property with last_mut_idx > 0")
    selected = refs[:max_props]
    anchor = next((i for i, ref in enumerate(refs) if _distinguishes(end, ref)), None)
    if anchor is not None:
        selected = refs[anchor : anchor + max_props]
    predicates = tuple(
        WaitPredicate(
            element=ref.element,
            kind=ref.kind,
            attr_name=ref.attr_name,
            expected=ref.value,
            match="prefix" if ref.truncated else "exact",
        )
        for ref in selected
    )
    return WaitOracle(predicates=predicates, poll_ms=poll_ms, timeout_ms=timeout_ms)


def eval_oracle(oracle: WaitOracle, state: DomState) -> bool:
    """A missing element fails its predicate; values compare exactly, or by
    prefix for values clipped at capture."""
    for p in oracle.predicates:
        status = state.elements.get(p.element)
        if status is None:
            return False
        if p.kind == "attr":
            pv = status.attrs.get(p.attr_name or "")
            value = pv.value if pv is not None else None
        elif p.kind == "text":
            value = status.text.value
        else:
            value = status.child_count.value
        if p.match == "prefix":
            if not isinstance(value, str) or not isinstance(p.expected, str):
                return False
            if not value.startswith(p.expected):
                return False
        elif value != p.expected:
            return False
    return True


# --- rendering ---------------------------------------------------------------

def _js_string(value: str) -> str:
    # json escaping is valid JS; the extra backslash keeps a literal "*/"
    # from terminating the sentinel comment region around the snippet.
    return json.dumps(value, ensure_ascii=False).replace("*/", "*\\/")


def _render_cypress(oracle: WaitOracle) -> str:
    lines: list[str] = []
    opts = f"{{ timeout: {oracle.timeout_ms} }}"
    for p in oracle.predicates:
        get = f"cy.xpath({_js_string(p.element.xpath)}, {opts})"
        if p.match == "prefix":
            lines.append("/* prefix match: value clipped at capture */")
            if p.kind == "text":
                probe = "$el.text()"
            elif p.kind == "attr":
                probe = f"String($el.attr({_js_string(p.attr_name or '')}))"
            else:
                probe = "String($el.children().length)"
            lines.append(
                f"{get}.should(($el) => expect({probe}.startsWith({_js_string(str(p.expected))})).to.eq(true));"
            )
        elif p.kind == "text":
            lines.append(f"{get}.should(\"have.text\", {_js_string(str(p.expected))});")
        elif p.kind == "attr":
            name = _js_string(p.attr_name or "")
            if p.expected is None:
                lines.append(f"{get}.should(\"not.have.attr\", {name});")
            else:
                lines.append(f"{get}.should(\"have.attr\", {name}, {_js_string(str(p.expected))});")
        else:
            lines.append(f"{get}.children().should(\"have.length\", {p.expected});")
    return "\n".join(lines)


def _render_selenium(oracle: WaitOracle, driver_var: str) -> str:
    checks: list[str] = []
    for i, p in enumerate(oracle.predicates):
        var = f"el{i}"
        checks.append(
            f"    const {var} = await {driver_var}.findElement(By.xpath({_js_string(p.element.xpath)}));"
        )
        if p.kind == "attr":
            actual = f"(await {var}.getAttribute({_js_string(p.attr_name or '')}))"
        elif p.kind == "text":
            actual = f"(await {var}.getText())"
        else:
            actual = f"(await {var}.findElements(By.xpath(\"./*\"))).length"
        if p.match == "prefix":
            checks.append("    /* prefix match: value clipped at capture */")
            checks.append(
                f"    if (!String({actual} ?? \"\").startsWith({_js_string(str(p.expected))})) return false;"
            )
        elif p.kind == "child_len":
            checks.append(f"    if ({actual} !== {p.expected}) return false;")
        elif p.expected is None:
            checks.append(f"    if ({actual} !== null) return false;")
        else:
            checks.append(f"    if ({actual} !== {_js_string(str(p.expected))}) return false;")
    body = "\n".join(checks)
    return (
        f"await {driver_var}.wait(async () => {{\n"
        f"  try {{\n"
        f"{body}\n"
        f"    return true;\n"
        f"  }} catch (e) {{ return false; }}\n"
        f"}}, {oracle.timeout_ms}, undefined, {oracle.poll_ms});"
    )


def render_oracle(oracle: WaitOracle, dialect: str, *, driver_var: str = "driver") -> str:
    """Render the oracle as a wait statement in the given test dialect.

    cypress emits one retrying should-statement per predicate (the runner's
    built-in retry polls until the timeout); selenium emits a single
    wait-until call polling every poll_ms up to timeout_ms.
    """
    if dialect == "cypress":
        return _render_cypress(oracle)
    if dialect == "selenium":
        return _render_selenium(oracle, driver_var)
    raise UnsupportedDialect(dialect)
