"""FSM replay, property selection, oracle generation and evaluation."""

import random

import pytest

from wefix.fsm import (
    DomState,
    ElementStatus,
    NoMutatedProperty,
    PropertyValue,
    build_fsm,
    end_state,
    eval_oracle,
    generate_oracle,
    initial_state,
    select_properties,
)
from wefix.trace import (
    AttrChange,
    ChildChange,
    CommandSpan,
    ElementLocator,
    MutationRecord,
    SourceLoc,
    TextChange,
)

AGE = ElementLocator('//*[@id="age"]', "age")
BOX = ElementLocator('//*[@id="box"]', "box")


def mk_mutation(seq, t_ms, kind, target, *, attr=None, text=None, child=None, truncated=False):
    return MutationRecord(
        seq=seq, t_ms=t_ms, cmd_id=1, kind=kind, target=target,
        in_body=True, visible=True, css_effective=True,
        attr_change=attr, text_change=text, child_change=child, truncated=truncated,
    )


def mk_span(mutations, settle=100):
    close = max(settle + 1000, max((m.t_ms for m in mutations), default=0))
    return CommandSpan(
        cmd_id=1, name="click", source_loc=SourceLoc("a.js", 1),
        start_ms=0, settle_ms=settle, window_close_ms=close,
        omega_final_s=(close - settle) / 1000, mutations=tuple(mutations),
    )


def text_mut(seq, t_ms, target, new, old="", truncated=False):
    return mk_mutation(seq, t_ms, "characterData", target,
                       text=TextChange(old, new), truncated=truncated)


def attr_mut(seq, t_ms, target, name, new, old=None):
    return mk_mutation(seq, t_ms, "attributes", target, attr=AttrChange(name, old, new))


def child_mut(seq, t_ms, target, added, removed, count):
    return mk_mutation(seq, t_ms, "childList", target, child=ChildChange(added, removed, count))


class TestReplay:
    def test_no_mutations_single_state(self):
        fsm = build_fsm(mk_span([]))
        assert len(fsm.states) == 1
        assert fsm.transitions == ()
        assert end_state(fsm).index == 0

    def test_age_text_mutation(self):
        fsm = build_fsm(mk_span([text_mut(1, 150, AGE, "23")]))
        end = end_state(fsm)
        assert end.index == 1
        status = end.elements[AGE]
        assert status.text == PropertyValue("23", 1)
        # untouched properties keep the baseline stamp
        assert status.child_count == PropertyValue(0, 0)
        assert status.attrs == {}

    def test_attr_then_text_same_element(self):
        fsm = build_fsm(mk_span([
            attr_mut(1, 120, BOX, "class", "on"),
            text_mut(2, 140, BOX, "done"),
        ]))
        end = end_state(fsm)
        assert end.index == 2
        status = end.elements[BOX]
        assert status.attrs["class"] == PropertyValue("on", 1)
        assert status.text == PropertyValue("done", 2)

    def test_attr_removal_stamps_none(self):
        fsm = build_fsm(mk_span([attr_mut(1, 120, BOX, "hidden", None, old="true")]))
        assert end_state(fsm).elements[BOX].attrs["hidden"] == PropertyValue(None, 1)

    def test_linear_chain_shape(self):
        fsm = build_fsm(mk_span([
            text_mut(1, 110, AGE, "1"),
            text_mut(2, 120, AGE, "2"),
            text_mut(3, 130, AGE, "3"),
        ]))
        assert [s.index for s in fsm.states] == [0, 1, 2, 3]
        assert [(t.from_idx, t.to_idx) for t in fsm.transitions] == [(0, 1), (1, 2), (2, 3)]

    def test_child_count_replay_consistent(self):
        fsm = build_fsm(mk_span([
            child_mut(1, 110, BOX, 2, 0, 2),
            child_mut(2, 120, BOX, 1, 1, 2),
        ]))
        assert end_state(fsm).elements[BOX].child_count == PropertyValue(2, 2)
        assert fsm.inconsistencies == ()

    def test_child_count_contradiction_reported_but_trusted(self):
        fsm = build_fsm(mk_span([
            child_mut(1, 110, BOX, 2, 0, 2),
            child_mut(2, 120, BOX, 1, 0, 5),  # replay expects 3
        ]))
        assert len(fsm.inconsistencies) == 1
        bad = fsm.inconsistencies[0]
        assert (bad.seq, bad.expected_count, bad.recorded_count) == (2, 3, 5)
        assert end_state(fsm).elements[BOX].child_count.value == 5

    def test_states_walk_history(self):
        fsm = build_fsm(mk_span([
            text_mut(1, 110, AGE, "1"),
            text_mut(2, 120, AGE, "2"),
        ]))
        end = end_state(fsm)
        assert end.at(1).elements[AGE].text.value == "1"
        assert end.at(0).elements.get(AGE) is None

    def test_sub_batch_composition(self):
        muts = [
            attr_mut(1, 110, BOX, "class", "a"),
            text_mut(2, 120, AGE, "x"),
            child_mut(3, 130, BOX, 1, 0, 1),
            text_mut(4, 140, AGE, "y"),
        ]
        whole = end_state(build_fsm(mk_span(muts)))
        first = build_fsm(mk_span(muts[:2]))
        second = build_fsm(mk_span(muts), kept=tuple(muts[2:]), initial=end_state(first))
        assert end_state(second).elements == whole.elements
        assert end_state(second).index == whole.index

    def test_kept_subset_is_replayed(self):
        muts = [
            text_mut(1, 110, AGE, "skipme"),
            text_mut(2, 120, AGE, "final"),
        ]
        fsm = build_fsm(mk_span(muts), kept=(muts[1],))
        end = end_state(fsm)
        assert end.index == 1
        assert end.elements[AGE].text == PropertyValue("final", 1)


class TestSelection:
    def mk_end(self):
        elements = {
            BOX: ElementStatus(
                attrs={"class": PropertyValue("active", 9)},
                text=PropertyValue("ok", 8),
                child_count=PropertyValue(4, 7),
            ),
            AGE: ElementStatus(
                attrs={}, text=PropertyValue("23", 3), child_count=PropertyValue(0, 0),
            ),
        }
        return DomState(index=9, elements=elements)

    def test_latest_first(self):
        refs = select_properties(self.mk_end())
        assert [(r.kind, r.last_mut_idx) for r in refs] == [("attr", 9), ("text", 8), ("child_len", 7)]

    def test_cardinality_min_rule(self):
        end = DomState(index=1, elements={
            AGE: ElementStatus(attrs={}, text=PropertyValue("23", 1), child_count=PropertyValue(0, 0)),
        })
        assert len(select_properties(end)) == 1
        assert len(select_properties(self.mk_end(), max_props=2)) == 2

    def test_tie_break_is_lexicographic(self):
        a = ElementLocator("//a", None)
        b = ElementLocator("//b", None)
        end = DomState(index=7, elements={
            b: ElementStatus(attrs={}, text=PropertyValue("t", 7), child_count=PropertyValue(0, 0)),
            a: ElementStatus(attrs={"z": PropertyValue("v", 7)}, text=PropertyValue("", 0),
                             child_count=PropertyValue(2, 7)),
        })
        refs = select_properties(end)
        # same idx everywhere: //a before //b, attr before child_len
        assert [(r.element.xpath, r.kind) for r in refs] == [("//a", "attr"), ("//a", "child_len"), ("//b", "text")]

    def test_untouched_state_raises(self):
        end = DomState(index=0, elements={
            AGE: ElementStatus(attrs={}, text=PropertyValue("", 0), child_count=PropertyValue(0, 0)),
        })
        with pytest.raises(NoMutatedProperty):
            select_properties(end)

    def test_max_props_range(self):
        with pytest.raises(ValueError):
            select_properties(self.mk_end(), max_props=0)
        with pytest.raises(ValueError):
            select_properties(self.mk_end(), max_props=6)


class TestGenerate:
    def test_single_text_predicate(self):
        fsm = build_fsm(mk_span([text_mut(1, 150, AGE, "23")]))
        oracle = generate_oracle(end_state(fsm))
        assert len(oracle.predicates) == 1
        p = oracle.predicates[0]
        assert (p.element, p.kind, p.expected, p.match) == (AGE, "text", "23", "exact")
        assert (oracle.poll_ms, oracle.timeout_ms) == (100, 4000)

    def test_three_predicate_conjunction_order(self):
        end = TestSelection().mk_end()
        oracle = generate_oracle(end)
        assert [(p.kind, p.attr_name) for p in oracle.predicates] == [
            ("attr", "class"), ("text", None), ("child_len", None),
        ]

    def test_truncated_value_becomes_prefix_predicate(self):
        long = "x" * 256
        fsm = build_fsm(mk_span([text_mut(1, 150, AGE, long, truncated=True)]))
        oracle = generate_oracle(end_state(fsm))
        assert oracle.predicates[0].match == "prefix"

    def test_knob_validation(self):
        end = end_state(build_fsm(mk_span([text_mut(1, 150, AGE, "23")])))
        with pytest.raises(ValueError):
            generate_oracle(end, poll_ms=5)
        with pytest.raises(ValueError):
            generate_oracle(end, timeout_ms=100)
        oracle = generate_oracle(end, poll_ms=1000, timeout_ms=60000)
        assert (oracle.poll_ms, oracle.timeout_ms) == (1000, 60000)

    def test_revert_to_prior_value_keeps_raw_selection(self):
        # the final text write restores the baseline, but it still changed
        # the value relative to the state just before it, so it anchors fine
        fsm = build_fsm(mk_span([
            attr_mut(1, 110, BOX, "class", "done"),
            text_mut(2, 120, AGE, "working", old=""),
            text_mut(3, 130, AGE, "", old="working"),
        ]))
        end = end_state(fsm)
        oracle = generate_oracle(end)
        assert oracle.predicates[0].kind == "text"
        assert not eval_oracle(oracle, end.at(2))  # text still "working" there

    def test_noop_final_write_reselects_distinguishing_anchor(self):
        # swap-in-place child mutation leaves the count unchanged; waiting on
        # it would already hold before the swap, so the attr write anchors
        fsm = build_fsm(mk_span([
            attr_mut(1, 110, BOX, "class", "done"),
            child_mut(2, 120, AGE, 1, 0, 1),
            child_mut(3, 130, AGE, 1, 1, 1),
        ]))
        end = end_state(fsm)
        oracle = generate_oracle(end)
        assert [(p.kind, p.element) for p in oracle.predicates] == [("attr", BOX)]
        assert eval_oracle(oracle, end)
        assert not eval_oracle(oracle, end.at(0))


class TestEval:
    def test_end_state_satisfied(self):
        fsm = build_fsm(mk_span([text_mut(1, 150, AGE, "23")]))
        end = end_state(fsm)
        assert eval_oracle(generate_oracle(end), end)

    def test_initial_state_fails(self):
        fsm = build_fsm(mk_span([text_mut(1, 150, AGE, "23")]))
        end = end_state(fsm)
        assert not eval_oracle(generate_oracle(end), end.at(0))

    def test_conjunction_needs_all(self):
        end = TestSelection().mk_end()
        oracle = generate_oracle(end)
        # drop the attr write from the state: 2 of 3 predicates hold
        partial = DomState(index=9, elements={
            BOX: ElementStatus(attrs={}, text=PropertyValue("ok", 8), child_count=PropertyValue(4, 7)),
            AGE: end.elements[AGE],
        })
        assert not eval_oracle(oracle, partial)

    def test_missing_element_is_false(self):
        fsm = build_fsm(mk_span([text_mut(1, 150, AGE, "23")]))
        oracle = generate_oracle(end_state(fsm))
        assert not eval_oracle(oracle, initial_state())

    def test_prefix_match_semantics(self):
        long = "y" * 256
        fsm = build_fsm(mk_span([text_mut(1, 150, AGE, long, truncated=True)]))
        oracle = generate_oracle(end_state(fsm))
        grown = DomState(index=1, elements={
            AGE: ElementStatus(attrs={}, text=PropertyValue(long + "tail", 1),
                               child_count=PropertyValue(0, 0)),
        })
        assert eval_oracle(oracle, grown)
        shrunk = DomState(index=1, elements={
            AGE: ElementStatus(attrs={}, text=PropertyValue("y" * 200, 1),
                               child_count=PropertyValue(0, 0)),
        })
        assert not eval_oracle(oracle, shrunk)


# --- randomized property suite --------------------------------------------------


def random_instance(rng):
    """Random span over <= 10 elements with <= 20 mutations, plus brute-force
    bookkeeping of every property's (value, stamp)."""
    elements = [ElementLocator(f"//e{i}", None) for i in range(rng.randint(1, 10))]
    attr_names = ["class", "style", "data-k"]
    book = {}  # xpath -> {"attrs": {...}, "text": (v, s), "child": (v, s)}
    muts = []
    t = 100
    for seq in range(1, rng.randint(1, 20) + 1):
        t += rng.randint(0, 50)
        el = rng.choice(elements)
        slot = book.setdefault(el.xpath, {"attrs": {}, "text": ("", 0), "child": (0, 0)})
        kind = rng.choice(["attributes", "characterData", "childList"])
        if kind == "attributes":
            name = rng.choice(attr_names)
            new = rng.choice([None, "", "v" + str(rng.randint(0, 3))])
            old = slot["attrs"].get(name, (None, 0))[0]
            muts.append(attr_mut(seq, t, el, name, new, old=old))
            slot["attrs"][name] = (new, seq)
        elif kind == "characterData":
            new = "t" + str(rng.randint(0, 3))
            muts.append(text_mut(seq, t, el, new, old=slot["text"][0]))
            slot["text"] = (new, seq)
        else:
            current = slot["child"][0]
            added = rng.randint(0, 3)
            removed = rng.randint(0, current) if current else 0
            count = current + added - removed
            muts.append(child_mut(seq, t, el, added, removed, count))
            slot["child"] = (count, seq)
    return mk_span(muts), book


class TestRandomizedProperties:
    def test_replay_matches_brute_force_bookkeeping(self):
        rng = random.Random(77)
        for _ in range(500):
            span, book = random_instance(rng)
            end = end_state(build_fsm(span))
            assert set(e.xpath for e in end.elements) == set(book)
            for el, status in end.elements.items():
                slot = book[el.xpath]
                assert (status.text.value, status.text.last_mut_idx) == slot["text"]
                assert (status.child_count.value, status.child_count.last_mut_idx) == slot["child"]
                assert {k: (v.value, v.last_mut_idx) for k, v in status.attrs.items()} == slot["attrs"]

    def test_end_state_satisfaction_and_pre_final_falsity(self):
        rng = random.Random(4242)
        checked_falsity = 0
        for _ in range(500):
            span, _ = random_instance(rng)
            fsm = build_fsm(span)
            end = end_state(fsm)
            try:
                oracle = generate_oracle(end)
            except NoMutatedProperty:
                continue
            assert eval_oracle(oracle, end)

            # pre-final falsity, with the revert rule: if any mutated property
            # distinguishes S_j from its own pre-write state, the oracle must
            # be false just before its latest selected write
            t_star = max(p_idx for p_idx in (
                _pred_idx(end, p) for p in oracle.predicates
            ))
            prior = fsm.states[t_star - 1]
            if _any_distinguishing_candidate(fsm, end):
                assert not eval_oracle(oracle, prior)
                checked_falsity += 1
        assert checked_falsity > 300  # the property is rarely vacuous


def _pred_idx(end, pred):
    status = end.elements[pred.element]
    if pred.kind == "text":
        return status.text.last_mut_idx
    if pred.kind == "child_len":
        return status.child_count.last_mut_idx
    return status.attrs[pred.attr_name].last_mut_idx


def _any_distinguishing_candidate(fsm, end):
    """Brute-force: does any mutated property's end value differ from its
    value just before its own final write?"""
    for el, status in end.elements.items():
        slots = [("text", None, status.text), ("child_len", None, status.child_count)]
        slots += [("attr", name, pv) for name, pv in status.attrs.items()]
        for kind, name, pv in slots:
            if pv.last_mut_idx == 0:
                continue
            prior = fsm.states[pv.last_mut_idx - 1]
            before = prior.elements.get(el)
            if before is None:
                return True  # element did not exist: any write distinguishes
            if kind == "text":
                prev = before.text.value
            elif kind == "child_len":
                prev = before.child_count.value
            else:
                prev = before.attrs.get(name, PropertyValue(None, 0)).value if before.attrs.get(name) else None
            if prev != pv.value:
                return True
    return False
