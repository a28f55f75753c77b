"""Command discovery, hook insertion, wait insertion, and byte-exact strip."""

from pathlib import Path

import pytest

from wefix.transformer import (
    AlreadyInstrumented,
    CommandSite,
    DialectMismatch,
    FixPlan,
    ParseFailure,
    PlanMode,
    StaleSites,
    UnbalancedSentinels,
    find_commands,
    instrument_recording,
    insert_waits,
    scan_source,
    strip_hooks,
)

CORPUS = Path(__file__).parent / "fixtures" / "corpus"

SEL_SMALL = 'const a = 1;\nawait driver.get("u");\nawait driver.findElement(By.id("b"))\n  .click();\n'
CY_SMALL = 'cy.visit("/");\ncy.get("#a")\n  .type("x");\n'


def corpus_files():
    return sorted(CORPUS.glob("*.js"))


def dialect_of(path):
    return "cypress" if path.name.startswith("cy_") else "selenium"


class TestScanOffsets:
    def test_selenium_sites_with_hand_computed_ranges(self):
        sites = find_commands(SEL_SMALL, "selenium", file="t.js")
        assert [(s.name, s.byte_range, s.line) for s in sites] == [
            ("get", (13, 35), 2),
            ("click", (36, 84), 3),
        ]
        assert all(s.awaited and s.chain_root == "driver" for s in sites)
        # ranges really point at the statements
        assert SEL_SMALL[13:35] == 'await driver.get("u");'
        assert SEL_SMALL[36:84] == 'await driver.findElement(By.id("b"))\n  .click();'

    def test_cypress_sites_with_hand_computed_ranges(self):
        sites = find_commands(CY_SMALL, "cypress", file="t.cy.js")
        assert [(s.name, s.byte_range, s.line) for s in sites] == [
            ("visit", (0, 14), 1),
            ("type", (15, 41), 2),
        ]
        assert all(not s.awaited and s.chain_root == "cy" for s in sites)
        assert CY_SMALL[15:41] == 'cy.get("#a")\n  .type("x");'


class TestVocabulary:
    def test_selenium_interaction_verbs(self):
        src = (
            "await d.findElement(q).click();\n"
            "await d.findElement(q).sendKeys(\"x\");\n"
            "await d.findElement(q).clear();\n"
            "await d.navigate().back();\n"
            "await d.executeScript(\"s\");\n"
            "await d.actions().dragAndDrop(a, b).perform();\n"
        )
        names = [s.name for s in find_commands(src, "selenium")]
        assert names == ["click", "sendKeys", "clear", "navigate", "executeScript", "perform"]

    def test_selenium_queries_excluded(self):
        src = (
            "const t = await d.findElement(q).getText();\n"
            "const v = await d.findElement(q).getAttribute(\"class\");\n"
            "await d.findElements(q);\n"
        )
        assert find_commands(src, "selenium") == []

    def test_selenium_actions_requires_terminal_perform(self):
        src = "const chain = await d.actions().move(o);\n"
        result = scan_source(src, "selenium")
        assert result.sites == () and result.issues == ()

    def test_cypress_heads_and_interactions(self):
        src = (
            'cy.visit("/");\n'
            'cy.get("#a").click();\n'
            'cy.get("#b").type("x");\n'
            'cy.get("#c").select("v");\n'
            'cy.get("#d").check();\n'
            'cy.contains("Go").click();\n'
            "cy.reload();\n"
            'cy.contains("plain");\n'
        )
        names = [s.name for s in find_commands(src, "cypress")]
        assert names == ["visit", "click", "type", "select", "check", "click", "reload", "contains"]

    def test_cypress_assertion_chains_excluded(self):
        src = (
            'cy.get("#x").should("have.text", "1");\n'
            'cy.get("#y").should(($el) => { expect($el).to.exist; });\n'
        )
        assert find_commands(src, "cypress") == []

    def test_selenium_scan_ignores_cy_root(self):
        src = 'cy.get("#a").click();\nawait driver.get("u");\n'
        assert [s.name for s in find_commands(src, "selenium")] == ["get"]

    def test_command_in_argument_position_is_an_issue(self):
        res = scan_source("helper(cy.get(\"#a\").click());\n", "cypress")
        assert res.sites == ()
        assert len(res.issues) == 1
        assert "unsupported position" in res.issues[0].message

    def test_unterminated_command_is_an_issue(self):
        res = scan_source('cy.get("#a").click()\n', "cypress")
        assert res.sites == ()
        assert len(res.issues) == 1
        assert "semicolon" in res.issues[0].message


class TestMasking:
    def test_commands_in_comments_ignored(self):
        src = '// await driver.get("a");\n/* await driver.get("b"); */\nawait driver.get("c");\n'
        assert len(find_commands(src, "selenium")) == 1

    def test_commands_in_strings_ignored(self):
        src = "const s = 'cy.visit(\"/\")';\nconst t = \"cy.reload();\";\ncy.visit(\"/real\");\n"
        assert [s.name for s in find_commands(src, "cypress")] == ["visit"]

    def test_commands_in_templates_ignored(self):
        src = "const s = `multi\nline cy.reload();`;\ncy.reload();\n"
        sites = find_commands(src, "cypress")
        assert [(s.name, s.line) for s in sites] == [("reload", 3)]

    def test_unterminated_block_comment_fails(self):
        with pytest.raises(ParseFailure):
            scan_source("/* never closed\ncy.visit(\"/\");\n", "cypress")

    def test_unterminated_string_fails(self):
        with pytest.raises(ParseFailure):
            scan_source('const s = "no close;\n', "cypress")

    def test_unterminated_template_fails(self):
        with pytest.raises(ParseFailure):
            scan_source("const s = `no close;\n", "cypress")

    def test_escaped_quotes_inside_strings(self):
        src = 'const s = "a \\" b";\ncy.visit("/x");\n'
        assert len(find_commands(src, "cypress")) == 1


class TestInstrument:
    def test_selenium_hooks_exact_shape(self):
        out = instrument_recording(SEL_SMALL, "selenium", file="t.js")
        assert out.startswith('const __wefix = require("./wefix-runtime.js");\n')
        assert "/* wefix:begin hook-pre 1 */ await __wefix.pre(driver, 1); /* wefix:end */\n" in out
        assert (
            '\n/* wefix:begin hook-post 1 */ await __wefix.post(driver, 1, "get", "t.js:2"); /* wefix:end */'
            in out
        )
        assert "hook-pre 2" in out and "hook-post 2" in out

    def test_cypress_hooks_have_no_await(self):
        out = instrument_recording(CY_SMALL, "cypress", file="t.cy.js")
        assert out.startswith('const __wefix = require("./wefix-runtime.cy.js");\n')
        assert "/* wefix:begin hook-pre 1 */ __wefix.pre(1); /* wefix:end */\n" in out
        assert '__wefix.post(2, "type", "t.cy.js:2");' in out

    def test_indentation_matches_site(self):
        src = 'describe("x", () => {\n    it("y", () => {\n        cy.visit("/");\n    });\n});\n'
        out = instrument_recording(src, "cypress")
        assert "\n        /* wefix:begin hook-pre 1 */" in out
        assert '/* wefix:end */\n        cy.visit("/");' in out

    def test_reinstrumenting_rejected(self):
        once = instrument_recording(CY_SMALL, "cypress")
        with pytest.raises(AlreadyInstrumented):
            instrument_recording(once, "cypress")

    def test_preexisting_import_rejected(self):
        src = 'const __wefix = require("./wefix-runtime.js");\nawait driver.get("u");\n'
        with pytest.raises(AlreadyInstrumented):
            instrument_recording(src, "selenium")

    def test_no_sites_still_gets_import_only(self):
        out = instrument_recording("const a = 1;\n", "selenium")
        assert out == 'const __wefix = require("./wefix-runtime.js");\nconst a = 1;\n'


def _dummy_plan(source, dialect, snippet="await probe();"):
    sites = find_commands(source, dialect)
    return FixPlan(
        file="<memory>", dialect=dialect, mode=PlanMode.EXPLICIT_WAITS,
        insertions=tuple((s, snippet) for s in sites),
    )


class TestInsertWaits:
    def test_glue_bytes_exact(self):
        src = '  await driver.get("u");\n'
        plan = _dummy_plan(src, "selenium")
        out = insert_waits(src, plan)
        assert out == (
            '  await driver.get("u");'
            "\n  /* wefix:begin wait 1 */ await probe(); /* wefix:end */\n"
        )

    def test_multiline_snippet_reindented(self):
        src = '    cy.visit("/");\n'
        plan = _dummy_plan(src, "cypress", snippet="lineA();\nlineB();")
        out = insert_waits(src, plan)
        assert "\n    /* wefix:begin wait 1 */ lineA();\n    lineB(); /* wefix:end */\n" in out

    def test_wait_number_is_site_ordinal(self):
        plan = _dummy_plan(SEL_SMALL, "selenium")
        out = insert_waits(SEL_SMALL, plan)
        assert "/* wefix:begin wait 1 */" in out
        assert "/* wefix:begin wait 2 */" in out

    def test_subset_of_sites(self):
        sites = find_commands(SEL_SMALL, "selenium")
        plan = FixPlan(file="<memory>", dialect="selenium", mode=PlanMode.EXPLICIT_WAITS,
                       insertions=((sites[1], "await probe();"),))
        out = insert_waits(SEL_SMALL, plan)
        assert out.count("wefix:begin") == 1
        assert "/* wefix:begin wait 2 */" in out

    def test_stale_plan_rejected(self):
        plan = _dummy_plan(SEL_SMALL, "selenium")
        edited = SEL_SMALL.replace('"u"', '"other-url"')
        with pytest.raises(StaleSites):
            insert_waits(edited, plan)

    def test_dialect_mismatch_rejected(self):
        sites = find_commands(CY_SMALL, "cypress")
        plan = FixPlan(file="<memory>", dialect="selenium", mode=PlanMode.EXPLICIT_WAITS,
                       insertions=((sites[0], "x();"),))
        with pytest.raises(DialectMismatch):
            insert_waits(CY_SMALL, plan)

    def test_wrong_mode_rejected(self):
        sites = find_commands(CY_SMALL, "cypress")
        plan = FixPlan(file="<memory>", dialect="cypress", mode=PlanMode.RECORDING_HOOKS,
                       insertions=((sites[0], "x();"),))
        with pytest.raises(ValueError):
            insert_waits(CY_SMALL, plan)

    def test_overlapping_insertions_rejected_at_plan_construction(self):
        sites = find_commands(CY_SMALL, "cypress")
        with pytest.raises(ValueError):
            FixPlan(file="<memory>", dialect="cypress", mode=PlanMode.EXPLICIT_WAITS,
                    insertions=((sites[0], "a();"), (sites[0], "b();")))


class TestStrip:
    def test_stray_begin_marker_rejected(self):
        with pytest.raises(UnbalancedSentinels):
            strip_hooks("/* wefix:begin wait 1 */ x();\n")

    def test_stray_end_marker_rejected(self):
        with pytest.raises(UnbalancedSentinels):
            strip_hooks("x(); /* wefix:end */\n")

    def test_idempotent_on_clean_source(self):
        assert strip_hooks(SEL_SMALL) == SEL_SMALL

    def test_inner_comment_like_content_survives(self):
        src = '  cy.visit("/");\n'
        plan = _dummy_plan(src, "cypress", snippet='probe("/* not a marker */");')
        # escaping the closer is the renderer's job; here the payload has no
        # real end marker so strip must remove exactly the inserted region
        out = insert_waits(src, plan.__class__(plan.file, plan.dialect, plan.mode, plan.insertions))
        assert strip_hooks(out) == src


class TestRoundTripCorpus:
    def test_corpus_has_enough_files(self):
        assert len(corpus_files()) >= 20

    @pytest.mark.parametrize("path", corpus_files(), ids=lambda p: p.name)
    def test_strip_after_instrument_is_identity(self, path):
        src = path.read_text()
        out = instrument_recording(src, dialect_of(path), file=path.name)
        assert strip_hooks(out) == src

    @pytest.mark.parametrize("path", corpus_files(), ids=lambda p: p.name)
    def test_strip_after_waits_is_identity(self, path):
        src = path.read_text()
        dialect = dialect_of(path)
        plan = _dummy_plan(src, dialect, snippet="await probe();\nawait again();")
        if not plan.insertions:
            pytest.skip("no command sites in this fixture")
        assert strip_hooks(insert_waits(src, plan)) == src

    @pytest.mark.parametrize("path", corpus_files(), ids=lambda p: p.name)
    def test_instrumented_output_rescans_clean(self, path):
        # hooks and sentinels must not disturb command discovery
        src = path.read_text()
        dialect = dialect_of(path)
        before = [(s.name, s.line) for s in find_commands(src, dialect, file=path.name)]
        out = instrument_recording(src, dialect, file=path.name)
        after = [s.name for s in find_commands(out, dialect, file=path.name)]
        assert after == [n for n, _ in before]
