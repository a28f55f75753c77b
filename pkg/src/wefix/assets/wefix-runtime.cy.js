/* Recording runtime for Cypress suites.
 *
 * Same wire format as the selenium runtime, but commands are enqueued on the
 * cy chain and the mutation channel is read through cy.getCookies().  Log
 * lines are collected in memory and flushed through cy.task("wefixAppend"),
 * which the cypress config must route to an fs append.
 */
"use strict";

const FORMAT_VERSION = 1;
const WINDOW_INIT_S = 1.0;
const WINDOW_CAP_S = 20.0;
const POLL_MS = 50;
const COOKIE_PREFIX = "__wefix__";

let wroteMeta = false;
let epochMs = 0;

function emit(obj) {
  cy.task("wefixAppend", JSON.stringify(obj) + "\n", { log: false });
}

function now() {
  return Date.now() - epochMs;
}

function ensureMeta() {
  if (wroteMeta) return;
  wroteMeta = true;
  epochMs = Date.now();
  emit({
    rec: "meta",
    version: FORMAT_VERSION,
    suite: Cypress.spec ? Cypress.spec.name : "cypress",
    started_at_ms: epochMs,
  });
}

function decodeRecord(value) {
  const b64 = value.replace(/-/g, "+").replace(/_/g, "/");
  return JSON.parse(atob(b64));
}

const pending = new Map();

function pre(cmdId) {
  cy.then({ log: false }, () => {
    ensureMeta();
    pending.set(cmdId, { startMs: now() });
  });
  cy.window({ log: false }).then((win) => {
    if (win.__wefixObserver) return;
    win.__wefixObserver = true;
    installObserver(win);
  });
}

function post(cmdId, name, loc) {
  cy.then({ log: false }, () => {
    const state = pending.get(cmdId) || { startMs: now() };
    pending.delete(cmdId);
    const settleMs = now();
    emit({ rec: "cmd_start", cmd_id: cmdId, name: name, loc: loc, t_ms: state.startMs });
    emit({ rec: "cmd_settle", cmd_id: cmdId, t_ms: settleMs });
    return listen(cmdId, settleMs);
  });
}

function listen(cmdId, settleMs) {
  let omega = WINDOW_INIT_S;
  let seq = 0;
  let sinceSeq = 0;
  function step() {
    if (now() - settleMs >= omega * 1000) {
      emit({ rec: "window_close", cmd_id: cmdId, t_ms: now(), omega_s: omega });
      return null;
    }
    return drain().then((batch) => {
      for (const raw of batch) {
        if (raw.seq <= sinceSeq) continue;
        sinceSeq = raw.seq;
        const relS = Math.max(0, (raw.t_ms - settleMs) / 1000);
        if (relS < omega) {
          omega = Math.min(WINDOW_CAP_S, Math.max(2 * relS, omega));
        }
        seq += 1;
        raw.rec = "mutation";
        raw.cmd_id = cmdId;
        raw.seq = seq;
        emit(raw);
      }
      return new Cypress.Promise((r) => setTimeout(r, POLL_MS)).then(step);
    });
  }
  return step();
}

function drain() {
  return cy.getCookies({ log: false }).then((cookies) => {
    const out = [];
    for (const c of cookies) {
      if (!c.name.startsWith(COOKIE_PREFIX + "r")) continue;
      const seq = parseInt(c.name.slice(COOKIE_PREFIX.length + 1), 10);
      if (!Number.isFinite(seq)) continue;
      const rec = decodeRecord(c.value);
      rec.seq = seq;
      out.push(rec);
      cy.clearCookie(c.name, { log: false });
    }
    out.sort((a, b) => a.seq - b.seq);
    return out;
  });
}

function installObserver(win) {
  // Mirror of the in-page observer; kept inline because Cypress executes in
  // the app window and can reach the DOM directly.
  const doc = win.document;
  let counter = 0;
  function put(rec) {
    counter += 1;
    const name = COOKIE_PREFIX + "r" + String(counter).padStart(6, "0");
    const json = JSON.stringify(rec);
    const b64 = win.btoa(unescape(encodeURIComponent(json)))
      .replace(/\+/g, "-").replace(/\//g, "_").replace(/=+$/, "");
    if (b64.length > 4000) return;
    doc.cookie = name + "=" + b64 + "; path=/";
  }
  function xpathOf(el) {
    if (!el || el.nodeType !== 1) return "";
    if (el.id) return '//*[@id="' + el.id + '"]';
    const parts = [];
    let node = el;
    while (node && node.nodeType === 1 && node !== doc.documentElement) {
      let idx = 1;
      let sib = node.previousElementSibling;
      while (sib) {
        if (sib.tagName === node.tagName) idx += 1;
        sib = sib.previousElementSibling;
      }
      parts.unshift(node.tagName.toLowerCase() + "[" + idx + "]");
      node = node.parentElement;
    }
    return "/html/" + parts.join("/");
  }
  function visibleOf(el) {
    if (!el || el.nodeType !== 1) return false;
    const r = el.getBoundingClientRect();
    const style = win.getComputedStyle(el);
    return r.width > 0 && r.height > 0 && style.visibility !== "hidden" && style.display !== "none";
  }
  const observer = new win.MutationObserver((muts) => {
    for (const m of muts) {
      const target = m.target.nodeType === 1 ? m.target : m.target.parentElement;
      const rec = {
        t_ms: Date.now(),
        kind: m.type,
        xpath: xpathOf(target),
        in_body: doc.body ? doc.body.contains(target) : false,
        visible: visibleOf(target),
        css_effective: true,
      };
      if (target && target.id) rec.dom_id = target.id;
      if (m.type === "attributes") {
        rec.attr_name = m.attributeName;
        rec.attr_old = m.oldValue;
        rec.attr_new = target ? target.getAttribute(m.attributeName) : null;
      } else if (m.type === "characterData") {
        rec.text_old = m.oldValue;
        rec.text_new = m.target.data;
      } else {
        rec.child_added = m.addedNodes.length;
        rec.child_removed = m.removedNodes.length;
        rec.child_count = target ? target.childElementCount : 0;
      }
      put(rec);
    }
  });
  observer.observe(doc.documentElement, {
    subtree: true,
    childList: true,
    attributes: true,
    attributeOldValue: true,
    characterData: true,
    characterDataOldValue: true,
  });
}

module.exports = { pre, post };
