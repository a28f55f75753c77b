/* Recording runtime for selenium-webdriver suites.
 *
 * pre(driver, id) installs the in-page observer and stamps the command
 * start; post(driver, id, name, loc) marks settle, then polls the cookie
 * channel with a dynamic listen window: the window starts at 1s, doubles
 * past the latest captured mutation, and caps at 20s.  Every record is
 * appended as one JSON line to WEFIX_LOG (default wefix-mutation.log).
 */
"use strict";

const fs = require("fs");
const path = require("path");

const LOG_PATH = process.env.WEFIX_LOG || path.join(process.cwd(), "wefix-mutation.log");
const FORMAT_VERSION = 1;
const WINDOW_INIT_S = 1.0;
const WINDOW_CAP_S = 20.0;
const POLL_MS = 50;
const COOKIE_PREFIX = "__wefix__";

let wroteMeta = false;
let epochMs = 0;

function writeLine(obj) {
  fs.appendFileSync(LOG_PATH, JSON.stringify(obj) + "\n");
}

function now() {
  return Date.now() - epochMs;
}

function ensureMeta() {
  if (wroteMeta) return;
  wroteMeta = true;
  epochMs = Date.now();
  writeLine({
    rec: "meta",
    version: FORMAT_VERSION,
    suite: process.env.WEFIX_SUITE || path.basename(process.cwd()),
    started_at_ms: epochMs,
  });
}

const OBSERVER_SNIPPET = fs.readFileSync(path.join(__dirname, "wefix-observer.js"), "utf8");

async function installObserver(driver) {
  await driver.executeScript(OBSERVER_SNIPPET);
}

function decodeRecord(value) {
  // base64url JSON, produced by the in-page shim
  const b64 = value.replace(/-/g, "+").replace(/_/g, "/");
  return JSON.parse(Buffer.from(b64, "base64").toString("utf8"));
}

async function drainChannel(driver, sinceSeq) {
  const cookies = await driver.manage().getCookies();
  const out = [];
  for (const c of cookies) {
    if (!c.name.startsWith(COOKIE_PREFIX + "r")) continue;
    const seq = parseInt(c.name.slice(COOKIE_PREFIX.length + 1), 10);
    if (!Number.isFinite(seq) || seq <= sinceSeq) continue;
    const rec = decodeRecord(c.value);
    rec.seq = seq;
    out.push(rec);
    await driver.manage().deleteCookie(c.name);
  }
  out.sort((a, b) => a.seq - b.seq);
  return out;
}

const pending = new Map();

async function pre(driver, cmdId) {
  ensureMeta();
  await installObserver(driver);
  pending.set(cmdId, { startMs: now(), drained: 0 });
}

async function post(driver, cmdId, name, loc) {
  const state = pending.get(cmdId) || { startMs: now(), drained: 0 };
  pending.delete(cmdId);
  const [file, line] = splitLoc(loc);
  const settleMs = now();
  writeLine({ rec: "cmd_start", cmd_id: cmdId, name: name, loc: file + ":" + line, t_ms: state.startMs });
  writeLine({ rec: "cmd_settle", cmd_id: cmdId, t_ms: settleMs });

  // dynamic listen window: extend while mutations keep arriving inside it
  let omega = WINDOW_INIT_S;
  let seq = 0;
  let sinceSeq = state.drained;
  while (now() - settleMs < omega * 1000) {
    const batch = await drainChannel(driver, sinceSeq);
    for (const raw of batch) {
      sinceSeq = Math.max(sinceSeq, raw.seq);
      const tMs = raw.t_ms;
      const relS = Math.max(0, (tMs - settleMs) / 1000);
      if (relS < omega) {
        omega = Math.min(WINDOW_CAP_S, Math.max(2 * relS, omega));
      }
      seq += 1;
      raw.rec = "mutation";
      raw.cmd_id = cmdId;
      raw.seq = seq;
      writeLine(raw);
    }
    await sleep(POLL_MS);
  }
  writeLine({ rec: "window_close", cmd_id: cmdId, t_ms: now(), omega_s: omega });
}

function splitLoc(loc) {
  const i = loc.lastIndexOf(":");
  if (i < 0) return [loc, 0];
  return [loc.slice(0, i), parseInt(loc.slice(i + 1), 10) || 0];
}

function sleep(ms) {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

module.exports = { pre, post, installObserver, drainChannel, LOG_PATH };
