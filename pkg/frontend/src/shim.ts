/** In-page DOM mutation recorder.
 *
 * Watches a document subtree through MutationObserver and publishes every
 * change as one labeled cookie, so a test-process poller can read mutations
 * without re-entering page JavaScript.  The cookie name carries the sequence
 * number; the value is the encoded record.  Field names match the recording
 * log's mutation lines; the draining hook adds cmd_id (and the late flag)
 * when it writes the log.
 */

export const CHANNEL_PREFIX = "__wefix__";
export const COUNTER_COOKIE = `${CHANNEL_PREFIX}n`;
export const RECORD_COOKIE_PREFIX = `${CHANNEL_PREFIX}r`;

/** Records whose encoded value would exceed this many bytes are dropped. */
export const ENCODED_VALUE_LIMIT = 4000;
/** Attribute and text values are clipped to this length at capture. */
export const VALUE_CLIP = 256;

export type MutationKind = "attributes" | "characterData" | "childList";

export interface RecordFields {
  t_ms: number;
  kind: MutationKind;
  xpath: string;
  dom_id?: string;
  attr_name?: string;
  attr_old?: string | null;
  attr_new?: string | null;
  text_old?: string;
  text_new?: string;
  child_added?: number;
  child_removed?: number;
  child_count?: number;
  in_body: boolean;
  visible: boolean;
  css_effective: boolean;
  truncated?: boolean;
}

export interface CookieRecord {
  seq: number;
  name: string;
  fields: RecordFields;
}

export class UnsupportedEnvironment extends Error {}

// Structural views of the DOM pieces the shim touches, so the recorder runs
// unchanged against a real page or the test harness.

export interface ElementLike {
  readonly nodeType: number;
  readonly id: string;
  readonly tagName: string;
  readonly parentElement: ElementLike | null;
  readonly previousElementSibling: ElementLike | null;
  readonly childElementCount: number;
  getAttribute(name: string): string | null;
  getBoundingClientRect(): { width: number; height: number };
}

export interface TextNodeLike {
  readonly nodeType: number;
  readonly data: string;
  readonly parentElement: ElementLike | null;
}

export type NodeLike = ElementLike | TextNodeLike;

export interface ObservedMutation {
  readonly type: MutationKind;
  readonly target: NodeLike;
  readonly attributeName?: string | null;
  readonly oldValue?: string | null;
  readonly addedNodes: ArrayLike<unknown>;
  readonly removedNodes: ArrayLike<unknown>;
}

export interface StyleLike {
  readonly display: string;
  readonly visibility: string;
}

export interface MutationObserverLike {
  observe(target: ElementLike, options: Record<string, boolean>): void;
  disconnect(): void;
}

export type MutationObserverCtor = new (
  callback: (batch: ObservedMutation[]) => void,
) => MutationObserverLike;

export interface DocumentLike {
  cookie: string;
  readonly documentElement: ElementLike;
  readonly body: { contains(node: NodeLike): boolean } | null;
}

export interface PageEnv {
  mutationObserver: MutationObserverCtor | undefined;
  getComputedStyle(el: ElementLike): StyleLike;
  now(): number;
}

/** Bind the shim to real browser globals. */
export function browserEnv(win: {
  MutationObserver?: MutationObserverCtor;
  getComputedStyle(el: unknown): StyleLike;
}): PageEnv {
  return {
    mutationObserver: win.MutationObserver,
    getComputedStyle: (el) => win.getComputedStyle(el),
    now: () => Date.now(),
  };
}

// --- cookie channel -------------------------------------------------------------

function parseJar(doc: DocumentLike): Map<string, string> {
  const jar = new Map<string, string>();
  for (const part of doc.cookie.split(";")) {
    const pair = part.trim();
    if (!pair) continue;
    const eq = pair.indexOf("=");
    if (eq < 0) continue;
    jar.set(pair.slice(0, eq), pair.slice(eq + 1));
  }
  return jar;
}

function readCounter(doc: DocumentLike): number {
  const raw = parseJar(doc).get(COUNTER_COOKIE);
  return raw && /^\d+$/.test(raw) ? parseInt(raw, 10) : 0;
}

function seqName(seq: number): string {
  const digits = String(seq);
  const padded = digits.length > 6 ? digits : `000000${digits}`.slice(-6);
  return `${RECORD_COOKIE_PREFIX}${padded}`;
}

export function encodeFields(fields: RecordFields): string {
  const bytes = new TextEncoder().encode(JSON.stringify(fields));
  let bin = "";
  for (let i = 0; i < bytes.length; i++) bin += String.fromCharCode(bytes[i]!);
  return btoa(bin).replace(/\+/g, "-").replace(/\//g, "_").replace(/=+$/, "");
}

export function decodeFields(value: string): RecordFields {
  const b64 = value.replace(/-/g, "+").replace(/_/g, "/");
  const pad = b64.length % 4 === 0 ? "" : "=".repeat(4 - (b64.length % 4));
  const bin = atob(b64 + pad);
  const bytes = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) bytes[i] = bin.charCodeAt(i);
  return JSON.parse(new TextDecoder().decode(bytes)) as RecordFields;
}

/** Publish one record; returns null when the encoded value exceeds the size
 * limit (the sequence number is still consumed, keeping names unique). */
export function publishRecord(doc: DocumentLike, fields: RecordFields): CookieRecord | null {
  const seq = readCounter(doc) + 1;
  doc.cookie = `${COUNTER_COOKIE}=${seq}; path=/`;
  const payload = encodeFields(fields);
  if (payload.length > ENCODED_VALUE_LIMIT) return null;
  const name = seqName(seq);
  doc.cookie = `${name}=${payload}; path=/`;
  return { seq, name, fields };
}

/** Records with sequence number > sinceSeq, in sequence order.  Reading
 * never deletes: removal is clearChannel's job at the next command. */
export function drain(doc: DocumentLike, sinceSeq = 0): CookieRecord[] {
  const out: CookieRecord[] = [];
  for (const [name, value] of parseJar(doc)) {
    if (!name.startsWith(RECORD_COOKIE_PREFIX)) continue;
    const digits = name.slice(RECORD_COOKIE_PREFIX.length);
    if (!/^\d+$/.test(digits)) continue;
    const seq = parseInt(digits, 10);
    if (seq <= sinceSeq) continue;
    out.push({ seq, name, fields: decodeFields(value) });
  }
  out.sort((a, b) => a.seq - b.seq);
  return out;
}

/** Delete the channel's cookies and return how many were removed.  Only
 * cookies bearing the label prefix are touched; the counter survives so
 * sequence numbers stay unique for the rest of the page session. */
export function clearChannel(doc: DocumentLike): number {
  let removed = 0;
  for (const name of parseJar(doc).keys()) {
    if (!name.startsWith(CHANNEL_PREFIX) || name === COUNTER_COOKIE) continue;
    doc.cookie = `${name}=; path=/; max-age=0`;
    removed += 1;
  }
  return removed;
}

// --- record construction --------------------------------------------------------

const ELEMENT_NODE = 1;

function isElement(node: NodeLike): node is ElementLike {
  return node.nodeType === ELEMENT_NODE;
}

export function xpathOf(el: ElementLike | null): string {
  if (!el || el.nodeType !== ELEMENT_NODE) return "";
  if (el.id) return `//*[@id="${el.id}"]`;
  const parts: string[] = [];
  let node: ElementLike | null = el;
  while (node && node.nodeType === ELEMENT_NODE && node.parentElement) {
    let idx = 1;
    let sib = node.previousElementSibling;
    while (sib) {
      if (sib.tagName === node.tagName) idx += 1;
      sib = sib.previousElementSibling;
    }
    parts.unshift(`${node.tagName.toLowerCase()}[${idx}]`);
    node = node.parentElement;
  }
  return `/html/${parts.join("/")}`;
}

function visibleOf(env: PageEnv, el: ElementLike | null): boolean {
  if (!el || el.nodeType !== ELEMENT_NODE) return false;
  const rect = el.getBoundingClientRect();
  const style = env.getComputedStyle(el);
  return rect.width > 0 && rect.height > 0 && style.visibility !== "hidden" && style.display !== "none";
}

function cssEffectiveOf(el: ElementLike | null, attrName: string | null | undefined): boolean {
  if (!el || el.nodeType !== ELEMENT_NODE) return false;
  // data-* writes cannot restyle; everything else is assumed effective and
  // filtered later by the analyzer if it turns out not to matter
  if (attrName && attrName.startsWith("data-")) return false;
  return true;
}

function clip(value: string): { value: string; clipped: boolean } {
  if (value.length <= VALUE_CLIP) return { value, clipped: false };
  return { value: value.slice(0, VALUE_CLIP), clipped: true };
}

export function buildFields(
  doc: DocumentLike,
  env: PageEnv,
  m: ObservedMutation,
  batchTime: number,
): RecordFields {
  const target = isElement(m.target) ? m.target : m.target.parentElement;
  let truncated = false;
  const fields: RecordFields = {
    t_ms: batchTime,
    kind: m.type,
    xpath: xpathOf(target),
    in_body: doc.body !== null && target !== null && doc.body.contains(target),
    visible: visibleOf(env, target),
    css_effective: cssEffectiveOf(target, m.attributeName),
  };
  if (target && target.id) fields.dom_id = target.id;
  if (m.type === "attributes") {
    fields.attr_name = m.attributeName ?? "";
    let oldA = m.oldValue ?? null;
    let newA = target ? target.getAttribute(m.attributeName ?? "") : null;
    if (oldA !== null) {
      const c = clip(oldA);
      oldA = c.value;
      truncated = truncated || c.clipped;
    }
    if (newA !== null) {
      const c = clip(newA);
      newA = c.value;
      truncated = truncated || c.clipped;
    }
    fields.attr_old = oldA;
    fields.attr_new = newA;
  } else if (m.type === "characterData") {
    const oldT = clip(m.oldValue ?? "");
    const newT = clip(isElement(m.target) ? "" : m.target.data);
    truncated = oldT.clipped || newT.clipped;
    fields.text_old = oldT.value;
    fields.text_new = newT.value;
  } else {
    fields.child_added = m.addedNodes.length;
    fields.child_removed = m.removedNodes.length;
    fields.child_count = target ? target.childElementCount : 0;
  }
  if (truncated) fields.truncated = true;
  return fields;
}

// --- observer lifecycle ---------------------------------------------------------

export interface ObserverHandle {
  disconnect(): void;
}

const installed = new WeakMap<DocumentLike, ObserverHandle>();

/** Install the recorder on a document.  Idempotent: a second install on the
 * same document is a no-op returning the existing handle. */
export function installObserver(doc: DocumentLike, env: PageEnv): ObserverHandle {
  const existing = installed.get(doc);
  if (existing) return existing;
  const Ctor = env.mutationObserver;
  if (!Ctor) {
    throw new UnsupportedEnvironment("MutationObserver is not available in this environment");
  }
  const observer = new Ctor((batch) => {
    const t = env.now();
    for (const m of batch) publishRecord(doc, buildFields(doc, env, m, t));
  });
  observer.observe(doc.documentElement, {
    subtree: true,
    childList: true,
    attributes: true,
    attributeOldValue: true,
    characterData: true,
    characterDataOldValue: true,
  });
  const handle: ObserverHandle = {
    disconnect() {
      observer.disconnect();
      installed.delete(doc);
    },
  };
  installed.set(doc, handle);
  return handle;
}
