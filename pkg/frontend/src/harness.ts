/** Deterministic stand-ins for the browser pieces the shim touches: a tiny
 * element tree, a cookie jar with max-age deletion, and a mutation observer
 * the test drives synchronously.  No layout engine: visibility comes from
 * each element's declared style and box. */

import type {
  DocumentLike,
  ElementLike,
  MutationObserverLike,
  NodeLike,
  ObservedMutation,
  PageEnv,
  StyleLike,
} from "./shim.js";

export class FakeElement implements ElementLike {
  readonly nodeType = 1;
  readonly tagName: string;
  id: string;
  parentElement: FakeElement | null = null;
  children: FakeElement[] = [];
  attrs = new Map<string, string>();
  style: { display: string; visibility: string };
  rect: { width: number; height: number };

  constructor(
    tag: string,
    opts: {
      id?: string;
      display?: string;
      visibility?: string;
      rect?: { width: number; height: number };
    } = {},
  ) {
    this.tagName = tag.toUpperCase();
    this.id = opts.id ?? "";
    this.style = { display: opts.display ?? "block", visibility: opts.visibility ?? "visible" };
    this.rect = opts.rect ?? { width: 100, height: 20 };
  }

  get childElementCount(): number {
    return this.children.length;
  }

  get previousElementSibling(): FakeElement | null {
    if (!this.parentElement) return null;
    const siblings = this.parentElement.children;
    const idx = siblings.indexOf(this);
    return idx > 0 ? siblings[idx - 1]! : null;
  }

  getAttribute(name: string): string | null {
    return this.attrs.get(name) ?? null;
  }

  getBoundingClientRect(): { width: number; height: number } {
    return this.rect;
  }

  append(child: FakeElement): FakeElement {
    child.parentElement = this;
    this.children.push(child);
    return child;
  }

  contains(node: NodeLike): boolean {
    let el: FakeElement | null =
      node instanceof FakeElement ? node : ((node as FakeTextNode).parentElement as FakeElement | null);
    while (el) {
      if (el === this) return true;
      el = el.parentElement;
    }
    return false;
  }
}

export class FakeTextNode {
  readonly nodeType = 3;
  data: string;
  parentElement: FakeElement | null;

  constructor(parent: FakeElement, data = "") {
    this.parentElement = parent;
    this.data = data;
  }
}

export class FakeDocument implements DocumentLike {
  readonly documentElement: FakeElement;
  readonly body: FakeElement;
  readonly head: FakeElement;
  private jar = new Map<string, string>();

  constructor() {
    this.documentElement = new FakeElement("html");
    this.head = this.documentElement.append(new FakeElement("head"));
    this.body = this.documentElement.append(new FakeElement("body"));
  }

  get cookie(): string {
    return [...this.jar].map(([k, v]) => `${k}=${v}`).join("; ");
  }

  set cookie(text: string) {
    const [pair = "", ...attrs] = text.split(";").map((p) => p.trim());
    const eq = pair.indexOf("=");
    if (eq <= 0) return;
    const name = pair.slice(0, eq);
    const value = pair.slice(eq + 1);
    const expired = attrs.some((a) => /^max-age=(0|-\d+)$/i.test(a));
    if (expired) {
      this.jar.delete(name);
    } else {
      this.jar.set(name, value);
    }
  }

  cookieNames(): string[] {
    return [...this.jar.keys()];
  }

  cookieValue(name: string): string | undefined {
    return this.jar.get(name);
  }
}

export class FakeMutationObserver implements MutationObserverLike {
  static instances: FakeMutationObserver[] = [];

  observed: Array<{ target: ElementLike; options: Record<string, boolean> }> = [];
  disconnected = false;

  constructor(private readonly callback: (batch: ObservedMutation[]) => void) {
    FakeMutationObserver.instances.push(this);
  }

  static reset(): void {
    FakeMutationObserver.instances = [];
  }

  observe(target: ElementLike, options: Record<string, boolean>): void {
    this.observed.push({ target, options });
  }

  disconnect(): void {
    this.disconnected = true;
  }

  emit(batch: ObservedMutation[]): void {
    this.callback(batch);
  }
}

export interface FakeClock {
  t: number;
  tick(ms: number): number;
}

export function fakeClock(start = 0): FakeClock {
  return {
    t: start,
    tick(ms: number) {
      this.t += ms;
      return this.t;
    },
  };
}

export function fakeEnv(clock: FakeClock): PageEnv {
  return {
    mutationObserver: FakeMutationObserver,
    getComputedStyle: (el): StyleLike => (el as FakeElement).style,
    now: () => clock.t,
  };
}

// Scripted changes: each helper applies the change to the tree and returns
// the observer record a browser would deliver for it.

export function setAttribute(el: FakeElement, name: string, value: string | null): ObservedMutation {
  const old = el.getAttribute(name);
  if (value === null) el.attrs.delete(name);
  else el.attrs.set(name, value);
  return { type: "attributes", target: el, attributeName: name, oldValue: old, addedNodes: [], removedNodes: [] };
}

export function setText(node: FakeTextNode, next: string): ObservedMutation {
  const old = node.data;
  node.data = next;
  return { type: "characterData", target: node, oldValue: old, addedNodes: [], removedNodes: [] };
}

export function appendChildren(el: FakeElement, added: FakeElement[]): ObservedMutation {
  for (const child of added) el.append(child);
  return { type: "childList", target: el, addedNodes: added, removedNodes: [] };
}

export function removeChildren(el: FakeElement, removed: FakeElement[]): ObservedMutation {
  for (const child of removed) {
    const idx = el.children.indexOf(child);
    if (idx >= 0) el.children.splice(idx, 1);
    child.parentElement = null;
  }
  return { type: "childList", target: el, addedNodes: [], removedNodes: removed };
}
