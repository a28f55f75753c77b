/* In-page mutation observer, injected once per page by the recording
 * runtime.  Serializes each DOM mutation to a cookie named
 * __wefix__r<seq> (seq zero-padded to 6) holding base64url JSON, so the
 * driver can read mutations without re-entering page JS.  A record that
 * would exceed 4000 encoded bytes is dropped; the counter cookie
 * __wefix__n survives page navigations on the same origin so names stay
 * unique across installs.
 */
(function () {
  "use strict";
  if (window.__wefixObserver) return;
  window.__wefixObserver = true;

  var PREFIX = "__wefix__";
  var LIMIT = 4000;
  var VALUE_LIMIT = 256;

  function readCounter() {
    var m = document.cookie.match(new RegExp("(?:^|; )" + PREFIX + "n=(\\d+)"));
    return m ? parseInt(m[1], 10) : 0;
  }

  function writeCounter(n) {
    document.cookie = PREFIX + "n=" + n + "; path=/";
  }

  function clip(value) {
    if (typeof value !== "string") return value;
    return value.length > VALUE_LIMIT ? value.slice(0, VALUE_LIMIT) : value;
  }

  function b64url(json) {
    var b64 = btoa(unescape(encodeURIComponent(json)));
    return b64.replace(/\+/g, "-").replace(/\//g, "_").replace(/=+$/, "");
  }

  function put(rec) {
    var n = readCounter() + 1;
    writeCounter(n);
    var payload = b64url(JSON.stringify(rec));
    if (payload.length > LIMIT) return;
    var seq = String(n).length > 6 ? String(n) : ("000000" + n).slice(-6);
    document.cookie = PREFIX + "r" + seq + "=" + payload + "; path=/";
  }

  function xpathOf(el) {
    if (!el || el.nodeType !== 1) return "";
    if (el.id) return '//*[@id="' + el.id + '"]';
    var parts = [];
    var node = el;
    while (node && node.nodeType === 1 && node !== document.documentElement) {
      var idx = 1;
      var sib = node.previousElementSibling;
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
    var r = el.getBoundingClientRect();
    var style = window.getComputedStyle(el);
    return r.width > 0 && r.height > 0 && style.visibility !== "hidden" && style.display !== "none";
  }

  function cssEffective(el, attrName) {
    if (!el || el.nodeType !== 1) return false;
    // conservative: attribute writes that cannot restyle are filtered later
    if (attrName && attrName.indexOf("data-") === 0) return false;
    return true;
  }

  var observer = new MutationObserver(function (muts) {
    for (var i = 0; i < muts.length; i++) {
      var m = muts[i];
      var target = m.target.nodeType === 1 ? m.target : m.target.parentElement;
      var truncated = false;
      var rec = {
        t_ms: Date.now(),
        kind: m.type,
        xpath: xpathOf(target),
        in_body: document.body ? document.body.contains(target) : false,
        visible: visibleOf(target),
        css_effective: cssEffective(target, m.attributeName),
      };
      if (target && target.id) rec.dom_id = target.id;
      if (m.type === "attributes") {
        rec.attr_name = m.attributeName;
        var oldA = m.oldValue;
        var newA = target ? target.getAttribute(m.attributeName) : null;
        if (typeof oldA === "string" && oldA.length > VALUE_LIMIT) { oldA = oldA.slice(0, VALUE_LIMIT); truncated = true; }
        if (typeof newA === "string" && newA.length > VALUE_LIMIT) { newA = newA.slice(0, VALUE_LIMIT); truncated = true; }
        rec.attr_old = oldA;
        rec.attr_new = newA;
      } else if (m.type === "characterData") {
        var oldT = m.oldValue || "";
        var newT = m.target.data || "";
        if (oldT.length > VALUE_LIMIT) { oldT = oldT.slice(0, VALUE_LIMIT); truncated = true; }
        if (newT.length > VALUE_LIMIT) { newT = newT.slice(0, VALUE_LIMIT); truncated = true; }
        rec.text_old = oldT;
        rec.text_new = newT;
      } else {
        rec.child_added = m.addedNodes.length;
        rec.child_removed = m.removedNodes.length;
        rec.child_count = target ? target.childElementCount : 0;
      }
      if (truncated) rec.truncated = true;
      put(rec);
    }
  });

  observer.observe(document.documentElement, {
    subtree: true,
    childList: true,
    attributes: true,
    attributeOldValue: true,
    characterData: true,
    characterDataOldValue: true,
  });
})();
