"""Dynamic listen-window policy used by the recording hooks.

After a command's promise settles, the recorder keeps listening for DOM
mutations for a window of omega seconds.  The window starts at one second and
grows to twice the relative arrival time of each captured mutation, never
shrinking and never exceeding twenty seconds.  A mutation arriving at or after
the current omega finds the window already closed: it is not captured and
does not grow the window.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .trace import CommandSpan

WINDOW_INIT_S = 1.0
WINDOW_CAP_S = 20.0

# Recorded window_close timestamps may drift from the replayed policy by the
# recorder's polling granularity before we flag the span as suspect.
REPLAY_TOLERANCE_MS = 50.0


class UnsortedInput(ValueError):
    """Raised when event times are not sorted ascending."""


@dataclass(frozen=True, slots=True)
class WindowTrace:
    """Replay of the window policy over one command's mutation arrivals.

    ``omega_history`` holds (event_rel_s, omega_after_s) for captured events
    only; missed events never move omega.  When produced by replay_window the
    recorded and expected close times are attached so callers can audit the
    recorder against the policy.
    """

    start_ms: float
    omega_history: tuple[tuple[float, float], ...]
    omega_final_s: float
    captured: tuple[int, ...]
    missed: tuple[int, ...] = ()
    recorded_close_ms: float | None = None
    expected_close_ms: float | None = None

    @property
    def diverged(self) -> bool:
        if self.recorded_close_ms is None or self.expected_close_ms is None:
            return False
        return abs(self.recorded_close_ms - self.expected_close_ms) > REPLAY_TOLERANCE_MS


def compute_window(
    event_rel_s: list[float] | tuple[float, ...],
    *,
    init_s: float = WINDOW_INIT_S,
    cap_s: float = WINDOW_CAP_S,
    start_ms: float = 0.0,
) -> WindowTrace:
    """Run the listen-window policy over event times relative to settle.

    Events must be sorted ascending.  An event strictly inside the current
    window is captured and omega becomes min(cap, max(2 * rel_time, omega));
    everything at or beyond the current omega is missed.
    """
    if init_s <= 0 or cap_s < init_s:
        raise ValueError("require 0 < init_s <= cap_s")
    if event_rel_s and event_rel_s[0] < 0:
        raise UnsortedInput(f"event times are relative to settle and must be >= 0, got {event_rel_s[0]}")
    for a, b in zip(event_rel_s, event_rel_s[1:]):
        if b < a:
            raise UnsortedInput(f"event times must be sorted ascending, {b} follows {a}")

    omega = init_s
    history: list[tuple[float, float]] = []
    captured: list[int] = []
    missed: list[int] = []
    for i, rel in enumerate(event_rel_s):
        if rel < omega:
            omega = min(cap_s, max(2.0 * rel, omega))
            history.append((rel, omega))
            captured.append(i)
        else:
            missed.append(i)
    return WindowTrace(
        start_ms=start_ms,
        omega_history=tuple(history),
        omega_final_s=omega,
        captured=tuple(captured),
        missed=tuple(missed),
    )


def replay_window(span: CommandSpan) -> WindowTrace:
    """Replay the policy over a recorded span and audit the recorded close.

    Mutations observed before settle count as arriving at time zero: they are
    already in the record list when listening starts and cannot grow the
    window.  The result carries the recorded and policy-expected close times;
    ``diverged`` flags disagreement beyond REPLAY_TOLERANCE_MS.
    """
    rels = [max(0.0, (m.t_ms - span.settle_ms) / 1000.0) for m in span.mutations]
    trace = compute_window(rels, start_ms=float(span.settle_ms))
    expected_close = span.settle_ms + trace.omega_final_s * 1000.0
    return replace(
        trace,
        recorded_close_ms=float(span.window_close_ms),
        expected_close_ms=expected_close,
    )
