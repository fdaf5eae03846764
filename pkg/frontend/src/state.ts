/** Session view state as a pure fold over the server's event log.
 *
 * Replaying the same events always reproduces the same state; step events
 * are deduplicated by index, so an SSE reconnect that replays overlapping
 * events cannot create duplicate cards.
 */

import type { FinalPayload, SessionEvent, StepPayload } from "./types.js";

export interface SessionViewState {
  sessionId: string;
  question: string;
  steps: StepPayload[];
  status: string;
  final: FinalPayload | null;
  lastEventId: number;
}

export function initialSession(sessionId: string, question: string): SessionViewState {
  return {
    sessionId,
    question,
    steps: [],
    status: "running",
    final: null,
    lastEventId: 0,
  };
}

export function applyEvent(state: SessionViewState, event: SessionEvent): SessionViewState {
  if (event.event === "step") {
    const step = event.data;
    if (state.steps.some((s) => s.index === step.index)) {
      return { ...state, lastEventId: Math.max(state.lastEventId, event.id) };
    }
    const steps = [...state.steps, step].sort((a, b) => a.index - b.index);
    return { ...state, steps, lastEventId: Math.max(state.lastEventId, event.id) };
  }
  return {
    ...state,
    status: event.data.status,
    final: event.data.final,
    lastEventId: Math.max(state.lastEventId, event.id),
  };
}

export function replayEvents(
  state: SessionViewState,
  events: SessionEvent[],
): SessionViewState {
  return events.reduce(applyEvent, state);
}

/** Index to resume an event stream from (count of step cards already held). */
export function resumeIndex(state: SessionViewState): number {
  return state.steps.length;
}
