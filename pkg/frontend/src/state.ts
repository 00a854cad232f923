/** Annotate-flow state machine, kept free of DOM so it can be unit tested.
 *
 * The flow leases one request at a time, preselects the current label
 * (confirming is a legitimate, informative answer), and only enables submit
 * once every decision is made: one label for classification, one tag per
 * token for sequences. Model predictions stay hidden behind an explicit
 * reveal unless the deployment opts into always-visible.
 */

import type { AnnotationRequest } from "./api.js";

export interface FlowConfig {
  /** Show the model's prediction without an explicit reveal. */
  alwaysReveal: boolean;
}

export interface FlowState {
  request: AnnotationRequest | null;
  selected: string | null;          // classification choice
  tokenTags: (string | null)[];     // sequence choices, one per token
  activeToken: number;              // cursor for keyboard tagging
  revealed: boolean;
  submitting: boolean;
  notice: string | null;
}

export function idleState(): FlowState {
  return {
    request: null,
    selected: null,
    tokenTags: [],
    activeToken: 0,
    revealed: false,
    submitting: false,
    notice: null,
  };
}

export function isSequence(request: AnnotationRequest): boolean {
  return Array.isArray(request.input);
}

/** A freshly leased request, with the current label preselected. */
export function receiveRequest(
  request: AnnotationRequest,
  config: FlowConfig,
  notice: string | null = null,
): FlowState {
  const state = idleState();
  state.request = request;
  state.revealed = config.alwaysReveal;
  state.notice = notice;
  if (isSequence(request)) {
    state.tokenTags = (request.current_label as string[]).slice();
  } else {
    state.selected = request.current_label as string;
  }
  return state;
}

export function selectLabel(state: FlowState, label: string, labels: string[]): FlowState {
  if (!state.request || state.submitting || !labels.includes(label)) return state;
  if (isSequence(state.request)) {
    const tags = state.tokenTags.slice();
    tags[state.activeToken] = label;
    const nextUndecided = tags.findIndex((t) => t === null);
    return {
      ...state,
      tokenTags: tags,
      activeToken: nextUndecided === -1
        ? Math.min(state.activeToken + 1, tags.length - 1)
        : nextUndecided,
    };
  }
  return { ...state, selected: label };
}

export function selectLabelByIndex(state: FlowState, index: number, labels: string[]): FlowState {
  if (index < 0 || index >= labels.length) return state;
  return selectLabel(state, labels[index], labels);
}

export function focusToken(state: FlowState, index: number): FlowState {
  if (!state.request || !isSequence(state.request)) return state;
  const clamped = Math.max(0, Math.min(index, state.tokenTags.length - 1));
  return { ...state, activeToken: clamped };
}

export function clearToken(state: FlowState): FlowState {
  if (!state.request || !isSequence(state.request)) return state;
  const tags = state.tokenTags.slice();
  tags[state.activeToken] = null;
  return { ...state, tokenTags: tags };
}

export function reveal(state: FlowState): FlowState {
  return { ...state, revealed: true };
}

/** Submit is allowed only once every token has a tag (or a class is picked). */
export function canSubmit(state: FlowState): boolean {
  if (!state.request || state.submitting) return false;
  if (isSequence(state.request)) {
    return state.tokenTags.length > 0 && state.tokenTags.every((t) => t !== null);
  }
  return state.selected !== null;
}

export function chosenLabel(state: FlowState): string | string[] {
  if (!state.request) throw new Error("no active request");
  if (isSequence(state.request)) {
    if (!canSubmit(state)) throw new Error("not every token is tagged");
    return state.tokenTags as string[];
  }
  if (state.selected === null) throw new Error("no label selected");
  return state.selected;
}

export function beginSubmit(state: FlowState): FlowState {
  return { ...state, submitting: true, notice: null };
}

/** 409/404 mean the item is no longer ours (raced or lease expired):
 * surface a notice and move on to the next lease. */
export function submissionLost(state: FlowState, kind: "conflict" | "gone"): FlowState {
  const notice = kind === "conflict"
    ? "Another annotator answered this example first; moving on."
    : "This example left the queue (lease expired or batch advanced); moving on.";
  return { ...idleState(), notice };
}

export function submissionRejected(state: FlowState, detail: string): FlowState {
  return { ...state, submitting: false, notice: `Rejected: ${detail}` };
}
