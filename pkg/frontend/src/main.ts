/** Console wiring: polls the service, drives the annotate flow, and keeps the
 * progress dashboard in sync with /api/history. */

import { ApiClient, IterationRecord, SessionInfo } from "./api.js";
import {
  escapeHtml, historyTableHtml, sparklinePoints, stopRecommended,
} from "./format.js";
import { installKeyboard } from "./keyboard.js";
import {
  FlowState, beginSubmit, canSubmit, chosenLabel, clearToken, focusToken,
  idleState, isSequence, receiveRequest, reveal, selectLabelByIndex,
  submissionLost, submissionRejected,
} from "./state.js";

const params = new URLSearchParams(location.search);
const config = {
  annotator: params.get("annotator") ?? `annotator-${Math.random().toString(36).slice(2, 8)}`,
  token: params.get("token"),
  // default: prediction hidden until an explicit reveal (or after submit)
  alwaysReveal: params.get("reveal") === "always",
  precisionFloor: Number(params.get("floor") ?? "0.2"),
};

const api = new ApiClient(config.annotator, config.token);
const $ = (id: string) => document.getElementById(id)!;

let flow: FlowState = idleState();
let session: SessionInfo | null = null;
let history: IterationRecord[] = [];
let unreachable = false;

function labels(): string[] {
  return session?.labels ?? [];
}

async function refreshSession(): Promise<void> {
  try {
    session = await api.session();
    history = await api.history();
    unreachable = false;
  } catch {
    unreachable = true;
  }
  renderStatus();
  renderDashboard();
}

async function leaseNext(): Promise<void> {
  if (!session || session.status !== "annotating" || flow.request) return;
  try {
    const request = await api.next();
    if (request) {
      flow = receiveRequest(request, config, flow.notice);
      renderTask();
    }
  } catch {
    unreachable = true;
  }
}

async function submit(): Promise<void> {
  if (!canSubmit(flow) || !flow.request) return;
  const request = flow.request;
  flow = beginSubmit(flow);
  renderTask();
  const outcome = await api.annotate(request.example_id, chosenLabel(flow));
  if (outcome.kind === "accepted") {
    flow = idleState();
    if (!config.alwaysReveal) {
      flow.notice = `Recorded. Model had predicted: ${formatLabel(request.predicted_label)}`;
    }
  } else if (outcome.kind === "conflict" || outcome.kind === "gone") {
    flow = submissionLost(flow, outcome.kind);
  } else {
    flow = submissionRejected(flow, outcome.detail);
    renderTask();
    return;
  }
  renderTask();
  await refreshSession();
  await leaseNext();
}

function formatLabel(label: string | string[]): string {
  return Array.isArray(label) ? label.join(" ") : label;
}

// ---------------------------------------------------------------- rendering

function renderStatus(): void {
  const banner = $("banner");
  if (unreachable) {
    banner.textContent = "Service unreachable - data may be stale.";
    banner.className = "banner stale";
    return;
  }
  if (!session) return;
  banner.className = "banner";
  if (session.status === "training") {
    banner.innerHTML = '<span class="spinner"></span> Training the next model - the queue will refill shortly.';
  } else if (session.status === "done") {
    banner.textContent = `Run complete (${session.stopped_by ?? "iteration budget"}).`;
  } else if (session.status === "error") {
    banner.textContent = `Engine error: ${session.error}`;
    banner.className = "banner stale";
  } else {
    banner.textContent =
      `Iteration ${session.iteration}: ${session.answered}/${session.batch_size} annotated, ` +
      `${session.remaining} remaining.`;
  }
}

function renderTask(): void {
  const panel = $("task");
  const notice = flow.notice ? `<p class="notice">${escapeHtml(flow.notice)}</p>` : "";
  if (!flow.request) {
    const idleText = session?.status === "annotating"
      ? "Fetching the next example..."
      : "Queue is empty.";
    panel.innerHTML = `${notice}<p class="muted">${idleText}</p>`;
    return;
  }
  const req = flow.request;
  const parts = [notice, `<p class="example-id">#${escapeHtml(req.example_id)} (iteration ${req.iteration})</p>`];

  if (isSequence(req)) {
    const tokens = req.input as string[];
    const chips = tokens.map((tok, i) => {
      const tag = flow.tokenTags[i];
      const classes = ["chip"];
      if (i === flow.activeToken) classes.push("active");
      if (tag === null) classes.push("undecided");
      return `<button class="${classes.join(" ")}" data-token="${i}">` +
        `${escapeHtml(tok)}<span class="tag">${escapeHtml(tag ?? "?")}</span></button>`;
    });
    parts.push(`<div class="tokens">${chips.join("")}</div>`);
  } else {
    parts.push(`<p class="input-text">${escapeHtml(req.input as string)}</p>`);
  }

  const labelButtons = labels().map((label, i) => {
    const selectedNow = isSequence(req)
      ? flow.tokenTags[flow.activeToken] === label
      : flow.selected === label;
    return `<button class="label ${selectedNow ? "selected" : ""}" data-label-index="${i}">` +
      `<kbd>${i + 1}</kbd> ${escapeHtml(label)}</button>`;
  });
  parts.push(`<div class="labels">${labelButtons.join("")}</div>`);

  if (flow.revealed) {
    parts.push(`<p class="prediction">Model prediction: ${escapeHtml(formatLabel(req.predicted_label))}</p>`);
  } else {
    parts.push('<button id="reveal" class="ghost">Reveal model prediction (r)</button>');
  }
  parts.push(`<button id="submit" ${canSubmit(flow) ? "" : "disabled"}>` +
    `${flow.submitting ? "Submitting..." : "Submit (Enter)"}</button>`);
  panel.innerHTML = parts.join("\n");

  panel.querySelectorAll<HTMLButtonElement>("[data-label-index]").forEach((btn) => {
    btn.onclick = () => {
      flow = selectLabelByIndex(flow, Number(btn.dataset.labelIndex), labels());
      renderTask();
    };
  });
  panel.querySelectorAll<HTMLButtonElement>("[data-token]").forEach((btn) => {
    btn.onclick = () => {
      flow = focusToken(flow, Number(btn.dataset.token));
      renderTask();
    };
  });
  const revealBtn = panel.querySelector<HTMLButtonElement>("#reveal");
  if (revealBtn) revealBtn.onclick = () => { flow = reveal(flow); renderTask(); };
  const submitBtn = panel.querySelector<HTMLButtonElement>("#submit");
  if (submitBtn) submitBtn.onclick = () => void submit();
}

function renderDashboard(): void {
  $("history").innerHTML = historyTableHtml(history);
  const recommendation = $("recommendation");
  if (stopRecommended(history, config.precisionFloor)) {
    recommendation.textContent =
      `Flag precision fell below ${config.precisionFloor}: consider stopping or lowering M.`;
    recommendation.className = "recommendation alert";
  } else {
    recommendation.textContent = "";
    recommendation.className = "recommendation";
  }
  const pmp = history.map((r) => r.p_mp);
  const budget = history.map((r) => r.cumulative_annotated_fraction);
  $("chart-pmp").setAttribute("points", sparklinePoints(pmp, 280, 60));
  $("chart-budget").setAttribute("points", sparklinePoints(budget, 280, 60));
}

// ---------------------------------------------------------------- lifecycle

installKeyboard({
  onLabelIndex: (i) => { flow = selectLabelByIndex(flow, i, labels()); renderTask(); },
  onSubmit: () => void submit(),
  onReveal: () => { flow = reveal(flow); renderTask(); },
  onPrevToken: () => { flow = focusToken(flow, flow.activeToken - 1); renderTask(); },
  onNextToken: () => { flow = focusToken(flow, flow.activeToken + 1); renderTask(); },
  onClearToken: () => { flow = clearToken(flow); renderTask(); },
});

async function tick(): Promise<void> {
  await refreshSession();
  await leaseNext();
  renderTask();
}

void tick();
setInterval(() => void tick(), 2000);
