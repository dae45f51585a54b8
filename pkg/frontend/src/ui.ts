// DOM rendering for the console. Pure function of the view model plus a few
// wired-up controls; re-rendered wholesale on every model change (the panels
// are small enough that diffing would be overkill).

import type { ConsoleModel } from "./model.js";
import type { ConsoleSession } from "./session.js";

/** Build the console skeleton and return the update function that re-renders
 * every panel from the model (wire it up as the session's change listener). */
export function renderInto(
  root: HTMLElement,
  session: ConsoleSession,
): (model: ConsoleModel) => void {
  root.innerHTML = `
    <header>
      <h1>habitq console</h1>
      <div id="banner"></div>
      <div id="status"></div>
    </header>
    <section id="controls">
      <button id="start-auto">start (auto)</button>
      <button id="start-manual">start (manual)</button>
      <button id="step">step</button>
      <button id="run-episode">run episode</button>
    </section>
    <section id="prompt-panel" hidden></section>
    <section class="columns">
      <div>
        <h2>home state</h2>
        <div id="board"></div>
        <h2>event log</h2>
        <ol id="log"></ol>
      </div>
      <div>
        <h2>Q-table</h2>
        <div id="heatmap"></div>
        <div id="summary"></div>
      </div>
    </section>
  `;

  const get = <T extends HTMLElement>(id: string) =>
    root.querySelector<T>(`#${id}`)!;

  get<HTMLButtonElement>("start-auto").onclick = () => session.start("auto");
  get<HTMLButtonElement>("start-manual").onclick = () => session.start("manual");
  get<HTMLButtonElement>("step").onclick = () => session.stepOnce();
  get<HTMLButtonElement>("run-episode").onclick = () => session.runEpisode();

  let countdown: number | undefined;

  const update = (model: ConsoleModel) => {
    renderBanner(get("banner"), model);
    renderStatus(get("status"), model);
    renderControls(root, model);
    renderPrompt(get("prompt-panel"), model, session);
    renderBoard(get("board"), model);
    renderLog(get<HTMLOListElement>("log"), model);
    renderHeatmap(get("heatmap"), model);
    renderSummary(get("summary"), model);

    clearInterval(countdown);
    if (model.prompt) {
      countdown = window.setInterval(() => {
        const left = root.querySelector("#prompt-countdown");
        if (left) {
          left.textContent = countdownText(model.prompt!.deadline);
        }
      }, 250);
    }
  };

  update(session.model);
  return update;
}

function renderBanner(el: HTMLElement, model: ConsoleModel): void {
  if (model.connection === "offline") {
    el.textContent = "gateway unreachable, retrying...";
    el.className = "banner offline";
  } else {
    el.textContent = "";
    el.className = "banner";
  }
}

function renderStatus(el: HTMLElement, model: ConsoleModel): void {
  el.textContent =
    `phase: ${model.phase} | episode ${model.episode}, step ${model.step} | ` +
    `epsilon ${model.epsilon.toFixed(4)}`;
}

function renderControls(root: HTMLElement, model: ConsoleModel): void {
  const started = model.phase !== "idle";
  const done = model.phase === "done";
  const manual = model.runMode === "manual";
  root.querySelector<HTMLButtonElement>("#start-auto")!.disabled = started;
  root.querySelector<HTMLButtonElement>("#start-manual")!.disabled = started;
  // stepping only exists in manual mode; the gateway would answer 409
  root.querySelector<HTMLButtonElement>("#step")!.disabled = !started || done || !manual;
  root.querySelector<HTMLButtonElement>("#run-episode")!.disabled = !started || done || !manual;
}

function countdownText(deadline: number): string {
  const left = Math.max(0, deadline - Date.now() / 1000);
  return `${left.toFixed(1)}s left`;
}

function renderPrompt(el: HTMLElement, model: ConsoleModel, session: ConsoleSession): void {
  const prompt = model.prompt;
  if (!prompt) {
    el.hidden = !model.promptNotice;
    el.innerHTML = model.promptNotice ? `<p class="notice">${model.promptNotice}</p>` : "";
    return;
  }
  el.hidden = false;
  el.innerHTML = `
    <h2>what should happen?</h2>
    <p>state: ${Object.entries(prompt.state).map(([d, l]) => `${d}=${l}`).join(", ")}</p>
    <p>plan suggests <strong>${prompt.plan_action}</strong>
       <span id="prompt-countdown">${countdownText(prompt.deadline)}</span></p>
    <div id="prompt-actions"></div>
  `;
  const actions = el.querySelector("#prompt-actions")!;
  for (const action of prompt.actions) {
    const button = document.createElement("button");
    button.textContent = action;
    // the value-aligned choice is pre-highlighted; diverging takes an
    // explicit different click
    if (action === prompt.plan_action) {
      button.className = "plan-choice";
      button.autofocus = true;
    }
    button.onclick = () => session.answerFeedback(action);
    actions.appendChild(button);
  }
}

function renderBoard(el: HTMLElement, model: ConsoleModel): void {
  el.innerHTML = "";
  for (const [device, label] of Object.entries(model.board)) {
    const card = document.createElement("div");
    card.className = model.changedDevices.has(device) ? "device changed" : "device";
    card.innerHTML = `<span class="device-id">${device}</span><span class="label">${label}</span>`;
    el.appendChild(card);
  }
}

function renderLog(el: HTMLOListElement, model: ConsoleModel): void {
  el.innerHTML = "";
  for (const entry of model.eventLog) {
    const li = document.createElement("li");
    li.value = entry.seq;
    li.className = `log-${entry.kind}`;
    li.textContent = entry.text;
    el.appendChild(li);
  }
  el.scrollTop = el.scrollHeight;
}

/** Signed color scale centered at 0: negative red, positive blue. */
export function cellColor(value: number, maxAbs: number): string {
  if (maxAbs === 0 || value === 0) {
    return "rgb(255,255,255)";
  }
  const strength = Math.min(1, Math.abs(value) / maxAbs);
  const other = Math.round(255 - 155 * strength);
  return value > 0 ? `rgb(${other},${other},255)` : `rgb(255,${other},${other})`;
}

function renderHeatmap(el: HTMLElement, model: ConsoleModel): void {
  const maxAbs = model.maxAbs();
  const table = document.createElement("table");
  const head = document.createElement("tr");
  head.innerHTML =
    "<th></th>" + model.actionNames.map((name) => `<th>${name}</th>`).join("");
  table.appendChild(head);
  for (const rowIndex of model.rowOrder()) {
    const tr = document.createElement("tr");
    const th = document.createElement("th");
    th.textContent = model.stateLabels[rowIndex] ?? `#${rowIndex}`;
    tr.appendChild(th);
    (model.heatmap[rowIndex] ?? []).forEach((value, colIndex) => {
      const td = document.createElement("td");
      td.textContent = value === 0 ? "" : value.toFixed(2);
      td.style.backgroundColor = cellColor(value, maxAbs);
      const last = model.lastUpdatedCell;
      if (last && last[0] === rowIndex && last[1] === colIndex) {
        td.className = "pulse";
      }
      tr.appendChild(td);
    });
    table.appendChild(tr);
  }
  el.innerHTML = "";
  el.appendChild(table);
}

function renderSummary(el: HTMLElement, model: ConsoleModel): void {
  if (!model.report) {
    el.innerHTML = "";
    return;
  }
  const report = model.report;
  const convergence =
    report.convergence_episode === null
      ? "alignment never settled"
      : `converged at episode ${report.convergence_episode}`;
  el.innerHTML = `
    <h2>run summary</h2>
    <p>${convergence}; final epsilon ${report.final_epsilon.toFixed(4)}</p>
    <p>last episode reward: ${report.episode_rewards[report.episode_rewards.length - 1]}</p>
  `;
}
