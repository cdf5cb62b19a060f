/** Dashboard wiring: instance picker, scenario panels, comparison. */

import { ApiClient } from "./api.js";
import { scenarioCompare } from "./compare.js";
import { BASEMAP_TILE_URL } from "./config.js";
import { formatMoneyTenths, formatObjective, summarizeResult } from "./format.js";
import { buildLayers, renderSvg } from "./map.js";
import { debounce } from "./poll.js";
import { ScenarioPanel, type PanelState } from "./scenario.js";
import type { InstanceFull, PlanOverrides } from "./types.js";

const client = new ApiClient("");

interface PanelDom {
  root: HTMLElement;
  panel: ScenarioPanel | null;
  instanceId: string | null;
  instanceFull: InstanceFull | null;
}

const panels: PanelDom[] = [];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, cls?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function sliderRow(label: string, min: number, max: number, step: number,
                   value: number, onInput: (v: number) => void): HTMLElement {
  const row = el("label", "slider-row");
  const caption = el("span", "slider-label", `${label}: ${value}`);
  const input = el("input");
  input.type = "range";
  input.min = String(min);
  input.max = String(max);
  input.step = String(step);
  input.value = String(value);
  const debounced = debounce((v: number) => onInput(v), 250);
  input.addEventListener("input", () => {
    caption.textContent = `${label}: ${input.value}`;
    debounced(Number(input.value));
  });
  row.append(caption, input);
  return row;
}

function renderPanelState(dom: PanelDom, state: PanelState): void {
  const status = dom.root.querySelector(".status") as HTMLElement;
  const summary = dom.root.querySelector(".summary") as HTMLElement;
  const mapBox = dom.root.querySelector(".map-box") as HTMLElement;
  status.textContent = state.phase + (state.error ? `: ${state.error}` : "");
  status.dataset.phase = state.phase;
  summary.replaceChildren();
  if (state.job?.result) {
    const view = summarizeResult(state.job.result);
    summary.append(
      el("div", "stat", `Expected vaccinations: ${view.objective}`),
      el("div", "stat", `Spend: ${view.cost}`),
      el("div", "stat", `Method: ${view.method}`
        + (view.solverStatus ? ` (${view.solverStatus})` : "")),
    );
    const counts = el("ul", "counts");
    for (const c of view.counts) {
      counts.append(el("li", undefined, `${c.label}: ${c.value}`));
    }
    summary.append(counts);
    if (dom.instanceFull) {
      const layers = buildLayers(dom.instanceFull, state.job.result.allocation,
                                 BASEMAP_TILE_URL || null);
      mapBox.innerHTML = renderSvg(layers);
    }
  }
  renderComparison();
}

function renderComparison(): void {
  const box = document.querySelector("#compare") as HTMLElement;
  box.replaceChildren();
  const [a, b] = panels;
  if (!a?.panel || !b?.panel) return;
  const ra = a.panel.state.job?.result;
  const rb = b.panel.state.job?.result;
  if (!ra || !rb || a.panel.state.phase !== "done" || b.panel.state.phase !== "done") {
    box.append(el("p", "muted", "Comparison appears once both scenarios finish."));
    return;
  }
  const diff = scenarioCompare(ra, rb);
  box.append(el("h3", undefined, "Scenario B minus scenario A"));
  box.append(el("div", "stat", `Objective delta: ${formatObjective(diff.objectiveDelta)}`));
  box.append(el("div", "stat", `Cost delta: ${formatMoneyTenths(diff.costDeltaTenths)}`));
  const ul = el("ul", "counts");
  for (const c of diff.countDeltas) {
    ul.append(el("li", undefined, `${c.kind}: ${c.a} -> ${c.b} (${c.delta >= 0 ? "+" : ""}${c.delta})`));
  }
  box.append(ul);
  const diffs = el("div", "map-diff");
  diffs.append(el("div", undefined, `Drives only in A: ${diff.drivesOnlyInA.length}`));
  diffs.append(el("div", undefined, `Drives only in B: ${diff.drivesOnlyInB.length}`));
  diffs.append(el("div", undefined, `Routes only in A: ${diff.routesOnlyInA.length}`));
  diffs.append(el("div", undefined, `Routes only in B: ${diff.routesOnlyInB.length}`));
  box.append(diffs);
  if (diff.identical) {
    box.append(el("p", "muted", "Scenarios are identical."));
  }

  // highlight layer diff on both maps
  for (const [dom, onlyD, onlyR] of [
    [a, diff.drivesOnlyInA, diff.routesOnlyInA],
    [b, diff.drivesOnlyInB, diff.routesOnlyInB],
  ] as const) {
    const result = dom.panel!.state.job?.result;
    if (dom.instanceFull && result) {
      const layers = buildLayers(dom.instanceFull, result.allocation,
                                 BASEMAP_TILE_URL || null,
                                 new Set(onlyD.map((s) => s.replace(/^/, ""))),
                                 new Set(onlyR));
      (dom.root.querySelector(".map-box") as HTMLElement).innerHTML = renderSvg(layers);
    }
  }
}

async function initPanel(container: HTMLElement, title: string): Promise<PanelDom> {
  const dom: PanelDom = { root: container, panel: null, instanceId: null, instanceFull: null };
  container.append(el("h2", undefined, title));
  const status = el("div", "status", "idle");
  const controls = el("div", "controls");
  const summary = el("div", "summary");
  const mapBox = el("div", "map-box");
  container.append(status, controls, summary, mapBox);
  panels.push(dom);

  const select = el("select") as HTMLSelectElement;
  const refresh = el("button", undefined, "Refresh instances");
  const planBtn = el("button", "plan-btn", "Plan");
  planBtn.disabled = true;
  controls.append(select, refresh, planBtn);
  const sliders = el("div", "sliders");
  controls.append(sliders);

  async function loadInstances() {
    const { instances } = await client.listInstances();
    select.replaceChildren(...instances.map((id) => {
      const o = el("option", undefined, id) as HTMLOptionElement;
      o.value = id;
      return o;
    }));
    if (instances.length) {
      await pickInstance(instances[0]);
    }
  }

  async function pickInstance(id: string) {
    dom.instanceId = id;
    dom.instanceFull = await client.getInstanceFull(id);
    const summaryInfo = await client.getInstance(id);
    dom.panel = new ScenarioPanel(client, id, (state) => renderPanelState(dom, state));
    planBtn.disabled = false;
    sliders.replaceChildren(
      sliderRow("Budget ($)", 0, Math.max(100, summaryInfo.budget_tenths / 5),
                5, summaryInfo.budget_tenths / 10,
                (v) => dom.panel!.setPending({ budget_units: v })),
      sliderRow("Drive cap", 0, 100, 1, summaryInfo.drive_cap ?? 100,
                (v) => dom.panel!.setPending({ drive_cap: v >= 100 ? null : v })),
      sliderRow("Fleet size", 0, 12, 1, summaryInfo.fleet_size,
                (v) => dom.panel!.setPending({ fleet_size: v })),
    );
    const methodSel = el("select") as HTMLSelectElement;
    for (const m of ["adviser", "hilp", "rwb"]) {
      const o = el("option", undefined, m) as HTMLOptionElement;
      o.value = m;
      methodSel.append(o);
    }
    methodSel.addEventListener("change", () =>
      dom.panel!.setPending({ method: methodSel.value as PlanOverrides["method"] }));
    sliders.append(methodSel);
    mapBox.innerHTML = renderSvg(buildLayers(dom.instanceFull, null, BASEMAP_TILE_URL || null));
  }

  select.addEventListener("change", () => pickInstance(select.value));
  refresh.addEventListener("click", loadInstances);
  planBtn.addEventListener("click", () => dom.panel?.plan());
  await loadInstances().catch((err) => {
    status.textContent = `cannot list instances: ${err}`;
  });
  return dom;
}

export async function start(): Promise<void> {
  const mount = document.querySelector("#app") as HTMLElement;
  const grid = el("div", "panel-grid");
  const left = el("section", "panel");
  const right = el("section", "panel");
  const compare = el("section", "compare-box");
  compare.id = "compare";
  grid.append(left, right);
  mount.append(grid, compare);
  await initPanel(left, "Scenario A");
  await initPanel(right, "Scenario B");
  renderComparison();
}

if (typeof document !== "undefined" && document.querySelector("#app")) {
  void start();
}
