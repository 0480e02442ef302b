// Wiring between the DOM, the view state, and the API client. Handlers are
// thin: call the API, store the payload, re-render. Buttons stay disabled
// while a mutation is in flight, matching the server's one-at-a-time rule.

import { ApiClient, ApiError, ModificationKind, ModificationPayload } from "./api.js";
import { renderBarChart, renderLineChart, Series } from "./charts.js";
import {
  Forecaster,
  Method,
  ViewState,
  clampSlider,
  formatValue,
  initialState,
  instanceMatrix,
  kindNeedsAmplitude,
  recordAction,
  sliderWindow,
  trajectoryMatrices,
  validateDesiredTarget,
  validateModification,
} from "./state.js";

const OBSERVED_TAIL = 10; // observed steps drawn before the forecast horizon

export class App {
  state: ViewState = initialState();

  constructor(
    private doc: Document,
    private client: ApiClient,
  ) {}

  private el<T extends HTMLElement>(id: string): T {
    const element = this.doc.getElementById(id);
    if (!element) {
      throw new Error(`missing element #${id}`);
    }
    return element as T;
  }

  bind(): void {
    this.el<HTMLButtonElement>("load-btn").addEventListener("click", () => void this.loadSession());
    this.el<HTMLButtonElement>("explain-btn").addEventListener("click", () => void this.explain());
    this.el<HTMLSelectElement>("method-select").addEventListener("change", (event) => {
      this.state.method = (event.target as HTMLSelectElement).value as Method;
    });
    this.el<HTMLSelectElement>("mod-kind").addEventListener("change", () => this.renderAmplitudeVisibility());
    this.el<HTMLButtonElement>("apply-mod-btn").addEventListener("click", () => void this.applyFormModification());
    this.el<HTMLButtonElement>("undo-mod-btn").addEventListener("click", () => void this.undoLast());
    this.el<HTMLButtonElement>("recs-btn").addEventListener("click", () => void this.refreshRecommendations());
    this.el<HTMLSelectElement>("forecaster-select").addEventListener("change", (event) => {
      this.state.forecaster = (event.target as HTMLSelectElement).value as Forecaster;
    });
    this.el<HTMLButtonElement>("forecast-btn").addEventListener("click", () => void this.runForecast());
    this.el<HTMLButtonElement>("prescribe-btn").addEventListener("click", () => void this.prescribe());
    this.el<HTMLInputElement>("space-toggle").addEventListener("change", (event) => {
      this.state.showDenormalized = (event.target as HTMLInputElement).checked;
      this.renderCharts();
    });
    this.el<HTMLSelectElement>("feature-select").addEventListener("change", (event) => {
      this.state.selectedFeature = Number((event.target as HTMLSelectElement).value);
      this.renderCharts();
    });
    for (const id of ["slider-start", "slider-end"]) {
      this.el<HTMLInputElement>(id).addEventListener("input", () => this.onSlider());
    }
  }

  private setError(message: string | null): void {
    this.state.error = message;
    this.el("status").textContent = message ?? "";
  }

  private async guard<T>(kind: string, payload: Record<string, unknown>, run: () => Promise<T>): Promise<T | null> {
    if (this.state.pending) {
      return null;
    }
    this.state.pending = true;
    this.renderPendingButtons();
    this.setError(null);
    try {
      const result = await run();
      recordAction(this.state, kind, payload);
      return result;
    } catch (error) {
      if (error instanceof ApiError) {
        this.setError(`${error.payload.code}: ${error.payload.message}`);
      } else {
        this.setError(String(error));
      }
      return null;
    } finally {
      this.state.pending = false;
      this.renderPendingButtons();
    }
  }

  async loadSession(): Promise<void> {
    const index = Number(this.el<HTMLInputElement>("instance-index").value || "0");
    const seed = Number(this.el<HTMLInputElement>("seed").value || "0");
    await this.guard("load", { index, seed }, async () => {
      if (this.state.sessionId) {
        await this.client.deleteSession(this.state.sessionId).catch(() => undefined);
      }
      const session = await this.client.createSession(null, index, seed);
      this.state = initialState();
      this.state.session = session;
      this.state.sessionId = session.id;
      this.state.geometry = session.geometry;
      this.state.rulScale = session.rul_scale;
      this.state.sliderStart = 0;
      this.state.sliderEnd = session.geometry.N;
      this.state.prediction = await this.client.getPrediction(session.id);
      recordAction(this.state, "session", { index, seed });
      this.renderAll();
    });
  }

  async explain(): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) return;
    await this.guard("explain", { method: this.state.method }, async () => {
      const response = await this.client.explain(sid, this.state.method);
      this.state.explanation = response;
      if (this.state.session && this.state.session.modifications.length === 0) {
        this.state.baseExplanation = response; // original-instance interpretation
      }
      this.state.prediction = await this.client.getPrediction(sid);
      this.renderAll();
    });
  }

  readFormModification(): ModificationPayload {
    return {
      feature: Number(this.el<HTMLInputElement>("mod-feature").value),
      start: Number(this.el<HTMLInputElement>("mod-start").value),
      end: Number(this.el<HTMLInputElement>("mod-end").value),
      kind: this.el<HTMLSelectElement>("mod-kind").value as ModificationKind,
      amplitude: kindNeedsAmplitude(this.el<HTMLSelectElement>("mod-kind").value as ModificationKind)
        ? Number(this.el<HTMLInputElement>("mod-amplitude").value || "0")
        : 0,
      seed: Number(this.el<HTMLInputElement>("mod-seed").value || "0"),
    };
  }

  async applyFormModification(): Promise<void> {
    if (!this.state.geometry) return;
    const modification = this.readFormModification();
    const problem = validateModification(modification, this.state.geometry);
    if (problem) {
      this.setError(problem);
      return;
    }
    await this.applyModification(modification);
  }

  async applyModification(modification: ModificationPayload): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) return;
    await this.guard("modify", { ...modification }, async () => {
      const response = await this.client.modify(sid, modification);
      this.state.prediction = response.prediction;
      this.state.explanation = null; // stale for the edited window
      this.state.recommendations = null;
      this.state.session = await this.client.getSession(sid);
      this.renderAll();
    });
  }

  async undoLast(): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) return;
    await this.guard("undo", {}, async () => {
      const response = await this.client.undoModification(sid);
      this.state.prediction = response.prediction;
      this.state.explanation = null;
      this.state.recommendations = null;
      this.state.session = await this.client.getSession(sid);
      this.renderAll();
    });
  }

  async refreshRecommendations(): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) return;
    await this.guard("recommendations", {}, async () => {
      this.state.recommendations = await this.client.recommendations(sid);
      this.renderRecommendations();
    });
  }

  async runForecast(): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) return;
    await this.guard("forecast", { forecaster: this.state.forecaster }, async () => {
      this.state.forecast = await this.client.forecast(sid, this.state.forecaster);
      this.el("forecast-rul").textContent = formatValue(this.state.forecast.future_rul);
      this.renderCharts();
    });
  }

  async prescribe(): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) return;
    const target = Number(this.el<HTMLInputElement>("desired-target").value);
    const problem = validateDesiredTarget(Number.isNaN(target) ? null : target);
    if (problem) {
      this.setError(problem);
      return;
    }
    this.state.desiredTarget = target;
    await this.guard("prescribe", { target, forecaster: this.state.forecaster }, async () => {
      this.state.prescription = await this.client.prescribe(sid, target, "future", this.state.forecaster);
      this.renderAll();
    });
  }

  private onSlider(): void {
    if (!this.state.geometry) return;
    const [start, end] = clampSlider(
      Number(this.el<HTMLInputElement>("slider-start").value),
      Number(this.el<HTMLInputElement>("slider-end").value),
      this.state.geometry.N,
    );
    this.state.sliderStart = start;
    this.state.sliderEnd = end;
    this.el("slider-label").textContent = `steps [${start}, ${end})`;
    this.el<HTMLInputElement>("mod-start").value = String(start);
    this.el<HTMLInputElement>("mod-end").value = String(end);
    this.renderCharts();
  }

  renderAll(): void {
    this.renderControls();
    this.renderPrediction();
    this.renderModifications();
    this.renderRecommendations();
    this.renderCharts();
    this.renderAmplitudeVisibility();
    this.renderPendingButtons();
  }

  private renderPendingButtons(): void {
    const disabled = this.state.pending || !this.state.sessionId;
    for (const id of [
      "explain-btn",
      "apply-mod-btn",
      "undo-mod-btn",
      "recs-btn",
      "forecast-btn",
      "prescribe-btn",
    ]) {
      this.el<HTMLButtonElement>(id).disabled = disabled;
    }
    this.el<HTMLButtonElement>("load-btn").disabled = this.state.pending;
  }

  renderControls(): void {
    const geometry = this.state.geometry;
    if (!geometry) return;
    const featureSelect = this.el<HTMLSelectElement>("feature-select");
    featureSelect.textContent = "";
    for (let j = 0; j < geometry.J; j += 1) {
      const option = this.doc.createElement("option");
      option.value = String(j);
      option.textContent = `feature ${j}`;
      if (j === this.state.selectedFeature) option.selected = true;
      featureSelect.appendChild(option);
    }
    const modFeature = this.el<HTMLInputElement>("mod-feature");
    modFeature.max = String(geometry.J - 1);
    for (const [id, value] of [
      ["slider-start", this.state.sliderStart],
      ["slider-end", this.state.sliderEnd],
    ] as const) {
      const slider = this.el<HTMLInputElement>(id);
      slider.min = "0";
      slider.max = String(geometry.N);
      slider.value = String(value);
    }
    this.el("slider-label").textContent = `steps [${this.state.sliderStart}, ${this.state.sliderEnd})`;
    this.el("session-label").textContent = this.state.session
      ? `unit ${this.state.session.instance.unit_id}, end cycle ${this.state.session.instance.end_cycle}, seed ${this.state.session.seed}`
      : "";
    const desired = this.el<HTMLInputElement>("desired-target");
    if (!desired.value && this.state.rulScale !== null) {
      desired.placeholder = `max ${formatValue(this.state.rulScale, 0)}`;
    }
  }

  renderPrediction(): void {
    const prediction = this.state.prediction;
    this.el("prediction-original").textContent = formatValue(prediction?.base_rul);
    this.el("prediction-current").textContent = formatValue(prediction?.rul);
    this.el("prediction-local").textContent = formatValue(
      this.state.explanation?.explanation.local_prediction ?? prediction?.local_prediction,
    );
    const metrics = this.state.explanation?.metrics;
    this.el("explanation-metrics").textContent = metrics
      ? `fidelity mae ${formatValue(metrics.fidelity_mae, 4)}, r2 ${formatValue(metrics.fidelity_r2, 4)}, ` +
        `truthfulness ${formatValue(metrics.truthfulness, 2)}`
      : "";

    const prescription = this.state.prescription;
    const panel = this.el("prescription-panel");
    panel.hidden = prescription === null;
    if (prescription) {
      this.el("prescribe-original").textContent = formatValue(prescription.original_rul);
      this.el("prescribe-future").textContent = formatValue(prescription.future_rul);
      this.el("prescribe-mod").textContent = formatValue(prescription.mod_rul);
      this.el("prescribe-gain").textContent = formatValue(prescription.prescriptive_gain);
      this.el("prescribe-target").textContent = formatValue(prescription.desired_target);
    }
  }

  renderModifications(): void {
    const list = this.el("mods-list");
    list.textContent = "";
    for (const mod of this.state.session?.modifications ?? []) {
      const item = this.doc.createElement("li");
      item.textContent = `${mod.kind} f${mod.feature} [${mod.start}, ${mod.end})` +
        (kindNeedsAmplitude(mod.kind) ? ` a=${mod.amplitude}` : "");
      list.appendChild(item);
    }
  }

  renderRecommendations(): void {
    const list = this.el("recs-list");
    list.textContent = "";
    const recs = this.state.recommendations;
    if (!recs) return;
    this.el("recs-flags").textContent = recs.flags.length ? `flags: ${recs.flags.join(", ")}` : "";
    recs.items.forEach((rec, index) => {
      const item = this.doc.createElement("li");
      const button = this.doc.createElement("button");
      button.className = "rec-apply";
      button.dataset.index = String(index);
      button.textContent = "apply";
      button.addEventListener("click", () => void this.applyModification(rec.modification));
      const text = this.doc.createElement("span");
      text.textContent =
        `${rec.direction} f${rec.modification.feature} via ${rec.modification.kind} ` +
        `-> ${formatValue(rec.predicted_rul_after)} (${rec.delta >= 0 ? "+" : ""}${formatValue(rec.delta)})`;
      item.append(text, button);
      list.appendChild(item);
    });
  }

  renderAmplitudeVisibility(): void {
    const kind = this.el<HTMLSelectElement>("mod-kind").value as ModificationKind;
    this.el("amplitude-field").hidden = !kindNeedsAmplitude(kind);
  }

  renderCharts(): void {
    const { explanation, baseExplanation, geometry } = this.state;
    const feature = this.state.selectedFeature;

    const importance = this.el("importance-chart");
    if (explanation) {
      renderBarChart(importance, explanation.explanation.s, {
        selected: feature,
        badges: explanation.explanation.degenerate,
        onSelect: (index) => {
          this.state.selectedFeature = index;
          this.el<HTMLSelectElement>("feature-select").value = String(index);
          this.renderCharts();
        },
      });
    } else {
      importance.textContent = "no explanation yet";
    }

    const perStep = this.el("timestep-chart");
    if (explanation && geometry) {
      const series: Series[] = [];
      const window = (ts: number[][]) => sliderWindow(ts[feature], this.state.sliderStart, this.state.sliderEnd);
      if (baseExplanation && baseExplanation !== explanation) {
        series.push({
          name: "original",
          values: window(baseExplanation.explanation.ts),
          color: "#8888aa",
          startIndex: this.state.sliderStart,
        });
      }
      series.push({
        name: explanation === baseExplanation ? "original" : "modified",
        values: window(explanation.explanation.ts),
        color: "#d95f02",
        startIndex: this.state.sliderStart,
      });
      renderLineChart(perStep, series, { xStart: this.state.sliderStart });
    } else {
      perStep.textContent = "no explanation yet";
    }

    const trajectory = this.el("trajectory-chart");
    const matrices = trajectoryMatrices(this.state);
    const values = instanceMatrix(this.state);
    if (geometry && values && (matrices || this.state.forecast)) {
      const tail = values[feature].slice(-OBSERVED_TAIL);
      const series: Series[] = [{ name: "observed", values: tail, color: "#1b6ca8", startIndex: 0 }];
      const forecastBlock = matrices
        ? matrices.forecast
        : this.state.showDenormalized
          ? this.state.forecast!.forecast
          : this.state.forecast!.forecast_normalized;
      series.push({
        name: "forecast",
        values: forecastBlock.map((row) => row[feature]),
        color: "#66a61e",
        startIndex: tail.length,
      });
      if (matrices) {
        series.push({
          name: "prescribed",
          values: matrices.prescribed.map((row) => row[feature]),
          color: "#d95f02",
          startIndex: tail.length,
        });
      }
      renderLineChart(trajectory, series, { xStart: geometry.N - tail.length });
    } else {
      trajectory.textContent = "no forecast yet";
    }
  }
}

export async function bootstrap(doc: Document, baseUrl = ""): Promise<App> {
  const app = new App(doc, new ApiClient(baseUrl));
  app.bind();
  return app;
}
