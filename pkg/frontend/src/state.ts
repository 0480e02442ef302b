// View state and the pure helpers behind the controls. Everything here is
// presentation logic: model numbers pass through untouched.

import type {
  ExplainResponse,
  ForecastResponse,
  Geometry,
  ModificationKind,
  ModificationPayload,
  PredictionPayload,
  PrescribeResponse,
  RecommendationsResponse,
  SessionPayload,
} from "./api.js";

export type Method = "mean_agg" | "ipca";
export type Forecaster = "neural" | "static";

export interface Action {
  kind: string;
  at: number;
  payload: Record<string, unknown>;
}

export interface ViewState {
  sessionId: string | null;
  geometry: Geometry | null;
  rulScale: number | null;
  session: SessionPayload | null;
  prediction: PredictionPayload | null;
  explanation: ExplainResponse | null;
  baseExplanation: ExplainResponse | null; // unmodified-instance explanation for overlays
  recommendations: RecommendationsResponse | null;
  forecast: ForecastResponse | null;
  prescription: PrescribeResponse | null;
  selectedFeature: number;
  sliderStart: number;
  sliderEnd: number; // exclusive
  method: Method;
  forecaster: Forecaster;
  showDenormalized: boolean;
  desiredTarget: number | null;
  pending: boolean; // one in-flight mutation per session
  error: string | null;
  actionLog: Action[];
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    geometry: null,
    rulScale: null,
    session: null,
    prediction: null,
    explanation: null,
    baseExplanation: null,
    recommendations: null,
    forecast: null,
    prescription: null,
    selectedFeature: 0,
    sliderStart: 0,
    sliderEnd: 0,
    method: "ipca",
    forecaster: "neural",
    showDenormalized: false,
    desiredTarget: null,
    pending: false,
    error: null,
    actionLog: [],
  };
}

export function recordAction(state: ViewState, kind: string, payload: Record<string, unknown>): void {
  state.actionLog.push({ kind, at: state.actionLog.length, payload });
}

export const KIND_NEEDS_AMPLITUDE: Record<ModificationKind, boolean> = {
  uniform_noise: true,
  gaussian_noise: true,
  replace_mean: false,
  replace_zeros: false,
};

export function kindNeedsAmplitude(kind: ModificationKind): boolean {
  return KIND_NEEDS_AMPLITUDE[kind];
}

// Mirrors the server's 400/409 rules so bad requests never leave the client.
export function validateModification(
  mod: ModificationPayload,
  geometry: Geometry,
): string | null {
  if (!(mod.kind in KIND_NEEDS_AMPLITUDE)) {
    return `unknown modification kind ${mod.kind}`;
  }
  if (!Number.isInteger(mod.feature) || mod.feature < 0 || mod.feature >= geometry.J) {
    return `feature must be in [0, ${geometry.J})`;
  }
  if (!Number.isInteger(mod.start) || !Number.isInteger(mod.end)) {
    return "range bounds must be integers";
  }
  if (mod.start < 0 || mod.end > geometry.N || mod.start >= mod.end) {
    return `range must satisfy 0 <= start < end <= ${geometry.N}`;
  }
  if (kindNeedsAmplitude(mod.kind) && !(mod.amplitude >= 0)) {
    return "amplitude must be nonnegative";
  }
  return null;
}

export function validateDesiredTarget(target: number | null): string | null {
  if (target === null || Number.isNaN(target)) {
    return "enter a desired target";
  }
  if (target < 0) {
    return "desired target must be nonnegative";
  }
  return null;
}

export function clampSlider(start: number, end: number, n: number): [number, number] {
  const s = Math.max(0, Math.min(Math.floor(start), n - 1));
  const e = Math.max(s + 1, Math.min(Math.floor(end), n));
  return [s, e];
}

// Exactly end - start points of one feature's series, for the windowed plot.
export function sliderWindow(row: number[], start: number, end: number): number[] {
  return row.slice(start, end);
}

export function formatValue(value: number | null | undefined, digits = 2): string {
  if (value === null || value === undefined || Number.isNaN(value)) {
    return "–";
  }
  return value.toFixed(digits);
}

export function instanceMatrix(state: ViewState): number[][] | null {
  if (!state.session) return null;
  return state.showDenormalized ? state.session.instance.values : state.session.instance.normalized;
}

export function trajectoryMatrices(state: ViewState): { forecast: number[][]; prescribed: number[][] } | null {
  if (!state.prescription) return null;
  return state.showDenormalized
    ? { forecast: state.prescription.forecast, prescribed: state.prescription.prescribed }
    : {
        forecast: state.prescription.forecast_normalized,
        prescribed: state.prescription.prescribed_normalized,
      };
}
