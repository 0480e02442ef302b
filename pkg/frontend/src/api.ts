// Typed client for the engine's HTTP API. The UI never computes model
// quantities itself; everything displayed comes out of these payloads.

export interface Geometry {
  N: number;
  J: number;
  Z: number;
  X: number;
}

export interface BundleInfo {
  name: string;
  geometry: Geometry;
  instance_count: number;
  rul_scale: number;
}

export interface InstanceListing {
  count: number;
  items: { index: number; unit_id: string; end_cycle: number; rul_target: number }[];
}

export interface InstancePayload {
  unit_id: string;
  end_cycle: number;
  rul_target: number | null;
  synthetic: boolean;
  values: number[][];
  normalized: number[][];
}

export interface SessionPayload {
  id: string;
  bundle: string;
  instance_index: number;
  seed: number;
  geometry: Geometry;
  rul_scale: number;
  modifications: ModificationPayload[];
  instance: InstancePayload;
  explained: boolean;
}

export interface PredictionPayload {
  rul: number;
  base_rul: number;
  local_prediction: number | null;
  modification_count: number;
}

export interface ExplanationPayload {
  method: string;
  s: number[];
  ts: number[][];
  loadings: number[][] | null;
  local_prediction: number;
  degenerate: boolean[];
}

export interface ExplainResponse {
  seed: number;
  explanation: ExplanationPayload;
  metrics: {
    fidelity_mae: number;
    fidelity_r2: number | null;
    truthfulness: number | null;
    probe_count: number;
  };
}

export type ModificationKind =
  | "uniform_noise"
  | "gaussian_noise"
  | "replace_mean"
  | "replace_zeros";

export interface ModificationPayload {
  feature: number;
  start: number;
  end: number;
  kind: ModificationKind;
  amplitude: number;
  seed: number;
}

export interface ModifyResponse {
  modification: ModificationPayload;
  prediction: PredictionPayload;
  instance: InstancePayload;
}

export interface UndoResponse {
  removed: ModificationPayload;
  prediction: PredictionPayload;
  instance: InstancePayload;
}

export interface RecommendationItem {
  modification: ModificationPayload;
  direction: "increase" | "decrease";
  predicted_rul_after: number;
  delta: number;
}

export interface RecommendationsResponse {
  seed: number;
  flags: string[];
  items: RecommendationItem[];
}

export interface ForecastResponse {
  source: string;
  Z: number;
  forecast: number[][];
  forecast_normalized: number[][];
  future_rul: number;
}

export interface PrescribeResponse {
  original_rul: number;
  future_rul: number;
  mod_rul: number;
  prescriptive_gain: number;
  desired_target: number;
  prescribed: number[][];
  forecast: number[][];
  prescribed_normalized: number[][];
  forecast_normalized: number[][];
  mode: string;
  forecaster: string;
}

export interface ApiErrorPayload {
  code: string;
  message: string;
  detail: Record<string, unknown>;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public payload: ApiErrorPayload,
  ) {
    super(`${payload.code}: ${payload.message}`);
  }
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (response.status === 204) {
      return undefined as T;
    }
    const payload = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, payload as ApiErrorPayload);
    }
    return payload as T;
  }

  listBundles(): Promise<BundleInfo[]> {
    return this.request("GET", "/bundles");
  }

  listInstances(bundle: string): Promise<InstanceListing> {
    return this.request("GET", `/bundles/${encodeURIComponent(bundle)}/instances`);
  }

  createSession(bundle: string | null, instanceIndex: number, seed: number): Promise<SessionPayload> {
    return this.request("POST", "/sessions", {
      bundle: bundle ?? undefined,
      instance_index: instanceIndex,
      seed,
    });
  }

  getSession(id: string): Promise<SessionPayload> {
    return this.request("GET", `/sessions/${id}`);
  }

  deleteSession(id: string): Promise<void> {
    return this.request("DELETE", `/sessions/${id}`);
  }

  getPrediction(id: string): Promise<PredictionPayload> {
    return this.request("GET", `/sessions/${id}/prediction`);
  }

  explain(id: string, method: string, seed?: number, count?: number): Promise<ExplainResponse> {
    return this.request("POST", `/sessions/${id}/explain`, { method, seed, count });
  }

  modify(id: string, modification: ModificationPayload): Promise<ModifyResponse> {
    return this.request("POST", `/sessions/${id}/modify`, modification);
  }

  undoModification(id: string): Promise<UndoResponse> {
    return this.request("DELETE", `/sessions/${id}/modify/last`);
  }

  recommendations(id: string, seed?: number): Promise<RecommendationsResponse> {
    const query = seed === undefined ? "" : `?seed=${seed}`;
    return this.request("GET", `/sessions/${id}/recommendations${query}`);
  }

  forecast(id: string, forecaster: string, Z?: number): Promise<ForecastResponse> {
    return this.request("POST", `/sessions/${id}/forecast`, { forecaster, Z });
  }

  prescribe(id: string, desiredTarget: number, mode: string, forecaster: string): Promise<PrescribeResponse> {
    return this.request("POST", `/sessions/${id}/prescribe`, {
      desired_target: desiredTarget,
      mode,
      forecaster,
    });
  }
}
