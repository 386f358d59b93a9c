import type {
  InterventionMode,
  MultipliersResponse,
  ProfileResponse,
  RecommendationsResponse,
  TagsResponse,
  WhatIfResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin typed wrapper over the steering service endpoints. */
export class ApiClient {
  constructor(
    private readonly baseUrl = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, body.code ?? "unknown", body.message ?? resp.statusText);
    }
    return body as T;
  }

  tags(): Promise<TagsResponse> {
    return this.request("/api/tags");
  }

  profile(userId: string, raw = false): Promise<ProfileResponse> {
    const q = raw ? "?raw=1" : "";
    return this.request(`/api/users/${encodeURIComponent(userId)}/profile${q}`);
  }

  recommendations(userId: string, k: number): Promise<RecommendationsResponse> {
    return this.request(`/api/users/${encodeURIComponent(userId)}/recommendations?k=${k}`);
  }

  whatif(
    userId: string,
    multipliers: number[],
    k: number,
    mode: InterventionMode,
  ): Promise<WhatIfResponse> {
    return this.request(`/api/users/${encodeURIComponent(userId)}/whatif`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ multipliers, k, mode }),
    });
  }

  putMultipliers(
    userId: string,
    multipliers: number[],
    mode: InterventionMode,
  ): Promise<MultipliersResponse> {
    return this.request(`/api/users/${encodeURIComponent(userId)}/multipliers`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ multipliers, mode }),
    });
  }

  resetMultipliers(userId: string): Promise<MultipliersResponse> {
    return this.request(`/api/users/${encodeURIComponent(userId)}/multipliers`, {
      method: "DELETE",
    });
  }
}
