// Service payload shapes. The UI renders these fields verbatim; it never
// recomputes model math on the client.

export type InterventionMode = "mask_softmax" | "post_scale";

export interface TagInfo {
  id: number;
  name: string;
  category: string;
  prototype_song: string;
  clip_url?: string | null;
}

export interface TagsResponse {
  api_version: string;
  tags: TagInfo[];
}

export interface WeightEntry {
  tag_id: number;
  name: string;
  category: string;
  weight: number;
}

export interface ProfileResponse {
  api_version: string;
  user_id: string;
  history_size: number;
  weights: WeightEntry[];
  multipliers: number[];
  mode: InterventionMode;
  raw_head_weights?: number[][];
}

export interface RecItem {
  song_id: string;
  index: number;
  score: number;
  tags: number[];
  tag_names: string[];
}

export interface RecommendationsResponse {
  api_version: string;
  user_id: string;
  k: number;
  items: RecItem[];
  truncated: boolean;
  multipliers_active: boolean;
}

export interface WhatIfResponse {
  api_version: string;
  user_id: string;
  k: number;
  mode: InterventionMode;
  multipliers: number[];
  original: RecItem[];
  modified: RecItem[];
  tag_distribution_before: number[];
  tag_distribution_after: number[];
  hellinger_shift: number;
  overlap: number;
  truncated: boolean;
}

export interface MultipliersResponse {
  api_version: string;
  user_id: string;
  multipliers: number[];
  mode: InterventionMode;
}

export interface ApiErrorBody {
  api_version: string;
  code: string;
  message: string;
}
