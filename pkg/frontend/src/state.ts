import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import { debounce, type Debounced } from "./debounce.js";
import type {
  InterventionMode,
  ProfileResponse,
  RecommendationsResponse,
  TagInfo,
  WhatIfResponse,
} from "./types.js";

export interface AppState {
  userId: string | null;
  tags: TagInfo[];
  profile: ProfileResponse | null;
  recommendations: RecommendationsResponse | null;
  preview: WhatIfResponse | null;
  sliders: number[];
  validationError: string | null;
  serviceError: string | null;
  previewPending: boolean;
  committed: boolean;
}

/** Slider positions map to multipliers untouched (identity on [0, 2]). */
export function sliderToMultiplier(value: number): number {
  return Math.min(2, Math.max(0, value));
}

/**
 * Proportional (post_scale) semantics when any slider sits at a partial
 * value; pure drops (only 0s and 1s) use the renormalizing softmax mask.
 */
export function modeForSliders(sliders: number[]): InterventionMode {
  return sliders.every((v) => v === 0 || v === 1) ? "mask_softmax" : "post_scale";
}

export class SteeringApp {
  readonly state: AppState = {
    userId: null,
    tags: [],
    profile: null,
    recommendations: null,
    preview: null,
    sliders: [],
    validationError: null,
    serviceError: null,
    previewPending: false,
    committed: false,
  };

  private seq = 0; // latest issued what-if request
  private inFlight = false;
  private queued = false;
  private schedule: Debounced<[]>;

  constructor(
    private readonly api: ApiClient,
    public k = 20,
    debounceMs = 300,
    private readonly notify: (state: AppState) => void = () => {},
  ) {
    this.schedule = debounce(() => void this.requestPreview(), debounceMs);
  }

  private emit(): void {
    this.notify(this.state);
  }

  async load(userId: string): Promise<void> {
    const [tags, profile, recommendations] = await Promise.all([
      this.api.tags(),
      this.api.profile(userId),
      this.api.recommendations(userId, this.k),
    ]);
    this.state.userId = userId;
    this.state.tags = tags.tags;
    this.state.profile = profile;
    this.state.recommendations = recommendations;
    this.state.sliders = [...profile.multipliers];
    this.state.preview = null;
    this.state.validationError = null;
    this.state.serviceError = null;
    this.state.committed = false;
    this.emit();
  }

  get committable(): boolean {
    return this.state.preview !== null && this.state.validationError === null;
  }

  setSlider(tagId: number, value: number): void {
    this.state.sliders[tagId] = sliderToMultiplier(value);
    this.state.committed = false;
    if (this.state.sliders.every((v) => v === 0)) {
      this.state.validationError = "at least one tag must keep weight";
      this.schedule.cancel();
      this.emit();
      return;
    }
    this.state.validationError = null;
    this.state.previewPending = true;
    this.emit();
    this.schedule();
  }

  /** Debounced target; stale responses are discarded by sequence number. */
  private async requestPreview(): Promise<void> {
    if (this.state.userId === null) return;
    if (this.inFlight) {
      this.queued = true;
      return;
    }
    const mySeq = ++this.seq;
    const sliders = [...this.state.sliders];
    this.inFlight = true;
    try {
      const preview = await this.api.whatif(
        this.state.userId,
        sliders,
        this.k,
        modeForSliders(sliders),
      );
      if (mySeq === this.seq) {
        this.state.preview = preview;
        this.state.previewPending = false;
        this.state.serviceError = null;
        this.emit();
      }
    } catch (err) {
      if (mySeq === this.seq) {
        this.state.serviceError = err instanceof ApiError ? err.message : String(err);
        this.state.previewPending = false;
        this.emit();
      }
    } finally {
      this.inFlight = false;
      if (this.queued) {
        this.queued = false;
        void this.requestPreview();
      }
    }
  }

  async commit(): Promise<void> {
    if (this.state.userId === null || !this.committable) return;
    const sliders = [...this.state.sliders];
    try {
      await this.api.putMultipliers(this.state.userId, sliders, modeForSliders(sliders));
      this.state.recommendations = await this.api.recommendations(this.state.userId, this.k);
      this.state.profile = await this.api.profile(this.state.userId);
      this.state.committed = true;
      this.state.serviceError = null;
    } catch (err) {
      // sliders stay as they are; surface the failure
      this.state.serviceError = err instanceof ApiError ? err.message : String(err);
    }
    this.emit();
  }

  async reset(): Promise<void> {
    if (this.state.userId === null) return;
    await this.api.resetMultipliers(this.state.userId);
    this.state.sliders = this.state.sliders.map(() => 1.0);
    this.state.preview = null;
    this.state.validationError = null;
    this.state.committed = false;
    this.state.recommendations = await this.api.recommendations(this.state.userId, this.k);
    this.state.profile = await this.api.profile(this.state.userId);
    this.emit();
  }
}
