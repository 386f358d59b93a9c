// DOM builders. Every number shown comes straight from a service payload
// field; formatting (percent rounding) is the only transformation.

import type { AppState } from "./state.js";
import type { ProfileResponse, RecItem, TagInfo, WhatIfResponse } from "./types.js";

type Attrs = Record<string, string | number | boolean | ((e: Event) => void) | null>;

export function el(
  tag: string,
  attrs: Attrs = {},
  ...children: Array<string | Node | null>
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (value == null) continue;
    if (key === "className" && typeof value === "string") node.className = value;
    else if (key.startsWith("on") && typeof value === "function")
      node.addEventListener(key.slice(2).toLowerCase(), value as EventListener);
    else node.setAttribute(key, String(value));
  }
  for (const child of children) {
    if (typeof child === "string") node.appendChild(document.createTextNode(child));
    else if (child) node.appendChild(child);
  }
  return node;
}

export const CATEGORY_ORDER = ["era", "genre", "mood", "instrumentation"];

export function formatPercent(fraction: number): string {
  return `${(100 * fraction).toFixed(1)}%`;
}

export interface ProfileHandlers {
  onSlider(tagId: number, value: number): void;
  onToggleRaw(): void;
}

export function renderProfile(
  profile: ProfileResponse,
  tags: TagInfo[],
  sliders: number[],
  handlers: ProfileHandlers,
  showRaw = false,
): HTMLElement {
  const byTag = new Map(tags.map((t) => [t.id, t]));
  const root = el("div", { className: "profile" });
  root.appendChild(
    el(
      "div",
      { className: "profile-header" },
      el("span", {}, `history: ${profile.history_size} songs`),
      el(
        "button",
        { className: "raw-toggle", onClick: () => handlers.onToggleRaw() },
        showRaw ? "hide per-head detail" : "per-head detail",
      ),
    ),
  );
  for (const category of CATEGORY_ORDER) {
    const entries = profile.weights.filter((w) => w.category === category);
    if (!entries.length) continue;
    const group = el("div", { className: `tag-group cat-${category}` }, el("h3", {}, category));
    for (const entry of entries) {
      const slider = el("input", {
        type: "range",
        min: 0,
        max: 2,
        step: 0.05,
        value: sliders[entry.tag_id],
        "data-tag": entry.tag_id,
        onInput: (e: Event) =>
          handlers.onSlider(entry.tag_id, Number((e.target as HTMLInputElement).value)),
      });
      const tag = byTag.get(entry.tag_id);
      const label = `prototype: ${tag?.prototype_song ?? "?"}`;
      const proto = tag?.clip_url
        ? el("a", { className: "proto-song", href: tag.clip_url }, label)
        : el("span", { className: "proto-song" }, label);
      group.appendChild(
        el(
          "div",
          { className: "tag-row", "data-tag": entry.tag_id },
          el("span", { className: "tag-name" }, entry.name),
          el(
            "span",
            { className: "weight-bar" },
            el("span", {
              className: "weight-fill",
              style: `width:${(100 * entry.weight).toFixed(1)}%`,
            }),
          ),
          el("span", { className: "weight-value" }, formatPercent(entry.weight)),
          slider,
          el("span", { className: "slider-value" }, sliders[entry.tag_id].toFixed(2)),
          proto,
        ),
      );
    }
    root.appendChild(group);
  }
  const total = profile.weights.reduce((acc, w) => acc + w.weight, 0);
  root.appendChild(el("div", { className: "weight-total" }, `total ${formatPercent(total)}`));
  if (showRaw && profile.raw_head_weights) {
    const table = el("table", { className: "raw-heads" });
    profile.raw_head_weights.forEach((row, h) => {
      table.appendChild(
        el(
          "tr",
          {},
          el("td", {}, `head ${h}`),
          ...row.map((v) => el("td", {}, v.toFixed(3))),
        ),
      );
    });
    root.appendChild(table);
  }
  return root;
}

function renderItems(items: RecItem[], tags: TagInfo[]): HTMLElement {
  const byCategory = new Map(tags.map((t) => [t.id, t.category]));
  const list = el("ol", { className: "rec-list" });
  for (const item of items) {
    const chips = item.tags.map((tagId, i) =>
      el("span", { className: `chip cat-${byCategory.get(tagId) ?? "unknown"}` }, item.tag_names[i]),
    );
    list.appendChild(
      el(
        "li",
        { className: "rec-item", "data-song": item.song_id },
        el("span", { className: "song-id" }, item.song_id),
        el("span", { className: "score" }, item.score.toFixed(4)),
        ...chips,
      ),
    );
  }
  return list;
}

function renderDistribution(dist: number[], tags: TagInfo[], label: string): HTMLElement {
  const root = el("div", { className: "tag-dist" }, el("h4", {}, label));
  dist.forEach((value, tagId) => {
    root.appendChild(
      el(
        "div",
        { className: "dist-row", "data-tag": tagId },
        el("span", { className: "dist-name" }, tags[tagId]?.name ?? String(tagId)),
        el("span", {
          className: "dist-fill",
          style: `width:${(100 * value).toFixed(1)}%`,
        }),
        el("span", { className: "dist-value" }, formatPercent(value)),
      ),
    );
  });
  return root;
}

export function renderComparison(preview: WhatIfResponse, tags: TagInfo[]): HTMLElement {
  return el(
    "div",
    { className: "comparison" },
    el(
      "div",
      { className: "comparison-summary" },
      el("span", { className: "overlap" }, `overlap: ${formatPercent(preview.overlap)}`),
      el(
        "span",
        { className: "shift" },
        `tag shift (Hellinger): ${preview.hellinger_shift.toFixed(4)}`,
      ),
    ),
    el(
      "div",
      { className: "comparison-lists" },
      el("div", { className: "pane original" }, el("h4", {}, "current"), renderItems(preview.original, tags)),
      el("div", { className: "pane modified" }, el("h4", {}, "preview"), renderItems(preview.modified, tags)),
    ),
    el(
      "div",
      { className: "comparison-dists" },
      renderDistribution(preview.tag_distribution_before, tags, "tags before"),
      renderDistribution(preview.tag_distribution_after, tags, "tags after"),
    ),
  );
}

export interface ViewHandlers extends ProfileHandlers {
  onCommit(): void;
  onReset(): void;
}

export function renderApp(
  container: HTMLElement,
  state: AppState,
  handlers: ViewHandlers,
  showRaw = false,
): void {
  container.replaceChildren();
  if (state.serviceError) {
    container.appendChild(el("div", { className: "toast error" }, state.serviceError));
  }
  if (!state.profile || !state.recommendations) {
    container.appendChild(el("div", { className: "empty" }, "no user loaded"));
    return;
  }
  container.appendChild(renderProfile(state.profile, state.tags, state.sliders, handlers, showRaw));
  if (state.validationError) {
    container.appendChild(el("div", { className: "validation" }, state.validationError));
  }
  container.appendChild(
    el(
      "div",
      { className: "actions" },
      el(
        "button",
        {
          className: "commit",
          disabled: state.preview === null || state.validationError !== null ? "disabled" : null,
          onClick: () => handlers.onCommit(),
        },
        state.committed ? "committed" : "commit",
      ),
      el("button", { className: "reset", onClick: () => handlers.onReset() }, "reset"),
      state.previewPending ? el("span", { className: "pending" }, "previewing...") : null,
    ),
  );
  container.appendChild(
    el(
      "div",
      { className: "served" },
      el("h4", {}, `served recommendations (k=${state.recommendations.k})`),
      renderItems(state.recommendations.items, state.tags),
    ),
  );
  if (state.preview) {
    container.appendChild(renderComparison(state.preview, state.tags));
  }
}
