// @vitest-environment happy-dom
import { describe, expect, it } from "vitest";

import { formatPercent, renderComparison, renderProfile } from "../src/render.js";
import type { ProfileResponse, TagInfo, WhatIfResponse } from "../src/types.js";

const TAGS: TagInfo[] = [
  { id: 0, name: "tag00", category: "era", prototype_song: "s00001" },
  { id: 1, name: "tag01", category: "genre", prototype_song: "s00002" },
  { id: 2, name: "tag02", category: "mood", prototype_song: "s00003" },
];

const PROFILE: ProfileResponse = {
  api_version: "1",
  user_id: "u1",
  history_size: 17,
  weights: [
    { tag_id: 0, name: "tag00", category: "era", weight: 0.62 },
    { tag_id: 1, name: "tag01", category: "genre", weight: 0.3 },
    { tag_id: 2, name: "tag02", category: "mood", weight: 0.08 },
  ],
  multipliers: [1, 1, 1],
  mode: "mask_softmax",
  raw_head_weights: [
    [10.2, 4.1, 2.7],
    [9.9, 4.4, 2.7],
  ],
};

const PREVIEW: WhatIfResponse = {
  api_version: "1",
  user_id: "u1",
  k: 2,
  mode: "mask_softmax",
  multipliers: [1, 0, 1],
  original: [
    { song_id: "sA", index: 3, score: 0.91, tags: [0, 1], tag_names: ["tag00", "tag01"] },
    { song_id: "sB", index: 5, score: 0.8, tags: [1], tag_names: ["tag01"] },
  ],
  modified: [
    { song_id: "sA", index: 3, score: 0.91, tags: [0, 1], tag_names: ["tag00", "tag01"] },
    { song_id: "sC", index: 9, score: 0.77, tags: [2], tag_names: ["tag02"] },
  ],
  tag_distribution_before: [0.25, 0.5, 0.25],
  tag_distribution_after: [0.25, 0.25, 0.5],
  hellinger_shift: 0.1989,
  overlap: 0.5,
  truncated: false,
};

const HANDLERS = { onSlider: () => {}, onToggleRaw: () => {} };

describe("renderProfile", () => {
  it("groups tags by category and shows weight bars that sum to 100%", () => {
    const node = renderProfile(PROFILE, TAGS, [1, 1, 1], HANDLERS);
    const groups = node.querySelectorAll(".tag-group h3");
    expect([...groups].map((g) => g.textContent)).toEqual(["era", "genre", "mood"]);
    const values = [...node.querySelectorAll(".weight-value")].map((n) => n.textContent);
    expect(values).toEqual(["62.0%", "30.0%", "8.0%"]);
    const total = node.querySelector(".weight-total");
    expect(total?.textContent).toBe("total 100.0%");
  });

  it("labels every tag with its prototype source song", () => {
    const node = renderProfile(PROFILE, TAGS, [1, 1, 1], HANDLERS);
    const songs = [...node.querySelectorAll(".proto-song")].map((n) => n.textContent);
    expect(songs).toEqual([
      "prototype: s00001",
      "prototype: s00002",
      "prototype: s00003",
    ]);
  });

  it("renders clip urls as plain links when present", () => {
    const tags = TAGS.map((t, i) =>
      i === 1 ? { ...t, clip_url: "https://clips.example/s00002" } : t,
    );
    const node = renderProfile(PROFILE, tags, [1, 1, 1], HANDLERS);
    const links = [...node.querySelectorAll("a.proto-song")];
    expect(links.length).toBe(1);
    expect(links[0].getAttribute("href")).toBe("https://clips.example/s00002");
  });

  it("dominant tags get the widest bars", () => {
    const node = renderProfile(PROFILE, TAGS, [1, 1, 1], HANDLERS);
    const widths = [...node.querySelectorAll(".weight-fill")].map((n) =>
      parseFloat((n.getAttribute("style") ?? "").replace(/[^0-9.]/g, "")),
    );
    expect(widths[0]).toBeGreaterThan(widths[1]);
    expect(widths[1]).toBeGreaterThan(widths[2]);
  });

  it("shows the per-head table only when raw mode is on", () => {
    const plain = renderProfile(PROFILE, TAGS, [1, 1, 1], HANDLERS, false);
    expect(plain.querySelector(".raw-heads")).toBeNull();
    const raw = renderProfile(PROFILE, TAGS, [1, 1, 1], HANDLERS, true);
    const rows = raw.querySelectorAll(".raw-heads tr");
    expect(rows.length).toBe(2);
  });

  it("slider positions render from the given values", () => {
    const node = renderProfile(PROFILE, TAGS, [0.5, 1, 2], HANDLERS);
    const sliders = [...node.querySelectorAll("input[type=range]")] as HTMLInputElement[];
    expect(sliders.map((s) => s.value)).toEqual(["0.5", "1", "2"]);
  });
});

describe("renderComparison", () => {
  it("renders the payload numbers verbatim (no client-side math)", () => {
    const node = renderComparison(PREVIEW, TAGS);
    expect(node.querySelector(".overlap")?.textContent).toBe(
      `overlap: ${formatPercent(PREVIEW.overlap)}`,
    );
    expect(node.querySelector(".shift")?.textContent).toBe(
      "tag shift (Hellinger): 0.1989",
    );
  });

  it("shows both lists side by side with category-colored chips", () => {
    const node = renderComparison(PREVIEW, TAGS);
    const original = node.querySelectorAll(".pane.original .rec-item");
    const modified = node.querySelectorAll(".pane.modified .rec-item");
    expect(original.length).toBe(2);
    expect(modified.length).toBe(2);
    const chips = node.querySelectorAll(".pane.original .chip");
    expect(chips.length).toBe(3); // sA carries two tags, sB one
    expect(node.querySelectorAll(".chip.cat-genre").length).toBeGreaterThan(0);
  });

  it("renders before/after tag distributions from the payload", () => {
    const node = renderComparison(PREVIEW, TAGS);
    const dists = node.querySelectorAll(".tag-dist");
    expect(dists.length).toBe(2);
    const after = [...dists[1].querySelectorAll(".dist-value")].map((n) => n.textContent);
    expect(after).toEqual(["25.0%", "25.0%", "50.0%"]);
  });
});
