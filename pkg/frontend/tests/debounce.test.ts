import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { debounce } from "../src/debounce.js";

describe("debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("collapses a burst into one trailing call with the latest args", () => {
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 300);
    fn(1);
    vi.advanceTimersByTime(100);
    fn(2);
    vi.advanceTimersByTime(100);
    fn(3);
    vi.advanceTimersByTime(299);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(calls).toEqual([3]);
  });

  it("allows at most one call per quiet window", () => {
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 300);
    fn(1);
    vi.advanceTimersByTime(300);
    fn(2);
    vi.advanceTimersByTime(300);
    expect(calls).toEqual([1, 2]);
  });

  it("cancel drops the pending call", () => {
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 300);
    fn(1);
    fn.cancel();
    vi.advanceTimersByTime(1000);
    expect(calls).toEqual([]);
  });
});
