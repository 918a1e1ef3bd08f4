import { describe, expect, it } from "vitest";

import { quatNorm } from "../src/pose.js";
import {
  CameraInput,
  applyCameraInput,
  initialState,
  recordKeypose,
} from "../src/state.js";

describe("camera input", () => {
  it("forward step from identity moves along -z", () => {
    let state = initialState();
    state = applyCameraInput(state, { kind: "set-step", meters: 0.5 });
    state = applyCameraInput(state, { kind: "move", axis: "forward" });
    expect(state.pose.t).toEqual([0, 0, -0.5]);
  });

  it("yaw +90 then -90 restores the original quaternion", () => {
    let state = initialState();
    const before = [...state.pose.q];
    state = applyCameraInput(state, { kind: "rotate", axis: "yaw", degrees: 90 });
    state = applyCameraInput(state, { kind: "rotate", axis: "yaw", degrees: -90 });
    state.pose.q.forEach((v, i) => expect(Math.abs(v - before[i])).toBeLessThan(1e-6));
  });

  it("strafes along the rotated right axis", () => {
    let state = initialState();
    state = applyCameraInput(state, { kind: "rotate", axis: "yaw", degrees: 90 });
    state = applyCameraInput(state, { kind: "move", axis: "right" });
    // after a +90° yaw the camera's right axis points along world -z
    expect(state.pose.t[0]).toBeCloseTo(0, 9);
    expect(state.pose.t[2]).toBeCloseTo(-state.stepMeters, 9);
  });

  it("norm drift stays under 1e-6 across 10000 random inputs", () => {
    let state = initialState();
    let seed = 1234567;
    const rand = () => {
      // xorshift: deterministic input stream
      seed ^= seed << 13;
      seed ^= seed >>> 17;
      seed ^= seed << 5;
      return ((seed >>> 0) % 100000) / 100000;
    };
    const axes = ["yaw", "pitch", "roll"] as const;
    const moves = ["forward", "back", "left", "right", "up", "down"] as const;
    for (let i = 0; i < 10000; i++) {
      const input: CameraInput =
        rand() < 0.5
          ? { kind: "rotate", axis: axes[Math.floor(rand() * 3)], degrees: rand() * 30 - 15 }
          : { kind: "move", axis: moves[Math.floor(rand() * 6)] };
      state = applyCameraInput(state, input);
      expect(Math.abs(quatNorm(state.pose.q) - 1)).toBeLessThan(1e-6);
    }
  });

  it("state updates are immutable", () => {
    const a = initialState();
    const b = applyCameraInput(a, { kind: "move", axis: "up" });
    expect(a.pose.t).toEqual([0, 0, 0]);
    expect(b.pose.t[1]).toBeCloseTo(a.stepMeters, 12);
  });

  it("records the current pose as a keypose snapshot", () => {
    let state = initialState();
    state = applyCameraInput(state, { kind: "move", axis: "forward" });
    state = recordKeypose(state);
    state = applyCameraInput(state, { kind: "move", axis: "forward" });
    expect(state.keyposes).toHaveLength(1);
    expect(state.keyposes[0].t[2]).toBeCloseTo(-state.stepMeters, 12);
  });
});
