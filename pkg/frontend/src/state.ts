/**
 * Viewer state and camera input handling.
 *
 * Translation moves along camera-local axes; rotation composes an
 * incremental local-axis quaternion and renormalizes, so arbitrarily long
 * input sequences cannot drift off the unit sphere.
 */

import {
  Pose,
  Quat,
  axisAngleQuat,
  cameraAxes,
  identityPose,
  normalizeQuat,
  quatMultiply,
} from "./pose.js";

export type Stage = "coarse" | "refined";

export type CameraInput =
  | { kind: "move"; axis: "forward" | "back" | "left" | "right" | "up" | "down" }
  | { kind: "rotate"; axis: "yaw" | "pitch" | "roll"; degrees: number }
  | { kind: "set-translation"; index: 0 | 1 | 2; value: number }
  | { kind: "set-stage"; stage: Stage }
  | { kind: "set-step"; meters?: number; degrees?: number };

export interface ViewerState {
  pose: Pose;
  stepMeters: number;
  stepDegrees: number;
  stage: Stage;
  keyposes: Pose[];
  lastLatencyMs: number | null;
}

export function initialState(pose?: Pose): ViewerState {
  return {
    pose: pose ?? identityPose(),
    stepMeters: 0.25,
    stepDegrees: 5,
    stage: "coarse",
    keyposes: [],
    lastLatencyMs: null,
  };
}

const LOCAL_AXES = {
  yaw: [0, 1, 0] as [number, number, number],
  pitch: [1, 0, 0] as [number, number, number],
  roll: [0, 0, 1] as [number, number, number],
};

export function applyCameraInput(state: ViewerState, input: CameraInput): ViewerState {
  const next = { ...state, pose: { t: [...state.pose.t], q: [...state.pose.q] } as Pose };
  switch (input.kind) {
    case "move": {
      const axes = cameraAxes(state.pose.q);
      const step = state.stepMeters;
      const dir = {
        forward: axes.forward,
        back: axes.forward.map((v) => -v),
        right: axes.right,
        left: axes.right.map((v) => -v),
        up: axes.up,
        down: axes.up.map((v) => -v),
      }[input.axis] as [number, number, number];
      next.pose.t = [
        state.pose.t[0] + step * dir[0],
        state.pose.t[1] + step * dir[1],
        state.pose.t[2] + step * dir[2],
      ];
      break;
    }
    case "rotate": {
      const delta = axisAngleQuat(LOCAL_AXES[input.axis], (input.degrees * Math.PI) / 180);
      // local-axis rotation composes on the right of the camera quaternion
      next.pose.q = normalizeQuat(quatMultiply(state.pose.q, delta) as Quat);
      break;
    }
    case "set-translation": {
      next.pose.t[input.index] = input.value;
      break;
    }
    case "set-stage": {
      next.stage = input.stage;
      break;
    }
    case "set-step": {
      if (input.meters !== undefined) next.stepMeters = input.meters;
      if (input.degrees !== undefined) next.stepDegrees = input.degrees;
      break;
    }
  }
  return next;
}

export function recordKeypose(state: ViewerState): ViewerState {
  return { ...state, keyposes: [...state.keyposes, { t: [...state.pose.t], q: [...state.pose.q] } as Pose] };
}

export function clearKeyposes(state: ViewerState): ViewerState {
  return { ...state, keyposes: [] };
}
