/**
 * Browser entry point: wires keyboard/slider camera controls to the
 * inference service and shows the synthesized view.
 *
 * Camera convention (must match the trained scene): right-handed, the
 * camera looks down its local -z axis, +y is up.  The scene-info bounding
 * box is displayed so the user can steer back into the trained region.
 */

import { ApiClient, RequestScheduler, SynthesisResult } from "./api.js";
import { flattenPose } from "./pose.js";
import {
  CameraInput,
  ViewerState,
  applyCameraInput,
  initialState,
  recordKeypose,
  clearKeyposes,
} from "./state.js";
import { exportTrajectory, importTrajectory } from "./trajectory.js";

const KEY_BINDINGS: Record<string, CameraInput> = {
  w: { kind: "move", axis: "forward" },
  s: { kind: "move", axis: "back" },
  a: { kind: "move", axis: "left" },
  d: { kind: "move", axis: "right" },
  q: { kind: "move", axis: "down" },
  e: { kind: "move", axis: "up" },
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startViewer(baseUrl: string): void {
  const client = new ApiClient(baseUrl);
  let state: ViewerState = initialState();

  const view = el<HTMLImageElement>("view");
  const poseReadout = el<HTMLElement>("pose-readout");
  const statusLine = el<HTMLElement>("status");
  const echoBadge = el<HTMLElement>("echo-badge");
  const keyposeCount = el<HTMLElement>("keypose-count");
  const nearestPanel = el<HTMLElement>("nearest-panel");

  const scheduler = new RequestScheduler(
    client,
    (result: SynthesisResult) => {
      view.src = URL.createObjectURL(result.blob);
      statusLine.textContent =
        `${state.stage} | ${result.latencyMs} ms | config ${result.configHash.slice(0, 12)}`;
      echoBadge.textContent = result.echoMatches ? "echo ok" : "ECHO MISMATCH";
      echoBadge.className = result.echoMatches ? "ok" : "error";
      state = { ...state, lastLatencyMs: result.latencyMs };
    },
    (err) => {
      statusLine.textContent = String(err);
      echoBadge.textContent = "request failed";
      echoBadge.className = "error";
    },
  );

  function refresh(): void {
    poseReadout.textContent = flattenPose(state.pose)
      .map((v) => v.toPrecision(6))
      .join("  ");
    keyposeCount.textContent = String(state.keyposes.length);
    el<HTMLButtonElement>("export-trajectory").disabled = state.keyposes.length < 2;
    scheduler.request(state.pose, state.stage);
  }

  function dispatch(input: CameraInput): void {
    state = applyCameraInput(state, input);
    refresh();
  }

  window.addEventListener("keydown", (ev) => {
    const binding = KEY_BINDINGS[ev.key.toLowerCase()];
    if (binding) {
      dispatch(binding);
      return;
    }
    if (ev.key === "ArrowLeft") dispatch({ kind: "rotate", axis: "yaw", degrees: state.stepDegrees });
    if (ev.key === "ArrowRight") dispatch({ kind: "rotate", axis: "yaw", degrees: -state.stepDegrees });
    if (ev.key === "ArrowUp") dispatch({ kind: "rotate", axis: "pitch", degrees: state.stepDegrees });
    if (ev.key === "ArrowDown") dispatch({ kind: "rotate", axis: "pitch", degrees: -state.stepDegrees });
  });

  el<HTMLInputElement>("step-meters").addEventListener("change", (ev) => {
    dispatch({ kind: "set-step", meters: Number((ev.target as HTMLInputElement).value) });
  });
  el<HTMLInputElement>("step-degrees").addEventListener("change", (ev) => {
    dispatch({ kind: "set-step", degrees: Number((ev.target as HTMLInputElement).value) });
  });
  el<HTMLSelectElement>("stage").addEventListener("change", (ev) => {
    dispatch({ kind: "set-stage", stage: (ev.target as HTMLSelectElement).value as "coarse" | "refined" });
  });

  el<HTMLButtonElement>("record-keypose").addEventListener("click", () => {
    state = recordKeypose(state);
    refresh();
  });
  el<HTMLButtonElement>("clear-keyposes").addEventListener("click", () => {
    state = clearKeyposes(state);
    refresh();
  });
  el<HTMLButtonElement>("export-trajectory").addEventListener("click", () => {
    const text = exportTrajectory(state.keyposes, 10);
    const blob = new Blob([text], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "trajectory.json";
    a.click();
  });
  el<HTMLInputElement>("import-trajectory").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const { keyposes } = importTrajectory(await file.text());
    state = { ...state, keyposes };
    refresh();
  });

  el<HTMLButtonElement>("show-nearest").addEventListener("click", async () => {
    const hits = await client.nearest(state.pose, 3);
    nearestPanel.innerHTML = "";
    for (const hit of hits) {
      const card = document.createElement("div");
      card.className = "nearest-card";
      if (hit.thumbnail) {
        const img = document.createElement("img");
        img.src = baseUrl + hit.thumbnail;
        card.appendChild(img);
      }
      const label = document.createElement("div");
      label.textContent = `${hit.sequence_id}  d=${hit.distance.toFixed(3)}`;
      card.appendChild(label);
      nearestPanel.appendChild(card);
    }
  });

  void client
    .sceneInfo()
    .then((info) => {
      if (info.pose_bounds) {
        const mid = info.pose_bounds.min.map(
          (lo, i) => (lo + info.pose_bounds!.max[i]) / 2,
        ) as [number, number, number];
        state = initialState({ t: mid, q: [1, 0, 0, 0] });
        el<HTMLElement>("scene-name").textContent =
          `${info.scene} (${info.image_size}px, bounds ${JSON.stringify(info.pose_bounds)})`;
      }
      refresh();
    })
    .catch((err) => {
      statusLine.textContent = `scene-info unavailable: ${err}`;
      refresh();
    });
}

declare global {
  interface Window {
    startViewer: typeof startViewer;
  }
}

if (typeof window !== "undefined") {
  window.startViewer = startViewer;
}
