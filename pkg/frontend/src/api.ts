/**
 * Service client: pose synthesis requests with a single-in-flight,
 * latest-wins scheduler.  Synthesis latency dwarfs input rate, so at most
 * one request runs at a time and only the newest queued pose is sent next.
 */

import { Pose } from "./pose.js";
import { Stage } from "./state.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface SynthesisResult {
  blob: Blob;
  echoTranslation: number[];
  echoQuaternion: number[];
  configHash: string;
  latencyMs: number;
  echoMatches: boolean;
}

export interface SceneInfo {
  scene: string;
  config_hash: string;
  image_size: number;
  stages: Stage[];
  nearest_available: boolean;
  pose_bounds?: { min: number[]; max: number[] };
}

export interface NearestHit {
  t: number[];
  q: number[];
  sequence_id: string;
  distance: number;
  thumbnail: string | null;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch.bind(globalThis),
  ) {}

  async synthesize(pose: Pose, stage: Stage): Promise<SynthesisResult> {
    const body = JSON.stringify({
      translation: pose.t,
      quaternion: pose.q,
      stage,
      format: "png",
    });
    const started = Date.now();
    const resp = await this.fetchFn(`${this.baseUrl}/api/v1/synthesize`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body,
    });
    if (!resp.ok) {
      const err = await resp.json().catch(() => ({}));
      throw new Error(`synthesize failed (${resp.status}): ${JSON.stringify(err)}`);
    }
    const blob = await resp.blob();
    const echoTranslation = JSON.parse(resp.headers.get("X-Pose-Translation") ?? "[]");
    const echoQuaternion = JSON.parse(resp.headers.get("X-Pose-Quaternion") ?? "[]");
    // round-trip check: the exact numbers we sent must come back
    const echoMatches =
      JSON.stringify(echoTranslation) === JSON.stringify(pose.t) &&
      JSON.stringify(echoQuaternion) === JSON.stringify(pose.q);
    return {
      blob,
      echoTranslation,
      echoQuaternion,
      configHash: resp.headers.get("X-Config-Hash") ?? "",
      latencyMs: Date.now() - started,
      echoMatches,
    };
  }

  async sceneInfo(): Promise<SceneInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/v1/scene-info`);
    if (!resp.ok) throw new Error(`scene-info failed (${resp.status})`);
    return (await resp.json()) as SceneInfo;
  }

  async nearest(pose: Pose, k = 3): Promise<NearestHit[]> {
    const flat = [...pose.t, ...pose.q].join(",");
    const resp = await this.fetchFn(
      `${this.baseUrl}/api/v1/nearest?k=${k}&pose=${encodeURIComponent(flat)}`,
    );
    if (!resp.ok) throw new Error(`nearest failed (${resp.status})`);
    const obj = await resp.json();
    return obj.nearest as NearestHit[];
  }
}

/**
 * Debounces view requests: at most one in flight; while it runs, newer
 * poses overwrite the pending slot and only the latest is issued next.
 */
export class RequestScheduler {
  private inFlight = false;
  private pending: { pose: Pose; stage: Stage } | null = null;
  inFlightCount = 0;
  maxObservedInFlight = 0;

  constructor(
    private readonly client: ApiClient,
    private readonly onResult: (r: SynthesisResult) => void,
    private readonly onError: (e: unknown) => void = () => undefined,
  ) {}

  request(pose: Pose, stage: Stage): void {
    this.pending = { pose, stage };
    void this.pump();
  }

  private async pump(): Promise<void> {
    if (this.inFlight || this.pending === null) return;
    const job = this.pending;
    this.pending = null;
    this.inFlight = true;
    this.inFlightCount += 1;
    this.maxObservedInFlight = Math.max(this.maxObservedInFlight, this.inFlightCount);
    try {
      const result = await this.client.synthesize(job.pose, job.stage);
      this.onResult(result);
    } catch (err) {
      this.onError(err);
    } finally {
      this.inFlightCount -= 1;
      this.inFlight = false;
      void this.pump();
    }
  }

  get hasPending(): boolean {
    return this.pending !== null;
  }
}
