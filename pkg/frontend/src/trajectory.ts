/**
 * Keypose recording and trajectory JSON import/export.
 *
 * The wire schema matches the server and the offline renderer exactly:
 * {"keyposes": [{"t": [x, y, z], "q": [w, qx, qy, qz]}, ...],
 *  "frames_per_segment": n}
 */

import { Pose } from "./pose.js";

export interface TrajectoryFile {
  keyposes: { t: number[]; q: number[] }[];
  frames_per_segment: number;
}

export function exportTrajectory(keyposes: Pose[], framesPerSegment: number): string {
  if (keyposes.length < 2) {
    throw new Error("need at least 2 keyposes to export a trajectory");
  }
  const obj: TrajectoryFile = {
    keyposes: keyposes.map((p) => ({ t: [...p.t], q: [...p.q] })),
    frames_per_segment: framesPerSegment,
  };
  return JSON.stringify(obj, null, 2);
}

export function importTrajectory(text: string): { keyposes: Pose[]; framesPerSegment: number } {
  const obj = JSON.parse(text) as TrajectoryFile;
  if (!Array.isArray(obj.keyposes)) throw new Error("missing keyposes");
  const keyposes = obj.keyposes.map((entry) => {
    if (entry.t.length !== 3 || entry.q.length !== 4) {
      throw new Error("keypose must have 3 translation and 4 quaternion values");
    }
    return { t: [...entry.t], q: [...entry.q] } as Pose;
  });
  return { keyposes, framesPerSegment: obj.frames_per_segment };
}
