/**
 * Client-side pose math.
 *
 * Conventions match the service: quaternions are (w, x, y, z) unit vectors,
 * the camera looks down its local -z axis (right-handed, +y up), and the
 * flattened pose order is x, y, z, w, qx, qy, qz.
 */

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // w, x, y, z

export interface Pose {
  t: Vec3;
  q: Quat;
}

export function identityPose(): Pose {
  return { t: [0, 0, 0], q: [1, 0, 0, 0] };
}

export function quatNorm(q: Quat): number {
  return Math.hypot(q[0], q[1], q[2], q[3]);
}

export function normalizeQuat(q: Quat): Quat {
  const n = quatNorm(q);
  if (n === 0) throw new Error("zero-norm quaternion");
  let out: Quat = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
  if (out[0] < 0) out = [-out[0], -out[1], -out[2], -out[3]];
  return out;
}

/** Hamilton product a * b. */
export function quatMultiply(a: Quat, b: Quat): Quat {
  const [w1, x1, y1, z1] = a;
  const [w2, x2, y2, z2] = b;
  return [
    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
  ];
}

export function axisAngleQuat(axis: Vec3, angleRad: number): Quat {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  const half = angleRad / 2;
  const s = Math.sin(half) / n;
  return [Math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s];
}

/** Rotate a vector by a quaternion (camera-to-world when q is a camera pose). */
export function rotateVec(q: Quat, v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  // v' = v + 2 r x (r x v + w v), with r = (x, y, z)
  const u: Vec3 = [
    y * v[2] - z * v[1] + w * v[0],
    z * v[0] - x * v[2] + w * v[1],
    x * v[1] - y * v[0] + w * v[2],
  ];
  return [
    v[0] + 2 * (y * u[2] - z * u[1]),
    v[1] + 2 * (z * u[0] - x * u[2]),
    v[2] + 2 * (x * u[1] - y * u[0]),
  ];
}

export function cameraAxes(q: Quat): { right: Vec3; up: Vec3; forward: Vec3 } {
  return {
    right: rotateVec(q, [1, 0, 0]),
    up: rotateVec(q, [0, 1, 0]),
    forward: rotateVec(q, [0, 0, -1]),
  };
}

export function flattenPose(p: Pose): number[] {
  return [...p.t, ...p.q];
}

export function posesEqual(a: Pose, b: Pose, tol = 0): boolean {
  const fa = flattenPose(a);
  const fb = flattenPose(b);
  return fa.every((v, i) => Math.abs(v - fb[i]) <= tol);
}
