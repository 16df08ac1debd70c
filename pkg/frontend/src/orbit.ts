/**
 * Orbit camera: azimuth/elevation/radius around a target point, producing
 * the row-major camera-to-world matrix the server expects (right-handed,
 * camera looks along -Z, world +Z up).
 */

export interface OrbitState {
  azimuth: number; // radians
  elevation: number; // radians, clamped to (-89deg, 89deg)
  radius: number;
  target: [number, number, number];
}

const MAX_ELEVATION = (89 * Math.PI) / 180;
const MIN_RADIUS = 1e-3;

type Vec3 = [number, number, number];

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export class OrbitCamera {
  azimuth: number;
  elevation: number;
  radius: number;
  target: Vec3;

  constructor(state: Partial<OrbitState> = {}) {
    this.azimuth = state.azimuth ?? 0;
    this.elevation = state.elevation ?? 0.4;
    this.radius = state.radius ?? 2.0;
    this.target = state.target ? [...state.target] : [0, 0, 0];
    this.clamp();
  }

  private clamp(): void {
    this.elevation = Math.min(MAX_ELEVATION, Math.max(-MAX_ELEVATION, this.elevation));
    this.radius = Math.max(MIN_RADIUS, this.radius);
  }

  rotate(dAzimuth: number, dElevation: number): void {
    this.azimuth += dAzimuth;
    this.elevation += dElevation;
    this.clamp();
  }

  zoom(factor: number): void {
    this.radius *= factor;
    this.clamp();
  }

  eye(): Vec3 {
    const ce = Math.cos(this.elevation);
    return [
      this.target[0] + this.radius * Math.cos(this.azimuth) * ce,
      this.target[1] + this.radius * Math.sin(this.azimuth) * ce,
      this.target[2] + this.radius * Math.sin(this.elevation),
    ];
  }

  /** Row-major 4x4 camera-to-world; columns are right/up/backward + eye. */
  cameraToWorld(): number[] {
    const eye = this.eye();
    const back = sub(eye, this.target);
    const zc = scale(back, 1 / norm(back));
    let xc = cross([0, 0, 1], zc);
    const nx = norm(xc);
    if (nx < 1e-9) {
      xc = cross([0, 1, 0], zc);
    }
    xc = scale(xc, 1 / norm(xc));
    const yc = cross(zc, xc);
    return [
      xc[0], yc[0], zc[0], eye[0],
      xc[1], yc[1], zc[1], eye[1],
      xc[2], yc[2], zc[2], eye[2],
      0, 0, 0, 1,
    ];
  }
}
