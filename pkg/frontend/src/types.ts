/** Wire types of the streaming service. */

export interface QualityLevel {
  index: number;
  sq: number;
  avg_bitrate_kbps: number;
  path: string;
}

export interface Manifest {
  frame_count: number;
  gof_length: number;
  frame_rate: number;
  qualities: QualityLevel[];
}

export interface StageStats {
  count: number;
  total_ms: number;
  mean_ms: number;
  max_ms: number;
}

export interface Stats {
  stages: Record<string, StageStats>;
  cache: { hits: number; misses: number; entries: number; capacity: number };
  decoded_frames: number;
  decodes_per_gof: Record<string, number>;
  renders: number;
  bytes_served: number;
}

/** Opaque handle for a fetched frame image (a blob URL in the browser). */
export interface FrameImage {
  url: string;
  objectUrl: string;
}

/** Transport abstraction so the player core is testable without a browser. */
export interface Transport {
  fetchManifest(): Promise<Manifest>;
  fetchFrame(url: string): Promise<FrameImage>;
  fetchStats(): Promise<Stats>;
}

export interface OrbitState {
  yaw: number;
  pitch: number;
  radius: number;
}

export type PlayState = "idle" | "paused" | "playing" | "error";
