import { FrameImage, Manifest, OrbitState, PlayState, Transport } from "./types.js";

export interface PlayerOptions {
  width: number;
  height: number;
  prefetch: number;          // frames fetched ahead during playback
  cacheCapacity: number;
  initialRadius?: number;
}

export interface PlayerEvents {
  onFrame(image: FrameImage, frame: number): void;
  onTimeline(manifest: Manifest): void;
  onStall(stalled: boolean): void;
  onError(message: string): void;
  onState(state: PlayState): void;
}

const DEFAULTS: PlayerOptions = { width: 320, height: 240, prefetch: 2, cacheCapacity: 48 };

/**
 * Headless player state machine. All HTTP goes through the injected
 * transport and time only advances through tick(), so a test can drive a
 * whole interactive session deterministically.
 *
 * Request discipline: at most one in-flight render per purpose (playback vs
 * orbit) with newer requests superseding older ones; prefetched frames land
 * in a bounded cache and are dropped on seek; no request ever leaves
 * [0, frame_count).
 */
export class PlayerCore {
  state: PlayState = "idle";
  frame = 0;
  rate = 1;
  playing = false;
  quality = 0;
  orbit: OrbitState = { yaw: 0, pitch: 10, radius: 2.5 };
  manifest: Manifest | null = null;

  /** URLs actually issued over HTTP, in order (cache hits excluded). */
  readonly requestLog: string[] = [];

  private readonly options: PlayerOptions;
  private cache = new Map<string, FrameImage>();
  private pending = new Set<string>();
  private tokens: Record<string, number> = { playback: 0, orbit: 0 };
  private generation = 0;
  private accumulatorMs = 0;

  constructor(
    private transport: Transport,
    private events: PlayerEvents,
    options: Partial<PlayerOptions> = {},
  ) {
    this.options = { ...DEFAULTS, ...options };
    if (options.initialRadius) this.orbit.radius = options.initialRadius;
  }

  get frameCount(): number {
    return this.manifest?.frame_count ?? 0;
  }

  get fps(): number {
    return this.manifest?.frame_rate ?? 25;
  }

  /** GOF boundaries for timeline tick marks. */
  gofTicks(): number[] {
    if (!this.manifest) return [];
    const ticks: number[] = [];
    for (let t = 0; t < this.manifest.frame_count; t += this.manifest.gof_length) {
      ticks.push(t);
    }
    return ticks;
  }

  renderUrl(frame: number): string {
    const o = this.orbit;
    return (
      `/render?quality=${this.quality}&frame=${frame}` +
      `&yaw=${o.yaw}&pitch=${o.pitch}&radius=${o.radius}` +
      `&w=${this.options.width}&h=${this.options.height}`
    );
  }

  async load(): Promise<void> {
    try {
      this.manifest = await this.transport.fetchManifest();
    } catch (err) {
      this.state = "error";
      this.events.onState(this.state);
      this.events.onError(`manifest load failed: ${String(err)}`);
      return;
    }
    this.frame = 0;
    this.playing = false;
    this.state = "paused";
    this.events.onTimeline(this.manifest);
    this.events.onState(this.state);
    await this.show(this.frame, "playback");
  }

  play(): void {
    if (!this.manifest || this.state === "error") return;
    this.playing = true;
    this.state = "playing";
    this.accumulatorMs = 0;
    this.events.onState(this.state);
  }

  pause(): void {
    this.playing = false;
    if (this.state === "playing") {
      this.state = "paused";
      this.events.onState(this.state);
    }
  }

  toggle(): void {
    this.playing ? this.pause() : this.play();
  }

  setRate(rate: number): void {
    if (rate !== 0) this.rate = rate;
  }

  setQuality(quality: number): void {
    if (!this.manifest) return;
    if (quality >= 0 && quality < this.manifest.qualities.length) {
      this.quality = quality;     // takes effect at the next request
    }
  }

  async seek(frame: number): Promise<void> {
    if (!this.manifest) return;
    const target = Math.min(Math.max(Math.round(frame), 0), this.frameCount - 1);
    this.generation += 1;         // drop queued prefetches
    this.frame = target;
    this.accumulatorMs = 0;
    await this.show(target, "playback");
  }

  async step(delta: number): Promise<void> {
    await this.seek(this.frame + delta);
  }

  async dragOrbit(dYaw: number, dPitch: number): Promise<void> {
    this.orbit.yaw = (this.orbit.yaw + dYaw) % 360;
    this.orbit.pitch = Math.min(85, Math.max(-85, this.orbit.pitch + dPitch));
    await this.show(this.frame, "orbit");
  }

  async zoom(factor: number): Promise<void> {
    this.orbit.radius = Math.min(20, Math.max(0.2, this.orbit.radius * factor));
    await this.show(this.frame, "orbit");
  }

  /** Advance playback by dtMs of wall-clock time; may display several frames. */
  async tick(dtMs: number): Promise<void> {
    if (!this.playing || !this.manifest) return;
    this.accumulatorMs += dtMs * Math.abs(this.rate);
    const frameDuration = 1000 / this.fps;
    while (this.accumulatorMs >= frameDuration) {
      this.accumulatorMs -= frameDuration;
      const direction = Math.sign(this.rate) || 1;
      const next = this.frame + direction;
      if (next < 0 || next >= this.frameCount) {
        this.pause();
        return;
      }
      this.frame = next;
      await this.show(next, "playback");
      await this.prefetchAhead(direction);
    }
  }

  private async prefetchAhead(direction: number): Promise<void> {
    const generation = this.generation;
    for (let k = 1; k <= this.options.prefetch; k += 1) {
      const frame = this.frame + k * direction;
      if (frame < 0 || frame >= this.frameCount) continue;
      const url = this.renderUrl(frame);
      if (this.cache.has(url) || this.pending.has(url)) continue;
      this.pending.add(url);
      this.requestLog.push(url);
      try {
        const image = await this.transport.fetchFrame(url);
        if (this.generation === generation) this.cachePut(url, image);
      } catch {
        // prefetch failures are silent; playback will retry on display
      } finally {
        this.pending.delete(url);
      }
    }
  }

  private cachePut(url: string, image: FrameImage): void {
    this.cache.set(url, image);
    while (this.cache.size > this.options.cacheCapacity) {
      const oldest = this.cache.keys().next().value as string;
      this.cache.delete(oldest);
    }
  }

  private async show(frame: number, purpose: "playback" | "orbit"): Promise<void> {
    if (frame < 0 || frame >= this.frameCount) return;
    const url = this.renderUrl(frame);
    const cached = this.cache.get(url);
    if (cached) {
      this.events.onFrame(cached, frame);
      return;
    }
    const token = ++this.tokens[purpose];
    this.requestLog.push(url);
    try {
      const image = await this.transport.fetchFrame(url);
      if (this.tokens[purpose] !== token) return;   // superseded
      this.cachePut(url, image);
      this.events.onStall(false);
      this.events.onFrame(image, frame);
    } catch (err) {
      if (this.tokens[purpose] !== token) return;
      this.events.onStall(true);                    // hold the last image
    }
  }
}
