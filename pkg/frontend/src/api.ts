import { FrameImage, Manifest, Stats, Transport } from "./types.js";

/** HTTP transport against a running stream service. */
export class HttpTransport implements Transport {
  constructor(private baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async fetchManifest(): Promise<Manifest> {
    const res = await fetch(this.url("/manifest"));
    if (!res.ok) throw new Error(`manifest: HTTP ${res.status}`);
    return (await res.json()) as Manifest;
  }

  async fetchFrame(path: string): Promise<FrameImage> {
    const res = await fetch(this.url(path));
    if (!res.ok) throw new Error(`render: HTTP ${res.status}`);
    const blob = await res.blob();
    return { url: path, objectUrl: URL.createObjectURL(blob) };
  }

  async fetchStats(): Promise<Stats> {
    const res = await fetch(this.url("/stats"));
    if (!res.ok) throw new Error(`stats: HTTP ${res.status}`);
    return (await res.json()) as Stats;
  }
}
