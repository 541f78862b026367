import { HttpTransport } from "./api.js";
import { PlayerCore } from "./core.js";
import { hudLine, tickPositions } from "./hud.js";
import { Manifest, Stats } from "./types.js";

const SERVICE = (window as unknown as { GRIDVID_SERVICE?: string }).GRIDVID_SERVICE
  ?? "http://127.0.0.1:8080";
const STATS_POLL_MS = 1000;

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

const image = el<HTMLImageElement>("frame");
const timeline = el<HTMLInputElement>("timeline");
const ticksBox = el<HTMLDivElement>("ticks");
const qualitySelect = el<HTMLSelectElement>("quality");
const hud = el<HTMLDivElement>("hud");
const banner = el<HTMLDivElement>("banner");
const stall = el<HTMLDivElement>("stall");
const playButton = el<HTMLButtonElement>("play");
const retryButton = el<HTMLButtonElement>("retry");

const transport = new HttpTransport(SERVICE);
let stats: Stats | null = null;
let lastObjectUrl = "";

const player = new PlayerCore(transport, {
  onFrame(img, index) {
    if (lastObjectUrl && lastObjectUrl !== img.objectUrl) {
      URL.revokeObjectURL(lastObjectUrl);
    }
    lastObjectUrl = img.objectUrl;
    image.src = img.objectUrl;
    timeline.value = String(index);
    hud.textContent = hudLine(index, player.quality, player.manifest, stats);
  },
  onTimeline(manifest: Manifest) {
    timeline.max = String(manifest.frame_count - 1);
    ticksBox.innerHTML = "";
    for (const pct of tickPositions(manifest)) {
      const tick = document.createElement("span");
      tick.className = "tick";
      tick.style.left = `${pct}%`;
      ticksBox.appendChild(tick);
    }
    qualitySelect.innerHTML = "";
    manifest.qualities.forEach((level, i) => {
      const option = document.createElement("option");
      option.value = String(i);
      option.textContent = `sq=${level.sq} (${Math.round(level.avg_bitrate_kbps)} kbps)`;
      qualitySelect.appendChild(option);
    });
    banner.hidden = true;
  },
  onStall(stalled) {
    stall.hidden = !stalled;
  },
  onError(message) {
    banner.textContent = message;
    banner.hidden = false;
  },
  onState(state) {
    playButton.textContent = state === "playing" ? "pause" : "play";
  },
}, { width: 480, height: 360 });

playButton.addEventListener("click", () => player.toggle());
retryButton.addEventListener("click", () => void player.load());
timeline.addEventListener("input", () => void player.seek(Number(timeline.value)));
qualitySelect.addEventListener("change", () => player.setQuality(Number(qualitySelect.value)));

window.addEventListener("keydown", (event) => {
  if (event.code === "Space") {
    event.preventDefault();
    player.toggle();
  } else if (event.key === "ArrowRight") {
    void player.step(1);
  } else if (event.key === "ArrowLeft") {
    void player.step(-1);
  }
  player.setRate(event.shiftKey ? 2 * Math.sign(player.rate) : Math.sign(player.rate));
});
window.addEventListener("keyup", (event) => {
  if (!event.shiftKey) player.setRate(Math.sign(player.rate));
});

let dragging = false;
let lastX = 0;
let lastY = 0;
image.addEventListener("pointerdown", (event) => {
  dragging = true;
  lastX = event.clientX;
  lastY = event.clientY;
  image.setPointerCapture(event.pointerId);
});
image.addEventListener("pointermove", (event) => {
  if (!dragging) return;
  const dYaw = (event.clientX - lastX) * 0.5;
  const dPitch = (event.clientY - lastY) * 0.5;
  lastX = event.clientX;
  lastY = event.clientY;
  void player.dragOrbit(dYaw, dPitch);
});
image.addEventListener("pointerup", () => {
  dragging = false;
});
image.addEventListener("wheel", (event) => {
  event.preventDefault();
  void player.zoom(event.deltaY > 0 ? 1.1 : 1 / 1.1);
});

let lastTime = performance.now();
function loop(now: number) {
  void player.tick(now - lastTime);
  lastTime = now;
  requestAnimationFrame(loop);
}
requestAnimationFrame(loop);

setInterval(() => {
  transport.fetchStats().then((s) => {
    stats = s;
    hud.textContent = hudLine(player.frame, player.quality, player.manifest, stats);
  }).catch(() => undefined);
}, STATS_POLL_MS);

void player.load();
