import numpy as np
import pytest

from gridvid.codec import EncodeConfig, encode_sequence
from gridvid.synth import Blob, SceneSpec, generate_sequence

SQ_LADDER = (0.01, 0.1, 1.0, 4.0, 16.0)


def corridor_scene(frames=40, n=64):
    """Textured static slabs around an empty corridor; a blob shuttles inside.

    The scene is the rate/quality workhorse: the slabs give I-frames real
    coding mass at every quantization scale, while the integer-velocity mover
    is perfectly motion-compensable.
    """
    def vox(*v):
        return np.array(v, np.float64) / (n - 1)

    def slab(center, radii):
        return Blob(
            path=[vox(*center)] * frames,
            radius=tuple(np.array(radii) / (n - 1)),
            shape="box", density=150.0, color=(0.55, 0.6, 0.7),
            texture_amp=0.9, texture_freq=0.8,
        )

    slabs = [
        slab((31.5, 11.5, 31.5), (31.5, 11.5, 31.5)),
        slab((31.5, 51.5, 31.5), (31.5, 11.5, 31.5)),
        slab((31.5, 31.5, 11.5), (31.5, 7.5, 11.5)),
        slab((31.5, 31.5, 51.5), (31.5, 7.5, 11.5)),
    ]
    path = [vox(10.0 + min(t, frames - 1 - t), 31.5, 31.5) for t in range(frames)]
    mover = Blob(path=path, radius=6.5 / (n - 1), density=60.0, color=(0.85, 0.35, 0.25))
    return SceneSpec(dims=(n, n, n), frames=frames, blobs=slabs + [mover])


def small_scene(frames=6, n=32, velocity_vox=1.0, radius_vox=6.0, density=10.0,
                texture=0.0, channels=13):
    """Single blob shuttling along x; the path bounces to stay inside the bbox."""
    start = np.array([radius_vox + 2.0, n / 2.0, n / 2.0])
    span = n - 2 * (radius_vox + 2.0)
    path = []
    for t in range(frames):
        step = t * velocity_vox
        period = 2 * span
        phase = step % period if period > 0 else 0.0
        offset = phase if phase <= span else period - phase
        path.append((start + np.array([offset, 0.0, 0.0])) / (n - 1))
    return SceneSpec(dims=(n, n, n), frames=frames, channels=channels, blobs=[
        Blob(path=path, radius=radius_vox / (n - 1), density=density,
             color=(0.8, 0.3, 0.2), texture_amp=texture),
    ])


@pytest.fixture(scope="session")
def corridor():
    """(spec, grids, motions, peak) for the 64^3 40-frame rate/quality scene."""
    spec = corridor_scene()
    grids, motions, _ = generate_sequence(spec)
    peak = float(max(np.abs(g.data).max() for g in grids))
    return spec, grids, motions, peak


@pytest.fixture(scope="session")
def corridor_streams(corridor):
    """Ladder-encoded corridor streams plus encoder-side reconstructions at sq=1."""
    _, grids, motions, _ = corridor
    streams = {}
    recons = {}
    for sq in SQ_LADDER:
        sink = []
        cfg = EncodeConfig(sq_ladder=(sq,), gof_length=20)
        streams[sq] = encode_sequence(grids, motions, cfg, recons=sink)
        recons[sq] = sink
    return streams, recons


