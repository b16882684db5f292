"""Deterministic preprocessing: face crop, resize, length standardization,
histogram equalization, clip segmentation, normalization, and seeded
augmentation.

Everything is pure given (input, config, seed); per-video randomness is
keyed by global_seed XOR a stable hash of the video's source id. Pixel
work happens on uint8 until the final /255 normalization so reruns are
bit-identical.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

__all__ = [
    "RawVideo",
    "StandardVideo",
    "Clip",
    "PipelineConfig",
    "AugmentConfig",
    "LocalizationError",
    "FaceLocalizer",
    "CenterSquareLocalizer",
    "SidecarLocalizer",
    "localize_and_resize",
    "standardize_length",
    "segment_clips",
    "normalize_pixels",
    "equalize_histogram",
    "equalize_frames",
    "augment",
    "preprocess_video",
    "stable_hash64",
]


@dataclass
class RawVideo:
    """Decoded video: uint8 frames [T, H, W, 3] at a nominal fps."""

    frames: np.ndarray
    source_id: str
    fps: int = 30

    def __post_init__(self):
        f = self.frames
        if f.ndim != 4 or f.shape[-1] != 3 or f.shape[0] < 1:
            raise ValueError(f"raw video needs [T, H, W, 3] frames, got {f.shape}")
        if f.dtype != np.uint8:
            raise ValueError(f"raw video frames must be uint8, got {f.dtype}")


@dataclass
class StandardVideo:
    """Exactly L square uint8 frames [L, S, S, 3]."""

    frames: np.ndarray
    source_id: str


@dataclass
class Clip:
    """Model input unit: float32 frames [F, S, S, 3] with values in [0, 1]."""

    frames: np.ndarray
    parent_id: str
    clip_index: int


class LocalizationError(ValueError):
    """A crop rectangle was degenerate or out of frame; carries the frame index."""

    def __init__(self, frame_index: int, message: str):
        super().__init__(f"frame {frame_index}: {message}")
        self.frame_index = frame_index


class FaceLocalizer(Protocol):
    def rectangles(self, frames: np.ndarray) -> Sequence[tuple[int, int, int, int]]:
        """One (x, y, w, h) crop per frame, fully inside the frame."""
        ...


class CenterSquareLocalizer:
    """Fallback localizer: centered square of side min(H, W) in every frame."""

    def rectangles(self, frames: np.ndarray):
        t, h, w = frames.shape[:3]
        side = min(h, w)
        x = (w - side) // 2
        y = (h - side) // 2
        return [(x, y, side, side)] * t


class SidecarLocalizer:
    """Crop rectangles supplied externally (e.g. a face-detector sidecar)."""

    def __init__(self, rects: Sequence[tuple[int, int, int, int]]):
        self.rects = [tuple(int(v) for v in r) for r in rects]

    def rectangles(self, frames: np.ndarray):
        t = frames.shape[0]
        if len(self.rects) != t:
            raise LocalizationError(min(len(self.rects), t),
                                    f"{len(self.rects)} rectangles for {t} frames")
        return self.rects


def stable_hash64(text: str) -> int:
    """Process-independent 64-bit hash (python's hash() is salted per run)."""
    return int.from_bytes(hashlib.blake2s(text.encode()).digest()[:8], "little")


# -- resampling ----------------------------------------------------------------


def _bilinear_grid(frames: np.ndarray, yy: np.ndarray, xx: np.ndarray,
                   fill: float | None) -> np.ndarray:
    """Sample frames [T, H, W, C] at fractional coords yy/xx [Ho, Wo].

    fill=None clamps coordinates to the frame (edge replication);
    a number fills samples outside the frame with that value.
    """
    t, h, w, c = frames.shape
    if fill is None:
        inside = None
    else:
        # boundary samples can land at -1e-16 through rotation roundoff
        eps = 1e-9
        inside = (yy >= -eps) & (yy <= h - 1 + eps) & (xx >= -eps) & (xx <= w - 1 + eps)
    yy = np.clip(yy, 0.0, h - 1.0)
    xx = np.clip(xx, 0.0, w - 1.0)
    y0 = np.floor(yy).astype(np.intp)
    x0 = np.floor(xx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (yy - y0)[None, :, :, None]
    wx = (xx - x0)[None, :, :, None]
    f = frames.astype(np.float64)
    # lerp form: exact for constant fields regardless of weight roundoff
    top = f[:, y0, x0] + wx * (f[:, y0, x1] - f[:, y0, x0])
    bot = f[:, y1, x0] + wx * (f[:, y1, x1] - f[:, y1, x0])
    out = top + wy * (bot - top)
    if inside is not None:
        out = np.where(inside[None, :, :, None], out, fill)
    return out


def _resize_frames_u8(frames: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resize of uint8 [T, H, W, C] to [T, side, side, C].

    Half-pixel centers, so a side->side resize is the identity.
    """
    t, h, w, c = frames.shape
    ys = (np.arange(side) + 0.5) * (h / side) - 0.5
    xs = (np.arange(side) + 0.5) * (w / side) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = _bilinear_grid(frames, yy, xx, fill=None)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _rotate_frames(frames: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate float frames [T, S, S, C] about the center; zero outside."""
    t, h, w, c = frames.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    th = math.radians(angle_deg)
    cos, sin = math.cos(th), math.sin(th)
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64), indexing="xy")
    yd, xd = ii - cy, jj - cx
    # inverse map: destination pixel pulls from source rotated by -angle
    ys = cos * yd + sin * xd + cy
    xs = -sin * yd + cos * xd + cx
    return _bilinear_grid(frames, ys, xs, fill=0.0).astype(frames.dtype)


# -- pipeline stages -------------------------------------------------------------


def localize_and_resize(video: RawVideo, localizer: FaceLocalizer, side: int) -> np.ndarray:
    """Crop each frame to its face rectangle, then resize to side x side."""
    frames = video.frames
    t, h, w, _ = frames.shape
    rects = list(localizer.rectangles(frames))
    for i, (x, y, rw, rh) in enumerate(rects):
        if rw <= 0 or rh <= 0:
            raise LocalizationError(i, f"degenerate rectangle {(x, y, rw, rh)}")
        if x < 0 or y < 0 or x + rw > w or y + rh > h:
            raise LocalizationError(i, f"rectangle {(x, y, rw, rh)} exceeds frame {(h, w)}")
    if len(set(rects)) == 1:
        x, y, rw, rh = rects[0]
        return _resize_frames_u8(frames[:, y:y + rh, x:x + rw], side)
    out = np.empty((t, side, side, 3), dtype=np.uint8)
    for i, (x, y, rw, rh) in enumerate(rects):
        out[i] = _resize_frames_u8(frames[i:i + 1, y:y + rh, x:x + rw], side)[0]
    return out


def standardize_length(frames: np.ndarray, length: int) -> np.ndarray:
    """Trim to the first `length` frames, or pad by repeating from frame 0."""
    t = frames.shape[0]
    if t >= length:
        return frames[:length]
    pad_idx = np.arange(length - t) % t
    return np.concatenate([frames, frames[pad_idx]], axis=0)


def segment_clips(frames: np.ndarray, clip_len: int) -> list[np.ndarray]:
    """Contiguous non-overlapping blocks; concatenation rebuilds the input."""
    t = frames.shape[0]
    if t % clip_len != 0:
        raise ValueError(f"length {t} not divisible by clip length {clip_len}")
    return [frames[i:i + clip_len] for i in range(0, t, clip_len)]


def normalize_pixels(frames: np.ndarray) -> np.ndarray:
    return frames.astype(np.float32) / np.float32(255.0)


def equalize_histogram(channel: np.ndarray) -> np.ndarray:
    """Classic cdf-remap contrast stretch on one uint8 channel.

    m(v) = round((cdf(v) - cdf_min) / (N - cdf_min) * 255); a constant
    channel maps to zeros (the 0/0 guard).
    """
    if channel.dtype != np.uint8:
        raise ValueError(f"equalization expects uint8, got {channel.dtype}")
    hist = np.bincount(channel.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    n = channel.size
    cdf_min = int(cdf[np.nonzero(hist)[0][0]])
    if n == cdf_min:
        return np.zeros_like(channel)
    lut = np.rint((cdf - cdf_min) / (n - cdf_min) * 255.0)
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return lut[channel]


def equalize_frames(frames: np.ndarray) -> np.ndarray:
    """Per-frame, per-channel equalization of uint8 [T, S, S, C]."""
    out = np.empty_like(frames)
    for ti in range(frames.shape[0]):
        for ci in range(frames.shape[-1]):
            out[ti, :, :, ci] = equalize_histogram(frames[ti, :, :, ci])
    return out


# -- augmentation ---------------------------------------------------------------


@dataclass(frozen=True)
class AugmentConfig:
    max_rotation_deg: float = 10.0
    flip_prob: float = 0.5
    noise_sigma: float = 0.02

    def __post_init__(self):
        if self.max_rotation_deg < 0:
            raise ValueError(f"rotation bound must be >= 0, got {self.max_rotation_deg}")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError(f"flip probability must be in [0,1], got {self.flip_prob}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.noise_sigma}")


def augment(clip: Clip, cfg: AugmentConfig, seed: int) -> Clip:
    """One rotation angle and flip decision per clip, then pixel noise.

    Clip-wide transforms keep temporal coherence; output is clamped to
    [0, 1] and fully determined by the seed.
    """
    rng = np.random.default_rng(seed)
    frames = clip.frames
    angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)
    if angle != 0.0:
        frames = _rotate_frames(frames, angle)
    if rng.random() < cfg.flip_prob:
        frames = frames[:, :, ::-1, :]
    if cfg.noise_sigma > 0:
        frames = frames + rng.normal(0.0, cfg.noise_sigma, size=frames.shape)
    frames = np.clip(frames, 0.0, 1.0).astype(np.float32)
    return Clip(frames=frames, parent_id=clip.parent_id, clip_index=clip.clip_index)


# -- full chain -------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    side: int = 224
    length: int = 300
    clip_len: int = 30
    augment_cfg: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.length % self.clip_len != 0:
            raise ValueError(f"length {self.length} not divisible by clip_len {self.clip_len}")


def preprocess_video(video: RawVideo, cfg: PipelineConfig,
                     localizer: FaceLocalizer | None = None) -> list[Clip]:
    """crop/resize -> standardize length -> equalize -> segment -> normalize."""
    loc = localizer if localizer is not None else CenterSquareLocalizer()
    frames = localize_and_resize(video, loc, cfg.side)
    frames = standardize_length(frames, cfg.length)
    frames = equalize_frames(frames)
    blocks = segment_clips(frames, cfg.clip_len)
    return [
        Clip(frames=normalize_pixels(b), parent_id=video.source_id, clip_index=i)
        for i, b in enumerate(blocks)
    ]
