"""Synthetic clips: random-affine warps of a static image, and procedural moving shapes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, InputError

DEFAULT_SIZE = (64, 112)


@dataclass
class Clip:
    frames: list[np.ndarray]  # (3, H, W) in [0, 1]
    masks: list[np.ndarray]  # (H, W) int labels, 0 = background
    name: str = ""
    params: list = field(default_factory=list)

    def __len__(self):
        return len(self.frames)

    @property
    def n_objects(self) -> int:
        return int(self.masks[0].max())


def _check_size(h: int, w: int) -> None:
    if h % 16 or w % 16:
        raise ConfigurationError(f"clip extents {(h, w)} must be divisible by 16")


# -- affine clips --------------------------------------------------------------


@dataclass(frozen=True)
class AffineRanges:
    """Per-frame increment ranges (lo, hi); translation is a fraction of the extent."""

    rotation: tuple[float, float] = (-15.0, 15.0)
    scale: tuple[float, float] = (0.9, 1.1)
    translate_x: tuple[float, float] = (-0.1, 0.1)
    translate_y: tuple[float, float] = (-0.1, 0.1)
    shear: tuple[float, float] = (-5.0, 5.0)

    @classmethod
    def identity(cls) -> "AffineRanges":
        return cls((0.0, 0.0), (1.0, 1.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0))


@dataclass(frozen=True)
class AffineParams:
    rotation: float = 0.0
    scale: float = 1.0
    translate: tuple[float, float] = (0.0, 0.0)  # (x, y) fraction of extent
    shear: float = 0.0


def _increment(p: AffineParams) -> np.ndarray:
    """2x2 linear part in (row, col) coordinates."""
    th, sh = math.radians(p.rotation), math.radians(p.shear)
    rot = np.array([[math.cos(th), math.sin(th)], [-math.sin(th), math.cos(th)]])
    shear = np.array([[1.0, 0.0], [math.tan(sh), 1.0]])
    return p.scale * rot @ shear


def gen_affine_clip(image, mask, length: int, ranges: AffineRanges = AffineRanges(), seed: int = 0, name: str = "") -> Clip:
    """Warp a static image/mask pair by a cumulative random affine per frame.

    Frame 1 is the input itself. The image is resampled bilinearly, the label
    map by nearest neighbour.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask)
    if image.ndim != 3 or mask.shape != image.shape[1:]:
        raise InputError(f"mask {mask.shape} does not match image {image.shape}")
    h, w = mask.shape
    _check_size(h, w)
    rng = np.random.default_rng(seed)
    centre = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    lin, shift = np.eye(2), np.zeros(2)
    frames, masks, params = [image.copy()], [mask.astype(np.int64)], [AffineParams()]
    for _ in range(1, length):
        p = AffineParams(
            rotation=rng.uniform(*ranges.rotation),
            scale=rng.uniform(*ranges.scale),
            translate=(rng.uniform(*ranges.translate_x), rng.uniform(*ranges.translate_y)),
            shear=rng.uniform(*ranges.shear),
        )
        m = _increment(p)
        lin = m @ lin
        shift = m @ shift + np.array([p.translate[1] * h, p.translate[0] * w])
        inv = np.linalg.inv(lin)
        offset = centre - inv @ (centre + shift)
        frames.append(
            np.stack([ndimage.affine_transform(c, inv, offset, order=1, mode="nearest") for c in image])
        )
        masks.append(ndimage.affine_transform(mask, inv, offset, order=0, mode="constant", cval=0).astype(np.int64))
        params.append(p)
    return Clip(frames, masks, name, params)


# -- procedural shapes ---------------------------------------------------------


@dataclass
class ShapeSpec:
    kind: str  # "ellipse" or "polygon"
    centre: tuple[float, float]  # (y, x)
    velocity: tuple[float, float]  # px / frame
    radii: tuple[float, float]  # (ry, rx)
    angle: float = 0.0
    spin: float = 0.0  # rad / frame
    deform: float = 0.0  # relative radius oscillation
    phase: float = 0.0
    color: tuple[float, float, float] = (1.0, 0.0, 0.0)
    stripe: float = 0.15  # texture contrast
    vertices: tuple[float, ...] = ()  # polygon radial offsets

    def mask(self, k: int, h: int, w: int) -> np.ndarray:
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        cy = self.centre[0] + k * self.velocity[0]
        cx = self.centre[1] + k * self.velocity[1]
        ang = self.angle + k * self.spin
        s = 1.0 + self.deform * math.sin(0.7 * k + self.phase)
        ry, rx = self.radii[0] * s, self.radii[1] * s
        dy, dx = yy - cy, xx - cx
        u = dx * math.cos(ang) + dy * math.sin(ang)
        v = -dx * math.sin(ang) + dy * math.cos(ang)
        if self.kind == "ellipse":
            return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
        theta = np.arctan2(v / ry, u / rx) % (2 * math.pi)
        n = len(self.vertices)
        pos = theta / (2 * math.pi) * n
        i0 = np.floor(pos).astype(int) % n
        frac = pos - np.floor(pos)
        offs = np.asarray(self.vertices)
        radius = 1.0 + (1.0 - frac) * offs[i0] + frac * offs[(i0 + 1) % n]
        return np.hypot(u / rx, v / ry) <= radius

    def texture(self, k: int, h: int, w: int) -> np.ndarray:
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        cy = self.centre[0] + k * self.velocity[0]
        cx = self.centre[1] + k * self.velocity[1]
        ang = self.angle + k * self.spin
        u = (xx - cx) * math.cos(ang) + (yy - cy) * math.sin(ang)
        pattern = self.stripe * np.sin(u * 0.9)
        return np.clip(np.asarray(self.color)[:, None, None] + pattern[None], 0.0, 1.0)


def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    base = rng.uniform(0.25, 0.75, size=3)
    img = np.repeat(base[:, None, None], h, axis=1).repeat(w, axis=2)
    for _ in range(4):
        fy, fx = rng.uniform(-0.35, 0.35, size=2)
        amp = rng.uniform(0.03, 0.12, size=3)
        ph = rng.uniform(0, 2 * math.pi)
        img = img + amp[:, None, None] * np.sin(fy * yy + fx * xx + ph)[None]
    return np.clip(img, 0.0, 1.0)


@dataclass(frozen=True)
class ShapeMotion:
    max_speed: float = 2.5
    max_spin: float = 0.08
    max_deform: float = 0.12
    radius: tuple[float, float] = (7.0, 15.0)
    noise: float = 0.02


def sample_shapes(n_objects: int, size, rng: np.random.Generator, motion: ShapeMotion = ShapeMotion()) -> list[ShapeSpec]:
    h, w = size
    specs = []
    for _ in range(n_objects):
        ry, rx = rng.uniform(*motion.radius, size=2)
        margin = max(ry, rx) * 0.6
        centre = (rng.uniform(margin, h - margin), rng.uniform(margin, w - margin))
        speed = rng.uniform(0, motion.max_speed)
        heading = rng.uniform(0, 2 * math.pi)
        kind = "ellipse" if rng.random() < 0.5 else "polygon"
        n_vert = int(rng.integers(5, 9))
        specs.append(
            ShapeSpec(
                kind=kind,
                centre=centre,
                velocity=(speed * math.sin(heading), speed * math.cos(heading)),
                radii=(ry, rx),
                angle=rng.uniform(0, math.pi),
                spin=rng.uniform(-motion.max_spin, motion.max_spin),
                deform=rng.uniform(0, motion.max_deform),
                phase=rng.uniform(0, 2 * math.pi),
                color=tuple(rng.uniform(0.0, 1.0, size=3)),
                stripe=rng.uniform(0.05, 0.2),
                vertices=tuple(rng.uniform(-0.3, 0.2, size=n_vert)),
            )
        )
    return specs


def render_shapes(specs: list[ShapeSpec], length: int, size, background: np.ndarray, rng: np.random.Generator | None = None, noise: float = 0.0, name: str = "") -> Clip:
    """Draw ``specs`` in order; later shapes occlude earlier ones (label = index + 1)."""
    h, w = size
    frames, masks = [], []
    for k in range(length):
        img = background.copy()
        lab = np.zeros((h, w), dtype=np.int64)
        for i, spec in enumerate(specs):
            m = spec.mask(k, h, w)
            img = np.where(m[None], spec.texture(k, h, w), img)
            lab[m] = i + 1
        if noise and rng is not None:
            img = np.clip(img + rng.normal(0.0, noise, img.shape), 0.0, 1.0)
        frames.append(img)
        masks.append(lab)
    return Clip(frames, masks, name, list(specs))


def gen_shape_clip(length: int, n_objects: int = 1, size=DEFAULT_SIZE, seed: int = 0, motion: ShapeMotion = ShapeMotion(), name: str = "") -> Clip:
    if n_objects < 1:
        raise ConfigurationError("n_objects must be >= 1")
    h, w = size
    _check_size(h, w)
    rng = np.random.default_rng(seed)
    background = _background(rng, h, w)
    for _ in range(100):
        specs = sample_shapes(n_objects, size, rng, motion)
        first = render_shapes(specs, 1, size, background).masks[0]
        if all((first == i + 1).sum() >= 12 for i in range(n_objects)):
            break
    else:
        raise ConfigurationError("could not place every object visibly in the first frame")
    return render_shapes(specs, length, size, background, rng, motion.noise, name)
