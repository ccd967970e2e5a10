"""Synthetic photometric-stereo scenes.

Orthographic camera looking down -z, view direction (0, 0, 1). A pixel's
intensity is ``albedo * max(0, n.l) + k_s * max(0, n.h)**p`` (Blinn-Phong),
zeroed by attached and optional cast shadows, plus i.i.d. Gaussian noise,
then clamped to [0, 1].
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import map_coordinates

from ._validation import as_directions, check_upper_hemisphere
from .exceptions import RangeError, ShapeError

SHAPES = ("sphere", "bumps")
VIEW = np.array([0.0, 0.0, 1.0])
SPHERE_RADIUS = 0.95


@dataclass
class SceneSpec:
    """Geometry, material and noise of one synthetic scene.

    ``albedo`` may be a scalar, an RGB triple, an (H, W) map or an (H, W, 3)
    map, all in [0, 1]. ``bumps`` lists ``(cx, cy, amplitude, sigma)`` in
    normalized image coordinates; when ``None`` and ``shape == "bumps"``,
    ``n_bumps`` of them are drawn from ``seed``.
    """

    shape: str = "sphere"
    height: int = 32
    width: int = 32
    albedo: object = 1.0
    specular: float = 0.0
    shininess: float = 20.0
    noise_sigma: float = 0.0
    cast_shadows: bool = False
    seed: int = 0
    n_bumps: int = 4
    bumps: Optional[list] = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise RangeError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.height < 8 or self.width < 8:
            raise RangeError(f"image must be at least 8x8, got {self.height}x{self.width}")
        alb = np.asarray(self.albedo, dtype=float)
        if np.any(alb < 0.0) or np.any(alb > 1.0):
            raise RangeError("albedo must lie in [0, 1]")
        if self.specular < 0.0:
            raise RangeError("specular strength must be >= 0")
        if self.shininess < 1.0:
            raise RangeError("specular exponent must be >= 1")
        if self.noise_sigma < 0.0:
            raise RangeError("noise_sigma must be >= 0")
        if self.n_bumps < 0:
            raise RangeError("n_bumps must be >= 0")

    def albedo_map(self):
        """Albedo broadcast to (H, W, 3)."""
        alb = np.asarray(self.albedo, dtype=float)
        hw = (self.height, self.width)
        if alb.ndim == 0:
            return np.full(hw + (3,), float(alb))
        if alb.shape == (3,):
            return np.broadcast_to(alb, hw + (3,)).copy()
        if alb.shape == hw:
            return np.repeat(alb[..., None], 3, axis=-1)
        if alb.shape == hw + (3,):
            return alb.copy()
        raise ShapeError(f"albedo shape {alb.shape} incompatible with image {hw}")

    def bump_params(self):
        if self.bumps is not None:
            return np.asarray(self.bumps, dtype=float).reshape(-1, 4)
        rng = np.random.default_rng([self.seed, 7919])
        n = self.n_bumps
        return np.column_stack([
            rng.uniform(-0.6, 0.6, n),
            rng.uniform(-0.6, 0.6, n),
            rng.uniform(0.1, 0.35, n),
            rng.uniform(0.15, 0.35, n),
        ])


@dataclass
class RenderedSample:
    """Image stack under several lights plus ground truth.

    ``images`` is (N, H, W, 3), ``lights`` (N, 3), ``normals`` (H, W, 3),
    ``mask`` (H, W) bool. ``bin_ids[j]``, when set, is the light bin that
    image ``j`` stands for.
    """

    images: np.ndarray
    lights: np.ndarray
    normals: np.ndarray
    mask: np.ndarray
    bin_ids: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.lights):
            raise ShapeError(f"{len(self.images)} images but {len(self.lights)} lights")
        if self.images.shape[1:3] != self.mask.shape or self.normals.shape[:2] != self.mask.shape:
            raise ShapeError("images, normals and mask disagree on image size")
        if self.bin_ids is not None and len(self.bin_ids) != len(self.lights):
            raise ShapeError("bin_ids must have one entry per image")

    @property
    def n_lights(self):
        return len(self.lights)


def pixel_coordinates(height, width):
    """(x, y, pixel_size): x grows to the right, y upward, square pixels."""
    s = 2.0 / max(height, width)
    x = (np.arange(width) + 0.5 - width / 2.0) * s
    y = (height / 2.0 - np.arange(height) - 0.5) * s
    xx, yy = np.meshgrid(x, y)
    return xx, yy, s


def make_shape(spec):
    """Ground-truth ``(normals, mask, depth)`` for a scene."""
    xx, yy, _ = pixel_coordinates(spec.height, spec.width)
    if spec.shape == "sphere":
        r2 = (xx**2 + yy**2) / SPHERE_RADIUS**2
        mask = r2 < 1.0
        nz = np.sqrt(np.clip(1.0 - r2, 0.0, None))
        normals = np.stack([xx / SPHERE_RADIUS, yy / SPHERE_RADIUS, nz], axis=-1)
        normals[~mask] = 0.0
        depth = np.where(mask, SPHERE_RADIUS * nz, 0.0)
        return normals, mask, depth

    depth = np.zeros_like(xx)
    dx = np.zeros_like(xx)
    dy = np.zeros_like(xx)
    for cx, cy, amp, sig in spec.bump_params():
        g = amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sig**2))
        depth += g
        dx += -g * (xx - cx) / sig**2
        dy += -g * (yy - cy) / sig**2
    normals = np.stack([-dx, -dy, np.ones_like(xx)], axis=-1)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    mask = np.ones(xx.shape, dtype=bool)
    return normals, mask, depth


def cast_shadow_mask(depth, mask, light, eps=1e-3):
    """True where the ray from the surface toward ``light`` hits the height field.

    Marches in half-pixel steps across the image plane with bilinear depth
    lookups.
    """
    h, w = depth.shape
    _, _, s = pixel_coordinates(h, w)
    lxy = np.hypot(light[0], light[1])
    shadow = np.zeros(depth.shape, dtype=bool)
    if lxy < 1e-9:
        return shadow
    # image-plane step in (col, row) units: y points up, rows go down
    dcol = light[0] / lxy * 0.5
    drow = -light[1] / lxy * 0.5
    rise = light[2] / lxy * 0.5 * s
    rows, cols = np.nonzero(mask)
    base = depth[rows, cols]
    top = depth.max()
    active = np.ones(len(rows), dtype=bool)
    n_steps = int(np.ceil(2.0 * np.hypot(h, w))) + 1
    for t in range(1, n_steps + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        r = rows[idx] + t * drow
        c = cols[idx] + t * dcol
        ray = base[idx] + t * rise
        inside = (r >= 0) & (r <= h - 1) & (c >= 0) & (c <= w - 1) & (ray <= top)
        active[idx[~inside]] = False
        idx, r, c, ray = idx[inside], r[inside], c[inside], ray[inside]
        if idx.size == 0:
            break
        surf = map_coordinates(depth, [r, c], order=1, mode="nearest")
        hit = surf > ray + eps
        shadow[rows[idx[hit]], cols[idx[hit]]] = True
        active[idx[hit]] = False
    return shadow


def render_image(normals, mask, depth, albedo, light, spec, index=0):
    """Render one (H, W, 3) image lit from ``light``.

    ``index`` selects the noise stream, so images can be rendered in any
    order without changing the result.
    """
    light = check_upper_hemisphere(as_directions(light, "light"), "light")[0]
    albedo = np.asarray(albedo, dtype=float)
    if albedo.ndim < 3:
        albedo = SceneSpec(height=normals.shape[0], width=normals.shape[1], albedo=albedo).albedo_map()
    ndotl = normals @ light
    lit = (ndotl > 0.0) & mask
    if spec.cast_shadows:
        lit &= ~cast_shadow_mask(depth, mask, light)
    shading = albedo * np.maximum(ndotl, 0.0)[..., None]
    if spec.specular > 0.0:
        half = light + VIEW
        half /= np.linalg.norm(half)
        ndoth = np.maximum(normals @ half, 0.0)
        shading = shading + (spec.specular * ndoth**spec.shininess)[..., None]
    img = np.where(lit[..., None], shading, 0.0)
    if spec.noise_sigma > 0.0:
        rng = np.random.default_rng([spec.seed, index])
        noise = rng.standard_normal(img.shape) * spec.noise_sigma
        img = img + np.where(mask[..., None], noise, 0.0)
    img = np.clip(img, 0.0, 1.0)
    img[~mask] = 0.0
    return img


def render_dataset(spec, lights, name=""):
    """Render one image per light from the same geometry."""
    dirs = check_upper_hemisphere(as_directions(lights, "lights"), "lights")
    if len(dirs) == 0:
        raise RangeError("at least one light is required")
    normals, mask, depth = make_shape(spec)
    albedo = spec.albedo_map()
    images = np.stack([
        render_image(normals, mask, depth, albedo, l, spec, index=j) for j, l in enumerate(dirs)
    ])
    return RenderedSample(images, dirs.copy(), normals, mask, name=name)
