"""View generation: multi-crop for small raster images and vMF jitter for vectors.

Images are float arrays of shape (H, W, C) with values in [0, 1]. Resizing
is bilinear with corner-aligned sampling: output pixel ``k`` of ``n`` reads
input coordinate ``k * (m - 1) / (n - 1)``, so the four corners always map
onto the four input corners (a single output pixel samples the centre).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ImageTooSmall, InvalidParam
from .sphere import project_to_sphere

_MASK64 = (1 << 64) - 1
ASPECT_RANGE = (3.0 / 4.0, 4.0 / 3.0)


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(run_seed: int, index: int) -> int:
    """Per-worker seed: ``splitmix64(splitmix64(run_seed) ^ index)``."""
    return splitmix64(splitmix64(run_seed & _MASK64) ^ (index & _MASK64))


def rng_for(run_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(run_seed, index))


@dataclass(frozen=True)
class ViewRecipe:
    n_global: int = 2
    n_local: int = 6
    global_scale: tuple[float, float] = (0.40, 1.00)
    local_scale: tuple[float, float] = (0.05, 0.40)
    global_size: int = 32
    local_size: int = 16
    hflip_prob: float = 0.5
    jitter_strength: float = 0.4

    def __post_init__(self):
        if self.n_global < 1 or self.n_local < 0:
            raise InvalidParam("need n_global >= 1 and n_local >= 0")
        for name in ("global_scale", "local_scale"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi <= 1.0):
                raise InvalidParam(f"{name} must satisfy 0 < lo <= hi <= 1, got {(lo, hi)}")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise InvalidParam("hflip_prob must lie in [0, 1]")
        if self.jitter_strength < 0:
            raise InvalidParam("jitter_strength must be >= 0")
        if self.global_size < 1 or self.local_size < 1:
            raise InvalidParam("view sizes must be positive")

    @property
    def n_views(self) -> int:
        return self.n_global + self.n_local

    def view_kinds(self) -> np.ndarray:
        """True for global views, in emission order (globals first)."""
        return np.arange(self.n_views) < self.n_global


@dataclass
class View:
    pixels: np.ndarray
    is_global: bool
    box: tuple[int, int, int, int]  # top, left, height, width in source pixels
    flipped: bool = False


def as_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise InvalidParam(f"expected (H, W) or (H, W, C) with C in {{1, 3}}, got {img.shape}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise InvalidParam("pixel values must lie in [0, 1]")
    return img


def _axis_weights(n_in: int, n_out: int):
    if n_out == 1:
        pos = np.array([(n_in - 1) / 2.0])
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.clip(np.floor(pos).astype(np.int64), 0, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of an (H, W, C) array."""
    img = np.asarray(image, dtype=np.float64)
    y0, y1, fy = _axis_weights(img.shape[0], out_h)
    x0, x1, fx = _axis_weights(img.shape[1], out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bottom = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def sample_crop(height: int, width: int, scale, rng: np.random.Generator):
    """Random crop box (top, left, h, w) with area fraction drawn from ``scale``.

    The aspect ratio is drawn log-uniformly from [3/4, 4/3]; when that makes
    the box overhang the image the long side is clamped to the image and the
    short side regrown to keep the sampled area.
    """
    area = height * width * rng.uniform(scale[0], scale[1])
    log_r = rng.uniform(math.log(ASPECT_RANGE[0]), math.log(ASPECT_RANGE[1]))
    ratio = math.exp(log_r)
    w = int(round(math.sqrt(area * ratio)))
    h = int(round(math.sqrt(area / ratio)))
    if w > width:
        w = width
        h = int(round(area / width))
    if h > height:
        h = height
        w = int(round(area / height))
    h = min(max(h, 2), height)
    w = min(max(w, 2), width)
    top = int(rng.integers(0, height - h + 1))
    left = int(rng.integers(0, width - w + 1))
    return top, left, h, w


def _jitter(pixels: np.ndarray, strength: float, rng: np.random.Generator) -> np.ndarray:
    brightness = 1.0 + rng.uniform(-strength, strength)
    contrast = 1.0 + rng.uniform(-strength, strength)
    out = pixels * brightness
    mean = out.mean()
    return np.clip((out - mean) * contrast + mean, 0.0, 1.0)


def multicrop(image, recipe: ViewRecipe, rng: np.random.Generator) -> list[View]:
    """``n_global`` large crops then ``n_local`` small crops, each resized, flipped and jittered."""
    img = as_image(image)
    height, width = img.shape[:2]
    smallest = min(recipe.global_scale[0], recipe.local_scale[0]) * height * width
    if height < 2 or width < 2 or smallest < 4.0:
        raise ImageTooSmall(f"{height}x{width} image cannot hold a 2x2 crop at the smallest scale")
    views = []
    for is_global in recipe.view_kinds():
        scale = recipe.global_scale if is_global else recipe.local_scale
        size = recipe.global_size if is_global else recipe.local_size
        top, left, h, w = sample_crop(height, width, scale, rng)
        pixels = bilinear_resize(img[top : top + h, left : left + w], size, size)
        flipped = bool(rng.random() < recipe.hflip_prob)
        if flipped:
            pixels = pixels[:, ::-1]
        if recipe.jitter_strength > 0:
            pixels = _jitter(pixels, recipe.jitter_strength, rng)
        views.append(View(np.ascontiguousarray(pixels), bool(is_global), (top, left, h, w), flipped))
    return views


# --- vMF sampling -------------------------------------------------------------


def _sample_vmf_cosines(kappa: float, dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    # Wood (1994) rejection sampler for t = mu . x
    m = dim - 1
    b = m / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa + m * m))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * math.log(1.0 - x0 * x0)
    out = np.empty(n)
    filled = 0
    while filled < n:
        k = max(2 * (n - filled), 16)
        z = rng.beta(0.5 * m, 0.5 * m, size=k)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=k)
        ok = kappa * w + m * np.log(1.0 - x0 * w) - c >= np.log(u)
        got = w[ok][: n - filled]
        out[filled : filled + len(got)] = got
        filled += len(got)
    return out


def sample_vmf(mu, kappa: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws from vMF(mu, kappa) on the sphere of ``mu``'s dimension."""
    mu = project_to_sphere(mu)
    if kappa <= 0:
        raise InvalidParam(f"kappa must be > 0, got {kappa}")
    dim = mu.shape[0]
    t = _sample_vmf_cosines(kappa, dim, n, rng)
    v = rng.standard_normal((n, dim))
    v -= np.outer(v @ mu, mu)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    x = t[:, None] * mu[None, :] + np.sqrt(np.clip(1.0 - t * t, 0.0, None))[:, None] * v
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def synthetic_views(center, n_views: int, noise_kappa: float, rng: np.random.Generator) -> np.ndarray:
    """Positive views of one vector: vMF draws around ``center``."""
    return sample_vmf(center, noise_kappa, n_views, rng)
