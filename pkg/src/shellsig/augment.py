"""Training-time image augmentations for the raw-image path.

Every random decision is drawn from an explicit ``numpy.random.Generator``
in a fixed order, so a given generator state reproduces the output
bit-for-bit. Images are handled as float64 on the 0..255 scale until the
final normalization.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .imgcore import SIZE, resize

STD_FLOOR = 1e-6
BACKGROUND = 255.0


@dataclass
class AugmentConfig:
    flip_p: float = 0.5
    affine_p: float = 0.5
    translate_max: float = 0.05  # fraction of the image side
    shear_deg: float = 2.0  # shear drawn from [-shear_deg, shear_deg]
    scale_range: tuple[float, float] = (0.7, 1.3)
    rotate_deg: float = 5.0  # stand-in for the unspecified "elliptical" rotation
    sharpen_p: float = 0.5
    sharpen_strength: float = 1.0
    brightness_contrast_p: float = 0.5
    brightness_contrast_limit: float = 0.01
    normalize: bool = True
    size: int = SIZE

    def __post_init__(self):
        self.scale_range = tuple(float(v) for v in self.scale_range)
        for name in ("flip_p", "affine_p", "sharpen_p", "brightness_contrast_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError(f"scale_range must be positive and ordered, got {self.scale_range}")

    @classmethod
    def disabled(cls, **kw) -> "AugmentConfig":
        """Config with every random transform switched off."""
        return cls(flip_p=0.0, affine_p=0.0, sharpen_p=0.0, brightness_contrast_p=0.0, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def _guard(img, size: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (size, size):
        img = resize(img, size, size, method="bilinear").astype(np.float64)
    return img


def hflip(img) -> np.ndarray:
    return np.asarray(img)[:, ::-1].copy()


def affine_matrix(angle_deg, shear_deg, scale, shift, size) -> tuple[np.ndarray, np.ndarray]:
    """Output->input mapping for a rotation/shear/scale about the image centre plus a shift.

    Returned as ``(matrix, offset)`` in the convention of
    ``scipy.ndimage.affine_transform`` (row, col coordinates).
    """
    a, s = np.deg2rad(angle_deg), np.deg2rad(shear_deg)
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    shear = np.array([[1.0, 0.0], [np.tan(s), 1.0]])
    forward = scale * rot @ shear
    inv = np.linalg.inv(forward)
    c = np.array([(size - 1) / 2.0, (size - 1) / 2.0])
    offset = c - inv @ (c + np.asarray(shift, dtype=np.float64))
    return inv, offset


def apply_affine(img, angle_deg=0.0, shear_deg=0.0, scale=1.0, shift=(0.0, 0.0)) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    m, off = affine_matrix(angle_deg, shear_deg, scale, shift, img.shape[0])
    return ndimage.affine_transform(img, m, offset=off, order=1, mode="constant", cval=BACKGROUND)


def sharpen(img, strength: float = 1.0) -> np.ndarray:
    """3x3 unsharp mask: img + strength * (img - box_blur(img))."""
    img = np.asarray(img, dtype=np.float64)
    blur = ndimage.uniform_filter(img, size=3, mode="nearest")
    return np.clip(img + strength * (img - blur), 0.0, 255.0)


def brightness_contrast(img, alpha: float, beta: float) -> np.ndarray:
    """alpha scales contrast, beta shifts brightness as a fraction of full scale."""
    return np.clip(alpha * np.asarray(img, dtype=np.float64) + beta * 255.0, 0.0, 255.0)


def normalize(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return (img - img.mean()) / max(img.std(), STD_FLOOR)


def _finish(img, cfg: AugmentConfig) -> np.ndarray:
    return normalize(img) if cfg.normalize else img / 255.0


def augment_train(img, cfg: AugmentConfig | None, rng: np.random.Generator) -> np.ndarray:
    cfg = cfg or AugmentConfig()
    x = _guard(img, cfg.size)
    # draw everything up front so the stream position never depends on branches taken
    u = rng.random(4)
    lim = cfg.translate_max * cfg.size
    shift = rng.uniform(-lim, lim, size=2)
    shear = rng.uniform(-cfg.shear_deg, cfg.shear_deg)
    scale = rng.uniform(*cfg.scale_range)
    angle = rng.uniform(-cfg.rotate_deg, cfg.rotate_deg)
    lim_bc = cfg.brightness_contrast_limit
    alpha = 1.0 + rng.uniform(-lim_bc, lim_bc)
    beta = rng.uniform(-lim_bc, lim_bc)

    if u[0] < cfg.flip_p:
        x = hflip(x)
    if u[1] < cfg.affine_p:
        x = apply_affine(x, angle, shear, scale, shift)
    if u[2] < cfg.sharpen_p:
        x = sharpen(x, cfg.sharpen_strength)
    if u[3] < cfg.brightness_contrast_p:
        x = brightness_contrast(x, alpha, beta)
    return _finish(x, cfg)


def augment_eval(img, cfg: AugmentConfig | None = None) -> np.ndarray:
    cfg = cfg or AugmentConfig()
    return _finish(_guard(img, cfg.size), cfg)
