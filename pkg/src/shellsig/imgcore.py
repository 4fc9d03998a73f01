"""Raster helpers and the deterministic pre-processing chain.

Gray images are 2D ``uint8`` arrays with values in [0, 255]; binary images
are 2D ``uint8`` arrays with values in {0, 1} where 1 marks ink. All
functions are pure and return new arrays.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ConstantImage, NoInk, OutOfBounds

SIZE = 512
DEFAULT_HOLE_AREA = 64

CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
SQUARE = np.ones((3, 3), dtype=bool)


class BoundingBox(NamedTuple):
    """Inclusive pixel bounds of the ink region."""

    row_min: int
    row_max: int
    col_min: int
    col_max: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.row_max - self.row_min + 1, self.col_max - self.col_min + 1


def as_gray(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("gray intensities must lie in [0, 255]")
        arr = np.rint(arr).astype(np.uint8)
    return arr


def as_binary(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D mask, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("binary image values must be 0 or 1")
    return arr.astype(np.uint8, copy=False)


# --------------------------------------------------------------------------
# thresholding and geometry


def between_class_variance(hist: np.ndarray) -> np.ndarray:
    """Between-class variance (up to a constant factor) for every threshold.

    Entry ``t`` scores the split {intensity <= t} / {intensity > t}. Splits
    leaving one class empty score 0.
    """
    hist = np.asarray(hist, dtype=np.float64)
    levels = np.arange(hist.size, dtype=np.float64)
    n = hist.sum()
    total = (hist * levels).sum()
    n0 = np.cumsum(hist)
    s0 = np.cumsum(hist * levels)
    n1 = n - n0
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (n * s0 - n0 * total) ** 2 / (n0 * n1)
    score[(n0 == 0) | (n1 == 0)] = 0.0
    return score


def otsu_threshold(img) -> int:
    gray = as_gray(img)
    hist = np.bincount(gray.ravel(), minlength=256)
    if np.count_nonzero(hist) < 2:
        raise ConstantImage(f"image is constant (value {int(gray.flat[0])})")
    # argmax returns the first maximum: ties resolve to the lowest threshold
    return int(np.argmax(between_class_variance(hist)))


def otsu_binarize(img) -> tuple[np.ndarray, int]:
    """Binarize with Otsu's threshold; dark pixels (<= threshold) become ink."""
    gray = as_gray(img)
    t = otsu_threshold(gray)
    return (gray <= t).astype(np.uint8), t


def bounding_box(mask) -> BoundingBox:
    mask = as_binary(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise NoInk("image has no foreground pixels")
    cols = np.flatnonzero(mask.any(axis=0))
    return BoundingBox(int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1]))


def crop(img, box: BoundingBox) -> np.ndarray:
    arr = np.asarray(img)
    h, w = arr.shape[:2]
    r0, r1, c0, c1 = box
    if not (0 <= r0 <= r1 < h and 0 <= c0 <= c1 < w):
        raise OutOfBounds(f"box {tuple(box)} exceeds image of shape {(h, w)}")
    return arr[r0 : r1 + 1, c0 : c1 + 1].copy()


def _source_coords(n_out: int, n_in: int) -> np.ndarray:
    # pixel-centre alignment
    scale = n_in / n_out
    return (np.arange(n_out) + 0.5) * scale - 0.5


def resize(img, out_h: int, out_w: int, binary: bool = False, method: str | None = None) -> np.ndarray:
    """Resize a gray image (bilinear) or a binary mask (nearest neighbour).

    ``method`` ("bilinear" or "nearest") overrides the choice implied by
    ``binary``. Binary inputs always come back in {0, 1}.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be at least 1x1")
    arr = as_binary(img) if binary else np.asarray(img)
    if method is None:
        method = "nearest" if binary else "bilinear"
    if binary and method != "nearest":
        raise ValueError("binary images are resized with nearest neighbour only")
    h, w = arr.shape
    if method == "nearest":
        ri = np.minimum(np.floor((np.arange(out_h) + 0.5) * h / out_h), h - 1).astype(int)
        ci = np.minimum(np.floor((np.arange(out_w) + 0.5) * w / out_w), w - 1).astype(int)
        return arr[np.ix_(ri, ci)].copy()
    if method != "bilinear":
        raise ValueError(f"unknown interpolation {method!r}")
    y = np.clip(_source_coords(out_h, h), 0, h - 1)
    x = np.clip(_source_coords(out_w, w), 0, w - 1)
    y0 = np.floor(y).astype(int)
    x0 = np.floor(x).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (y - y0)[:, None]
    fx = (x - x0)[None, :]
    a = arr.astype(np.float64)
    top = a[np.ix_(y0, x0)] * (1 - fx) + a[np.ix_(y0, x1)] * fx
    bottom = a[np.ix_(y1, x0)] * (1 - fx) + a[np.ix_(y1, x1)] * fx
    out = top * (1 - fy) + bottom * fy
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# --------------------------------------------------------------------------
# morphology


def _shift_stack(mask: np.ndarray, structure: np.ndarray, pad_value: int) -> list[np.ndarray]:
    k = structure.shape[0] // 2
    padded = np.pad(mask, k, constant_values=pad_value)
    h, w = mask.shape
    return [
        padded[dr : dr + h, dc : dc + w]
        for dr, dc in zip(*np.nonzero(structure))
    ]


def erode(mask, structure: np.ndarray = CROSS) -> np.ndarray:
    m = as_binary(mask)
    views = _shift_stack(m, structure, 0)
    return np.logical_and.reduce(views).astype(np.uint8)


def dilate(mask, structure: np.ndarray = CROSS) -> np.ndarray:
    m = as_binary(mask)
    # reflected element; the supported elements are symmetric anyway
    views = _shift_stack(m, structure[::-1, ::-1], 0)
    return np.logical_or.reduce(views).astype(np.uint8)


def morph_open(mask, structure: np.ndarray = CROSS) -> np.ndarray:
    """Erosion followed by dilation; pixels outside the image count as background."""
    return dilate(erode(mask, structure), structure)


def remove_small_holes(mask, max_area: int = DEFAULT_HOLE_AREA) -> np.ndarray:
    """Fill enclosed background components (4-connected) of area <= max_area."""
    m = as_binary(mask)
    labels, n = ndimage.label(m == 0)
    if n == 0:
        return m.copy()
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    fill = areas <= max_area
    fill[0] = False
    fill[border] = False
    out = m.copy()
    out[fill[labels]] = 1
    return out


def _zs_neighbours(p: np.ndarray):
    q = np.pad(p, 1)
    h, w = p.shape
    # P2..P9 clockwise from north
    offs = [(0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0), (0, 0)]
    return [q[r : r + h, c : c + w] for r, c in offs]


def skeletonize(mask) -> np.ndarray:
    """Zhang-Suen thinning."""
    img = as_binary(mask).astype(bool)
    while True:
        changed = False
        for step in (0, 1):
            p2, p3, p4, p5, p6, p7, p8, p9 = nb = _zs_neighbours(img)
            count = np.sum(nb, axis=0)
            seq = nb + [p2]
            transitions = np.sum([(~a) & b for a, b in zip(seq[:-1], seq[1:])], axis=0)
            if step == 0:
                c1 = ~(p2 & p4 & p6)
                c2 = ~(p4 & p6 & p8)
            else:
                c1 = ~(p2 & p4 & p8)
                c2 = ~(p2 & p6 & p8)
            delete = img & (count >= 2) & (count <= 6) & (transitions == 1) & c1 & c2
            if delete.any():
                img = img & ~delete
                changed = True
        if not changed:
            return img.astype(np.uint8)


# --------------------------------------------------------------------------
# pipeline


def preprocess_signature(img, size: int = SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Otsu -> bounding box -> crop original gray -> resize; mask re-thresholded."""
    gray = as_gray(img)
    try:
        mask, _ = otsu_binarize(gray)
    except ConstantImage as exc:
        raise NoInk("blank page: no intensity contrast") from exc
    box = bounding_box(mask)
    resized = resize(crop(gray, box), size, size, method="bilinear")
    resized_mask, _ = otsu_binarize(resized)
    return resized, resized_mask


# --------------------------------------------------------------------------
# file io


def read_gray(path) -> np.ndarray:
    """Read a PNG/PGM (or any Pillow-readable) image as 8-bit grayscale."""
    with Image.open(path) as im:
        return np.array(im.convert("L"), dtype=np.uint8)


def read_mask(path) -> np.ndarray:
    """Inverse of ``write_png(..., binary=True)``."""
    return (read_gray(path) < 128).astype(np.uint8)


def write_png(path, img, binary: bool = False) -> None:
    """Write an 8-bit PNG; binary masks are stored as ink=0 on white=255."""
    arr = np.asarray(img)
    if binary:
        arr = (1 - as_binary(arr)) * 255
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path, format="PNG")
