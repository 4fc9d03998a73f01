"""Shell extraction: superior/inferior ribbons, residual, 1D mapping and
auxiliary pressure/thickness features, plus CSV export.

Every function here is width/height generic; the pipeline fixes images to
512x512 upstream. Shell vectors are stored in flipped coordinates (row 0 is
the bottom of the image), as produced by :func:`img_to_shell_func`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imgcore
from .errors import DimensionMismatch, NoInk

SHELL_NAMES = ("shellS1", "shellI1", "shellS2", "shellI2", "resS", "resI")
PRESSURE_OFFSETS = 11
PRESSURE_HALF = 5
PAD_GRAY = 255


@dataclass
class ShellSet:
    """Six shell vectors plus per-shell validity masks."""

    shells: np.ndarray  # (6, W) int, flipped row indices, 0 where invalid
    valid: np.ndarray  # (6, W) bool

    def __post_init__(self):
        self.shells = np.asarray(self.shells, dtype=np.int64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.shells.shape != self.valid.shape or self.shells.shape[0] != 6:
            raise DimensionMismatch("ShellSet needs matching (6, W) shells and validity arrays")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.shells[SHELL_NAMES.index(name)]

    @property
    def width(self) -> int:
        return self.shells.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ShellSet):
            return NotImplemented
        return np.array_equal(self.shells, other.shells) and np.array_equal(self.valid, other.valid)


@dataclass
class PruneConfig:
    """Morphological clean-up applied before shell extraction."""

    opening: str = "cross"  # "cross", "square" or "none"
    hole_area: int = imgcore.DEFAULT_HOLE_AREA

    def structure(self):
        return {"cross": imgcore.CROSS, "square": imgcore.SQUARE, "none": None}[self.opening]


def pruning(img, cfg: PruneConfig | None = None, with_skeleton: bool = True):
    """Open, fill small holes, then skeletonize. Returns ``(skel, mask)``."""
    cfg = cfg or PruneConfig()
    mask = imgcore.as_binary(img)
    structure = cfg.structure()
    if structure is not None:
        mask = imgcore.morph_open(mask, structure)
    if cfg.hole_area > 0:
        mask = imgcore.remove_small_holes(mask, cfg.hole_area)
    skel = imgcore.skeletonize(mask) if with_skeleton else None
    return skel, mask


def _first_run_mask(img: np.ndarray) -> np.ndarray:
    # contiguous run of ones starting at the first 1 of each column, top-down
    seen = np.maximum.accumulate(img, axis=0).astype(bool)
    broken = np.maximum.accumulate(seen & (img == 0), axis=0)
    return (seen & ~broken).astype(np.uint8)


def shell_s_binary(img) -> np.ndarray:
    """Keep, per column, the run of ink that starts at the topmost ink pixel."""
    return _first_run_mask(imgcore.as_binary(img))


def shell_i_binary(img) -> np.ndarray:
    """Keep, per column, the run of ink that ends at the bottommost ink pixel."""
    m = imgcore.as_binary(img)
    return _first_run_mask(m[::-1])[::-1].copy()


def residual_mask(img, sup, inf) -> np.ndarray:
    m, s, i = (imgcore.as_binary(a) for a in (img, sup, inf))
    if not (m.shape == s.shape == i.shape):
        raise DimensionMismatch(f"shapes differ: {m.shape}, {s.shape}, {i.shape}")
    return (m & ~(s | i) & 1).astype(np.uint8)


def img_to_shell_func(img) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map a ribbon image to ``(shell_s, shell_i, valid)`` in flipped rows.

    After a vertical flip, ``shell_i`` is the smallest ink row index and
    ``shell_s`` the largest; empty columns hold 0 and are marked invalid.
    """
    m = imgcore.as_binary(img)[::-1]
    h = m.shape[0]
    valid = m.any(axis=0)
    top = np.argmax(m, axis=0)
    bottom = h - 1 - np.argmax(m[::-1], axis=0)
    shell_i = np.where(valid, top, 0).astype(np.int64)
    shell_s = np.where(valid, bottom, 0).astype(np.int64)
    return shell_s, shell_i, valid


@dataclass
class Ribbons:
    mask: np.ndarray
    skeleton: np.ndarray | None
    sup: np.ndarray
    inf: np.ndarray
    res: np.ndarray


def extract_ribbons(mask, prune: PruneConfig | None = None, with_skeleton: bool = False) -> Ribbons:
    skel, cleaned = pruning(mask, prune, with_skeleton=with_skeleton)
    if not cleaned.any():
        raise NoInk("mask is empty after pruning")
    sup = shell_s_binary(cleaned)
    inf = shell_i_binary(cleaned)
    res = residual_mask(cleaned, sup, inf)
    return Ribbons(cleaned, skel, sup, inf, res)


def shells_from_ribbons(r: Ribbons) -> ShellSet:
    rows, valid = [], []
    for ribbon in (r.sup, r.inf, r.res):
        s, i, v = img_to_shell_func(ribbon)
        rows += [s, i]
        valid += [v, v]
    return ShellSet(np.stack(rows), np.stack(valid))


def extract_shells(mask, prune: PruneConfig | None = None) -> ShellSet:
    """Prune the mask, split ribbons and map each to its pair of 1D shells."""
    return shells_from_ribbons(extract_ribbons(mask, prune))


def pressure_map(gray, shells: ShellSet) -> np.ndarray:
    """Sample an 11-row gray window centred on every shell point.

    Returns a ``(6, 11, W)`` uint8 array. Rows outside the image and invalid
    columns read as white (255).
    """
    g = imgcore.as_gray(gray)
    h, w = g.shape
    if w != shells.width:
        raise DimensionMismatch(f"gray width {w} != shell width {shells.width}")
    padded = np.pad(g, ((PRESSURE_HALF, PRESSURE_HALF), (0, 0)), constant_values=PAD_GRAY)
    y = (h - 1) - shells.shells  # back to raster rows
    offsets = np.arange(PRESSURE_OFFSETS)
    rows = y[:, None, :] + offsets[None, :, None]  # index into padded == y + i - 5
    cols = np.broadcast_to(np.arange(w), rows.shape)
    rows = np.clip(rows, 0, padded.shape[0] - 1)
    values = padded[rows, cols]
    values[~np.broadcast_to(shells.valid[:, None, :], values.shape)] = PAD_GRAY
    return values.astype(np.uint8)


def _run_length_from_top(m: np.ndarray) -> np.ndarray:
    return _first_run_mask(m).sum(axis=0).astype(np.int64)


def thickness(mask) -> tuple[np.ndarray, np.ndarray]:
    """Ink run length down from the topmost and up from the bottommost pixel."""
    m = imgcore.as_binary(mask)
    return _run_length_from_top(m), _run_length_from_top(m[::-1])


# --------------------------------------------------------------------------
# export


def _write_rows(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows([[int(v) for v in row] for row in rows])


def _read_rows(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[int(v) for v in row] for row in csv.reader(fh)], dtype=np.int64)


def export_shell_record(shells: ShellSet, pressure, thick, path) -> Path:
    """Write shells.csv, valid.csv, pressure.csv and thickness.csv into ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    pressure = np.asarray(pressure)
    if pressure.shape != (6, PRESSURE_OFFSETS, shells.width):
        raise DimensionMismatch(f"pressure shape {pressure.shape} is not (6, 11, {shells.width})")
    _write_rows(out / "shells.csv", np.where(shells.valid, shells.shells, 0))
    _write_rows(out / "valid.csv", shells.valid.astype(int))
    _write_rows(out / "pressure.csv", pressure.reshape(6 * PRESSURE_OFFSETS, -1))
    _write_rows(out / "thickness.csv", np.stack(thick))
    return out


def load_shell_record(path) -> tuple[ShellSet, np.ndarray, tuple[np.ndarray, np.ndarray]]:
    src = Path(path)
    shells = _read_rows(src / "shells.csv")
    valid_path = src / "valid.csv"
    valid = _read_rows(valid_path).astype(bool) if valid_path.exists() else np.ones_like(shells, bool)
    pressure = _read_rows(src / "pressure.csv").reshape(6, PRESSURE_OFFSETS, -1).astype(np.uint8)
    sup, inf = _read_rows(src / "thickness.csv")
    return ShellSet(shells, valid), pressure, (sup, inf)


def signature_features(gray, mask, prune: PruneConfig | None = None):
    """Full per-signature feature computation: ``(ShellSet, pressure, thickness, ribbons)``."""
    ribbons = extract_ribbons(mask, prune, with_skeleton=True)
    shells = shells_from_ribbons(ribbons)
    return shells, pressure_map(gray, shells), thickness(ribbons.mask), ribbons
