"""Per-signature network inputs, computed once and cached.

A store maps a record key (the signature's path) to the array fed to the
network. Shell stores produce (72, L) shell+pressure stacks; image stores
produce (1, S, S) normalized images and may augment them during training.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import imgcore, shellpipe
from ..augment import AugmentConfig, augment_eval, augment_train
from .models import INPUT_CHANNELS, shell_input


class ArrayStore(dict):
    """Plain in-memory store, handy for precomputed or toy inputs."""

    def input_shape(self):
        first = next(iter(self.values()))
        return tuple(np.shape(first))


class ShellStore:
    """Shell+pressure inputs for signature images.

    If ``feature_dir`` is given, records exported by the ``shells`` stage are
    read from ``feature_dir / <path relative to root without suffix>``;
    otherwise features are computed from the image on first access.
    """

    def __init__(self, root=None, feature_dir=None, prune: shellpipe.PruneConfig | None = None, size: int = imgcore.SIZE):
        self.root = Path(root) if root is not None else None
        self.feature_dir = Path(feature_dir) if feature_dir is not None else None
        self.prune = prune
        self.size = size
        self._cache: dict[str, np.ndarray] = {}

    def _feature_path(self, key: str) -> Path | None:
        if self.feature_dir is None:
            return None
        rel = Path(key)
        if self.root is not None and rel.is_absolute():
            rel = rel.relative_to(self.root)
        return self.feature_dir / rel.with_suffix("")

    def _compute(self, key: str) -> np.ndarray:
        fpath = self._feature_path(key)
        if fpath is not None and (fpath / "shells.csv").exists():
            shells, pressure, _ = shellpipe.load_shell_record(fpath)
        else:
            path = Path(key)
            if self.root is not None and not path.is_absolute():
                path = self.root / path
            gray, mask = imgcore.preprocess_signature(imgcore.read_gray(path), self.size)
            shells, pressure, _, _ = shellpipe.signature_features(gray, mask, self.prune)
        return shell_input(np.where(shells.valid, shells.shells, 0), pressure)

    def __getitem__(self, key: str) -> np.ndarray:
        if key not in self._cache:
            self._cache[key] = self._compute(key)
        return self._cache[key]

    def input_shape(self):
        return (INPUT_CHANNELS, self.size)


class ImageStore:
    """Preprocessed grayscale images for the raw-image path.

    ``augment(x, rng)`` is applied by the training loop to training batches
    only; lookups return the deterministic evaluation view.
    """

    def __init__(self, root=None, size: int = imgcore.SIZE, augment_cfg: AugmentConfig | None = None):
        self.root = Path(root) if root is not None else None
        self.size = size
        self.augment_cfg = augment_cfg
        self._gray: dict[str, np.ndarray] = {}

    def gray(self, key: str) -> np.ndarray:
        if key not in self._gray:
            path = Path(key)
            if self.root is not None and not path.is_absolute():
                path = self.root / path
            self._gray[key], _ = imgcore.preprocess_signature(imgcore.read_gray(path), self.size)
        return self._gray[key]

    def __getitem__(self, key: str) -> np.ndarray:
        return augment_eval(self.gray(key), self.augment_cfg)[None]

    def augment(self, key: str, rng: np.random.Generator) -> np.ndarray:
        if self.augment_cfg is None:
            return self[key]
        return augment_train(self.gray(key), self.augment_cfg, rng)[None]

    def input_shape(self):
        return (1, self.size, self.size)


class RoutingStore:
    """Dispatch each key to the first store whose ``root`` contains it.

    Used when a manifest mixes datasets that live under different roots.
    """

    def __init__(self, stores):
        self.stores = list(stores)

    def _pick(self, key: str):
        path = Path(key)
        for s in self.stores:
            if s.root is None or path.is_relative_to(s.root):
                return s
        raise KeyError(f"no feature store covers {key}")

    def __getitem__(self, key: str) -> np.ndarray:
        return self._pick(key)[key]

    def input_shape(self):
        return self.stores[0].input_shape()

    def augment(self, key: str, rng: np.random.Generator) -> np.ndarray:
        store = self._pick(key)
        return store.augment(key, rng) if hasattr(store, "augment") else store[key]
