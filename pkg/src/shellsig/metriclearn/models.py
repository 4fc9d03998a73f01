"""Embedding networks: the PS-Layer shell network, a 1D ResNet-34 analogue
and a small 2D CNN for raw images.

Shell-path inputs are stacked as (N, 72, L): six shell rows followed by the
66 pressure rows, both scaled to [0, 1] (see :func:`shell_input`).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeMismatch
from ..neuralcore import (
    BatchNorm,
    Conv1d,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool,
    L2Normalize,
    MaxPool,
    Parallel,
    ReLU,
    ResidualBlock1d,
    Sequential,
)
from ..neuralcore.layers import out_length

SHELL_CHANNELS = 6
PRESSURE_CHANNELS = 66
INPUT_CHANNELS = SHELL_CHANNELS + PRESSURE_CHANNELS

PS_BRANCH = 96
CONV_SCHEDULE = (256, 384, 512, 512)  # after the 192-channel PS feature map
HEAD = (16384, 8192, 2048)
RESNET_BLOCKS = (3, 4, 6, 3)
RESNET_WIDTHS = (64, 128, 256, 512)
CNN2D_WIDTHS = (32, 64, 128, 256)


@dataclass
class ModelConfig:
    arch: str = "psnet"  # psnet | resnet1d | smallcnn2d
    embedding_dim: int = 512
    width_multiplier: float = 1.0
    length: int = 512  # shell length, or image side for smallcnn2d
    ps_stride: int = 1
    dropout: float = 0.5
    l2_normalize: bool = False
    seed: int = 0

    def __post_init__(self):
        self.arch = self.arch.lower()
        if self.arch not in ("psnet", "resnet1d", "smallcnn2d"):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.embedding_dim < 1 or self.width_multiplier <= 0:
            raise ValueError("embedding_dim and width_multiplier must be positive")

    @property
    def input_kind(self) -> str:
        return "image" if self.arch == "smallcnn2d" else "shells"

    def to_dict(self) -> dict:
        return asdict(self)


def _scale(n: int, w: float) -> int:
    return max(1, int(round(n * w)))


class EmbeddingNet(Sequential):
    """Sequential network that remembers its config and input shape."""

    def __init__(self, cfg: ModelConfig, layers, input_shape):
        super().__init__(*layers)
        self.config = cfg
        self.input_shape = tuple(input_shape)

    def forward(self, x, train=False, rng=None):
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeMismatch(f"{self.config.arch} expects inputs of shape (N, {self.input_shape}), got {x.shape}")
        return super().forward(x, train=train, rng=rng)

    def embed(self, x, batch_size: int = 64) -> np.ndarray:
        """Eval-mode embeddings computed in chunks."""
        x = np.asarray(x, dtype=np.float64)
        out = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.config.embedding_dim))


def build_psnet(cfg: ModelConfig) -> EmbeddingNet:
    rng = np.random.default_rng(cfg.seed)
    w = cfg.width_multiplier
    branch = _scale(PS_BRANCH, w)

    def ps_branch(c_in):
        return Sequential(Conv1d(c_in, branch, 7, cfg.ps_stride, 3, rng=rng), BatchNorm(branch), ReLU())

    layers = [Parallel([ps_branch(SHELL_CHANNELS), ps_branch(PRESSURE_CHANNELS)], [SHELL_CHANNELS, PRESSURE_CHANNELS])]
    length = out_length(cfg.length, 7, cfg.ps_stride, 3)
    c = 2 * branch
    for i, width in enumerate(CONV_SCHEDULE):
        k, pad = (5, 2) if i == 0 else (3, 1)
        c_out = _scale(width, w)
        layers += [Conv1d(c, c_out, k, 2, pad, rng=rng), BatchNorm(c_out), ReLU()]
        length = out_length(length, k, 2, pad)
        c = c_out
    if length < 1:
        raise ShapeMismatch(f"input length {cfg.length} is too short for the conv stack")
    layers += [Dropout(cfg.dropout), Flatten()]
    n = c * length
    for width in HEAD:
        n_out = _scale(width, w)
        layers += [Dense(n, n_out, rng=rng), BatchNorm(n_out), ReLU()]
        n = n_out
    layers.append(Dense(n, cfg.embedding_dim, rng=rng))
    if cfg.l2_normalize:
        layers.append(L2Normalize())
    return EmbeddingNet(cfg, layers, (INPUT_CHANNELS, cfg.length))


def psnet_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Feature shapes at the PSNet checkpoints, computed arithmetically
    (no weights are allocated, so full-width configs are cheap to audit)."""
    w = cfg.width_multiplier
    length = out_length(cfg.length, 7, cfg.ps_stride, 3)
    shapes = {"ps_layer": (2 * _scale(PS_BRANCH, w), length)}
    for i, width in enumerate(CONV_SCHEDULE):
        k, pad = (5, 2) if i == 0 else (3, 1)
        length = out_length(length, k, 2, pad)
        shapes[f"conv{i + 1}"] = (_scale(width, w), length)
    shapes["flatten"] = (_scale(CONV_SCHEDULE[-1], w) * length,)
    for i, width in enumerate(HEAD):
        shapes[f"dense{i + 1}"] = (_scale(width, w),)
    shapes["embedding"] = (cfg.embedding_dim,)
    return shapes


def build_resnet1d(cfg: ModelConfig) -> EmbeddingNet:
    rng = np.random.default_rng(cfg.seed)
    w = cfg.width_multiplier
    c = _scale(RESNET_WIDTHS[0], w)
    layers = [Conv1d(INPUT_CHANNELS, c, 7, 2, 3, rng=rng, bias=False), BatchNorm(c), ReLU(), MaxPool(2)]
    for stage, (blocks, width) in enumerate(zip(RESNET_BLOCKS, RESNET_WIDTHS)):
        c_out = _scale(width, w)
        for b in range(blocks):
            stride = 2 if (b == 0 and stage > 0) else 1
            layers += [ResidualBlock1d(c, c_out, stride, rng=rng), ReLU()]
            c = c_out
    layers += [GlobalAvgPool(), Dense(c, cfg.embedding_dim, rng=rng)]
    if cfg.l2_normalize:
        layers.append(L2Normalize())
    return EmbeddingNet(cfg, layers, (INPUT_CHANNELS, cfg.length))


def build_smallcnn2d(cfg: ModelConfig) -> EmbeddingNet:
    rng = np.random.default_rng(cfg.seed)
    w = cfg.width_multiplier
    stem = _scale(16, w)
    # patchify stem: 512 -> 128 keeps numpy memory in check
    layers = [Conv2d(1, stem, 4, 4, 0, rng=rng), BatchNorm(stem), ReLU()]
    c = stem
    for width in CNN2D_WIDTHS:
        c_out = _scale(width, w)
        layers += [Conv2d(c, c_out, 3, 1, 1, rng=rng), BatchNorm(c_out), ReLU(), MaxPool(2)]
        c = c_out
    layers += [GlobalAvgPool(), Dense(c, cfg.embedding_dim, rng=rng)]
    if cfg.l2_normalize:
        layers.append(L2Normalize())
    return EmbeddingNet(cfg, layers, (1, cfg.length, cfg.length))


def build_model(cfg: ModelConfig | dict) -> EmbeddingNet:
    if isinstance(cfg, dict):
        cfg = ModelConfig(**cfg)
    return {"psnet": build_psnet, "resnet1d": build_resnet1d, "smallcnn2d": build_smallcnn2d}[cfg.arch](cfg)


def shell_input(shells, pressure) -> np.ndarray:
    """Stack a (6, L) shell matrix and (6, 11, L) or (66, L) pressure into (72, L) in [0, 1]."""
    s = np.asarray(shells, dtype=np.float64)
    p = np.asarray(pressure, dtype=np.float64).reshape(PRESSURE_CHANNELS, -1)
    if s.shape != (SHELL_CHANNELS, p.shape[1]):
        raise ShapeMismatch(f"shells {s.shape} and pressure {p.shape} are incompatible")
    return np.concatenate([s / (s.shape[1] - 1), p / 255.0])


def psnet_forward(model: EmbeddingNet, shells, pressure) -> np.ndarray:
    """Eval-mode embedding of one signature's shells and pressure."""
    return model.embed(shell_input(shells, pressure)[None])[0]


def resnet1d_forward(model: EmbeddingNet, stacked) -> np.ndarray:
    return model.embed(np.asarray(stacked)[None])[0]


def smallcnn2d_forward(model: EmbeddingNet, img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return model.embed(img.reshape((1, 1) + img.shape[-2:]))[0]


def count_blocks(model: EmbeddingNet) -> int:
    return sum(isinstance(m, ResidualBlock1d) for m in model.layers)


def trace_shapes(model: EmbeddingNet, batch: int = 2) -> list[tuple[str, tuple]]:
    """Forward a zero batch and record every top-level layer's output shape."""
    x = np.zeros((batch,) + model.input_shape)
    out = []
    for layer in model.layers:
        x = layer.forward(x)
        out.append((type(layer).__name__, x.shape))
    return out
