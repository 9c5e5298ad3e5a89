"""Inference-time input transformations and the confidence gate around them."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import argmax, clamp
from .jpeg import jpeg_transform
from .model import MlpClassifier, TemperatureScaler, softmax

KINDS = ("NONE", "RND", "RCR", "JPEG")
RANDOMIZED = ("RND", "RCR")


@dataclass(frozen=True)
class DefenseParam:
    """Defense kind with its strength ``nu``.

    RND: noise standard deviation; RCR: crop side in pixels; JPEG: quality 1-100.
    """

    kind: str = "NONE"
    nu: float = 0.0

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"unknown defense {self.kind!r}; expected one of {KINDS}")
        if kind == "RND" and self.nu < 0:
            raise ValueError("RND noise level must be non-negative")
        if kind == "RCR" and (self.nu < 1 or int(self.nu) != self.nu):
            raise ValueError("RCR crop side must be a positive integer")
        if kind == "JPEG" and not (1 <= self.nu <= 100 and int(self.nu) == self.nu):
            raise ValueError("JPEG quality must be an integer in [1, 100]")

    @property
    def randomized(self) -> bool:
        return self.kind in RANDOMIZED


@dataclass(frozen=True)
class GateConfig:
    tau: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")


def rnd_transform(x: np.ndarray, nu: float, rng: np.random.Generator) -> np.ndarray:
    """Additive centred Gaussian noise of scale ``nu``, clamped to ``[0, 1]``."""
    if nu < 0:
        raise ValueError("noise level must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if nu == 0:
        return x.copy()
    return clamp(x + nu * rng.standard_normal(x.shape))


@lru_cache(maxsize=256)
def _resize_axis(n_in: int, n_out: int):
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    i0 = np.minimum(np.floor(pos).astype(np.int64), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, pos - i0


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of a ``(C, h, w)`` array.

    Output pixel ``i`` samples source position ``i * (h - 1) / (out_h - 1)``.
    """
    c, h, w = img.shape
    y0, y1, fy = _resize_axis(h, out_h)
    x0, x1, fx = _resize_axis(w, out_w)
    rows0, rows1 = img[:, y0], img[:, y1]
    top = rows0[:, :, x0] * (1 - fx) + rows0[:, :, x1] * fx
    bot = rows1[:, :, x0] * (1 - fx) + rows1[:, :, x1] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def crop_resize(x: np.ndarray, side: int, top: int, left: int) -> np.ndarray:
    _, h, w = x.shape
    return clamp(bilinear_resize(x[:, top:top + side, left:left + side], h, w))


def rcr_transform(x: np.ndarray, nu: int, rng: np.random.Generator) -> np.ndarray:
    """Random ``nu x nu`` crop resized back to the full (square) image."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"RCR needs a (C, H, W) image, got shape {x.shape}")
    _, h, w = x.shape
    if h != w:
        raise ValueError("RCR assumes square images")
    side = int(nu)
    if not 1 <= side <= h:
        raise ValueError(f"crop side {side} outside [1, {h}]")
    top, left = rng.integers(0, h - side + 1, size=2)
    return crop_resize(x, side, int(top), int(left))


def apply_defense(x: np.ndarray, param: DefenseParam, rng: np.random.Generator | None) -> np.ndarray:
    if param.kind == "NONE":
        return np.asarray(x, dtype=np.float64)
    if param.kind == "RND":
        return rnd_transform(x, param.nu, rng)
    if param.kind == "RCR":
        return rcr_transform(x, int(param.nu), rng)
    return jpeg_transform(x, int(param.nu))


class GatedClassifier:
    """Classifier that runs the defense only on low-confidence inputs.

    The undefended, temperature-scaled confidence decides the branch: below
    ``tau`` the defended prediction is returned, otherwise the plain one. With
    ``tau == 1`` every input is defended, including those at confidence exactly 1.
    """

    def __init__(self, model: MlpClassifier, scaler: TemperatureScaler = TemperatureScaler(),
                 defense: DefenseParam = DefenseParam(), gate: GateConfig = GateConfig(0.0),
                 mode: str = "decision"):
        if mode not in ("decision", "score"):
            raise ValueError(f"unknown mode {mode!r}")
        self.model = model
        self.scaler = scaler
        self.defense = defense
        self.gate = gate
        self.mode = mode

    @property
    def randomized(self) -> bool:
        return self.defense.randomized and self.gate.tau > 0

    def undefended(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.model.logits(x), self.scaler)

    def defended(self, x: np.ndarray, rng: np.random.Generator | None) -> np.ndarray:
        return softmax(self.model.logits(apply_defense(x, self.defense, rng)), self.scaler)

    def forward_with_branch(self, x: np.ndarray,
                            rng: np.random.Generator | None = None) -> tuple[np.ndarray, bool]:
        """Probabilities plus whether the defended branch was taken."""
        p = self.undefended(x)
        if p.max() < self.gate.tau or self.gate.tau >= 1.0:
            return self.defended(x, rng), True
        return p, False

    def probs(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        return self.forward_with_branch(x, rng)[0]

    def predict(self, x: np.ndarray, rng: np.random.Generator | None = None) -> int:
        return argmax(self.probs(x, rng))


def gated_forward(g: GatedClassifier, x: np.ndarray, rng: np.random.Generator | None = None):
    """The gated prediction in ``g``'s mode: a label or a probability vector."""
    p = g.probs(x, rng)
    return argmax(p) if g.mode == "decision" else p
