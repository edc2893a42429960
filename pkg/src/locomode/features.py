"""Time-domain features for the discriminant classifier.

Each channel contributes a block of six values, in this order::

    min, max, mean, std (population), first sample, last sample
"""

from __future__ import annotations

import numpy as np

from .corpus import LabeledWindow
from .errors import TooFewFrames

FEATURES_PER_CHANNEL = 6
FEATURE_NAMES = ("min", "max", "mean", "std", "first", "last")


def feature_names(channel_names) -> list[str]:
    return [f"{ch}:{feat}" for ch in channel_names for feat in FEATURE_NAMES]


def extract_features(window) -> np.ndarray:
    """Feature vector of length ``6 * channels`` for one window.

    Accepts a :class:`LabeledWindow` or a bare ``frames x channels`` array.
    """
    data = window.data if isinstance(window, LabeledWindow) else np.asarray(window, dtype=np.float64)
    return extract_features_batch(data[None])[0]


def extract_features_batch(windows: np.ndarray) -> np.ndarray:
    """Vectorised form over an ``(n, frames, channels)`` array."""
    X = np.asarray(windows, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"expected (n, frames, channels), got shape {X.shape}")
    if X.shape[1] < 2:
        raise TooFewFrames(f"need at least 2 frames per window, got {X.shape[1]}")
    mean = X.mean(axis=1)
    std = np.sqrt(((X - mean[:, None, :]) ** 2).mean(axis=1))
    blocks = np.stack([X.min(axis=1), X.max(axis=1), mean, std, X[:, 0, :], X[:, -1, :]], axis=2)
    # clamp guards against mean drifting outside [min, max] by rounding on constant channels
    blocks[..., 2] = np.clip(blocks[..., 2], blocks[..., 0], blocks[..., 1])
    return blocks.reshape(X.shape[0], -1)
