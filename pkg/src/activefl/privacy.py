"""Differentially private release of client valuations via the Laplace mechanism.

Neighbouring datasets differ by one added or removed example and the client
size ``n_k`` is treated as public. Each release spends ``epsilon`` on its
own; nothing is composed across rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError


@dataclass(frozen=True)
class PrivacyConfig:
    enabled: bool = False
    epsilon: float = 1.0
    clip_bound: float = 1.0

    def __post_init__(self):
        if not isinstance(self.enabled, bool):
            raise ConfigError("privacy.enabled", f"must be a boolean, got {self.enabled!r}")
        if not self.epsilon > 0:
            raise ConfigError("privacy.epsilon", f"must be > 0, got {self.epsilon}")
        if not (self.clip_bound > 0 and math.isfinite(self.clip_bound)):
            raise ConfigError("privacy.clip_bound", f"must be > 0, got {self.clip_bound}")


def clip_per_example_losses(losses, clip_bound: float) -> np.ndarray:
    if not clip_bound > 0:
        raise ValueError(f"clip_bound must be > 0, got {clip_bound}")
    return np.minimum(np.asarray(losses, dtype=np.float64), clip_bound)


def laplace_from_uniform(u: float, scale: float) -> float:
    """Inverse CDF of Laplace(0, scale) at ``u + 1/2`` for ``u`` in (-1/2, 1/2)."""
    return -scale * math.copysign(1.0, u) * math.log1p(-2.0 * abs(u))


def laplace_noise(scale: float, seed) -> float:
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    u = np.random.default_rng(seed).random() - 0.5
    # random() is in [0, 1); u = -1/2 would map to -inf
    if u == -0.5:
        u = 0.0
    return laplace_from_uniform(u, scale)


def sensitivity(kind: str, n_k: int, cfg: PrivacyConfig) -> float:
    """Largest change of a valuation when one example is added or removed."""
    if kind == "count":
        return 1.0
    if kind == "loss":
        return cfg.clip_bound / math.sqrt(n_k)
    raise ValueError(f"unknown valuation kind {kind!r}")


def noise_scale(kind: str, n_k: int, cfg: PrivacyConfig) -> float:
    return sensitivity(kind, n_k, cfg) / cfg.epsilon


def privatize_valuation(raw: float, kind: str, n_k: int, cfg: PrivacyConfig, seed) -> float:
    """Release ``raw`` plus Laplace noise of scale ``sensitivity / epsilon``.

    For ``kind="loss"`` the caller must compute ``raw`` from losses already
    clipped to ``cfg.clip_bound``. The result is deliberately not clamped to
    the valuation's natural range.
    """
    if not cfg.enabled:
        raise ValueError("privacy is disabled; release the raw valuation instead")
    return float(raw) + laplace_noise(noise_scale(kind, n_k, cfg), seed)
