"""Turning valuations into a sampling distribution and drawing the round's clients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .valuation import ValuationTable

POLICY_KINDS = ("uniform", "afl")


@dataclass(frozen=True)
class SelectionPolicy:
    """How clients are drawn each round.

    For ``kind="afl"`` the probabilities are
    ``(1 - uniform_mix) * softmax(temperature * v) + uniform_mix / K``.
    ``temperature`` multiplies the valuations, so it acts as an inverse
    temperature: ``0`` gives uniform sampling.
    """

    kind: str = "afl"
    temperature: float = 1.0
    uniform_mix: float = 0.1
    clients_per_round: int = 10

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError("policy.kind", f"must be one of {POLICY_KINDS}, got {self.kind!r}")
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise ConfigError("policy.temperature", f"must be > 0, got {self.temperature}")
        if not 0.0 <= self.uniform_mix <= 1.0:
            raise ConfigError("policy.uniform_mix", f"must be in [0, 1], got {self.uniform_mix}")
        m = self.clients_per_round
        if isinstance(m, bool) or int(m) != m or m < 1:
            raise ConfigError("policy.clients_per_round", f"must be an integer >= 1, got {m}")

    def check_clients(self, n_clients: int) -> None:
        if self.clients_per_round > n_clients:
            raise ConfigError(
                "policy.clients_per_round",
                f"{self.clients_per_round} exceeds the number of clients ({n_clients})",
            )


def _values(table) -> np.ndarray:
    if isinstance(table, ValuationTable):
        return table.values
    return np.asarray(table, dtype=np.float64).reshape(-1)


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z))
    return e / e.sum()


def to_sampling_distribution(table, policy: SelectionPolicy) -> np.ndarray:
    """Probability of picking each client next round.

    ``table`` may be a :class:`ValuationTable` or a plain array of valuations.
    """
    v = _values(table)
    K = v.size
    if K == 0:
        raise ValueError("valuation table is empty")
    if policy.kind == "uniform" or policy.uniform_mix == 1.0:
        return np.full(K, 1.0 / K)
    z = policy.temperature * v
    e = np.exp(z - np.max(z))
    if np.all(e == e[0]):
        # flat softmax: the mixture is exactly uniform, skip the rounding
        return np.full(K, 1.0 / K)
    probs = (1.0 - policy.uniform_mix) * (e / e.sum()) + policy.uniform_mix / K
    return probs / probs.sum()


def sample_clients(dist, m: int, seed) -> list[int]:
    """Draw ``m`` distinct clients by sequential draw-and-renormalize.

    Each draw picks one remaining client with probability proportional to
    its mass, then removes it. Returned in draw order.
    """
    p = np.array(dist, dtype=np.float64).reshape(-1)
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("sampling probabilities must be finite and nonnegative")
    positive = int(np.count_nonzero(p > 0))
    if m < 0 or m > positive:
        raise ConfigError(
            "policy.clients_per_round",
            f"cannot draw {m} distinct clients from {positive} with positive probability",
        )
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for _ in range(m):
        cdf = np.cumsum(p)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        # guard against landing on a trailing zero-mass entry through rounding
        idx = min(idx, p.size - 1)
        while p[idx] == 0:
            idx -= 1
        chosen.append(idx)
        p[idx] = 0.0
    return chosen


def argmax_client(table) -> int:
    """Client with the largest valuation; ties go to the smallest id."""
    v = _values(table)
    if v.size == 0:
        raise ValueError("valuation table is empty")
    return int(np.argmax(v))
