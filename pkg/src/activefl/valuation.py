"""Client value functions and the server's table of (possibly stale) valuations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .exceptions import ConfigError
from .model import ClientDataset, ModelParams, per_example_losses

DEFAULT_COUNT_THRESHOLD = math.log(2.0)

VALUATION_KINDS = ("loss", "count")


def loss_valuation(data: ClientDataset, model: ModelParams, clip_bound: float | None = None) -> float:
    """Summed per-example loss scaled by ``1/sqrt(n_k)``.

    The sum (not the mean) makes larger clients worth more when their points
    are equally informative. With ``clip_bound`` each loss is first capped,
    which bounds the sensitivity for private release.
    """
    losses = per_example_losses(model, data.features, data.labels)
    if clip_bound is not None:
        losses = np.minimum(losses, clip_bound)
    return float(math.fsum(losses) / math.sqrt(data.n))


def count_high_loss_valuation(
    data: ClientDataset, model: ModelParams, threshold: float = DEFAULT_COUNT_THRESHOLD
) -> int:
    """Number of examples whose loss strictly exceeds ``threshold``."""
    if not threshold > 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    losses = per_example_losses(model, data.features, data.labels)
    return int(np.count_nonzero(losses > threshold))


@dataclass(frozen=True)
class Valuation:
    value: float
    round_computed: int


class ValuationTable:
    """One valuation per client with the round whose model produced it.

    Instances are treated as immutable; :func:`update_valuation_table` returns
    a new table.
    """

    def __init__(self, values, rounds, current_round: int = 0):
        values = np.array(values, dtype=np.float64).reshape(-1)
        rounds = np.array(rounds, dtype=np.int64).reshape(-1)
        if values.shape != rounds.shape or values.size == 0:
            raise ValueError("values and rounds must be nonempty and the same length")
        if not np.all(np.isfinite(values)):
            raise ValueError("valuations must be finite")
        if current_round < 0 or np.any(rounds < 0) or np.any(rounds > current_round):
            raise ValueError("every round_computed must lie in [0, current_round]")
        values.flags.writeable = False
        rounds.flags.writeable = False
        self._values = values
        self._rounds = rounds
        self.current_round = int(current_round)

    @classmethod
    def initial(cls, n_clients: int, value: float = 0.0) -> "ValuationTable":
        return cls(np.full(n_clients, value), np.zeros(n_clients, dtype=np.int64), 0)

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def rounds_computed(self) -> np.ndarray:
        return self._rounds

    def __len__(self):
        return self._values.size

    def __getitem__(self, k: int) -> Valuation:
        return Valuation(float(self._values[k]), int(self._rounds[k]))

    def staleness(self) -> np.ndarray:
        """Rounds elapsed since each entry was computed."""
        return self.current_round - self._rounds

    def __eq__(self, other):
        if not isinstance(other, ValuationTable):
            return NotImplemented
        return (
            self.current_round == other.current_round
            and np.array_equal(self._values, other._values)
            and np.array_equal(self._rounds, other._rounds)
        )

    __hash__ = None

    def __repr__(self):
        return f"ValuationTable(K={len(self)}, current_round={self.current_round})"


def update_valuation_table(
    table: ValuationTable,
    selected: Iterable[int],
    fresh: Mapping[int, float],
    new_round: int,
) -> ValuationTable:
    """Replace the entries of ``selected`` clients with ``fresh`` values.

    Fresh values are stamped with ``table.current_round`` (the round of the
    model they were computed on); every other entry keeps its value and stamp.
    """
    selected = {int(k) for k in selected}
    if set(int(k) for k in fresh) != selected:
        raise ValueError(
            f"fresh valuations for {sorted(fresh)} do not match selected clients {sorted(selected)}"
        )
    if new_round != table.current_round + 1:
        raise ValueError(f"new_round must be {table.current_round + 1}, got {new_round}")
    K = len(table)
    if any(k < 0 or k >= K for k in selected):
        raise IndexError(f"client id out of range [0, {K})")
    values = table.values.copy()
    rounds = table.rounds_computed.copy()
    for k, v in fresh.items():
        values[int(k)] = float(v)
        rounds[int(k)] = table.current_round
    return ValuationTable(values, rounds, new_round)


def check_valuation_kind(kind: str) -> str:
    if kind not in VALUATION_KINDS:
        raise ConfigError("valuation_kind", f"must be one of {VALUATION_KINDS}, got {kind!r}")
    return kind
