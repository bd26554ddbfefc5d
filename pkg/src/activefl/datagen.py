"""Synthetic non-IID federated data: imbalanced Gaussian classes with margin noise.

The two classes are unit-variance isotropic Gaussians whose means sit at
``-separation/2`` (majority, label 0) and ``+separation/2`` (minority, label 1)
along a random unit direction. The true boundary is the hyperplane halfway
between them, so an example's signed margin is its projection on that
direction. Training labels are flipped with probability
``eta0 * exp(-decay * |margin|)``; the test set keeps its true labels.

Minority examples are spread over clients in proportion to
``n_k * (rank_k + 1) ** -skew`` for a random ranking of clients (a Zipf
weighting). ``skew = 0`` gives every client the global fraction; larger
values pile the minority onto the few top-ranked clients.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .exceptions import ConfigError, GenerationError
from .model import ClientDataset

MINORITY_LABEL = 1
TEST_SIZE = 2000


@dataclass(frozen=True)
class SyntheticSpec:
    d: int = 10
    n_clients: int = 100
    n_range: tuple[int, int] = (20, 200)
    minority_fraction_global: float = 0.05
    separation: float = 0.8
    margin_noise_rate: float = 0.2
    margin_noise_decay: float = 2.0
    skew: float = 1.5
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "n_range", tuple(int(v) for v in self.n_range))
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError("data.d", f"must be a positive integer, got {self.d}")
        if int(self.n_clients) != self.n_clients or self.n_clients < 2:
            raise ConfigError("data.n_clients", f"must be an integer >= 2, got {self.n_clients}")
        lo, hi = self.n_range
        if lo < 1 or hi < lo:
            raise ConfigError("data.n_range", f"need 1 <= min <= max, got {self.n_range}")
        if not 0.0 < self.minority_fraction_global < 0.5:
            raise ConfigError(
                "data.minority_fraction_global",
                f"must be in (0, 0.5), got {self.minority_fraction_global}",
            )
        if not self.separation > 0:
            raise ConfigError("data.separation", f"must be > 0, got {self.separation}")
        if not 0.0 <= self.margin_noise_rate < 1.0:
            raise ConfigError(
                "data.margin_noise_rate", f"must be in [0, 1), got {self.margin_noise_rate}"
            )
        if not self.margin_noise_decay > 0:
            raise ConfigError(
                "data.margin_noise_decay", f"must be > 0, got {self.margin_noise_decay}"
            )
        if not self.skew >= 0:
            raise ConfigError("data.skew", f"must be >= 0, got {self.skew}")

    def with_seed(self, seed: int) -> "SyntheticSpec":
        return SyntheticSpec(**{**asdict(self), "seed": int(seed)})


@dataclass
class FederatedDataset:
    clients: list[ClientDataset]
    test_set: ClientDataset
    per_client_minority_fraction: np.ndarray
    direction: np.ndarray
    spec: SyntheticSpec | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_clients(self) -> int:
        return len(self.clients)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([c.n for c in self.clients], dtype=np.int64)

    def pooled(self) -> ClientDataset:
        return ClientDataset(
            np.vstack([c.features for c in self.clients]),
            np.concatenate([c.labels for c in self.clients]),
        )


def minority_fraction(data: ClientDataset) -> float:
    return float(np.count_nonzero(data.labels == MINORITY_LABEL) / data.n)


def flip_probability(margin, eta0: float, decay: float) -> np.ndarray:
    return eta0 * np.exp(-decay * np.abs(margin))


def sample_mixture(rng, direction, separation: float, n_majority: int, n_minority: int):
    """Draw the examples of both classes, shuffled. Returns ``(X, y_true, margin)``."""
    d = direction.size
    y = np.concatenate([np.zeros(n_majority, np.int64), np.ones(n_minority, np.int64)])
    y = y[rng.permutation(y.size)]
    centres = np.where(y == MINORITY_LABEL, 0.5, -0.5) * separation
    X = rng.standard_normal((y.size, d)) + centres[:, None] * direction[None, :]
    return X, y, X @ direction


def apply_margin_noise(rng, y, margin, eta0: float, decay: float) -> np.ndarray:
    flip = rng.random(y.size) < flip_probability(margin, eta0, decay)
    return np.where(flip, 1 - y, y)


def allocate_minority(sizes: np.ndarray, total: int, skew: float, rng) -> np.ndarray:
    """Split ``total`` minority examples over clients; never more than a client holds."""
    K = sizes.size
    if total < 1:
        raise GenerationError("global minority count rounds to zero; increase client sizes or fraction")
    if total > sizes.sum():
        raise GenerationError(f"cannot place {total} minority examples in {sizes.sum()} slots")
    if skew == 0 and total < K:
        raise GenerationError(
            f"skew=0 spreads minority over all {K} clients but only {total} minority examples exist"
        )
    ranks = rng.permutation(K)
    weights = sizes * (ranks + 1.0) ** -skew
    # water-filling: clients whose share exceeds their size are capped and the rest rescaled
    share = np.zeros(K)
    capped = np.zeros(K, dtype=bool)
    remaining = float(total)
    while True:
        free = ~capped
        share[free] = remaining * weights[free] / weights[free].sum()
        over = free & (share > sizes)
        if not over.any():
            break
        share[over] = sizes[over]
        capped |= over
        remaining = total - share[capped].sum()
    counts = np.floor(share).astype(np.int64)
    shortfall = total - int(counts.sum())
    if shortfall:
        room = counts < sizes
        order = np.lexsort((np.arange(K), -(share - counts)))
        order = [k for k in order if room[k]]
        counts[order[:shortfall]] += 1
    return counts


def generate(spec: SyntheticSpec) -> FederatedDataset:
    """Build a federated dataset; identical specs give bit-identical data."""
    if spec.seed is None:
        raise ConfigError("data.seed", "a seed is required to generate data")
    rng = np.random.default_rng(spec.seed)
    direction = rng.standard_normal(spec.d)
    direction /= np.linalg.norm(direction)

    lo, hi = spec.n_range
    sizes = rng.integers(lo, hi + 1, size=spec.n_clients)
    total_minority = int(round(spec.minority_fraction_global * sizes.sum()))
    minority_counts = allocate_minority(sizes, total_minority, spec.skew, rng)

    clients = []
    for n_k, m_k in zip(sizes, minority_counts):
        X, y, margin = sample_mixture(rng, direction, spec.separation, int(n_k - m_k), int(m_k))
        y = apply_margin_noise(rng, y, margin, spec.margin_noise_rate, spec.margin_noise_decay)
        clients.append(ClientDataset(X, y))

    n_test_minority = int(rng.binomial(TEST_SIZE, spec.minority_fraction_global))
    X_test, y_test, _ = sample_mixture(
        rng, direction, spec.separation, TEST_SIZE - n_test_minority, n_test_minority
    )
    return FederatedDataset(
        clients=clients,
        test_set=ClientDataset(X_test, y_test),
        per_client_minority_fraction=np.array([minority_fraction(c) for c in clients]),
        direction=direction,
        spec=spec,
        meta={"allocated_minority": minority_counts.tolist()},
    )


def dataset_to_dict(ds: FederatedDataset) -> dict:
    def client(c: ClientDataset) -> dict:
        return {"features": c.features.tolist(), "labels": c.labels.tolist()}

    return {
        "spec": None if ds.spec is None else asdict(ds.spec),
        "direction": ds.direction.tolist(),
        "per_client_minority_fraction": ds.per_client_minority_fraction.tolist(),
        "clients": [client(c) for c in ds.clients],
        "test_set": client(ds.test_set),
    }


def dataset_from_dict(doc: dict) -> FederatedDataset:
    def client(c: dict) -> ClientDataset:
        return ClientDataset(np.asarray(c["features"], dtype=np.float64), np.asarray(c["labels"]))

    clients = [client(c) for c in doc["clients"]]
    return FederatedDataset(
        clients=clients,
        test_set=client(doc["test_set"]),
        per_client_minority_fraction=np.asarray(doc["per_client_minority_fraction"], dtype=np.float64),
        direction=np.asarray(doc["direction"], dtype=np.float64),
        spec=None if doc.get("spec") is None else SyntheticSpec(**doc["spec"]),
    )


def save_dataset(ds: FederatedDataset, path) -> None:
    atomic_write_text(path, json.dumps(dataset_to_dict(ds)))


def load_dataset(path) -> FederatedDataset:
    return dataset_from_dict(json.loads(Path(path).read_text()))


def bayes_margin_threshold(spec: SyntheticSpec) -> float:
    """Projection beyond which the minority class is more probable than the majority."""
    prior = spec.minority_fraction_global
    return math.log((1 - prior) / prior) / spec.separation
