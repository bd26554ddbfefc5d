"""The AFL training loop, experiment configuration, and uniform-vs-AFL comparison."""

from __future__ import annotations

import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .datagen import FederatedDataset, SyntheticSpec, generate
from .exceptions import ConfigError
from .model import (
    ClientDataset,
    ModelParams,
    TrainConfig,
    accuracy,
    fedavg_aggregate,
    local_train,
)
from .privacy import PrivacyConfig, privatize_valuation
from .selection import SelectionPolicy, sample_clients, to_sampling_distribution
from .valuation import (
    DEFAULT_COUNT_THRESHOLD,
    ValuationTable,
    check_valuation_kind,
    count_high_loss_valuation,
    loss_valuation,
    update_valuation_table,
)

# stream tags mixed into derived seeds so each use draws independent randomness
_SELECT, _TRAIN, _PRIVACY = 0, 1, 2


def derive_seed(master_seed: int, *keys: int) -> int:
    """Deterministic 64-bit seed for ``(master_seed, *keys)``, independent of call order."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    policy: SelectionPolicy = field(default_factory=SelectionPolicy)
    train: TrainConfig = field(default_factory=TrainConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)
    rounds: int = 200
    target_accuracy: float = 0.95
    master_seed: int = 0
    valuation_kind: str = "loss"
    count_threshold: float = DEFAULT_COUNT_THRESHOLD

    def __post_init__(self):
        if isinstance(self.rounds, bool) or int(self.rounds) != self.rounds or self.rounds < 1:
            raise ConfigError("rounds", f"must be an integer >= 1, got {self.rounds}")
        if not 0.0 < self.target_accuracy <= 1.0:
            raise ConfigError("target_accuracy", f"must be in (0, 1], got {self.target_accuracy}")
        if isinstance(self.master_seed, bool) or int(self.master_seed) != self.master_seed:
            raise ConfigError("master_seed", f"must be an integer, got {self.master_seed!r}")
        check_valuation_kind(self.valuation_kind)
        if not self.count_threshold > 0:
            raise ConfigError("count_threshold", f"must be > 0, got {self.count_threshold}")
        self.policy.check_clients(self.data.n_clients)

    @property
    def data_spec(self) -> SyntheticSpec:
        """Data spec with its seed resolved (falls back to ``master_seed``)."""
        if self.data.seed is None:
            return self.data.with_seed(self.master_seed)
        return self.data

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Same experiment under another master seed; an unset data seed follows it."""
        return replace(self, master_seed=int(seed))

    def resolved(self) -> "ExperimentConfig":
        return replace(self, data=self.data_spec)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["data"]["n_range"] = list(doc["data"]["n_range"])
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration field")
        sections = {
            "data": SyntheticSpec,
            "policy": SelectionPolicy,
            "train": TrainConfig,
            "privacy": PrivacyConfig,
        }
        kwargs = {}
        for key, value in doc.items():
            if key in sections:
                if not isinstance(value, dict):
                    raise ConfigError(key, "must be a JSON object")
                sub = sections[key]
                bad = set(value) - set(sub.__dataclass_fields__)
                if bad:
                    raise ConfigError(f"{key}.{sorted(bad)[0]}", "unknown configuration field")
                try:
                    kwargs[key] = sub(**value)
                except TypeError as exc:
                    raise ConfigError(key, str(exc)) from exc
            else:
                kwargs[key] = value
        return cls(**kwargs)


@dataclass
class FederationState:
    model: ModelParams
    table: ValuationTable


@dataclass(frozen=True)
class RoundRecord:
    round: int
    selected: tuple[int, ...]
    test_accuracy: float | None
    mean_valuation: float
    staleness_histogram: tuple[tuple[int, int], ...]
    transmissions: int

    @property
    def max_staleness(self) -> int:
        return max(s for s, _ in self.staleness_histogram)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "selected": list(self.selected),
            "test_accuracy": self.test_accuracy,
            "mean_valuation": self.mean_valuation,
            "max_staleness": self.max_staleness,
            "staleness_histogram": [list(p) for p in self.staleness_histogram],
            "transmissions": self.transmissions,
        }


@dataclass
class ExperimentResult:
    records: list[RoundRecord]
    rounds_to_target: int | None
    final_model: ModelParams
    config: ExperimentConfig
    final_table: ValuationTable | None = None

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.test_accuracy for r in self.records], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "config": self.config.resolved().to_dict(),
            "rounds_to_target": self.rounds_to_target,
            "final_test_accuracy": self.records[-1].test_accuracy,
            "final_model": {
                "weights": self.final_model.weights.tolist(),
                "bias": self.final_model.bias,
            },
            "records": [r.to_dict() for r in self.records],
        }


def rounds_to_reach(accuracies: Sequence[float], target: float) -> int | None:
    """First 1-based round whose accuracy is at least ``target``."""
    for i, acc in enumerate(accuracies):
        if acc >= target:
            return i + 1
    return None


def _client_valuation(
    data: ClientDataset, model: ModelParams, cfg: ExperimentConfig, seed: int
) -> float:
    private = cfg.privacy.enabled
    if cfg.valuation_kind == "loss":
        raw = loss_valuation(data, model, cfg.privacy.clip_bound if private else None)
    else:
        raw = float(count_high_loss_valuation(data, model, cfg.count_threshold))
    if private:
        return privatize_valuation(raw, cfg.valuation_kind, data.n, cfg.privacy, seed)
    return raw


def client_update(
    client_id: int,
    data: ClientDataset,
    model: ModelParams,
    cfg: ExperimentConfig,
    t: int,
) -> tuple[float, ModelParams]:
    """Work done on one selected client: value the received model, then train locally."""
    value = _client_valuation(data, model, cfg, derive_seed(cfg.master_seed, _PRIVACY, t, client_id))
    trained = local_train(model, data, cfg.train, derive_seed(cfg.master_seed, _TRAIN, t, client_id))
    return value, trained


def _staleness_histogram(table: ValuationTable) -> tuple[tuple[int, int], ...]:
    values, counts = np.unique(table.staleness(), return_counts=True)
    return tuple((int(s), int(c)) for s, c in zip(values, counts))


def run_round(
    state: FederationState,
    clients: Sequence[ClientDataset],
    cfg: ExperimentConfig,
    t: int,
    test_set: ClientDataset | None = None,
    order: Sequence[int] | None = None,
) -> tuple[FederationState, RoundRecord]:
    """One round: sample, value + train the selected clients, aggregate, refresh valuations.

    ``t`` is the 0-based round index and must equal ``state.table.current_round``.
    ``order`` optionally permutes the processing order of the selected clients;
    the outcome does not depend on it. The input state is never mutated.
    """
    if t != state.table.current_round:
        raise ValueError(f"round {t} does not follow table round {state.table.current_round}")
    if t >= cfg.rounds:
        raise ValueError(f"round {t} is past the configured {cfg.rounds} rounds")
    dist = to_sampling_distribution(state.table, cfg.policy)
    selected = sample_clients(dist, cfg.policy.clients_per_round, derive_seed(cfg.master_seed, _SELECT, t))

    work = list(selected) if order is None else [selected[i] for i in order]
    results = {k: client_update(k, clients[k], state.model, cfg, t) for k in work}

    model = fedavg_aggregate([(results[k][1], clients[k].n) for k in selected])
    table = update_valuation_table(
        state.table, selected, {k: results[k][0] for k in selected}, t + 1
    )
    record = RoundRecord(
        round=t + 1,
        selected=tuple(selected),
        test_accuracy=None if test_set is None else accuracy(model, test_set),
        mean_valuation=float(np.mean(table.values)),
        staleness_histogram=_staleness_histogram(table),
        transmissions=2 * len(selected),
    )
    return FederationState(model, table), record


def initial_state(n_clients: int, d: int) -> FederationState:
    return FederationState(ModelParams.zeros(d), ValuationTable.initial(n_clients, 0.0))


def run_experiment(cfg: ExperimentConfig, dataset: FederatedDataset | None = None) -> ExperimentResult:
    """Train for ``cfg.rounds`` rounds from a zero model and a constant valuation table."""
    if dataset is None:
        dataset = generate(cfg.data_spec)
    cfg.policy.check_clients(dataset.n_clients)
    state = initial_state(dataset.n_clients, dataset.test_set.d)
    records = []
    for t in range(cfg.rounds):
        state, record = run_round(state, dataset.clients, cfg, t, dataset.test_set)
        records.append(record)
    return ExperimentResult(
        records=records,
        rounds_to_target=rounds_to_reach([r.test_accuracy for r in records], cfg.target_accuracy),
        final_model=state.model,
        config=cfg,
        final_table=state.table,
    )


def _run_pair(cfg_base: ExperimentConfig, seed: int, afl_policy, uniform_policy):
    cfg = cfg_base.with_seed(seed)
    dataset = generate(cfg.data_spec)
    uni = run_experiment(replace(cfg, policy=uniform_policy), dataset)
    afl = run_experiment(replace(cfg, policy=afl_policy), dataset)
    return uni.accuracies, afl.accuracies


def compare_strategies(
    cfg_base: ExperimentConfig,
    seeds: Sequence[int],
    target_round: int | None = None,
    uniform_policy: SelectionPolicy | None = None,
    afl_policy: SelectionPolicy | None = None,
    n_jobs: int = 1,
) -> dict:
    """Run a uniform arm and an AFL arm per seed on the same data and summarize.

    By default the AFL arm uses ``cfg_base.policy`` (forced to ``kind="afl"``)
    and the uniform arm the same ``clients_per_round``. With ``target_round``
    each seed's target is the uniform arm's accuracy at that round instead of
    ``cfg_base.target_accuracy``.
    """
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise ValueError("compare_strategies needs at least two seeds")
    if target_round is not None and not 1 <= target_round <= cfg_base.rounds:
        raise ConfigError("target_round", f"must be in [1, {cfg_base.rounds}], got {target_round}")
    if afl_policy is None:
        afl_policy = replace(cfg_base.policy, kind="afl")
    if uniform_policy is None:
        uniform_policy = replace(cfg_base.policy, kind="uniform")

    args = [(cfg_base, s, afl_policy, uniform_policy) for s in seeds]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            curves = list(pool.map(_run_pair, *zip(*args)))
    else:
        curves = [_run_pair(*a) for a in args]

    per_seed = []
    for seed, (uni_acc, afl_acc) in zip(seeds, curves):
        target = float(uni_acc[target_round - 1]) if target_round else cfg_base.target_accuracy
        r_uni = rounds_to_reach(uni_acc, target)
        r_afl = rounds_to_reach(afl_acc, target)
        reduction = None
        if r_uni is not None:
            # an AFL arm that never reaches the target is censored at rounds + 1
            reduction = (r_uni - (r_afl or cfg_base.rounds + 1)) / r_uni
        per_seed.append(
            {
                "seed": seed,
                "target_accuracy": target,
                "uniform_rounds_to_target": r_uni,
                "afl_rounds_to_target": r_afl,
                "relative_reduction": reduction,
                "uniform_final_accuracy": float(uni_acc[-1]),
                "afl_final_accuracy": float(afl_acc[-1]),
                "final_accuracy_delta": float(afl_acc[-1] - uni_acc[-1]),
            }
        )

    reductions = [s["relative_reduction"] for s in per_seed if s["relative_reduction"] is not None]
    return {
        "config": cfg_base.to_dict(),
        "uniform_policy": asdict(uniform_policy),
        "afl_policy": asdict(afl_policy),
        "target_round": target_round,
        "seeds": seeds,
        "per_seed": per_seed,
        "afl_wins": sum(
            1
            for s in per_seed
            if s["uniform_rounds_to_target"] is not None
            and s["afl_rounds_to_target"] is not None
            and s["afl_rounds_to_target"] < s["uniform_rounds_to_target"]
        ),
        "median_relative_reduction": statistics.median(reductions) if reductions else None,
        "median_final_accuracy_delta": statistics.median(s["final_accuracy_delta"] for s in per_seed),
    }
