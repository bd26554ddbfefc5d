"""scikit-learn compatible front end for federated training with active client selection."""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .datagen import SyntheticSpec
from .model import ClientDataset, TrainConfig, decision_function
from .orchestrator import ExperimentConfig, initial_state, run_round
from .privacy import PrivacyConfig
from .selection import SelectionPolicy


def split_by_group(X, y, groups):
    """Partition rows into one :class:`ClientDataset` per distinct group id (sorted)."""
    groups = np.asarray(groups)
    if groups.shape[0] != X.shape[0]:
        raise ValueError(f"groups has {groups.shape[0]} entries for {X.shape[0]} rows")
    ids = np.unique(groups)
    return ids, [ClientDataset(X[groups == g], y[groups == g]) for g in ids]


class ActiveFederatedClassifier(ClassifierMixin, BaseEstimator):
    """Binary logistic regression trained by simulated federated rounds.

    Rows of ``X`` are assigned to clients by ``groups`` in :meth:`fit`. Each
    round draws ``clients_per_round`` clients, either uniformly or from a
    softmax over their last reported valuations, trains them locally and
    averages the results weighted by client size.

    Parameters
    ----------
    selection : {"afl", "uniform"}
    temperature : float
        Multiplier on valuations inside the softmax.
    uniform_mix : float
        Share of probability mass spread uniformly over all clients.
    clients_per_round : int
        Capped at the number of clients present in the data.
    n_rounds : int
    learning_rate, local_epochs, batch_size :
        Local SGD settings; ``batch_size`` may be ``"full"``.
    valuation : {"loss", "count"}
    privacy_epsilon : float or None
        When set, valuations are released through the Laplace mechanism.
    clip_bound : float
        Per-example loss clip used for private loss valuations.
    random_state : int
    """

    def __init__(
        self,
        selection="afl",
        temperature=1.0,
        uniform_mix=0.1,
        clients_per_round=10,
        n_rounds=50,
        learning_rate=0.1,
        local_epochs=1,
        batch_size=10,
        valuation="loss",
        privacy_epsilon=None,
        clip_bound=1.0,
        random_state=0,
    ):
        self.selection = selection
        self.temperature = temperature
        self.uniform_mix = uniform_mix
        self.clients_per_round = clients_per_round
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.local_epochs = local_epochs
        self.batch_size = batch_size
        self.valuation = valuation
        self.privacy_epsilon = privacy_epsilon
        self.clip_bound = clip_bound
        self.random_state = random_state

    def _experiment_config(self, n_clients: int) -> ExperimentConfig:
        policy = SelectionPolicy(
            kind=self.selection,
            temperature=self.temperature,
            uniform_mix=self.uniform_mix,
            clients_per_round=min(self.clients_per_round, n_clients),
        )
        privacy = (
            PrivacyConfig(False, clip_bound=self.clip_bound)
            if self.privacy_epsilon is None
            else PrivacyConfig(True, self.privacy_epsilon, self.clip_bound)
        )
        return ExperimentConfig(
            # the data section only matters for generated data; it sizes the client check
            data=SyntheticSpec(n_clients=max(n_clients, 2), skew=0.0),
            policy=policy,
            train=TrainConfig(self.learning_rate, self.local_epochs, self.batch_size),
            privacy=privacy,
            rounds=self.n_rounds,
            master_seed=0 if self.random_state is None else int(self.random_state),
            valuation_kind=self.valuation,
        )

    def fit(self, X, y, groups=None):
        """Train on ``(X, y)``; ``groups`` gives each row's client id (one client if omitted)."""
        X, y = validate_data(self, X, y)
        check_classification_targets(y)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if self.classes_.size != 2:
            raise ValueError(f"ActiveFederatedClassifier is binary; got {self.classes_.size} classes")
        if groups is None:
            groups = np.zeros(X.shape[0], dtype=np.int64)
        self.client_ids_, clients = split_by_group(X, y_enc, groups)

        cfg = self._experiment_config(len(clients))
        state = initial_state(len(clients), X.shape[1])
        self.history_ = []
        for t in range(cfg.rounds):
            state, record = run_round(state, clients, cfg, t)
            self.history_.append(record)
        self.model_ = state.model
        self.valuation_table_ = state.table
        self.coef_ = state.model.weights.reshape(1, -1).copy()
        self.intercept_ = np.array([state.model.bias])
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False)
        return decision_function(self.model_, X)

    def predict_proba(self, X):
        scores = self.decision_function(X)
        p = expit(scores)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        check_is_fitted(self)
        return self.classes_[(self.decision_function(X) > 0).astype(np.int64)]
