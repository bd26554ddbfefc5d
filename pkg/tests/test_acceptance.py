"""Exit criteria for the simulator, one test per criterion.

Each test records a PASS/FAIL line; they are printed together at the end of
the pytest session (see ``conftest.py``) or when this file is run directly.
Tolerances are fixed here and never tuned per run.
"""

import json
import math
import statistics
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from activefl.cli import main as cli_main
from activefl.datagen import SyntheticSpec, generate
from activefl.model import ClientDataset, ModelParams, TrainConfig, gradient, per_example_losses
from activefl.orchestrator import ExperimentConfig, compare_strategies, run_experiment
from activefl.privacy import laplace_noise
from activefl.reporting import to_json
from activefl.selection import SelectionPolicy, sample_clients, to_sampling_distribution
from activefl.valuation import ValuationTable, count_high_loss_valuation, loss_valuation, update_valuation_table

RESULTS: list[str] = []

SCENARIO = ExperimentConfig(
    data=SyntheticSpec(
        d=10,
        n_clients=100,
        n_range=(20, 200),
        minority_fraction_global=0.05,
        separation=0.8,
        margin_noise_rate=0.2,
        margin_noise_decay=2.0,
        skew=1.5,
    ),
    policy=SelectionPolicy("afl", temperature=1.0, uniform_mix=0.1, clients_per_round=10),
    train=TrainConfig(learning_rate=0.1, local_epochs=1, batch_size=10),
    rounds=200,
    valuation_kind="loss",
)
SEEDS = list(range(10))
TARGET_ROUND = 150


def record(criterion: str, ok: bool, detail: str) -> None:
    RESULTS.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")


@pytest.fixture(scope="module")
def comparison():
    start = time.perf_counter()
    summary = compare_strategies(SCENARIO, SEEDS, target_round=TARGET_ROUND)
    summary["elapsed_seconds"] = time.perf_counter() - start
    return summary


def test_c01_fewer_rounds_than_uniform(comparison):
    wins = comparison["afl_wins"]
    median = comparison["median_relative_reduction"]
    elapsed = comparison["elapsed_seconds"]
    rows = ", ".join(
        f"{s['seed']}:{s['uniform_rounds_to_target']}/{s['afl_rounds_to_target']}" for s in comparison["per_seed"]
    )
    ok = wins >= 8 and median is not None and median >= 0.15 and elapsed < 300
    record(
        "C1 AFL reaches uniform's round-150 accuracy sooner",
        ok,
        f"wins {wins}/10 (need >= 8), median reduction {median:.3f} (need >= 0.15), "
        f"{elapsed:.0f}s (need < 300); seed:uniform/afl rounds {rows}",
    )
    assert wins >= 8
    assert median >= 0.15
    assert elapsed < 300


def test_c02_accuracy_parity(comparison):
    delta = comparison["median_final_accuracy_delta"]
    ok = abs(delta) < 0.01
    record("C2 final accuracy parity", ok, f"median AFL - uniform = {delta:+.4f} (need |.| < 0.01)")
    assert ok


def _fd_gradient(model, data, h=1e-6):
    theta = model.to_vector()
    out = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        f_up = math.fsum(per_example_losses(ModelParams.from_vector(up), data.features, data.labels)) / data.n
        f_down = math.fsum(per_example_losses(ModelParams.from_vector(down), data.features, data.labels)) / data.n
        out[i] = (f_up - f_down) / (2 * h)
    return out


def test_c03_gradient_matches_finite_differences():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        d, n = int(rng.integers(1, 9)), int(rng.integers(1, 17))
        model = ModelParams(rng.normal(size=d), rng.normal())
        data = ClientDataset(rng.normal(size=(n, d)), rng.integers(0, 2, size=n))
        fd = _fd_gradient(model, data)
        err = np.linalg.norm(gradient(model, data) - fd) / max(np.linalg.norm(fd), 1e-300)
        worst = max(worst, err)
    ok = worst < 1e-5
    record("C3 gradient vs central differences", ok, f"worst relative error {worst:.2e} over 100 cases (need < 1e-5)")
    assert ok


def test_c04_valuation_update_oracle():
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(1000):
        K = int(rng.integers(1, 30))
        current = int(rng.integers(0, 100))
        values = rng.normal(scale=5, size=K)
        rounds = rng.integers(0, current + 1, size=K)
        selected = {int(k) for k in np.flatnonzero(rng.random(K) < rng.random())}
        fresh = {k: float(rng.normal()) for k in selected}
        out = update_valuation_table(ValuationTable(values, rounds, current), selected, fresh, current + 1)
        naive_v = [fresh[k] if k in selected else float(values[k]) for k in range(K)]
        naive_r = [current if k in selected else int(rounds[k]) for k in range(K)]
        if out.values.tolist() != naive_v or out.rounds_computed.tolist() != naive_r or out.current_round != current + 1:
            mismatches += 1
    record("C4 valuation table vs naive case rule", mismatches == 0, f"{mismatches}/1000 mismatches")
    assert mismatches == 0


def test_c05_sampling_distribution_properties():
    rng = np.random.default_rng(5)
    worst_norm = worst_shift = 0.0
    monotone_failures = 0
    limits_exact = True
    for _ in range(1000):
        K = int(rng.integers(1, 50))
        v = rng.normal(scale=float(rng.uniform(0.1, 20)), size=K)
        alpha, eps = float(rng.uniform(0.01, 5)), float(rng.uniform(0, 1))
        table = ValuationTable(v, np.zeros(K, dtype=int), 0)
        p = to_sampling_distribution(table, SelectionPolicy("afl", alpha, eps, 1))
        if np.any(p < 0):
            worst_norm = math.inf
        worst_norm = max(worst_norm, abs(p.sum() - 1.0))
        shifted = to_sampling_distribution(v + rng.normal(scale=50), SelectionPolicy("afl", alpha, eps, 1))
        worst_shift = max(worst_shift, float(np.max(np.abs(p - shifted))))
        p0 = to_sampling_distribution(table, SelectionPolicy("afl", alpha, 0.0, 1))
        order = np.argsort(v)
        for a, b in zip(order[:-1], order[1:]):
            if v[b] > v[a] and not p0[b] > p0[a]:
                monotone_failures += 1
        uniform = np.full(K, 1.0 / K)
        limits_exact &= np.array_equal(to_sampling_distribution(table, SelectionPolicy("afl", alpha, 1.0, 1)), uniform)
        limits_exact &= np.array_equal(to_sampling_distribution(table, SelectionPolicy("afl", 1e-300, eps, 1)), uniform)
    ok = worst_norm <= 1e-12 and worst_shift <= 1e-12 and monotone_failures == 0 and limits_exact
    record(
        "C5 sampling distribution properties",
        ok,
        f"max |sum-1| {worst_norm:.1e}, max shift change {worst_shift:.1e}, "
        f"monotonicity failures {monotone_failures}, uniform limits exact {limits_exact}",
    )
    assert ok


def _exact_inclusion(probs, m):
    import itertools
    from fractions import Fraction

    probs = [Fraction(p) for p in probs]
    inc = [Fraction(0)] * len(probs)
    for seq in itertools.permutations(range(len(probs)), m):
        pr, left = Fraction(1), Fraction(1)
        for k in seq:
            pr *= probs[k] / left
            left -= probs[k]
        for k in seq:
            inc[k] += pr
    return [float(x) for x in inc]


def test_c06_without_replacement_sampling():
    probs, m, draws = [0.5, 0.3, 0.2], 2, 100_000
    expected = _exact_inclusion(probs, m)
    counts = np.zeros(3)
    for s in range(draws):
        counts[sample_clients(probs, m, seed=s)] += 1
    z = [(counts[k] / draws - expected[k]) / math.sqrt(expected[k] * (1 - expected[k]) / draws) for k in range(3)]
    ok = all(abs(v) < 3 for v in z)
    record("C6 sequential sampling vs enumeration", ok, "z-scores " + ", ".join(f"{v:+.2f}" for v in z) + " (need |z| < 3)")
    assert ok


def test_c07_count_sensitivity():
    rng = np.random.default_rng(7)
    worst = 0
    for _ in range(1000):
        n, d = int(rng.integers(1, 21)), int(rng.integers(1, 6))
        X, y = rng.normal(size=(n, d)), rng.integers(0, 2, size=n)
        model = ModelParams(rng.normal(scale=2, size=d), rng.normal())
        thr = float(rng.uniform(0.01, 3))
        base = count_high_loss_valuation(ClientDataset(X, y), model, thr)
        if n > 1 and rng.random() < 0.5:
            drop = int(rng.integers(n))
            keep = np.arange(n) != drop
            other = ClientDataset(X[keep], y[keep])
        else:
            other = ClientDataset(np.vstack([X, rng.normal(size=(1, d))]), np.append(y, rng.integers(0, 2)))
        worst = max(worst, abs(count_high_loss_valuation(other, model, thr) - base))
    record("C7 count valuation sensitivity", worst <= 1, f"largest change over 1000 neighbouring pairs = {worst} (need <= 1)")
    assert worst <= 1


def test_c08_laplace_mechanism():
    ps = (0.1, 0.25, 0.5, 0.75, 0.9)
    details, ok = [], True
    for i, b in enumerate((0.5, 1.0, 2.0)):
        draws = np.array([laplace_noise(b, seed=1_000_000 * (i + 1) + s) for s in range(100_000)])
        mad_err = abs(np.mean(np.abs(draws)) - b) / b
        analytic = [b * math.log(2 * p) if p < 0.5 else -b * math.log(2 - 2 * p) for p in ps]
        q_err = max(abs(e - a) / b for e, a in zip(np.quantile(draws, ps), analytic))
        ok &= mad_err < 0.02 and q_err < 0.02
        details.append(f"b={b}: MAD err {mad_err:.4f}, quantile err {q_err:.4f}")
    record("C8 Laplace mechanism", ok, "; ".join(details) + " (need < 0.02)")
    assert ok


def test_c09_minority_fraction_drives_valuation():
    rhos = []
    for seed in range(20):
        cfg = replace(SCENARIO, rounds=5, master_seed=seed)
        ds = generate(cfg.data_spec)
        model = run_experiment(cfg, ds).final_model
        values = [loss_valuation(c, model) for c in ds.clients]
        rhos.append(stats.spearmanr(ds.per_client_minority_fraction, values)[0])
    p = stats.ttest_1samp(rhos, 0.5, alternative="greater").pvalue
    ok = p < 0.05
    record(
        "C9 minority fraction vs valuation rank correlation",
        ok,
        f"mean Spearman {statistics.mean(rhos):.3f} over 20 seeds, one-sided p(mean > 0.5) = {p:.3f} (need < 0.05)",
    )
    assert ok


def test_c10_determinism(tmp_path):
    cfg = replace(SCENARIO, master_seed=3)
    a, b = to_json(run_experiment(cfg).to_dict()), to_json(run_experiment(cfg).to_dict())
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    for out in ("x", "y"):
        assert cli_main(["run", "--config", str(path), "--out", str(tmp_path / out)]) == 0
    same_cli = (tmp_path / "x" / "result.json").read_bytes() == (tmp_path / "y" / "result.json").read_bytes()
    ok = a == b and same_cli
    record("C10 byte-identical reruns", ok, f"in-process identical {a == b}, CLI identical {same_cli}")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
