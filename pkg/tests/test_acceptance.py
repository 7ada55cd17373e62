"""
Acceptance suite: one test per criterion, each printing a PASS/FAIL line
(also collected in the terminal summary).

Criteria 6, 7 and 10 train agents on the toy pool; expect several minutes
on a single CPU core.
"""

import csv
import math
import time
from collections import Counter, deque
from pathlib import Path

import numpy as np
import pytest

from lntune import PF
from lntune import agent as agent_mod
from lntune.agent import QAgent, TrainConfig, ddqn_target, train
from lntune.baselines import BaselineConfig, adam_tune, none_tune, sapso_tune
from lntune.circuit import (CircuitParams, closed_form_caps, gamma, gamma_magnitude_gradient,
                            load_from_optimal_caps)
from lntune.config import build_config
from lntune.dataset import GridSpec, generate_pool, split_pool, stratified_split
from lntune.env import reward
from lntune.evaluation import exploration_sweep, landscape_grid, run_agent
from lntune.nn import MlpSpec, backward, forward, init_weights, load_weights, predict, save_weights

DATA = Path(__file__).parent / "data"
TOY = build_config({}, toy=True)


@pytest.fixture(scope="module")
def full_pool():
    grid = GridSpec()
    return stratified_split(generate_pool(grid), grid)


@pytest.fixture(scope="module")
def toy_pool():
    return stratified_split(generate_pool(TOY.grid), TOY.grid)


@pytest.fixture(scope="module")
def toy_models(toy_pool):
    """Three 300-episode runs with the reference hyperparameters, seeds 0-2."""
    train_pool = split_pool(toy_pool, "train")
    out = []
    for seed in range(3):
        cfg = TrainConfig(seed=seed)
        start = time.perf_counter()
        weights, history = train(train_pool, TOY.env, cfg, MlpSpec())
        out.append((weights, history, time.perf_counter() - start))
    return out


def test_c01_physics_oracle(criterion):
    rng = np.random.default_rng(2024)
    caps = np.arange(1.0, 20.5 + 1e-9, 0.5)
    freqs = 1e9 + 0.02e9 * np.arange(51)
    start = time.perf_counter()
    worst, contained = 0.0, 0
    for _ in range(10_000):
        cp, cs = rng.choice(caps, 2) * PF
        f = float(rng.choice(freqs))
        zl = load_from_optimal_caps(cp, cs, f)
        sols = closed_form_caps(zl, f)
        for a, b in sols:
            worst = max(worst, abs(gamma(CircuitParams(a, b, f), zl)))
        contained += any(math.isclose(a, cp, rel_tol=1e-9) and math.isclose(b, cs, rel_tol=1e-9)
                         for a, b in sols)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-9 and contained == 10_000 and elapsed < 5.0
    criterion(1, ok, f"max |G| {worst:.2e}, contained {contained}/10000, {elapsed:.2f} s")
    assert ok


def test_c02_dataset_counts(criterion, full_pool):
    counts = Counter(s.split for s in full_pool)
    ok = (len(full_pool), counts["train"], counts["test"]) == (81_600, 48_960, 32_640)
    criterion(2, ok, f"{len(full_pool)} total, {counts['train']} train, {counts['test']} test")
    assert ok


def test_c03_reward_table(criterion):
    with open(DATA / "reward_table.csv") as fh:
        rows = list(csv.DictReader(fh))
    bad = [r for r in rows
           if reward(float(r["gamma_now"]), float(r["gamma_prev"]), int(r["k_step"]))
           != float(r["reward"])]
    ok = len(rows) >= 20 and not bad
    criterion(3, ok, f"{len(rows) - len(bad)}/{len(rows)} cases exact")
    assert ok


def _nn_fd_worst(n_cases: int) -> float:
    """Largest FD mismatch normalised by the 1e-4 relative / 1e-6 absolute budget."""
    rng = np.random.default_rng(7)
    spec = MlpSpec((6, 16, 16, 8), dropout=0.2)
    worst = 0.0
    for case in range(n_cases):
        w = init_weights(spec, case)
        for b in w.b:
            b[...] = rng.normal(scale=0.1, size=b.shape)
        x = rng.normal(size=(4, 6))
        actions = rng.integers(0, 8, 4)
        targets = rng.normal(size=4)
        cache = forward(w, x, np.random.default_rng(case))
        _, grads = backward(w, cache, actions, targets)
        layer = int(rng.integers(len(w.W)))
        p, g = (w.W[layer], grads.W[layer]) if rng.random() < 0.7 else (w.b[layer], grads.b[layer])
        flat, gflat = p.reshape(-1), g.reshape(-1)
        j = int(rng.integers(flat.size))

        def loss():
            h = x
            for i, (W, b) in enumerate(zip(w.W, w.b)):
                h = h @ W + b
                if i < len(w.W) - 1:
                    h = np.maximum(h, 0.0) * cache.masks[i]
            return np.mean((h[np.arange(4), actions] - targets) ** 2)

        old = flat[j]
        flat[j] = old + 1e-6
        up = loss()
        flat[j] = old - 1e-6
        down = loss()
        flat[j] = old
        fd = (up - down) / 2e-6
        worst = max(worst, abs(fd - gflat[j]) / max(1e-4 * abs(fd), 1e-6))
    return worst


def _circuit_fd_worst(n_cases: int) -> float:
    rng = np.random.default_rng(8)
    worst, done = 0.0, 0
    while done < n_cases:
        p = CircuitParams(rng.uniform(0.5, 21) * PF, rng.uniform(0.5, 21) * PF, rng.uniform(1e9, 2e9))
        zl = complex(rng.uniform(1, 49), rng.uniform(-50, 150))
        if abs(gamma(p, zl)) < 1e-3:
            continue
        exact = gamma_magnitude_gradient(p, zl)

        def mag(cp, cs):
            return abs(gamma(CircuitParams(cp, cs, p.f), zl))
        hp, hs = 1e-6 * p.cp, 1e-6 * p.cs
        fd = ((mag(p.cp + hp, p.cs) - mag(p.cp - hp, p.cs)) / (2 * hp),
              (mag(p.cp, p.cs + hs) - mag(p.cp, p.cs - hs)) / (2 * hs))
        scale = max(map(abs, exact))
        for e, d in zip(exact, fd):
            worst = max(worst, abs(e - d) / (1e-5 * max(abs(e), 1e-3 * scale)))
        done += 1
    return worst


def test_c04_gradient_checks(criterion):
    nn_worst = _nn_fd_worst(120)
    circ_worst = _circuit_fd_worst(120)
    ok = nn_worst <= 1.0 and circ_worst <= 1.0
    criterion(4, ok, f"worst error / budget: nn {nn_worst:.2e}, circuit {circ_worst:.2e} (120 cases each)")
    assert ok


def test_c05_ddqn_mechanics(criterion, monkeypatch):
    spec = MlpSpec((6, 8, 8, 8), dropout=0.2)
    problems = []

    # target value against a direct two-network evaluation
    for seed in range(20):
        online, target = init_weights(spec, 2 * seed), init_weights(spec, 2 * seed + 1)
        rng = np.random.default_rng(seed)
        s_next, r = rng.uniform(size=6), float(rng.normal())
        q_online = [float(v) for v in predict(online, s_next)]
        best = max(range(8), key=lambda a: (q_online[a], -a))
        oracle = r + 0.95 * float(predict(target, s_next)[best])
        if not math.isclose(ddqn_target(r, s_next, False, online, target, 0.95), oracle, rel_tol=1e-12):
            problems.append(f"target mismatch seed {seed}")
        if ddqn_target(r, s_next, True, online, target, 0.95) != r:
            problems.append(f"terminal bootstrapped seed {seed}")

    # randomized push / update / sync sequences
    for seq in range(30):
        rng = np.random.default_rng(100 + seq)
        cap = int(rng.integers(4, 20))
        cfg = TrainConfig(batch_size=4, buffer_capacity=cap)
        ag = QAgent(spec, cfg, *(np.random.default_rng([seq, k]) for k in range(3)))
        oracle = deque(maxlen=cap)
        counter = 0
        for _ in range(200):
            op = rng.choice(["push", "push", "update", "sync"])
            if op == "push":
                counter += 1
                ag.buffer.push(np.full(6, counter / 1000), int(rng.integers(8)), float(counter),
                               np.zeros(6), bool(rng.random() < 0.1))
                oracle.append(float(counter))
            elif op == "update" and len(ag.buffer) >= 4:
                before = ag.target.copy()
                ag.update()
                if not ag.target.equals(before):
                    problems.append(f"update touched target (seq {seq})")
            elif op == "sync":
                ag.sync_target()
                if not ag.target.equals(ag.online):
                    problems.append(f"sync mismatch (seq {seq})")
            if [t.r for t in ag.buffer.transitions()] != list(oracle):
                problems.append(f"FIFO mismatch (seq {seq})")
                break

    # sync cadence inside train(): every target_sync global steps
    seen = []
    original = agent_mod.QAgent.sync_target

    def spy(self):
        seen.append(len(self.buffer))
        original(self)
    monkeypatch.setattr(agent_mod.QAgent, "sync_target", spy)
    pool = split_pool(stratified_split(generate_pool(TOY.grid), TOY.grid), "train")
    hist = train(pool, TOY.env, TrainConfig(episodes=8, max_steps=60, batch_size=8, target_sync=25,
                                            seed=5), spec)[1]
    total = sum(h.steps for h in hist)
    expected = [k for k in range(25, total + 1, 25) if k >= 8]
    if seen != expected:
        problems.append(f"sync steps {seen} != {expected}")

    ok = not problems
    criterion(5, ok, "all invariants hold" if ok else "; ".join(problems[:3]))
    assert ok


def test_c06_toy_training(criterion, toy_pool, toy_models):
    test = split_pool(toy_pool, "test")
    rates, times = [], []
    for seed, (weights, _, elapsed) in enumerate(toy_models):
        res = run_agent(test, weights, 0.1, seed=seed, max_steps=200, env_config=TOY.env)
        rates.append(sum(r.success for r in res) / len(res))
        times.append(elapsed)
    passing = sum(r >= 0.85 for r in rates)
    ok = passing >= 2 and max(times) < 600
    detail = ", ".join(f"seed {i}: {100 * r:.1f}% in {t:.0f} s" for i, (r, t) in enumerate(zip(rates, times)))
    criterion(6, ok, f"{passing}/3 seeds >= 85% ({detail})")
    assert ok


def test_c07_exploration_trend(criterion, toy_pool, toy_models):
    weights = toy_models[0][0]
    test = split_pool(toy_pool, "test")
    wins, pairs = 0, []
    for seed in range(5):
        rows, _ = exploration_sweep(weights, test, [0.0, 0.2], seed=seed, env_config=TOY.env)
        pairs.append((rows[0].sd, rows[1].sd))
        wins += rows[1].sd <= rows[0].sd
    ok = wins >= 4
    criterion(7, ok, f"sd(0.2) <= sd(0) in {wins}/5 seeds; sd(0)={pairs[0][0]:.3g}, "
                     f"sd(0.2) range {min(p[1] for p in pairs):.3g}-{max(p[1] for p in pairs):.3g}")
    assert ok


def test_c08_landscape(criterion):
    caps = np.arange(0.5, 21.0 + 1e-9, 0.5) * PF
    lands = {}
    for f in (1e9, 2e9):
        lands[f] = landscape_grid(load_from_optimal_caps(11 * PF, 11 * PF, f), f, caps)
    argmins_ok = all(math.isclose(a, 11 * PF, rel_tol=1e-12) for land in lands.values()
                     for a in land.argmin)
    steeper = lands[2e9].max_steepness > lands[1e9].max_steepness
    ok = argmins_ok and steeper
    criterion(8, ok, f"argmin (11, 11) pF at both: {argmins_ok}; max steepness "
                     f"{lands[1e9].max_steepness * PF:.4f} vs {lands[2e9].max_steepness * PF:.4f} per pF")
    assert ok


def test_c09_baselines(criterion, full_pool):
    one_ghz = [s for s in full_pool if s.f == 1e9]
    pick = np.random.default_rng(0).choice(len(one_ghz), size=100, replace=False)
    samples = [one_ghz[i] for i in pick]
    sapso = sum(sapso_tune(s, BaselineConfig(method="sapso")).success for s in samples)
    adam = sum(adam_tune(s, BaselineConfig(method="adam")).success for s in samples)
    none_below = sum(none_tune(s).final_gamma < 0.2 for s in full_pool)
    ok = sapso >= 95 and adam >= 95 and none_below == 0
    criterion(9, ok, f"SAPSO {sapso}/100, Adam {adam}/100, none below 0.2: {none_below}/{len(full_pool)}")
    assert ok


def test_c10_determinism(criterion, toy_pool, tmp_path):
    train_pool = split_pool(toy_pool, "train")
    test = split_pool(toy_pool, "test")[:60]
    cfg = TrainConfig(episodes=15, seed=11)
    runs = []
    for k in range(2):
        weights, hist = train(train_pool, TOY.env, cfg, MlpSpec())
        path = tmp_path / f"m{k}.lntq"
        save_weights(weights, agent_mod.norm_constants(TOY.env), path, actions=agent_mod.action_table())
        loaded = load_weights(path)[0]
        res = run_agent(test, loaded, 0.0, seed=0, env_config=TOY.env)
        runs.append(([h.csv_row() for h in hist], path.read_bytes(),
                     [(r.sample_id, r.final_gamma, r.steps, r.final_cp, r.final_cs) for r in res]))
    same_log = runs[0][0] == runs[1][0]
    same_model = runs[0][1] == runs[1][1]
    same_eval = runs[0][2] == runs[1][2]
    ok = same_log and same_model and same_eval
    criterion(10, ok, f"log identical: {same_log}, model bytes identical: {same_model}, "
                      f"eval identical: {same_eval}")
    assert ok
