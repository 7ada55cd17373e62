"""
Reference optimisers that minimise ``|Gamma(cp, cs)|`` for a single load.

GA works on the 0.5 pF tuning lattice, SAPSO and Adam in continuous pF
space. One iteration is one generation, one swarm update or one gradient
step. Every method checks the threshold before its first iteration, so a
start that is already matched costs zero iterations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import PF
from .circuit import CircuitDomainError, CircuitParams, gamma_magnitude, gamma_magnitude_gradient
from .dataset import LoadSample
from .records import TuningResult

METHODS = ("ga", "sapso", "adam", "none")


@dataclass(frozen=True)
class GAConfig:
    population: int = 20
    crossover: float = 0.8
    mutation: float = 0.1
    tournament: int = 2
    elite: int = 1


@dataclass(frozen=True)
class SAPSOConfig:
    particles: int = 20
    c1: float = 1.5
    c2: float = 1.5
    cooling: float = 0.99
    w_start: float = 0.9
    w_end: float = 0.4
    vmax_fraction: float = 0.1


@dataclass(frozen=True)
class AdamConfig:
    init_pf: float = 11.0
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    snap_to_lattice: bool = False


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "sapso"
    max_iters: int = 200
    threshold: float = 0.01
    cap_min_pf: float = 0.5
    cap_max_pf: float = 21.0
    step_pf: float = 0.5
    rs: float = 50.0
    seed: int = 0
    ga: GAConfig = field(default_factory=GAConfig)
    sapso: SAPSOConfig = field(default_factory=SAPSOConfig)
    adam: AdamConfig = field(default_factory=AdamConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        for p in (self.ga.crossover, self.ga.mutation):
            if not 0.0 <= p <= 1.0:
                raise ValueError("GA probabilities must lie in [0, 1]")
        if self.max_iters <= 0 or self.ga.population <= 0 or self.sapso.particles <= 0:
            raise ValueError("iteration and population counts must be positive")


def _objective(sample: LoadSample, cfg: BaselineConfig):
    def f(cp_pf, cs_pf):
        return gamma_magnitude(np.asarray(cp_pf) * PF, np.asarray(cs_pf) * PF,
                               sample.f, sample.zl, cfg.rs)
    return f


def _rng(cfg: BaselineConfig, sample: LoadSample) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, sample.sample_id])


def _result(sample, method, g, iters, start, cp_pf, cs_pf, cfg, stalled=False):
    return TuningResult(sample.sample_id, method, 0.0, float(g), int(iters),
                        bool(g < cfg.threshold), time.perf_counter() - start,
                        float(cp_pf) * PF, float(cs_pf) * PF, stalled)


def ga_tune(sample: LoadSample, cfg: BaselineConfig, init_population=None) -> TuningResult:
    """Integer-coded GA over lattice indices of (cp, cs).

    Tournament selection, uniform crossover, +/-1 lattice-step mutation per
    gene and elitism. ``init_population`` (an ``(n, 2)`` array of pF values)
    overrides the random first generation.
    """
    ga = cfg.ga
    rng = _rng(cfg, sample)
    start = time.perf_counter()
    n_levels = round((cfg.cap_max_pf - cfg.cap_min_pf) / cfg.step_pf) + 1
    to_pf = lambda idx: cfg.cap_min_pf + cfg.step_pf * idx  # noqa: E731
    obj = _objective(sample, cfg)

    if init_population is None:
        pop = rng.integers(0, n_levels, size=(ga.population, 2))
    else:
        pop = np.rint((np.asarray(init_population, dtype=float) - cfg.cap_min_pf) / cfg.step_pf)
        pop = np.clip(pop.astype(int), 0, n_levels - 1)
    fit = obj(to_pf(pop[:, 0]), to_pf(pop[:, 1]))
    best = int(np.argmin(fit))
    best_x, best_g = pop[best].copy(), float(fit[best])

    it = 0
    while best_g >= cfg.threshold and it < cfg.max_iters:
        it += 1
        n = pop.shape[0]
        order = np.argsort(fit, kind="stable")
        children = [pop[i].copy() for i in order[:ga.elite]]
        while len(children) < n:
            parents = []
            for _ in range(2):
                cand = rng.integers(0, n, size=ga.tournament)
                parents.append(pop[cand[np.argmin(fit[cand])]])
            c1, c2 = parents[0].copy(), parents[1].copy()
            if rng.random() < ga.crossover:
                swap = rng.random(2) < 0.5
                c1[swap], c2[swap] = parents[1][swap], parents[0][swap]
            for child in (c1, c2):
                mutate = rng.random(2) < ga.mutation
                child += mutate * rng.choice((-1, 1), size=2)
                np.clip(child, 0, n_levels - 1, out=child)
                if len(children) < n:
                    children.append(child)
        pop = np.array(children)
        fit = obj(to_pf(pop[:, 0]), to_pf(pop[:, 1]))
        i = int(np.argmin(fit))
        if fit[i] < best_g:
            best_x, best_g = pop[i].copy(), float(fit[i])
    return _result(sample, "ga", best_g, it, start, to_pf(best_x[0]), to_pf(best_x[1]), cfg)


def sapso_tune(sample: LoadSample, cfg: BaselineConfig, init_positions=None,
               trace: list | None = None) -> TuningResult:
    """Particle swarm with simulated-annealing acceptance of personal bests.

    Inertia decays linearly from ``w_start`` to ``w_end`` over ``max_iters``.
    A particle's new position replaces its personal best when better, or when
    worse by ``delta`` with probability ``exp(-delta / T)``. The global best is
    the best point ever evaluated, so it never gets worse. ``T`` starts at the
    spread (standard deviation) of the first swarm's ``|Gamma|`` and is
    multiplied by ``cooling`` after every iteration. ``trace`` (if given)
    receives the temperature after each iteration.
    """
    ps = cfg.sapso
    rng = _rng(cfg, sample)
    start = time.perf_counter()
    lo, hi = cfg.cap_min_pf, cfg.cap_max_pf
    vmax = ps.vmax_fraction * (hi - lo)
    obj = _objective(sample, cfg)

    if init_positions is None:
        x = rng.uniform(lo, hi, size=(ps.particles, 2))
    else:
        x = np.clip(np.asarray(init_positions, dtype=float), lo, hi)
    v = np.zeros_like(x)
    fx = obj(x[:, 0], x[:, 1])
    pbest, pbest_f = x.copy(), fx.copy()
    g = int(np.argmin(fx))
    gbest, gbest_f = x[g].copy(), float(fx[g])
    temp = float(np.std(fx))

    it = 0
    while gbest_f >= cfg.threshold and it < cfg.max_iters:
        it += 1
        w = ps.w_start - (ps.w_start - ps.w_end) * (it - 1) / max(cfg.max_iters - 1, 1)
        r1 = rng.random(x.shape)
        r2 = rng.random(x.shape)
        v = w * v + ps.c1 * r1 * (pbest - x) + ps.c2 * r2 * (gbest - x)
        np.clip(v, -vmax, vmax, out=v)
        x = x + v
        hit = (x < lo) | (x > hi)
        x = np.clip(x, lo, hi)
        v[hit] = 0.0
        fx = obj(x[:, 0], x[:, 1])

        delta = fx - pbest_f
        u = rng.random(len(fx))
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            p_accept = np.exp(-delta / temp) if temp > 0 else np.zeros_like(delta)
        accept = (delta < 0) | (u < p_accept)
        pbest[accept] = x[accept]
        pbest_f[accept] = fx[accept]

        i = int(np.argmin(fx))
        if fx[i] < gbest_f:
            gbest, gbest_f = x[i].copy(), float(fx[i])
        temp *= ps.cooling
        if trace is not None:
            trace.append(temp)
    return _result(sample, "sapso", gbest_f, it, start, gbest[0], gbest[1], cfg)


def adam_tune(sample: LoadSample, cfg: BaselineConfig) -> TuningResult:
    """Adam descent on ``|Gamma|`` with capacitances in pF, clipped to the box.

    The reported point is the running best. The run stops early and is
    flagged ``stalled`` when the gradient vanishes before the threshold.
    """
    ac = cfg.adam
    start = time.perf_counter()
    lo, hi = cfg.cap_min_pf, cfg.cap_max_pf
    x = np.array([ac.init_pf, ac.init_pf], dtype=float)
    m = np.zeros(2)
    v = np.zeros(2)
    obj = _objective(sample, cfg)
    g_now = float(obj(x[0], x[1]))
    best_x, best_g = x.copy(), g_now
    it = 0
    stalled = False
    while best_g >= cfg.threshold and it < cfg.max_iters:
        try:
            grad_f = gamma_magnitude_gradient(CircuitParams(x[0] * PF, x[1] * PF, sample.f, cfg.rs),
                                              sample.zl)
        except CircuitDomainError:
            break
        grad = np.array(grad_f) * PF  # d|G|/dC in 1/pF
        if math.hypot(*grad) < 1e-12:
            stalled = True
            break
        it += 1
        m = ac.beta1 * m + (1 - ac.beta1) * grad
        v = ac.beta2 * v + (1 - ac.beta2) * grad * grad
        m_hat = m / (1 - ac.beta1 ** it)
        v_hat = v / (1 - ac.beta2 ** it)
        x = np.clip(x - ac.lr * m_hat / (np.sqrt(v_hat) + ac.eps), lo, hi)
        g_now = float(obj(x[0], x[1]))
        if g_now < best_g:
            best_x, best_g = x.copy(), g_now
    cp, cs = best_x
    if ac.snap_to_lattice:
        snap = lambda c: lo + cfg.step_pf * round((c - lo) / cfg.step_pf)  # noqa: E731
        cp, cs = snap(cp), snap(cs)
        best_g = float(obj(cp, cs))
    return _result(sample, "adam", best_g, it, start, cp, cs, cfg, stalled)


def none_tune(sample: LoadSample, rs: float = 50.0) -> TuningResult:
    """The bare load with no matching network."""
    start = time.perf_counter()
    g = abs((sample.zl - rs) / (sample.zl + rs))
    return TuningResult(sample.sample_id, "none", 0.0, g, 0, g < 0.01,
                        time.perf_counter() - start, math.nan, math.nan)


def run_baseline(sample: LoadSample, cfg: BaselineConfig) -> TuningResult:
    if cfg.method == "ga":
        return ga_tune(sample, cfg)
    if cfg.method == "sapso":
        return sapso_tune(sample, cfg)
    if cfg.method == "adam":
        return adam_tune(sample, cfg)
    return none_tune(sample, cfg.rs)
