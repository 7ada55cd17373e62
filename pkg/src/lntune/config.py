"""
Run configuration: TOML file, presets and flag overrides.

Capacitances are given in pF and frequencies in Hz. Every key is optional;
missing keys keep the defaults below, which reproduce the reference setup.

.. code-block:: toml

    seed = 0

    [grid]              # optimal-capacitance / frequency lattice of the pool
    cap_min_pf = 1.0
    cap_max_pf = 20.5
    cap_step_pf = 0.5
    f_min_hz = 1.0e9
    f_max_hz = 2.0e9
    f_step_hz = 2.0e7
    train_fraction = 0.6

    [env]
    cap_min_pf = 0.5
    cap_max_pf = 21.0
    delta_pf = 0.5
    cap_init_pf = 11.0
    threshold = 0.01
    max_steps_train = 1000
    max_steps_test = 200

    [train]
    episodes = 300
    gamma = 0.95
    batch_size = 128
    target_sync = 5000
    buffer_capacity = 50000
    lr = 5e-4
    eps_start = 1.0
    eps_min = 0.05
    eps_decay = 1e-5
    hidden = [256, 256]
    dropout = 0.2

    [baselines]
    max_iters = 200
    [baselines.ga]
    population = 20
    [baselines.sapso]
    particles = 20
    [baselines.adam]
    lr = 0.1

    [paths]
    pool = "pool.csv"
    model = "model.lntq"
    train_log = "train_log.csv"
    results = "results.csv"
    reports = "report"

Relative paths are resolved against the config file's directory (or the
working directory when no file is used).
"""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import PF
from .agent import EpsSchedule, TrainConfig
from .baselines import AdamConfig, BaselineConfig, GAConfig, SAPSOConfig
from .dataset import GridSpec
from .env import EnvConfig
from .nn import MlpSpec

CONFIG_ENV_VAR = "LNTUNE_CONFIG"


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass
class Paths:
    pool: Path = Path("pool.csv")
    model: Path = Path("model.lntq")
    train_log: Path = Path("train_log.csv")
    results: Path = Path("results.csv")
    reports: Path = Path("report")


@dataclass
class RunConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    net: MlpSpec = field(default_factory=MlpSpec)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    paths: Paths = field(default_factory=Paths)
    seed: int = 0


TOY_GRID = dict(cap_min_pf=5.0, cap_max_pf=17.0, cap_step_pf=1.5,
                f_min_hz=1.0e9, f_max_hz=2.0e9, f_step_hz=1.0e8)

_SECTIONS = {
    "grid": {"cap_min_pf", "cap_max_pf", "cap_step_pf", "f_min_hz", "f_max_hz", "f_step_hz",
             "train_fraction"},
    "env": {"cap_min_pf", "cap_max_pf", "delta_pf", "cap_init_pf", "threshold",
            "max_steps_train", "max_steps_test"},
    "train": {"episodes", "gamma", "batch_size", "target_sync", "buffer_capacity", "lr",
              "eps_start", "eps_min", "eps_decay", "hidden", "dropout"},
    "baselines": {"max_iters", "ga", "sapso", "adam"},
    "paths": {"pool", "model", "train_log", "results", "reports"},
}


def _check_keys(section: str, table: dict, allowed: set) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"[{section}]: unknown key(s) {', '.join(unknown)}")


def _sub(table: dict, cls, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(section, table, names)
    return cls(**table)


def build_config(data: dict, base_dir: Path | None = None, toy: bool = False) -> RunConfig:
    """Turn a parsed TOML mapping into a validated :class:`RunConfig`."""
    _check_keys("top level", data, set(_SECTIONS) | {"seed"})
    for name, allowed in _SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        _check_keys(name, section, allowed)
    seed = int(data.get("seed", 0))
    g = {**(TOY_GRID if toy else {}), **data.get("grid", {})}
    e = data.get("env", {})
    t = data.get("train", {})
    b = data.get("baselines", {})
    p = data.get("paths", {})
    base_dir = base_dir or Path.cwd()
    try:
        env = EnvConfig(
            cap_min=e.get("cap_min_pf", 0.5) * PF,
            cap_max=e.get("cap_max_pf", 21.0) * PF,
            delta_c=e.get("delta_pf", 0.5) * PF,
            cap_init=e.get("cap_init_pf", 11.0) * PF,
            eps_threshold=e.get("threshold", 0.01),
            max_steps_train=e.get("max_steps_train", 1000),
            max_steps_test=e.get("max_steps_test", 200),
        )
        grid = GridSpec(
            cap_min=g.get("cap_min_pf", 1.0) * PF,
            cap_max=g.get("cap_max_pf", 20.5) * PF,
            cap_step=g.get("cap_step_pf", 0.5) * PF,
            f_min=g.get("f_min_hz", 1.0e9),
            f_max=g.get("f_max_hz", 2.0e9),
            f_step=g.get("f_step_hz", 2.0e7),
            train_fraction=g.get("train_fraction", 0.6),
            seed=seed,
        )
        train = TrainConfig(
            episodes=t.get("episodes", 300),
            gamma=t.get("gamma", 0.95),
            batch_size=t.get("batch_size", 128),
            target_sync=t.get("target_sync", 5000),
            max_steps=env.max_steps_train,
            buffer_capacity=t.get("buffer_capacity", 50_000),
            lr=t.get("lr", 5e-4),
            eps=EpsSchedule(t.get("eps_start", 1.0), t.get("eps_min", 0.05),
                            t.get("eps_decay", 1e-5)),
            seed=seed,
        )
        hidden = tuple(int(h) for h in t.get("hidden", (256, 256)))
        net = MlpSpec((6, *hidden, 8), dropout=t.get("dropout", 0.2))
        baselines = BaselineConfig(
            max_iters=b.get("max_iters", 200),
            threshold=env.eps_threshold,
            cap_min_pf=env.cap_min / PF,
            cap_max_pf=env.cap_max / PF,
            step_pf=env.delta_c / PF,
            seed=seed,
            ga=_sub(b.get("ga", {}), GAConfig, "baselines.ga"),
            sapso=_sub(b.get("sapso", {}), SAPSOConfig, "baselines.sapso"),
            adam=_sub(b.get("adam", {}), AdamConfig, "baselines.adam"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    paths = Paths(**{k: base_dir / v for k, v in {**dataclasses.asdict(Paths()), **p}.items()})
    return RunConfig(grid, env, train, net, baselines, paths, seed)


def load_config(path=None, toy: bool = False) -> RunConfig:
    """Read ``path``, else the file named by ``LNTUNE_CONFIG``, else use defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    if path is None:
        return build_config({}, toy=toy)
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return build_config(data, base_dir=path.parent, toy=toy)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    """Apply command-line overrides; ``None`` values are ignored."""
    kw = {k: v for k, v in kw.items() if v is not None}
    if "seed" in kw:
        s = kw.pop("seed")
        cfg = dataclasses.replace(
            cfg, seed=s, grid=dataclasses.replace(cfg.grid, seed=s),
            train=dataclasses.replace(cfg.train, seed=s),
            baselines=dataclasses.replace(cfg.baselines, seed=s))
    if "episodes" in kw:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, episodes=kw.pop("episodes")))
    if "max_iters" in kw:
        cfg = dataclasses.replace(
            cfg, baselines=dataclasses.replace(cfg.baselines, max_iters=kw.pop("max_iters")))
    path_keys = {k: Path(kw.pop(k)) for k in list(kw) if k in dataclasses.asdict(cfg.paths)}
    if path_keys:
        cfg = dataclasses.replace(cfg, paths=dataclasses.replace(cfg.paths, **path_keys))
    if kw:
        raise ConfigError(f"unsupported override(s): {', '.join(sorted(kw))}")
    return cfg


def config_echo(cfg: RunConfig) -> dict:
    """JSON-friendly echo of the config for manifests."""
    def conv(x):
        if isinstance(x, Path):
            return str(x)
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [conv(v) for v in x]
        return x
    return conv(dataclasses.asdict(cfg))
