"""Load-frequency sample pool: generation, frequency-stratified split, CSV persistence."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import PF
from .circuit import closed_form_caps_array, load_from_optimal_caps

POOL_HEADER = "f_hz,rl_ohm,xl_ohm,cp_opt_pf,cs_opt_pf,split"
SPLITS = ("train", "test")


class PoolFormatError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class LoadSample:
    sample_id: int
    f: float
    zl: complex
    cp_opt: float
    cs_opt: float
    split: str = "train"


@dataclass(frozen=True)
class GridSpec:
    """Optimal-capacitance and frequency lattice the pool is generated from.

    The default capacitance axis runs 1.0-20.5 pF (40 values) which, with 51
    frequencies, gives the 81,600-sample pool. ``GridSpec(cap_max=21 * PF)``
    gives the 41-value variant.
    """

    cap_min: float = 1.0 * PF
    cap_max: float = 20.5 * PF
    cap_step: float = 0.5 * PF
    f_min: float = 1.0e9
    f_max: float = 2.0e9
    f_step: float = 0.02e9
    train_fraction: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        _axis(self.cap_min, self.cap_max, self.cap_step, "capacitance")
        _axis(self.f_min, self.f_max, self.f_step, "frequency")

    def cap_values(self) -> np.ndarray:
        return _axis(self.cap_min, self.cap_max, self.cap_step, "capacitance")

    def frequencies(self) -> np.ndarray:
        return _axis(self.f_min, self.f_max, self.f_step, "frequency")


def _axis(lo: float, hi: float, step: float, name: str) -> np.ndarray:
    if not (lo > 0 and step > 0 and hi >= lo):
        raise ValueError(f"invalid {name} range [{lo}, {hi}] step {step}")
    span = (hi - lo) / step
    n = round(span)
    if abs(span - n) > 1e-9 * max(1.0, span):
        raise ValueError(f"{name} step {step} does not divide [{lo}, {hi}]")
    return lo + step * np.arange(n + 1)


def generate_pool(grid: GridSpec, rs: float = 50.0) -> list[LoadSample]:
    """One sample per (f, cp*, cs*) lattice tuple, f-major then cp then cs."""
    f, cp, cs = np.meshgrid(grid.frequencies(), grid.cap_values(), grid.cap_values(), indexing="ij")
    f, cp, cs = f.ravel(), cp.ravel(), cs.ravel()
    zl = load_from_optimal_caps(cp, cs, f, rs)
    return [
        LoadSample(i, float(f[i]), complex(zl[i]), float(cp[i]), float(cs[i]))
        for i in range(f.size)
    ]


def stratified_split(pool: list[LoadSample], grid: GridSpec) -> list[LoadSample]:
    """Tag each frequency group ``round(train_fraction * n)`` train, rest test.

    Groups are visited in ascending frequency with a single seeded generator,
    so the tags depend only on the pool contents and ``grid.seed``.
    """
    groups: dict[float, list[int]] = {}
    for i, s in enumerate(pool):
        groups.setdefault(s.f, []).append(i)
    if not groups:
        raise ValueError("cannot split an empty pool")
    rng = np.random.default_rng(grid.seed)
    tags = [""] * len(pool)
    for f in sorted(groups):
        members = groups[f]
        n_train = math.floor(grid.train_fraction * len(members) + 0.5)
        order = rng.permutation(len(members))
        for rank, j in enumerate(order):
            tags[members[j]] = "train" if rank < n_train else "test"
    return [replace(s, split=t) for s, t in zip(pool, tags)]


def split_pool(pool: list[LoadSample], split: str) -> list[LoadSample]:
    return [s for s in pool if s.split == split]


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def save_pool(pool: list[LoadSample], path) -> None:
    path = Path(path)
    lines = [POOL_HEADER]
    for s in pool:
        lines.append(",".join((
            _fmt(s.f), _fmt(s.zl.real), _fmt(s.zl.imag),
            _fmt(s.cp_opt / PF), _fmt(s.cs_opt / PF), s.split,
        )))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_pool(path, rs: float = 50.0, grid: GridSpec | None = None) -> list[LoadSample]:
    """Read a pool CSV and validate every row.

    Raises :class:`PoolFormatError` naming the first offending line (1-based,
    header is line 1).
    """
    text = Path(path).read_text()
    lines = text.split("\n")
    if not lines or lines[0].strip() != POOL_HEADER:
        raise PoolFormatError(f"line 1: expected header {POOL_HEADER!r}")
    if not text.endswith("\n"):
        raise PoolFormatError(f"line {len(lines)}: file is truncated (no trailing newline)")
    rows = lines[1:-1]
    n = len(rows)
    data = np.empty((n, 5))
    splits = []
    for i, line in enumerate(rows):
        parts = line.split(",")
        if len(parts) != 6:
            raise PoolFormatError(f"line {i + 2}: expected 6 fields, got {len(parts)}")
        try:
            data[i] = [float(p) for p in parts[:5]]
        except ValueError as exc:
            raise PoolFormatError(f"line {i + 2}: {exc}") from None
        if parts[5] not in SPLITS:
            raise PoolFormatError(f"line {i + 2}: unknown split {parts[5]!r}")
        splits.append(parts[5])

    f = data[:, 0]
    zl = data[:, 1] + 1j * data[:, 2]
    cp = data[:, 3] * PF
    cs = data[:, 4] * PF
    ok = np.isfinite(data).all(axis=1) & (f > 0) & (cp > 0) & (cs > 0) & (zl.real > 0)
    if grid is not None:
        tol = 1e-9
        ok &= (f >= grid.f_min * (1 - tol)) & (f <= grid.f_max * (1 + tol))
        for c in (cp, cs):
            ok &= (c >= grid.cap_min * (1 - tol)) & (c <= grid.cap_max * (1 + tol))
    cp_cf, cs_cf = closed_form_caps_array(zl, f, rs)
    with np.errstate(invalid="ignore"):
        ok &= np.abs(cp_cf - cp) <= 1e-9 * cp
        ok &= np.abs(cs_cf - cs) <= 1e-9 * cs
    bad = np.flatnonzero(~ok)
    if bad.size:
        i = int(bad[0])
        raise PoolFormatError(
            f"line {i + 2}: row {rows[i]!r} is not a valid matched-load sample"
        )
    return [
        LoadSample(i, float(f[i]), complex(zl[i]), float(cp[i]), float(cs[i]), splits[i])
        for i in range(n)
    ]
