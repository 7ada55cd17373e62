"""
Statistics and report files for tuning results.

Results CSV columns::

    sample_id,method,eps_test,final_gamma,steps,success,wall_time_s,final_cp_pf,final_cs_pf

``wall_time_s`` is the time spent inside the tuning loop only; pool and
model I/O are excluded. Capacitances of the bare-load tuner are written as
``nan``.

:func:`write_report` produces, in one directory:

``summary.json``
    ``{"groups": {label: {...}}, "exploration": [...]}``. Each group holds
    ``n``, ``mean``, ``median``, ``sd`` of final ``|Gamma|``,
    ``success_rate`` (< 0.01), ``below_0p2`` (< 0.2), ``mean_steps``,
    ``sd_steps``, ``mean_time_s``, ``total_time_s`` and, when capacitances
    are available, ``cp_err_below_1pct`` and ``cs_err_below_1pct``.
``summary.csv``
    The same statistics as aligned rows, one per group.
``ecdf_<label>.csv``
    ``final_gamma,fraction`` for every distinct value.
``per_frequency.csv``
    ``label,f_hz,n,mean_gamma,sd_gamma,mean_steps,sd_steps``.
``cap_error_ecdf_<label>.csv``
    ``rel_err,cp_fraction,cs_fraction`` over the union of error values.
``exploration.csv``
    Agent rows grouped by ``eps_test``: ``eps_test,n,mean,sd,success_pct,total_time_s``.

Groups are labelled by method, with ``agent@<eps>`` for the agent.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import PF
from .agent import tune
from .circuit import gamma_magnitude
from .dataset import LoadSample
from .records import SUCCESS_THRESHOLD, TuningResult

RESULTS_HEADER = ("sample_id", "method", "eps_test", "final_gamma", "steps", "success",
                  "wall_time_s", "final_cp_pf", "final_cs_pf")
DEFAULT_EPS_LIST = (0.0, 0.05, 0.1, 0.2, 0.3)


class ResultsFormatError(ValueError):
    """A results CSV that cannot be parsed."""


# ---------------------------------------------------------------- statistics

@dataclass(frozen=True)
class Ecdf:
    """Right-continuous empirical CDF."""

    values: np.ndarray  # sorted

    def __call__(self, x):
        return np.searchsorted(self.values, x, side="right") / len(self.values)

    def points(self) -> list[tuple[float, float]]:
        uniq, counts = np.unique(self.values, return_counts=True)
        return list(zip(uniq.tolist(), (np.cumsum(counts) / len(self.values)).tolist()))


def ecdf(values) -> Ecdf:
    arr = np.sort(np.asarray(values, dtype=float).ravel())
    if arr.size == 0:
        raise ValueError("ECDF of an empty sample")
    if np.isnan(arr).any():
        raise ValueError("ECDF input contains NaN")
    return Ecdf(arr)


def ecdf_at(values, x) -> float:
    return float(ecdf(values)(x))


def summary_stats(values) -> tuple[float, float, float]:
    """Mean, median and population SD (divisor n)."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("no values to summarise")
    # shifting by the first value keeps constant inputs exact
    d = arr - arr[0]
    return float(arr[0] + d.mean()), float(np.median(arr)), float(d.std())


@dataclass(frozen=True)
class FrequencyStats:
    f: float
    mean_gamma: float
    sd_gamma: float
    mean_steps: float
    sd_steps: float
    n: int


def per_frequency_stats(results: list[TuningResult], freqs) -> list[FrequencyStats]:
    """Group by exact frequency, ascending. ``freqs`` maps sample id to Hz."""
    groups: dict[float, list[TuningResult]] = {}
    for r in results:
        groups.setdefault(float(freqs[r.sample_id]), []).append(r)
    out = []
    for f in sorted(groups):
        g_mean, _, g_sd = summary_stats([r.final_gamma for r in groups[f]])
        k_mean, _, k_sd = summary_stats([r.steps for r in groups[f]])
        out.append(FrequencyStats(f, g_mean, g_sd, k_mean, k_sd, len(groups[f])))
    return out


def cap_relative_errors(results: list[TuningResult], pool) -> tuple[np.ndarray, np.ndarray]:
    """``|final - optimal| / optimal`` per capacitor; results without caps are skipped."""
    by_id = pool if isinstance(pool, dict) else {s.sample_id: s for s in pool}
    cp_err, cs_err = [], []
    for r in results:
        if math.isnan(r.final_cp) or math.isnan(r.final_cs):
            continue
        s = by_id[r.sample_id]
        assert s.cp_opt > 0 and s.cs_opt > 0, "optimal capacitances must be positive"
        cp_err.append(abs(r.final_cp - s.cp_opt) / s.cp_opt)
        cs_err.append(abs(r.final_cs - s.cs_opt) / s.cs_opt)
    return np.array(cp_err), np.array(cs_err)


def cap_error_stats(results: list[TuningResult], pool) -> tuple[Ecdf, Ecdf]:
    cp_err, cs_err = cap_relative_errors(results, pool)
    return ecdf(cp_err), ecdf(cs_err)


@dataclass(frozen=True)
class Landscape:
    cp: np.ndarray
    cs: np.ndarray
    gamma: np.ndarray  # gamma[i, j] at (cp[i], cs[j])
    argmin: tuple[float, float]
    max_steepness: float  # largest |d|Gamma|| per farad between lattice neighbours


def landscape_grid(zl: complex, f: float, caps, rs: float = 50.0) -> Landscape:
    caps = np.asarray(caps, dtype=float)
    cp, cs = np.meshgrid(caps, caps, indexing="ij")
    g = gamma_magnitude(cp, cs, f, zl, rs)
    i, j = np.unravel_index(int(np.argmin(g)), g.shape)
    step = np.diff(caps)
    d_cp = np.abs(np.diff(g, axis=0)) / step[:, None]
    d_cs = np.abs(np.diff(g, axis=1)) / step[None, :]
    steep = float(max(d_cp.max(initial=0.0), d_cs.max(initial=0.0)))
    return Landscape(caps, caps, g, (float(caps[i]), float(caps[j])), steep)


# ------------------------------------------------------------ exploration

def _tune_chunk(args):
    samples, weights, eps, eps_index, seed, max_steps, env_config = args
    out = []
    for s in samples:
        rng = np.random.default_rng([seed, eps_index, s.sample_id])
        out.append(tune(s, weights, eps, max_steps, rng, env_config)[0])
    return out


def run_agent(pool: list[LoadSample], weights, eps: float, seed: int = 0, eps_index: int = 0,
              max_steps: int = 200, env_config=None, jobs: int = 1) -> list[TuningResult]:
    """Tune every sample; each sample gets its own stream keyed on (seed, eps_index, id)."""
    if jobs <= 1 or len(pool) < 2:
        return _tune_chunk((pool, weights, eps, eps_index, seed, max_steps, env_config))
    from concurrent.futures import ProcessPoolExecutor

    chunks = [pool[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(jobs) as ex:
        parts = list(ex.map(_tune_chunk, [(c, weights, eps, eps_index, seed, max_steps, env_config)
                                          for c in chunks]))
    # undo the round-robin split so results follow pool order
    out = [None] * len(pool)
    for i, part in enumerate(parts):
        out[i::jobs] = part
    return out


@dataclass(frozen=True)
class ExplorationRow:
    eps_test: float
    n: int
    mean: float
    sd: float
    success_pct: float
    total_time_s: float


def exploration_row(eps: float, results: list[TuningResult]) -> ExplorationRow:
    g = [r.final_gamma for r in results]
    mean, _, sd = summary_stats(g)
    return ExplorationRow(eps, len(g), mean, sd,
                          100.0 * sum(r.success for r in results) / len(results),
                          sum(r.wall_time for r in results))


def exploration_sweep(weights, pool_test: list[LoadSample], eps_list=DEFAULT_EPS_LIST,
                      seed: int = 0, max_steps: int = 200, env_config=None,
                      jobs: int = 1) -> tuple[list[ExplorationRow], list[TuningResult]]:
    """Evaluate the agent at each ``eps_test``; rows follow the order of ``eps_list``."""
    if not pool_test:
        raise ValueError("test pool is empty")
    rows, all_results = [], []
    for k, eps in enumerate(eps_list):
        res = run_agent(pool_test, weights, float(eps), seed, k, max_steps, env_config, jobs)
        rows.append(exploration_row(float(eps), res))
        all_results.extend(res)
    return rows, all_results


# --------------------------------------------------------------- file I/O

def _num(x: float) -> str:
    return repr(float(x))


def _result_row(r: TuningResult) -> list[str]:
    return [str(r.sample_id), r.method, _num(r.eps_test), _num(r.final_gamma), str(r.steps),
            str(int(r.success)), _num(r.wall_time), _num(r.final_cp / PF), _num(r.final_cs / PF)]


def write_results(results: list[TuningResult], path, append: bool = False) -> None:
    """Write (or append to) a results CSV; appends keep the existing header."""
    path = Path(path)
    existing = ""
    if append and path.exists():
        existing = path.read_text()
        if existing and not existing.startswith(",".join(RESULTS_HEADER)):
            raise ResultsFormatError(f"{path}: not a results file")
    lines = [] if existing else [",".join(RESULTS_HEADER)]
    lines += [",".join(_result_row(r)) for r in results]
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(existing + "\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_results(path) -> list[TuningResult]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RESULTS_HEADER:
            raise ResultsFormatError(f"{path}: line 1: unexpected header")
        for lineno, row in enumerate(reader, start=2):
            try:
                sid, method, eps, g, steps, ok, wt, cp, cs = row
                out.append(TuningResult(int(sid), method, float(eps), float(g), int(steps),
                                        ok == "1", float(wt), float(cp) * PF, float(cs) * PF))
            except ValueError as exc:
                raise ResultsFormatError(f"{path}: line {lineno}: {exc}") from None
    return out


# ---------------------------------------------------------------- reports

def group_label(r: TuningResult) -> str:
    return f"agent@{r.eps_test:g}" if r.method == "agent" else r.method


def group_results(results: list[TuningResult]) -> dict[str, list[TuningResult]]:
    groups: dict[str, list[TuningResult]] = {}
    for r in results:
        groups.setdefault(group_label(r), []).append(r)
    return groups


def group_summary(results: list[TuningResult], pool_by_id=None) -> dict:
    g = [r.final_gamma for r in results]
    mean, median, sd = summary_stats(g)
    _, _, sd_steps = summary_stats([r.steps for r in results])
    out = {
        "n": len(g),
        "mean": mean,
        "median": median,
        "sd": sd,
        "success_rate": sum(x < SUCCESS_THRESHOLD for x in g) / len(g),
        "below_0p2": sum(x < 0.2 for x in g) / len(g),
        "mean_steps": summary_stats([r.steps for r in results])[0],
        "sd_steps": sd_steps,
        "mean_time_s": float(np.mean([r.wall_time for r in results])),
        "total_time_s": float(sum(r.wall_time for r in results)),
    }
    if pool_by_id is not None:
        cp_err, cs_err = cap_relative_errors(results, pool_by_id)
        if cp_err.size:
            out["cp_err_below_1pct"] = float(np.mean(cp_err < 0.01))
            out["cs_err_below_1pct"] = float(np.mean(cs_err < 0.01))
    return out


def format_summary_table(summaries: dict[str, dict]) -> str:
    """Aligned plain-text comparison, one row per group."""
    cols = ("n", "mean", "median", "sd", "success_rate", "below_0p2", "mean_steps", "mean_time_s")
    width = max([len("method")] + [len(k) for k in summaries])
    head = "method".ljust(width) + "".join(f"{c:>14}" for c in cols)
    lines = [head]
    for label, s in summaries.items():
        cells = [f"{s['n']:>14d}"] + [f"{s[c]:>14.5f}" for c in cols[1:]]
        lines.append(label.ljust(width) + "".join(cells))
    return "\n".join(lines)


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    return "\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n"


def write_report(results: list[TuningResult], out_dir, pool: list[LoadSample] | None = None) -> dict:
    """Write the report bundle and return the summary dictionary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not results:
        raise ValueError("no results to report")
    pool_by_id = {s.sample_id: s for s in pool} if pool is not None else None
    groups = group_results(results)
    summaries = {label: group_summary(rs, pool_by_id) for label, rs in groups.items()}

    for label, rs in groups.items():
        pts = ecdf([r.final_gamma for r in rs]).points()
        _write_text(out_dir / f"ecdf_{label}.csv",
                    _csv_text(("final_gamma", "fraction"), [(_num(x), _num(y)) for x, y in pts]))

    if pool_by_id is not None:
        freq_rows = []
        for label, rs in groups.items():
            for fs in per_frequency_stats(rs, {k: s.f for k, s in pool_by_id.items()}):
                freq_rows.append((label, _num(fs.f), fs.n, _num(fs.mean_gamma), _num(fs.sd_gamma),
                                  _num(fs.mean_steps), _num(fs.sd_steps)))
        _write_text(out_dir / "per_frequency.csv",
                    _csv_text(("label", "f_hz", "n", "mean_gamma", "sd_gamma", "mean_steps",
                               "sd_steps"), freq_rows))
        for label, rs in groups.items():
            cp_err, cs_err = cap_relative_errors(rs, pool_by_id)
            if cp_err.size == 0:
                continue
            cp_e, cs_e = ecdf(cp_err), ecdf(cs_err)
            xs = np.unique(np.concatenate([cp_err, cs_err]))
            _write_text(out_dir / f"cap_error_ecdf_{label}.csv",
                        _csv_text(("rel_err", "cp_fraction", "cs_fraction"),
                                  [(_num(x), _num(cp_e(x)), _num(cs_e(x))) for x in xs]))

    agent = [r for r in results if r.method == "agent"]
    by_eps: dict[float, list[TuningResult]] = {}
    for r in agent:
        by_eps.setdefault(r.eps_test, []).append(r)
    exploration = [exploration_row(e, by_eps[e]) for e in sorted(by_eps)]
    if exploration:
        _write_text(out_dir / "exploration.csv",
                    _csv_text(("eps_test", "n", "mean", "sd", "success_pct", "total_time_s"),
                              [(_num(x.eps_test), x.n, _num(x.mean), _num(x.sd),
                                _num(x.success_pct), _num(x.total_time_s)) for x in exploration]))

    stat_cols = ("n", "mean", "median", "sd", "success_rate", "below_0p2", "mean_steps",
                 "sd_steps", "mean_time_s", "total_time_s")
    _write_text(out_dir / "summary.csv",
                _csv_text(("label",) + stat_cols,
                          [(label,) + tuple(s["n"] if c == "n" else _num(s[c]) for c in stat_cols)
                           for label, s in summaries.items()]))
    summary = {"groups": summaries, "exploration": [asdict(x) for x in exploration]}
    _write_text(out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
