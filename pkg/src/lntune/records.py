"""Per-sample tuning result shared by the agent, baselines and reports."""

from __future__ import annotations

from dataclasses import dataclass

SUCCESS_THRESHOLD = 0.01


@dataclass
class TuningResult:
    sample_id: int
    method: str
    eps_test: float
    final_gamma: float
    steps: int
    success: bool
    wall_time: float
    final_cp: float
    final_cs: float
    stalled: bool = False
