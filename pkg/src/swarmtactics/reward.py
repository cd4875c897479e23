"""End-of-mission reward and fitness aggregation.

A successful mission scores the remaining-time fraction, discounted by the
survival rate raised to the survivability coefficient; a failed mission
scores the mean search progress shifted into [-1, 0].  Any success
therefore outscores any failure.  The original published forms (elapsed
time fraction, pool-size failure offset) are kept behind
`paper_formulas=True` for inspection only.
"""

from __future__ import annotations

from dataclasses import dataclass

from .episode import run_episode
from .sim import EpisodeResult


class RewardError(ValueError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    c_s: float = 0.0            # survivability coefficient, >= 0
    t_f: float | None = None    # optional override; defaults to the episode's

    def __post_init__(self):
        if self.c_s < 0:
            raise RewardError("survivability coefficient must be >= 0")


@dataclass(frozen=True)
class RewardBreakdown:
    success: bool
    tau: float                  # remaining-time fraction (success only)
    survival: float
    search_progress: float      # failure reward in [-1, 0]
    total: float


def _search_progress(result: EpisodeResult) -> float:
    if not result.psi:
        raise RewardError("episode result carries no candidate search progress")
    mean = sum((pi + po) / 2.0 for pi, po in result.psi) / len(result.psi)
    return mean - 1.0


def scenario_reward(result: EpisodeResult, cfg: RewardConfig,
                    paper_formulas: bool = False, n_scenarios: int = 1):
    t_f = cfg.t_f if cfg.t_f is not None else result.t_f
    psi_term = _search_progress(result)
    if result.success:
        if result.rescue_time > t_f:
            raise RewardError(
                f"successful episode with rescue_time {result.rescue_time} "
                f"beyond the {t_f} s limit"
            )
        if paper_formulas:
            tau = result.rescue_time / t_f
        else:
            tau = (t_f - result.rescue_time) / t_f
        total = tau * result.survival_rate ** cfg.c_s
        return RewardBreakdown(True, tau, result.survival_rate, psi_term, total)
    if paper_formulas:
        mean_shifted = sum((pi + po - 2.0) / 2.0 for pi, po in result.psi)
        psi_term = (1.0 - n_scenarios) + mean_shifted / len(result.psi)
    return RewardBreakdown(False, 0.0, result.survival_rate, psi_term, psi_term)


def fitness(policy, scenarios, cfg: RewardConfig, rtc=None,
            encoding_mode: str = "both") -> float:
    """Mean end-of-mission reward of `policy` over a scenario set."""
    scenarios = list(scenarios)
    if not scenarios:
        raise RewardError("fitness needs at least one scenario")
    total = 0.0
    for sc in scenarios:
        result = run_episode(sc, policy, rtc, encoding_mode)
        total += scenario_reward(result, cfg).total
    return total / len(scenarios)
