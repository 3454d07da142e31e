"""Success-rate driven platform-motion curriculum.

Stages: ``static`` (no platform motion) -> ``angular`` (roll/pitch/yaw
excitation, heave held at 0) -> ``heave`` (heave amplitude capped by
``heave_cap``). Outcomes accumulate in a tumbling window; when the window is
full the rules fire once and the window starts over.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

STAGES = ("static", "angular", "heave")
HEAVE_STEP_UP = 0.5
HEAVE_STEP_DOWN = 0.25
HEAVE_CAP_MAX = 5.0


@dataclass(frozen=True)
class CurriculumConfig:
    window: int = 4096
    static_advance: float = 0.9
    raise_above: float = 0.6
    lower_below: float = 0.2
    freeze: bool = False


@dataclass(frozen=True)
class CurriculumState:
    stage: str = "static"
    heave_cap: float = 0.0
    window_episodes: int = 0
    window_successes: int = 0
    last_rate: float | None = None

    @property
    def level_index(self) -> int:
        if self.stage == "static":
            return 0
        return 1 + round(self.heave_cap / HEAVE_STEP_DOWN)

    @property
    def max_level(self) -> int:
        return 1 + round(HEAVE_CAP_MAX / HEAVE_STEP_DOWN)

    @property
    def progress(self) -> float:
        return self.level_index / self.max_level


def curriculum_step(cur: CurriculumState, success: bool, cfg: CurriculumConfig = CurriculumConfig()) -> CurriculumState:
    """Record one finished episode; any outcome other than success counts as a miss."""
    n = cur.window_episodes + 1
    s = cur.window_successes + int(bool(success))
    if n < cfg.window:
        return replace(cur, window_episodes=n, window_successes=s)

    rate = s / n
    stage, cap = cur.stage, cur.heave_cap
    if not cfg.freeze:
        if stage == "static":
            if rate > cfg.static_advance:
                stage, cap = "angular", 0.0
        elif rate > cfg.raise_above:
            stage, cap = "heave", min(cap + HEAVE_STEP_UP, HEAVE_CAP_MAX)
        elif rate < cfg.lower_below:
            cap = max(cap - HEAVE_STEP_DOWN, 0.0)
    return CurriculumState(stage, cap, 0, 0, rate)
