"""Trial sweeps, outcome metrics and touchdown-angle histograms for trained policies."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from . import rng as rnd
from .config import RunConfig
from .env import OUTCOMES, LandingEnv
from .policy import ActorCritic, to_tensors


@dataclass
class TrialSpec:
    frequency: float | None        # Hz; None draws it per episode (only meaningful with motion)
    amplitudes: str = "full"       # "full": every axis uniform up to its limit; "static": no motion
    num_trials: int = 100
    seed: int = 1

    def __post_init__(self):
        if self.amplitudes not in ("full", "static"):
            raise ValueError(f"unknown amplitude rule {self.amplitudes!r}")
        if self.num_trials < 1:
            raise ValueError("num_trials must be positive")


@dataclass
class EpisodeRecord:
    spec_index: int
    trial: int
    frequency: float | None
    outcome: str
    maneuver_time: float
    steps: int
    touchdown_angle: float | None = None
    touchdown_dv: float | None = None
    trajectory_id: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class MetricsTable:
    trials: int
    success: float       # percent
    crash: float
    timeout: float
    amt: float | None    # seconds, over success + crash episodes only

    def rows(self) -> list[list]:
        return [["trials", self.trials], ["success_pct", self.success], ["crash_pct", self.crash],
                ["timeout_pct", self.timeout], ["amt_s", "" if self.amt is None else self.amt]]


@dataclass
class EvalResult:
    records: list[EpisodeRecord]
    trajectories: list[dict] = field(default_factory=list)


Controller = Callable[[dict, LandingEnv], np.ndarray]


def policy_controller(model: ActorCritic) -> Controller:
    """Deterministic (mean) actions from a trained model."""
    def act(obs: dict, env: LandingEnv) -> np.ndarray:
        with torch.no_grad():
            x = model.policy_input(to_tensors(obs))
        return model.act(x, deterministic=True).unit
    return act


def trial_rngs(spec: TrialSpec, spec_index: int, trials) -> tuple[list, list]:
    env = [rnd.make_rng(spec.seed, "eval", spec_index, t, 0) for t in trials]
    noise = [rnd.make_rng(spec.seed, "eval", spec_index, t, 1) for t in trials]
    return env, noise


def run_trials(policy, specs: list[TrialSpec], cfg: RunConfig | None = None, batch_size: int = 100,
               record_trajectories: bool = True) -> EvalResult:
    """Run every trial of every spec; each trial owns its random streams, keyed by (seed, spec, trial).

    ``policy`` is an :class:`ActorCritic` (run in deterministic mode), a
    checkpoint path, or a callable ``(obs, env) -> unit actions``.
    """
    if isinstance(policy, (str, Path)):
        from .trainer import load_policy
        model, ckpt_cfg, _ = load_policy(policy, cfg)
        cfg = cfg or ckpt_cfg
        policy = model
    cfg = cfg or RunConfig()
    controller = policy_controller(policy) if isinstance(policy, ActorCritic) else policy
    ev = cfg.eval
    params = cfg.env_params(dropout=ev.dropout, desc_noise_sigma=ev.desc_noise_sigma)
    dt = params.episode.dt

    result = EvalResult([])
    for si, spec in enumerate(specs):
        for start in range(0, spec.num_trials, batch_size):
            trials = list(range(start, min(start + batch_size, spec.num_trials)))
            env_rngs, noise_rngs = trial_rngs(spec, si, trials)
            env = LandingEnv(params, env_rngs, noise_rngs, auto_reset=False)
            if spec.amplitudes == "static":
                env.stage, env.heave_cap = "static", 0.0
            else:
                env.stage, env.heave_cap = "heave", params.platform.heave_amplitude
            env.frequency = spec.frequency
            env.progress = 1.0
            env.record_trajectory = record_trajectories
            obs = env.reset()
            outcome = np.full(len(trials), -1)
            length = np.zeros(len(trials), dtype=np.int64)
            td_angle = np.full(len(trials), np.nan)
            td_dv = np.full(len(trials), np.nan)
            while (outcome < 0).any():
                obs, _, term, trunc, info = env.step(controller(obs, env))
                ended = (term | trunc) & (outcome < 0)
                outcome[ended] = info["outcome"][ended]
                length[ended] = info["length"][ended]
                td_angle[ended] = info["touchdown_angle"][ended]
                td_dv[ended] = info["touchdown_dv"][ended]
            for j, t in enumerate(trials):
                tid = f"{si}:{t}"
                touched = bool(np.isfinite(td_angle[j]))
                result.records.append(EpisodeRecord(
                    spec_index=si, trial=t, frequency=spec.frequency,
                    outcome=OUTCOMES[outcome[j]], maneuver_time=float(length[j] * dt), steps=int(length[j]),
                    touchdown_angle=float(td_angle[j]) if touched else None,
                    touchdown_dv=float(td_dv[j]) if touched else None,
                    trajectory_id=tid if record_trajectories else None,
                ))
                if record_trajectories:
                    result.trajectories.append({
                        "trajectory_id": tid,
                        "camera_rotation": env.cam.rotation[j].tolist(),
                        "camera_translation": env.cam.translation[j].tolist(),
                        "steps": env.trajectory[j],
                    })
    return result


def summarize(records: list[EpisodeRecord]) -> MetricsTable:
    if not records:
        raise ValueError("cannot summarize an empty record list")
    n = len(records)
    counts = {k: sum(r.outcome == k for r in records) for k in OUTCOMES}
    timed = [r.maneuver_time for r in records if r.outcome in ("success", "crash")]
    amt = float(np.mean(timed)) if timed else None
    return MetricsTable(n, 100.0 * counts["success"] / n, 100.0 * counts["crash"] / n,
                        100.0 * counts["timeout"] / n, amt)


def touchdown_histogram(records: list[EpisodeRecord], bin_width: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Counts of touchdown angles over ``[0, 90]`` degrees; returns ``(edges, counts)``.

    Bins are half-open ``[lo, hi)`` except the last, which includes 90.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    nbins = int(np.ceil(90.0 / bin_width - 1e-12))
    edges = np.minimum(np.arange(nbins + 1) * bin_width, 90.0)
    angles = np.array([r.touchdown_angle for r in records if r.touchdown_angle is not None], dtype=float)
    counts = np.zeros(nbins, dtype=np.int64)
    if len(angles):
        idx = np.clip(np.floor(angles / bin_width).astype(int), 0, nbins - 1)
        np.add.at(counts, idx, 1)
    return edges, counts


# -- writers ----------------------------------------------------------------

def write_metrics_csv(path, table: MetricsTable, per_frequency: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "trials", "success_pct", "crash_pct", "timeout_pct", "amt_s"])
        groups = dict(per_frequency or {})
        groups["all"] = table
        for name, t in groups.items():
            w.writerow([name, t.trials, repr(t.success), repr(t.crash), repr(t.timeout),
                        "" if t.amt is None else repr(t.amt)])


def write_histogram_csv(path, edges, counts) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo_deg", "bin_hi_deg", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([lo, hi, int(c)])


def write_jsonl(path, rows) -> None:
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps(r.to_json() if hasattr(r, "to_json") else r) + "\n")


def per_frequency(records: list[EpisodeRecord]) -> dict[str, MetricsTable]:
    groups: dict[str, list] = {}
    for r in records:
        groups.setdefault("static" if r.frequency is None else f"{r.frequency:g}Hz", []).append(r)
    return {k: summarize(v) for k, v in groups.items()}


def write_outputs(out_dir, result: EvalResult, bin_width: float) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = summarize(result.records)
    write_metrics_csv(out / "metrics.csv", table, per_frequency(result.records))
    edges, counts = touchdown_histogram(result.records, bin_width)
    write_histogram_csv(out / "touchdown_histogram.csv", edges, counts)
    write_jsonl(out / "records.jsonl", result.records)
    if result.trajectories:
        write_jsonl(out / "trajectories.jsonl", result.trajectories)
    return asdict(table)
