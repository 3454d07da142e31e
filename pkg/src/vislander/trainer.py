"""Rollout collection, curriculum bookkeeping, PPO updates and checkpointing."""

from __future__ import annotations

import json
import logging
import time
from collections import deque
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from . import __version__
from . import rng as rnd
from .checkpoint import CheckpointError, dims_diff, read_checkpoint, write_checkpoint
from .config import RunConfig, config_hash, from_dict, to_dict
from .curriculum import CurriculumState, curriculum_step
from .env import OUTCOMES, SUCCESS, VecLandingEnv
from .policy import ActorCritic, build_model, to_tensors
from .ppo import RolloutBuffer, finish_buffer, ppo_update

log = logging.getLogger(__name__)


def model_dims(cfg: RunConfig) -> dict:
    e, p = cfg.encoder, cfg.policy
    return {
        "descriptor_dim": e.descriptor_dim, "embed_dim": e.embed_dim, "num_layers": e.num_layers,
        "num_heads": e.num_heads, "feature_dim": e.output_dim, "hidden": p.hidden,
        "state_dim": 10, "action_dim": 4, "activation": "tanh",
        "x_layout": ["features", "state_now", "state_prev", "prev_action"],
    }


def init_seed(seed: int) -> int:
    return int(rnd.make_rng(seed, "init").integers(2**31 - 1))


class Trainer:
    def __init__(self, cfg: RunConfig, workers: int | None = None):
        cfg.ppo.check()
        self.cfg = cfg
        torch.set_num_threads(cfg.train.torch_threads)
        n = cfg.ppo.num_envs
        self.env = VecLandingEnv(cfg.env_params(), rnd.make_rngs(cfg.seed, "env", n),
                                 rnd.make_rngs(cfg.seed, "noise", n),
                                 workers=cfg.train.workers if workers is None else workers)
        self.policy_rngs = rnd.make_rngs(cfg.seed, "policy", n)
        self.ppo_rng = rnd.make_rng(cfg.seed, "ppo")
        self.model: ActorCritic = build_model(cfg.vehicle, cfg.encoder, cfg.policy, init_seed(cfg.seed))
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=cfg.ppo.learning_rate,
                                          betas=cfg.ppo.adam_betas, eps=cfg.ppo.adam_eps)
        if cfg.curriculum.start_stage not in ("static", "angular", "heave"):
            raise ValueError(f"unknown curriculum stage {cfg.curriculum.start_stage!r}")
        self.curriculum = CurriculumState(cfg.curriculum.start_stage, cfg.curriculum.start_heave_cap)
        self.cur_cfg = cfg.curriculum_config()
        self.recent = deque(maxlen=cfg.train.success_window)
        self.global_step = 0
        self.updates = 0
        self.episodes = 0
        self.obs: dict | None = None
        self.buffer: RolloutBuffer | None = None

    # -- rollout -------------------------------------------------------------
    def _sync_curriculum(self):
        c = self.curriculum
        self.env.set_curriculum(c.stage, c.heave_cap, c.progress)

    def collect(self) -> dict:
        cfg, n = self.cfg, self.cfg.ppo.num_envs
        self._sync_curriculum()
        if self.obs is None:
            self.obs = self.env.reset()
        if self.buffer is None:
            self.buffer = RolloutBuffer(cfg.ppo.rollout_steps, n, self.obs)
        buf = self.buffer
        buf.reset()
        counts = np.zeros(3, dtype=np.int64)
        reward_sum = 0.0
        self.model.eval()
        while not buf.full:
            with torch.no_grad():
                x = self.model.policy_input(to_tensors(self.obs))
                sample = self.model.act(x, rnd.normal(self.policy_rngs, (n, 4)))
                value = self.model.value(x).numpy().astype(np.float64)
            next_obs, reward, term, trunc, info = self.env.step(sample.unit)
            trunc_value = np.zeros(n)
            if trunc.any():
                ti = np.flatnonzero(trunc)
                final = {k: v[ti] for k, v in info["final_obs"].items()}
                with torch.no_grad():
                    trunc_value[ti] = self.model.value(self.model.policy_input(to_tensors(final))).numpy()
            buf.add(self.obs, sample.raw, sample.log_prob, value, reward, term, trunc, trunc_value)
            reward_sum += float(reward.sum())
            for i in np.flatnonzero(term | trunc):
                out = int(info["outcome"][i])
                counts[out] += 1
                self.recent.append(out == SUCCESS)
                self.curriculum = curriculum_step(self.curriculum, out == SUCCESS, self.cur_cfg)
                self.episodes += 1
            self._sync_curriculum()
            self.obs = next_obs
            self.global_step += n

        with torch.no_grad():
            boot = self.model.value(self.model.policy_input(to_tensors(self.obs))).numpy().astype(np.float64)
        finish_buffer(buf, boot, cfg.ppo.gamma, cfg.ppo.gae_lambda)
        total = max(int(counts.sum()), 1)
        return {
            "episodes": int(counts.sum()),
            **{f"{name}_rate": float(counts[i] / total) for i, name in enumerate(OUTCOMES)},
            "mean_reward": reward_sum / (n * cfg.ppo.rollout_steps),
        }

    def update(self) -> dict:
        roll = self.collect()
        self.model.train()
        stats = ppo_update(self.model, self.optimizer, self.buffer, self.cfg.ppo, self.ppo_rng)
        self.updates += 1
        c = self.curriculum
        return {
            "update": self.updates,
            "global_step": self.global_step,
            **asdict(stats),
            **roll,
            "success_rate_window": self.window_success_rate(),
            "total_episodes": self.episodes,
            "curriculum": {"stage": c.stage, "level": c.level_index, "last_window_rate": c.last_rate},
            "heave_cap": c.heave_cap,
        }

    def window_success_rate(self) -> float | None:
        return float(np.mean(self.recent)) if self.recent else None

    def should_stop(self) -> bool:
        t = self.cfg.train
        if self.global_step >= self.cfg.ppo.total_timesteps:
            return True
        rate = self.window_success_rate()
        return (t.stop_success_rate > 0 and len(self.recent) >= t.stop_min_episodes
                and rate is not None and rate >= t.stop_success_rate)

    def run(self, out_dir: str | Path | None = None, max_updates: int | None = None, callback=None) -> list[dict]:
        """Train until the step budget (or early-stop rule, or ``max_updates``) is reached.

        With ``out_dir`` set, appends one JSON line per update to ``train_log.jsonl``
        and writes ``ckpt_XXXXXX.bin`` every ``checkpoint_every`` updates plus a final one.
        """
        records = []
        out = Path(out_dir) if out_dir else None
        log_fh = open(out / "train_log.jsonl", "a") if out else None
        try:
            while not self.should_stop() and (max_updates is None or len(records) < max_updates):
                t0 = time.perf_counter()
                rec = self.update()
                records.append(rec)
                if log_fh:
                    log_fh.write(json.dumps(rec) + "\n")
                    log_fh.flush()
                log.info("update %d step %d success %.3f (window %s) pg %.4f v %.4f [%.1fs]",
                         rec["update"], rec["global_step"], rec["success_rate"], rec["success_rate_window"],
                         rec["policy_loss"], rec["value_loss"], time.perf_counter() - t0)
                if callback:
                    callback(self, rec)
                if out and self.cfg.train.checkpoint_every and self.updates % self.cfg.train.checkpoint_every == 0:
                    self.save_rotating(out)
            if out:
                self.save(out / "final.bin")
        finally:
            if log_fh:
                log_fh.close()
        return records

    def save_rotating(self, out: Path) -> Path:
        path = out / f"ckpt_{self.updates:06d}.bin"
        self.save(path)
        old = sorted(out.glob("ckpt_*.bin"))[: -self.cfg.train.keep_checkpoints or None]
        for p in old:
            if p != path:
                p.unlink()
        return path

    # -- checkpoints -----------------------------------------------------------
    def save(self, path: str | Path) -> None:
        blocks = {}
        for name, t in self.model.state_dict().items():
            blocks[f"model/{name}"] = t.detach().cpu().numpy().astype("<f4")
        opt = self.optimizer.state_dict()
        names = [n for n, _ in self.model.named_parameters()]
        steps = {}
        for i, name in enumerate(names):
            st = opt["state"].get(i)
            if st is None:
                continue
            blocks[f"adam/{name}/exp_avg"] = st["exp_avg"].numpy().astype("<f4")
            blocks[f"adam/{name}/exp_avg_sq"] = st["exp_avg_sq"].numpy().astype("<f4")
            steps[name] = float(st["step"])
        training = self.obs is not None
        rng_state = {"policy": rnd.get_state(self.policy_rngs), "ppo": self.ppo_rng.bit_generator.state}
        if training:
            env_arrays, env_rng = self.env.state()
            for k, v in env_arrays.items():
                blocks[f"env/{k}"] = v
            for k, v in self.obs.items():
                blocks[f"obs/{k}"] = v
            rng_state.update(env_rng)
        header = {
            "package_version": __version__,
            "dims": model_dims(self.cfg),
            "config": to_dict(self.cfg),
            "config_hash": config_hash(self.cfg),
            "curriculum": asdict(self.curriculum),
            "global_step": self.global_step,
            "updates": self.updates,
            "episodes": self.episodes,
            "recent_outcomes": [int(x) for x in self.recent],
            "adam_steps": steps,
            "rng": rng_state,
            "has_env_state": training,
        }
        write_checkpoint(path, header, blocks)

    @classmethod
    def resume(cls, path: str | Path, workers: int | None = None) -> "Trainer":
        header, blocks = read_checkpoint(path)
        cfg = from_dict(RunConfig, header["config"])
        tr = cls(cfg, workers=workers)
        diff = dims_diff(model_dims(cfg), header["dims"])
        if diff:
            raise CheckpointError("checkpoint dims mismatch: " + "; ".join(diff))
        load_model_blocks(tr.model, blocks)
        names = [n for n, _ in tr.model.named_parameters()]
        params = dict(tr.model.named_parameters())
        for name in names:
            if f"adam/{name}/exp_avg" not in blocks:
                continue
            tr.optimizer.state[params[name]] = {
                "step": torch.tensor(header["adam_steps"][name]),
                "exp_avg": torch.from_numpy(blocks[f"adam/{name}/exp_avg"].astype(np.float32)),
                "exp_avg_sq": torch.from_numpy(blocks[f"adam/{name}/exp_avg_sq"].astype(np.float32)),
            }
        tr.curriculum = CurriculumState(**header["curriculum"])
        tr.global_step, tr.updates, tr.episodes = header["global_step"], header["updates"], header["episodes"]
        tr.recent.extend(bool(x) for x in header["recent_outcomes"])
        rnd.set_state(tr.policy_rngs, header["rng"]["policy"])
        tr.ppo_rng.bit_generator.state = header["rng"]["ppo"]
        if header.get("has_env_state"):
            env_arrays = {k[4:]: v for k, v in blocks.items() if k.startswith("env/")}
            tr.env.load_state(env_arrays, {"env": header["rng"]["env"], "noise": header["rng"]["noise"]})
            tr.obs = {k[4:]: v for k, v in blocks.items() if k.startswith("obs/")}
        return tr


def load_model_blocks(model: ActorCritic, blocks: dict) -> None:
    state = {k[6:]: torch.from_numpy(v.astype(np.float32)) for k, v in blocks.items() if k.startswith("model/")}
    missing = set(model.state_dict()) - set(state)
    if missing:
        raise CheckpointError(f"checkpoint lacks weights for {sorted(missing)}")
    model.load_state_dict(state)


def load_policy(path: str | Path, cfg: RunConfig | None = None) -> tuple[ActorCritic, RunConfig, dict]:
    """Load weights for evaluation, refusing when the stored dims differ from ``cfg`` (if given)."""
    header, blocks = read_checkpoint(path)
    stored = from_dict(RunConfig, header["config"])
    cfg = cfg or stored
    diff = dims_diff(model_dims(cfg), header.get("dims", {}))
    if diff:
        raise CheckpointError("checkpoint dims mismatch: " + "; ".join(diff))
    model = build_model(cfg.vehicle, cfg.encoder, cfg.policy, 0)
    load_model_blocks(model, blocks)
    model.eval()
    return model, cfg, header
