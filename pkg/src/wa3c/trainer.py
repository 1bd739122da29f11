"""Asynchronous training: n workers against one shared parameter store.

Each worker owns a private environment and a private parameter copy; every
``sync_interval`` steps (and at episode end) it computes gradients over the
buffered segment, pushes them to the global store, and pulls a fresh
snapshot.  Commits are serialized and atomic: a snapshot is always the
state of exactly one version, never a torn mix.

Only single-worker runs are bit-deterministic; with several workers the
commit interleaving (and therefore the parameter trajectory) depends on
thread scheduling.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .environment import CloudEnv, ClusterConfig
from .errors import ConfigError
from .metrics import (
    EpisodeStats,
    REPORT_COLUMNS,
    export_csv,
    export_json,
    moving_average,
    report_row,
    summarize_episode,
)
from .policy import (
    Gradients,
    PolicyParams,
    TrajectoryStep,
    actor_forward,
    clip_gradients,
    compute_gradients,
    critic_forward,
    init_params,
    save_checkpoint,
    select_action,
)
from .reward import RewardParams, RewardWeights
from .workload import TraceConfig, generate_synthetic, trace_shard

logger = logging.getLogger("wa3c")


@dataclass(frozen=True)
class TrainerConfig:
    n_workers: int = 1
    episodes: int = 500
    sync_interval: int = 20
    discount: float = 0.95
    lr_actor: float = 0.01
    lr_critic: float = 0.01
    rmsprop_decay: float = 0.99
    rmsprop_epsilon: float = 1e-8
    seed: int = 0
    beta: float = 2.0
    hidden: tuple[int, ...] = (64, 64)
    shard_jobs: int = 100  # jobs per training-episode shard
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.n_workers < 1:
            raise ConfigError(f"n_workers must be >= 1, got {self.n_workers}")
        if self.episodes < 0:
            raise ConfigError(f"episodes must be >= 0, got {self.episodes}")
        if self.sync_interval < 1:
            raise ConfigError(f"sync_interval must be >= 1, got {self.sync_interval}")
        if not 0.0 <= self.discount <= 1.0:
            raise ConfigError(f"discount must be in [0, 1], got {self.discount}")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ConfigError("learning rates must be > 0")
        if not 0.0 < self.rmsprop_decay < 1.0:
            raise ConfigError(f"rmsprop_decay must be in (0, 1), got {self.rmsprop_decay}")
        if self.rmsprop_epsilon <= 0:
            raise ConfigError(f"rmsprop_epsilon must be > 0, got {self.rmsprop_epsilon}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError(f"hidden widths must be positive, got {self.hidden}")
        if self.shard_jobs < 1:
            raise ConfigError(f"shard_jobs must be >= 1, got {self.shard_jobs}")
        if self.grad_clip <= 0:
            raise ConfigError(f"grad_clip must be > 0, got {self.grad_clip}")


def child_seed(base: int, *key: int) -> int:
    """Deterministic seed derived from a master seed and an integer key path."""
    return int(np.random.SeedSequence(entropy=base, spawn_key=key).generate_state(1)[0])


def rmsprop_step(param, grad, state, lr, decay, epsilon, sign=-1.0):
    """One RMSProp update; returns (new_param, new_state).

    ``state' = decay*state + (1-decay)*grad^2`` and
    ``param' = param + sign * lr * grad / sqrt(state' + epsilon)``.
    ``sign=+1`` ascends (actor), ``sign=-1`` descends (critic loss).
    """
    new_state = decay * state + (1.0 - decay) * grad**2
    new_param = param + sign * lr * grad / np.sqrt(new_state + epsilon)
    return new_param, new_state


class GlobalStore:
    """Shared parameters plus RMSProp state; commits are atomic and serialized."""

    def __init__(self, params: PolicyParams, config: TrainerConfig):
        self._lock = threading.Lock()
        self._params = params.copy()
        self._sq = Gradients.zeros_like(params)  # running square averages
        self.config = config
        self.update_count = 0
        self.commit_log: list[tuple[int, int]] = []  # (version, worker_id)

    @property
    def version(self) -> int:
        return self._params.version

    def snapshot(self) -> PolicyParams:
        with self._lock:
            return self._params.copy()

    def commit(self, grads: Gradients, worker_id: int = 0) -> PolicyParams:
        """Apply accumulated gradients via RMSProp; returns the new snapshot.

        Non-finite gradients are rejected (no version bump) and the caller
        keeps training from the current parameters.
        """
        if not grads.is_finite():
            logger.warning("worker %d: non-finite gradients rejected", worker_id)
            return self.snapshot()
        with self._lock:
            clip_gradients(grads, self.config.grad_clip)
            cfg = self.config
            for stacks, lr, sign in (
                ((self._params.actor, grads.actor, self._sq.actor), cfg.lr_actor, +1.0),
                ((self._params.critic, grads.critic, self._sq.critic), cfg.lr_critic, -1.0),
            ):
                params, glayers, slayers = stacks
                for i, ((w, b), (gw, gb), (sw, sb)) in enumerate(
                    zip(params, glayers, slayers)
                ):
                    new_w, new_sw = rmsprop_step(
                        w, gw, sw, lr, cfg.rmsprop_decay, cfg.rmsprop_epsilon, sign
                    )
                    new_b, new_sb = rmsprop_step(
                        b, gb, sb, lr, cfg.rmsprop_decay, cfg.rmsprop_epsilon, sign
                    )
                    params[i] = (new_w, new_b)
                    slayers[i] = (new_sw, new_sb)
            self._params.version += 1
            self.update_count += 1
            self.commit_log.append((self._params.version, worker_id))
            return self._params.copy()


def sync_update(local_grads: Gradients, store: GlobalStore, worker_id: int = 0) -> PolicyParams:
    """Push accumulated gradients, pull the fresh parameter snapshot."""
    return store.commit(local_grads, worker_id)


def run_worker(worker_id: int, store: GlobalStore, env_factory, config: TrainerConfig):
    """Run this worker's share of the episodes; returns one record each.

    An environment failure aborts that episode (logged) and the worker moves
    on to its next one.
    """
    records: list[EpisodeStats] = []
    for episode in range(worker_id, config.episodes, config.n_workers):
        started = time.perf_counter()
        try:
            env = env_factory(worker_id, episode)
            records.append(
                _run_training_episode(env, store, config, worker_id, episode, started)
            )
        except Exception:
            logger.exception("worker %d: episode %d aborted", worker_id, episode)
            continue
    return records


def _run_training_episode(env, store, config, worker_id, episode, started) -> EpisodeStats:
    params = store.snapshot()
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(2, episode))
    )
    obs = env.reset()
    buffer: list[TrajectoryStep] = []
    done = False
    while not done:
        scores = actor_forward(obs, params)
        priorities = env.slot_priorities()
        live = env.live_mask()
        dist = select_action(scores, priorities, config.beta, rng, live)
        outcome = env.step(dist.chosen)
        buffer.append(
            TrajectoryStep(
                obs=obs,
                action=dist.chosen,
                reward=outcome.reward.total,
                bias=config.beta * priorities,
                live=live,
            )
        )
        obs = outcome.observation
        done = outcome.done
        if len(buffer) >= config.sync_interval or done:
            v_boot = 0.0 if done else critic_forward(obs, params)
            grads = compute_gradients(buffer, params, config.discount, v_boot)
            params = sync_update(grads, store, worker_id)
            buffer = []
    return summarize_episode(
        env,
        episode=episode,
        worker_id=worker_id,
        wall_clock_s=time.perf_counter() - started,
    )


def make_env_factory(trace_source, cluster: ClusterConfig, weights: RewardWeights,
                     reward_params: RewardParams, config: TrainerConfig):
    """Environment factory over per-episode trace shards.

    A :class:`TraceConfig` source generates a fresh shard per episode from
    the master seed lineage; a concrete job list is cut into rebased
    windows that cycle over the trace.
    """
    if isinstance(trace_source, TraceConfig):
        def factory(worker_id: int, episode: int) -> CloudEnv:
            shard_cfg = dataclasses.replace(
                trace_source,
                job_count=min(config.shard_jobs, trace_source.job_count),
                seed=child_seed(config.seed, 1, episode),
            )
            return CloudEnv(generate_synthetic(shard_cfg), cluster, weights, reward_params)
    else:
        jobs = list(trace_source)

        def factory(worker_id: int, episode: int) -> CloudEnv:
            return CloudEnv(
                trace_shard(jobs, episode, config.shard_jobs), cluster, weights, reward_params
            )

    return factory


@dataclass
class TrainingReport:
    """Per-episode records plus references to the run artifacts."""

    records: list[EpisodeStats]
    params: PolicyParams
    out_dir: str | None = None
    checkpoint_path: str | None = None
    report_csv: str | None = None
    manifest_path: str | None = None

    def rewards(self) -> list[float]:
        return [r.total_reward for r in self.records]

    def reward_moving_average(self, window: int = 50) -> list[float]:
        return moving_average(self.rewards(), window)


def build_id() -> str:
    """git-describe-style identifier, falling back to the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    return f"wa3c-{__version__}"


def train(
    trace_source,
    cluster: ClusterConfig,
    weights: RewardWeights,
    reward_params: RewardParams,
    config: TrainerConfig,
    out_dir=None,
    manifest_extra: dict | None = None,
) -> TrainingReport:
    """Train for ``config.episodes`` episodes across ``config.n_workers`` workers.

    Writes ``report.csv`` (one row per episode), its JSON mirror, a
    parameter checkpoint, and a run manifest into ``out_dir`` when given.
    """
    factory = make_env_factory(trace_source, cluster, weights, reward_params, config)
    probe = factory(0, 0)
    params0 = init_params(
        probe.observation_size, probe.n_actions, hidden=config.hidden, seed=config.seed
    )
    store = GlobalStore(params0, config)

    if config.n_workers == 1:
        records = run_worker(0, store, factory, config)
    else:
        results: list[list[EpisodeStats]] = [[] for _ in range(config.n_workers)]

        def target(wid: int):
            results[wid] = run_worker(wid, store, factory, config)

        threads = [
            threading.Thread(target=target, args=(wid,), name=f"wa3c-worker-{wid}")
            for wid in range(config.n_workers)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        records = [rec for worker_records in results for rec in worker_records]

    records.sort(key=lambda r: r.episode)
    report = TrainingReport(records=records, params=store.snapshot())

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.out_dir = str(out)
        report.report_csv = str(out / "report.csv")
        export_csv([report_row(r) for r in records], report.report_csv, columns=list(REPORT_COLUMNS))
        export_json([report_row(r) for r in records], out / "report.json")
        report.checkpoint_path = str(out / "checkpoint.npz")
        save_checkpoint(report.params, report.checkpoint_path)
        ma = report.reward_moving_average(50)
        manifest = {
            "build_id": build_id(),
            "trainer": dataclasses.asdict(config),
            "episodes_completed": len(records),
            "commits": store.update_count,
            "final_reward_ma_50": ma[-1] if ma else None,
        }
        if manifest_extra:
            manifest.update(manifest_extra)
        report.manifest_path = str(out / "manifest.json")
        with open(report.manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, default=str)
            fh.write("\n")
    return report
