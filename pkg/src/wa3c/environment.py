"""Discrete-tick cluster environment: queueing, placement, completion,
latency/energy accounting, and overload victim selection.

One scheduling decision per tick.  Action ``k`` in ``[0, K)`` selects the
k-th visible queue slot; action ``K`` is the explicit no-op.  A selected job
starts immediately on the least-utilized feasible VM, or parks in a single
dispatch slot while it waits for resources (that residence is its wait
time; queue time is arrival-to-selection).  Dismissal applies to queued
jobs only: whenever the demand of all active (running + queued) jobs
exceeds ``t_max`` of cluster capacity, the lowest-priority queued jobs are
dropped until usage falls back under the threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StateError
from .reward import (
    RewardBreakdown,
    RewardParams,
    RewardWeights,
    dismissal_reward,
    energy_reward,
    fairness_reward,
    priority_reward,
    qos_reward,
    total_reward,
)
from .workload import Job, RESOURCE_DIMS, estimate_exec_time

OBS_SLOT_FEATURES = 5
OBS_SYSTEM_FEATURES = 5


@dataclass(frozen=True)
class ClusterConfig:
    vm_count: int = 4
    cpu_freq_ghz: float = 2.0
    interference: float = 0.2
    queue_slots: int = 10  # K visible slots; action space is K + 1
    t_max: float = 0.95
    seconds_per_tick: float = 1.0
    tick_limit_factor: int = 10  # episode cap = factor * max(len(trace), 1)

    def __post_init__(self):
        if self.vm_count < 1:
            raise ConfigError(f"vm_count must be >= 1, got {self.vm_count}")
        if self.cpu_freq_ghz <= 0:
            raise ConfigError(f"cpu_freq_ghz must be > 0, got {self.cpu_freq_ghz}")
        if not 0.0 <= self.interference < 1.0:
            raise ConfigError(f"interference must be in [0, 1), got {self.interference}")
        if self.queue_slots < 1:
            raise ConfigError(f"queue_slots must be >= 1, got {self.queue_slots}")
        if not 0.0 < self.t_max <= 1.0:
            raise ConfigError(f"t_max must be in (0, 1], got {self.t_max}")
        if self.seconds_per_tick <= 0:
            raise ConfigError(f"seconds_per_tick must be > 0, got {self.seconds_per_tick}")
        if self.tick_limit_factor < 1:
            raise ConfigError(f"tick_limit_factor must be >= 1, got {self.tick_limit_factor}")


@dataclass(frozen=True)
class ClusterState:
    """Read-only snapshot of the cluster at one tick."""

    vm_count: int
    per_vm_utilization: np.ndarray  # (vm_count, RESOURCE_DIMS)
    cpu_freq_ghz: float
    aggregate_cpu_util: float
    mapi_now: float
    cpi_now: float
    clock: int


@dataclass
class QueueEntry:
    job: Job
    enqueue_time: int
    wait_time: float = 0.0
    queue_time: float = 0.0


@dataclass(frozen=True)
class SlotView:
    """What a heuristic scheduler may see about one visible queue slot."""

    index: int
    exec_estimate: float
    demand: tuple[float, float]
    enqueue_time: int
    priority: float


@dataclass
class _Running:
    job: Job
    vm: int
    start_tick: int
    exec_ticks: float
    t_wait: float
    t_queue: float


@dataclass(frozen=True)
class CompletedJob:
    """Final record of a job that ran to completion."""

    job: Job
    t_wait: float
    t_queue: float
    t_exec: float
    finish_tick: int
    energy_joules: float


@dataclass(frozen=True)
class StepOutcome:
    observation: np.ndarray
    reward: RewardBreakdown
    done: bool
    dismissed_this_step: int
    completed_jobs: tuple[CompletedJob, ...]


def performance_coefficient(cpi: float, mapi: float, z: float) -> float:
    """Workload intensity coefficient ``CPI*z + MAPI*(1-z)``."""
    if cpi <= 0 or mapi <= 0:
        raise ValueError(f"cpi and mapi must be positive, got ({cpi}, {mapi})")
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"z must be in [0, 1], got {z}")
    return cpi * z + mapi * (1.0 - z)


def job_energy(u_cpu: float, iota: float, tau: float, w_base: float, w_max: float) -> float:
    """Energy in joules: ``(W_base + U_cpu * iota * (W_max - W_base)) * tau``.

    Always at least ``W_base * tau``: the baseline draw is paid for the full
    duration regardless of load.
    """
    if not w_max >= w_base > 0:
        raise ValueError(f"need w_max >= w_base > 0, got ({w_base}, {w_max})")
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if not 0.0 <= u_cpu <= 1.0:
        raise ValueError(f"u_cpu must be in [0, 1], got {u_cpu}")
    if iota <= 0:
        raise ValueError(f"iota must be > 0, got {iota}")
    return (w_base + u_cpu * iota * (w_max - w_base)) * tau


def job_latency(record: CompletedJob) -> float:
    """Total latency of a completed job: wait + queue + exec."""
    if not isinstance(record, CompletedJob):
        raise StateError(f"job_latency needs a CompletedJob, got {type(record).__name__}")
    return record.t_wait + record.t_queue + record.t_exec


def select_victims(entries: list[QueueEntry], usage_fn, t_max: float) -> list[Job]:
    """Dismiss lowest-priority queued jobs until usage drops to ``t_max``.

    ``usage_fn`` maps the still-queued entries to the current usage level,
    so each removal is reflected before the next check.  Ties break FIFO
    (earlier arrival dismissed first), then by job id.  An overloaded but
    empty queue simply terminates the loop.
    """
    if not 0.0 < t_max <= 1.0:
        raise ValueError(f"t_max must be in (0, 1], got {t_max}")
    remaining = list(entries)
    order = sorted(remaining, key=lambda e: (e.job.priority, e.job.arrival_time, e.job.id))
    victims: list[Job] = []
    for entry in order:
        if usage_fn(remaining) <= t_max:
            break
        remaining.remove(entry)
        victims.append(entry.job)
    return victims


class CloudEnv:
    """The scheduling MDP over one job trace.

    Owns all per-episode state; a fresh instance (or ``reset``) starts a new
    episode over the same trace.  Never shared across workers.
    """

    def __init__(
        self,
        trace: list[Job],
        cluster: ClusterConfig | None = None,
        weights: RewardWeights | None = None,
        reward_params: RewardParams | None = None,
        event_log_path=None,
    ):
        self.cluster = cluster or ClusterConfig()
        self.weights = weights or RewardWeights()
        self.reward_params = reward_params or RewardParams()
        self.trace = sorted(trace, key=lambda j: (j.arrival_time, j.id))
        self.tick_limit = self.cluster.tick_limit_factor * max(len(self.trace), 1)
        self._event_log_path = event_log_path
        self._event_fh = None
        self.reset()

    # -- layout ------------------------------------------------------------

    @property
    def queue_slots(self) -> int:
        return self.cluster.queue_slots

    @property
    def n_actions(self) -> int:
        return self.cluster.queue_slots + 1

    @property
    def no_op(self) -> int:
        return self.cluster.queue_slots

    @property
    def observation_size(self) -> int:
        return OBS_SLOT_FEATURES * self.cluster.queue_slots + OBS_SYSTEM_FEATURES

    # -- episode lifecycle ---------------------------------------------------

    def reset(self) -> np.ndarray:
        self.clock = 0
        self.queue: list[QueueEntry] = []
        self.pending: QueueEntry | None = None
        self._pending_since = 0
        self.running: list[_Running] = []
        self.completed: list[CompletedJob] = []
        self.dismissed: list[Job] = []
        self.arrived = 0
        self._next_idx = 0
        self._vm_load = np.zeros((self.cluster.vm_count, RESOURCE_DIMS))
        self.events: list[dict] = []
        self.total_reward = 0.0
        self.drained = len(self.trace) == 0
        if self._event_fh:
            self._event_fh.close()
        self._event_fh = open(self._event_log_path, "w") if self._event_log_path else None
        return self._observe()

    def close(self):
        if self._event_fh:
            self._event_fh.close()
            self._event_fh = None

    # -- views -----------------------------------------------------------------

    def state_snapshot(self) -> ClusterState:
        running = self.running
        return ClusterState(
            vm_count=self.cluster.vm_count,
            per_vm_utilization=self._vm_load.copy(),
            cpu_freq_ghz=self.cluster.cpu_freq_ghz,
            aggregate_cpu_util=float(np.mean(self._vm_load[:, 0])),
            mapi_now=float(np.mean([r.job.mapi for r in running])) if running else 0.0,
            cpi_now=float(np.mean([r.job.cpi for r in running])) if running else 0.0,
            clock=self.clock,
        )

    def slot_views(self) -> list[SlotView | None]:
        """Per-slot info for heuristic schedulers (None = empty slot)."""
        views: list[SlotView | None] = [None] * self.cluster.queue_slots
        for i, entry in enumerate(self.queue[: self.cluster.queue_slots]):
            views[i] = SlotView(
                index=i,
                exec_estimate=estimate_exec_time(
                    entry.job, self.cluster.cpu_freq_ghz, self.cluster.interference
                ),
                demand=entry.job.resource_demand,
                enqueue_time=entry.enqueue_time,
                priority=entry.job.priority,
            )
        return views

    def available_resources(self) -> np.ndarray:
        """Mean free capacity per resource dimension across VMs, in [0, 1]."""
        return 1.0 - self._vm_load.mean(axis=0)

    def slot_priorities(self) -> np.ndarray:
        """Priority per action (zero for empty slots and the no-op)."""
        prio = np.zeros(self.n_actions)
        for i, entry in enumerate(self.queue[: self.cluster.queue_slots]):
            prio[i] = entry.job.priority
        return prio

    def live_mask(self) -> np.ndarray:
        """Boolean per action: selectable slots plus the always-live no-op."""
        live = np.zeros(self.n_actions, dtype=bool)
        live[: min(len(self.queue), self.cluster.queue_slots)] = True
        live[self.no_op] = True
        return live

    # -- dynamics ---------------------------------------------------------------

    def step(self, action: int) -> StepOutcome:
        self._dispatch(action)
        self.clock += 1

        completions = self._complete_running()
        self._place_pending()
        self._admit_arrivals()
        victims = self._shed_overload()

        breakdown = self._step_reward(completions, len(victims))
        self.total_reward += breakdown.total

        done = self._done()
        return StepOutcome(
            observation=self._observe(),
            reward=breakdown,
            done=done,
            dismissed_this_step=len(victims),
            completed_jobs=tuple(completions),
        )

    def _dispatch(self, action: int):
        if action == self.no_op:
            return
        if not 0 <= action < self.cluster.queue_slots or action >= len(self.queue):
            self._log("invalid_action", None, slot=int(action))
            return
        entry = self.queue[action]
        vm = self._feasible_vm(entry.job)
        if vm is None and self.pending is not None:
            # dispatch slot already occupied; selection bounces back to the queue
            self._log("dispatch_blocked", entry.job.id, slot=int(action))
            return
        self.queue.pop(action)
        entry.queue_time = float(self.clock - entry.enqueue_time)
        self._log("select", entry.job.id, queue_time=entry.queue_time)
        if vm is None:
            self.pending = entry
            self._pending_since = self.clock
        else:
            self._start(entry.job, vm, wait=0.0, queue_time=entry.queue_time)

    def _feasible_vm(self, job: Job) -> int | None:
        demand = np.asarray(job.resource_demand)
        fits = np.all(self._vm_load + demand <= 1.0 + 1e-12, axis=1)
        if not fits.any():
            return None
        means = self._vm_load.mean(axis=1)
        means[~fits] = np.inf
        return int(np.argmin(means))

    def _start(self, job: Job, vm: int, wait: float, queue_time: float):
        exec_ticks = estimate_exec_time(job, self.cluster.cpu_freq_ghz, self.cluster.interference)
        self._vm_load[vm] += np.asarray(job.resource_demand)
        self.running.append(
            _Running(
                job=job,
                vm=vm,
                start_tick=self.clock,
                exec_ticks=exec_ticks,
                t_wait=wait,
                t_queue=queue_time,
            )
        )
        self._log("start", job.id, vm=vm, wait=wait, exec_ticks=exec_ticks)

    def _complete_running(self) -> list[CompletedJob]:
        u_cpu = float(np.clip(np.mean(self._vm_load[:, 0]), 0.0, 1.0))
        done_now = [r for r in self.running if self.clock - r.start_tick >= r.exec_ticks - 1e-9]
        completions = []
        for r in done_now:
            self.running.remove(r)
            self._vm_load[r.vm] -= np.asarray(r.job.resource_demand)
            np.clip(self._vm_load[r.vm], 0.0, None, out=self._vm_load[r.vm])
            tau = r.exec_ticks * self.cluster.seconds_per_tick
            iota = performance_coefficient(r.job.cpi, r.job.mapi, self.reward_params.z)
            energy = job_energy(
                u_cpu, iota, tau, self.reward_params.w_base, self.reward_params.w_max
            )
            rec = CompletedJob(
                job=r.job,
                t_wait=r.t_wait,
                t_queue=r.t_queue,
                t_exec=r.exec_ticks,
                finish_tick=self.clock,
                energy_joules=energy,
            )
            completions.append(rec)
            self.completed.append(rec)
            self._log("complete", r.job.id, latency=job_latency(rec), energy_j=energy)
        return completions

    def _place_pending(self):
        if self.pending is None:
            return
        vm = self._feasible_vm(self.pending.job)
        if vm is None:
            return
        entry = self.pending
        self.pending = None
        entry.wait_time = float(self.clock - self._pending_since)
        self._start(entry.job, vm, wait=entry.wait_time, queue_time=entry.queue_time)

    def _admit_arrivals(self):
        while self._next_idx < len(self.trace) and self.trace[self._next_idx].arrival_time <= self.clock:
            job = self.trace[self._next_idx]
            self.queue.append(QueueEntry(job=job, enqueue_time=job.arrival_time))
            self.arrived += 1
            self._next_idx += 1
            self._log("arrival", job.id, priority=job.priority)
        if self._next_idx >= len(self.trace):
            self.drained = True

    def _active_usage(self, queued: list[QueueEntry]) -> float:
        demand = np.zeros(RESOURCE_DIMS)
        for r in self.running:
            demand += np.asarray(r.job.resource_demand)
        if self.pending is not None:
            demand += np.asarray(self.pending.job.resource_demand)
        for e in queued:
            demand += np.asarray(e.job.resource_demand)
        return float(np.max(demand / self.cluster.vm_count))

    def _shed_overload(self) -> list[Job]:
        usage = self._active_usage(self.queue)
        if usage <= self.cluster.t_max:
            return []
        victims = select_victims(self.queue, self._active_usage, self.cluster.t_max)
        for job in victims:
            idx = next(i for i, e in enumerate(self.queue) if e.job.id == job.id)
            self.queue.pop(idx)
            self.dismissed.append(job)
            self._log(
                "dismiss",
                job.id,
                priority=job.priority,
                remaining_priorities=[e.job.priority for e in self.queue],
            )
        if not self.queue and self._active_usage([]) > self.cluster.t_max:
            self._log("overload_no_victims", None, usage=self._active_usage([]))
        return victims

    def _step_reward(self, completions: list[CompletedJob], n_dismissed: int) -> RewardBreakdown:
        p = self.reward_params
        if completions:
            latencies = [job_latency(c) for c in completions]
            qos = float(np.mean([qos_reward(l, p.l_max) for l in latencies]))
            prio = float(
                np.mean(
                    [
                        priority_reward(c.job.priority, min(1.0, l / p.l_max))
                        for c, l in zip(completions, latencies)
                    ]
                )
            )
            e_cap = p.w_max * p.l_max * self.cluster.seconds_per_tick
            e_norm = float(np.mean([min(1.0, c.energy_joules / e_cap) for c in completions]))
        else:
            qos, prio, e_norm = 0.0, 0.0, 0.0
        energy = energy_reward(e_norm, p.alpha_energy)
        shares = [r.job.resource_demand[0] for r in self.running]
        fairness = fairness_reward(shares, p.lambda_fair)
        dismissal = dismissal_reward(n_dismissed, p.mu_dismiss)
        return total_reward(qos, energy, prio, fairness, dismissal, self.weights)

    def _done(self) -> bool:
        drained = (
            self.drained
            and not self.queue
            and not self.running
            and self.pending is None
        )
        return drained or self.clock >= self.tick_limit

    # -- observation ----------------------------------------------------------

    def _observe(self) -> np.ndarray:
        k = self.cluster.queue_slots
        l_max = self.reward_params.l_max
        obs = np.zeros(self.observation_size)
        for i, entry in enumerate(self.queue[:k]):
            job = entry.job
            base = i * OBS_SLOT_FEATURES
            exec_est = estimate_exec_time(job, self.cluster.cpu_freq_ghz, self.cluster.interference)
            obs[base] = min(exec_est / l_max, 2.0)
            obs[base + 1] = float(np.mean(job.resource_demand))
            obs[base + 2] = min((self.clock - entry.enqueue_time) / l_max, 2.0)
            obs[base + 3] = job.priority
            if job.deadline is not None:
                obs[base + 4] = float(np.clip((job.deadline - self.clock) / l_max, -1.0, 1.0))
        sysbase = k * OBS_SLOT_FEATURES
        snap = self.state_snapshot()
        obs[sysbase] = snap.aggregate_cpu_util
        obs[sysbase + 1] = float(self._vm_load.mean())
        obs[sysbase + 2] = min(len(self.queue) / k, 2.0)
        obs[sysbase + 3] = snap.cpi_now
        obs[sysbase + 4] = snap.mapi_now
        return obs

    # -- event log ---------------------------------------------------------------

    def _log(self, kind: str, job_id, **detail):
        event = {"tick": self.clock, "event_kind": kind, "job_id": job_id, "detail": detail}
        self.events.append(event)
        if self._event_fh:
            self._event_fh.write(json.dumps(event) + "\n")
