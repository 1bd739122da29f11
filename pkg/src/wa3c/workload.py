"""Synthetic job-trace generation and CSV trace ingestion.

Jobs carry an abstract compute demand (how much work), a per-dimension
resource demand (what fraction of one VM they occupy while running), a
priority in [0, 1], and the CPI/MAPI intensity features used by the
energy model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TraceError

RESOURCE_DIMS = 2  # cpu, mem

# Priority bands: low = [0, 0.33], medium = (0.33, 0.66], high = (0.66, 1.0].
PRIORITY_BANDS = {
    "low": (0.0, 0.33),
    "medium": (0.33, 0.66),
    "high": (0.66, 1.0),
}
DEFAULT_PRIORITY_MIX = {"low": 0.5, "medium": 0.3, "high": 0.2}

TRACE_COLUMNS = (
    "job_id",
    "arrival_time",
    "compute_units",
    "cpu_demand",
    "mem_demand",
    "priority",
    "cpi",
    "mapi",
)


@dataclass(frozen=True)
class Job:
    """One schedulable unit."""

    id: int
    arrival_time: int
    compute_units: float
    resource_demand: tuple[float, float]  # fraction of one VM per (cpu, mem)
    priority: float
    deadline: int | None = None
    cpi: float = 1.0
    mapi: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.priority <= 1.0:
            raise ConfigError(f"job {self.id}: priority {self.priority} outside [0, 1]")
        if self.compute_units < 0:
            raise ConfigError(f"job {self.id}: compute_units {self.compute_units} negative")
        for dim, d in zip(("cpu", "mem"), self.resource_demand):
            if not 0.0 < d <= 1.0:
                raise ConfigError(f"job {self.id}: {dim} demand {d} outside (0, 1]")
        if self.cpi <= 0 or self.mapi <= 0:
            raise ConfigError(f"job {self.id}: cpi/mapi must be positive")


@dataclass(frozen=True)
class TraceConfig:
    """Knobs for the synthetic trace generator.

    ``load_factor`` scales the arrival rate relative to the cluster service
    rate: the effective mean interarrival gap is
    ``mean_interarrival / load_factor``, so higher load packs arrivals
    tighter.  Distribution ranges for compute, demand, and the CPI/MAPI
    intensity features are documented defaults, not externally mandated
    values.
    """

    job_count: int = 1000
    mean_interarrival: float = 2.0
    load_factor: float = 1.0
    priority_mix: dict = field(default_factory=lambda: dict(DEFAULT_PRIORITY_MIX))
    seed: int = 0
    compute_range: tuple[float, float] = (2.0, 20.0)
    demand_range: tuple[float, float] = (0.15, 0.55)
    cpi_range: tuple[float, float] = (0.5, 2.0)
    mapi_range: tuple[float, float] = (0.5, 2.0)
    deadline_slack: int | None = None  # optional: deadline = arrival + slack ticks

    def validate(self):
        if self.job_count < 0:
            raise ConfigError(f"job_count must be >= 0, got {self.job_count}")
        if self.mean_interarrival <= 0:
            raise ConfigError(f"mean_interarrival must be > 0, got {self.mean_interarrival}")
        if self.load_factor <= 0:
            raise ConfigError(f"load_factor must be > 0, got {self.load_factor}")
        if set(self.priority_mix) != set(PRIORITY_BANDS):
            raise ConfigError(f"priority_mix must have keys {sorted(PRIORITY_BANDS)}")
        if any(v < 0 for v in self.priority_mix.values()) or sum(self.priority_mix.values()) <= 0:
            raise ConfigError("priority_mix weights must be non-negative with positive sum")
        for name in ("compute_range", "demand_range", "cpi_range", "mapi_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        lo, hi = self.demand_range
        if hi > 1.0:
            raise ConfigError(f"demand_range upper bound {hi} exceeds 1.0")
        if self.deadline_slack is not None and self.deadline_slack <= 0:
            raise ConfigError(f"deadline_slack must be positive, got {self.deadline_slack}")


def generate_synthetic(config: TraceConfig) -> list[Job]:
    """Generate ``config.job_count`` jobs with Poisson arrivals.

    Identical config (including seed) yields a bit-identical trace.  Jobs
    come back sorted by arrival time.
    """
    config.validate()
    n = config.job_count
    if n == 0:
        return []
    rng = np.random.default_rng(config.seed)

    gap = config.mean_interarrival / config.load_factor
    arrivals = np.floor(np.cumsum(rng.exponential(gap, size=n))).astype(int)

    bands = list(PRIORITY_BANDS)
    mix = np.array([config.priority_mix[b] for b in bands], dtype=float)
    mix = mix / mix.sum()
    band_choice = rng.choice(len(bands), size=n, p=mix)
    lows = np.array([PRIORITY_BANDS[b][0] for b in bands])
    highs = np.array([PRIORITY_BANDS[b][1] for b in bands])
    priorities = rng.uniform(lows[band_choice], highs[band_choice])

    compute = rng.uniform(*config.compute_range, size=n)
    demand = rng.uniform(*config.demand_range, size=(n, RESOURCE_DIMS))
    cpi = rng.uniform(*config.cpi_range, size=n)
    mapi = rng.uniform(*config.mapi_range, size=n)

    jobs = []
    for i in range(n):
        deadline = None
        if config.deadline_slack is not None:
            deadline = int(arrivals[i]) + config.deadline_slack
        jobs.append(
            Job(
                id=i,
                arrival_time=int(arrivals[i]),
                compute_units=float(compute[i]),
                resource_demand=(float(demand[i, 0]), float(demand[i, 1])),
                priority=float(priorities[i]),
                deadline=deadline,
                cpi=float(cpi[i]),
                mapi=float(mapi[i]),
            )
        )
    return jobs


def trace_shard(jobs: list[Job], shard_index: int, shard_jobs: int) -> list[Job]:
    """Cut a contiguous window out of a trace and rebase arrivals to t=0.

    Shards cycle when ``shard_index`` runs past the end of the trace, so any
    number of training episodes can draw from one fixed trace file.
    """
    if not jobs or shard_jobs <= 0:
        return []
    n_shards = max(1, math.ceil(len(jobs) / shard_jobs))
    start = (shard_index % n_shards) * shard_jobs
    window = jobs[start : start + shard_jobs]
    if not window:
        window = jobs[:shard_jobs]
    base = window[0].arrival_time
    return [
        Job(
            id=j.id,
            arrival_time=j.arrival_time - base,
            compute_units=j.compute_units,
            resource_demand=j.resource_demand,
            priority=j.priority,
            deadline=None if j.deadline is None else j.deadline - base,
            cpi=j.cpi,
            mapi=j.mapi,
        )
        for j in window
    ]


def estimate_exec_time(job: Job, cpu_freq_ghz: float, interference: float) -> float:
    """Execution time in ticks: compute / (frequency * (1 - interference))."""
    if cpu_freq_ghz <= 0:
        raise ValueError(f"cpu_freq_ghz must be > 0, got {cpu_freq_ghz}")
    if not 0.0 <= interference < 1.0:
        raise ValueError(f"interference must be in [0, 1), got {interference}")
    return job.compute_units / (cpu_freq_ghz * (1.0 - interference))


def _parse_row(raw: dict, row_num: int) -> Job:
    def num(col, caster):
        try:
            return caster(raw[col])
        except (ValueError, TypeError):
            raise TraceError(f"row {row_num}: bad value {raw[col]!r} in column {col!r}") from None

    job_id = num("job_id", int)
    arrival = num("arrival_time", int)
    compute = num("compute_units", float)
    cpu_d = num("cpu_demand", float)
    mem_d = num("mem_demand", float)
    priority = num("priority", float)
    cpi = num("cpi", float)
    mapi = num("mapi", float)

    if not 0.0 <= priority <= 1.0:
        raise TraceError(f"row {row_num}: priority {priority} outside [0, 1]")
    try:
        return Job(
            id=job_id,
            arrival_time=arrival,
            compute_units=compute,
            resource_demand=(cpu_d, mem_d),
            priority=priority,
            cpi=cpi,
            mapi=mapi,
        )
    except ConfigError as exc:
        raise TraceError(f"row {row_num}: {exc}") from None


def load_trace(path) -> list[Job]:
    """Read a trace CSV, validating every row; returns jobs sorted by arrival.

    Malformed rows raise :class:`TraceError` naming the row and column; they
    are never skipped silently.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise TraceError(f"{path}: empty file, expected header {','.join(TRACE_COLUMNS)}")
        if tuple(reader.fieldnames) != TRACE_COLUMNS:
            raise TraceError(
                f"{path}: bad header {reader.fieldnames}, expected {list(TRACE_COLUMNS)}"
            )
        jobs = []
        for row_num, raw in enumerate(reader, start=2):  # header is line 1
            if any(v is None for v in raw.values()) or None in raw:
                raise TraceError(f"row {row_num}: expected {len(TRACE_COLUMNS)} columns")
            jobs.append(_parse_row(raw, row_num))
    jobs.sort(key=lambda j: (j.arrival_time, j.id))
    return jobs


def write_trace(jobs: list[Job], path) -> None:
    """Write jobs to the trace CSV schema (deterministic byte output)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for j in jobs:
            writer.writerow(
                [
                    j.id,
                    j.arrival_time,
                    repr(j.compute_units),
                    repr(j.resource_demand[0]),
                    repr(j.resource_demand[1]),
                    repr(j.priority),
                    repr(j.cpi),
                    repr(j.mapi),
                ]
            )
