"""Episode and sweep statistics: Jain's index, moving averages, CSV/JSON export.

CSV files are the reporting contract; every CSV gets a JSON mirror with the
same records for programmatic use.  Latency averages cover completed jobs
only (dismissed jobs never finish); the dismissal rate is reported next to
them.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .environment import CloudEnv, job_latency
from .errors import MetricError
from .workload import PRIORITY_BANDS

JOULES_PER_KWH = 3.6e6


@dataclass(frozen=True)
class EpisodeStats:
    """Aggregate statistics of one finished episode."""

    episode: int
    worker_id: int
    total_reward: float
    mean_latency: float
    total_energy_kwh: float
    dismissal_rate: float
    jain: float
    mean_latency_low: float
    mean_latency_medium: float
    mean_latency_high: float
    completed: int
    dismissed: int
    arrived: int
    wall_clock_s: float


REPORT_COLUMNS = (
    "episode",
    "worker_id",
    "total_reward",
    "mean_latency",
    "energy_kwh",
    "dismissal_rate",
    "jain_index",
)


def jain_index(allocations) -> float:
    """Jain's fairness index ``(sum x)^2 / (n * sum x^2)``, in [1/n, 1]."""
    x = np.asarray(allocations, dtype=float)
    if x.size == 0:
        raise MetricError("jain_index needs a non-empty allocation vector")
    if np.any(x < 0):
        raise MetricError("jain_index needs non-negative allocations")
    sq = float(np.sum(x * x))
    if sq == 0.0:
        raise MetricError("jain_index undefined for the all-zero vector")
    return float(np.sum(x)) ** 2 / (x.size * sq)


def moving_average(series, window: int) -> list[float]:
    """Trailing mean; the first window-1 entries average the available prefix."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    series = list(series)
    out = []
    acc = 0.0
    for i, v in enumerate(series):
        acc += v
        if i >= window:
            acc -= series[i - window]
        out.append(acc / min(i + 1, window))
    return out


def priority_band(priority: float) -> str:
    if priority <= PRIORITY_BANDS["low"][1]:
        return "low"
    if priority <= PRIORITY_BANDS["medium"][1]:
        return "medium"
    return "high"


def summarize_episode(
    env: CloudEnv,
    episode: int = 0,
    worker_id: int = 0,
    wall_clock_s: float = 0.0,
) -> EpisodeStats:
    """Fold one finished environment into an :class:`EpisodeStats` record.

    Jain's index runs over per-job allocated CPU-time (cpu demand times
    execution ticks) of completed jobs; degenerate episodes report NaN.
    """
    completed = env.completed
    latencies = [job_latency(c) for c in completed]
    mean_latency = float(np.mean(latencies)) if latencies else 0.0
    energy_kwh = sum(c.energy_joules for c in completed) / JOULES_PER_KWH
    arrived = env.arrived
    rate = len(env.dismissed) / arrived if arrived else 0.0

    shares = [c.job.resource_demand[0] * c.t_exec for c in completed]
    try:
        jain = jain_index(shares)
    except MetricError:
        jain = float("nan")

    band_lat = {}
    for band in PRIORITY_BANDS:
        vals = [l for c, l in zip(completed, latencies) if priority_band(c.job.priority) == band]
        band_lat[band] = float(np.mean(vals)) if vals else 0.0

    return EpisodeStats(
        episode=episode,
        worker_id=worker_id,
        total_reward=env.total_reward,
        mean_latency=mean_latency,
        total_energy_kwh=energy_kwh,
        dismissal_rate=rate,
        jain=jain,
        mean_latency_low=band_lat["low"],
        mean_latency_medium=band_lat["medium"],
        mean_latency_high=band_lat["high"],
        completed=len(completed),
        dismissed=len(env.dismissed),
        arrived=arrived,
        wall_clock_s=wall_clock_s,
    )


def _as_dict(record) -> dict:
    if dataclasses.is_dataclass(record) and not isinstance(record, type):
        return dataclasses.asdict(record)
    return dict(record)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def export_csv(records, path, columns=None) -> None:
    """Write records with a stable column order; reals at 6 significant digits.

    Re-exporting identical records yields a byte-identical file.
    """
    rows = [_as_dict(r) for r in records]
    if columns is None:
        if not rows:
            raise ValueError("columns must be given when records are empty")
        columns = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def export_json(records, path, columns=None) -> None:
    """JSON mirror of :func:`export_csv` (list of record objects)."""
    rows = [_as_dict(r) for r in records]
    if columns is not None:
        rows = [{c: row[c] for c in columns} for row in rows]
    cleaned = []
    for row in rows:
        cleaned.append(
            {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in row.items()}
        )
    with open(path, "w") as fh:
        json.dump(cleaned, fh, indent=2)
        fh.write("\n")


def report_row(stats: EpisodeStats) -> dict:
    """Project an episode record onto the training-report CSV columns."""
    return {
        "episode": stats.episode,
        "worker_id": stats.worker_id,
        "total_reward": stats.total_reward,
        "mean_latency": stats.mean_latency,
        "energy_kwh": stats.total_energy_kwh,
        "dismissal_rate": stats.dismissal_rate,
        "jain_index": stats.jain,
    }
