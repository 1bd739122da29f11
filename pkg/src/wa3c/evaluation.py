"""Run a scheduler (heuristic or trained policy) through one episode.

Learned policies are evaluated greedily: argmax of score + beta * priority
over live actions.  Heuristics keep their own cursor/random state per run.
"""

from __future__ import annotations

from .baselines import HEURISTIC_KINDS, HeuristicScheduler, SchedulerKind
from .environment import CloudEnv
from .metrics import EpisodeStats, summarize_episode
from .policy import PolicyParams, actor_forward, greedy_action


def make_selector(
    kind: SchedulerKind,
    params: PolicyParams | None = None,
    beta: float = 2.0,
    seed: int = 0,
):
    """Selector callable ``(env, obs) -> action`` for the given scheduler."""
    if kind in HEURISTIC_KINDS:
        heuristic = HeuristicScheduler(kind, seed=seed)

        def select(env: CloudEnv, obs):
            return heuristic.schedule(env.slot_views(), env.available_resources(), env.no_op)

        return select

    if params is None:
        raise ValueError(f"{kind.value} evaluation needs trained parameters")
    eval_beta = 0.0 if kind is SchedulerKind.PLAIN_A3C else beta

    def select(env: CloudEnv, obs):
        scores = actor_forward(obs, params)
        return greedy_action(scores, env.slot_priorities(), eval_beta, env.live_mask())

    return select


def run_episode(env: CloudEnv, selector) -> CloudEnv:
    """Drive the environment to completion; returns it for inspection."""
    obs = env.reset()
    done = False
    while not done:
        outcome = env.step(selector(env, obs))
        obs = outcome.observation
        done = outcome.done
    return env


def evaluate(
    kind: SchedulerKind,
    trace,
    cluster,
    weights,
    reward_params,
    params: PolicyParams | None = None,
    beta: float = 2.0,
    seed: int = 0,
    episode: int = 0,
) -> EpisodeStats:
    """One full-trace evaluation episode, folded into episode statistics."""
    env = CloudEnv(trace, cluster, weights, reward_params)
    run_episode(env, make_selector(kind, params=params, beta=beta, seed=seed))
    return summarize_episode(env, episode=episode)
