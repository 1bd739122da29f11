"""Actor and critic networks with hand-rolled forward/backward passes,
priority-weighted softmax action selection, TD error, and advantage.

Both networks are small tanh MLPs over the full observation vector; the
actor emits one score per action (K slots + no-op), the critic a scalar
value.  Action probabilities follow
``softmax(score + beta * priority)`` with empty slots masked out, so a
positive ``beta`` tilts selection toward urgent jobs while keeping
exploration alive.

Gradient sign conventions (the optimizer must honor these):
  * actor gradients point in the ASCENT direction of
    ``sum_i log pi(a_i|s_i) * A_i`` -- apply with ``param += step``;
  * critic gradients are the plain gradient of the squared-error loss
    ``sum_i (V(s_i) - R_i)^2`` -- apply with ``param -= step``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError

MASK_LOGIT = -1e30  # additive mask; underflows to exactly zero probability

Layers = list[tuple[np.ndarray, np.ndarray]]  # [(W: (in, out), b: (out,)), ...]


@dataclass
class PolicyParams:
    """Actor and critic layer stacks plus a sync version counter."""

    actor: Layers
    critic: Layers
    version: int = 0

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            actor=[(w.copy(), b.copy()) for w, b in self.actor],
            critic=[(w.copy(), b.copy()) for w, b in self.critic],
            version=self.version,
        )

    @property
    def obs_dim(self) -> int:
        return self.actor[0][0].shape[0]

    @property
    def n_actions(self) -> int:
        return self.actor[-1][0].shape[1]


def _validate_chain(layers: Layers, name: str, out_width: int | None = None):
    for i, (w, b) in enumerate(layers):
        if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
            raise ShapeError(f"{name} layer {i}: weight {w.shape} / bias {b.shape} mismatch")
        if i > 0 and layers[i - 1][0].shape[1] != w.shape[0]:
            raise ShapeError(
                f"{name} layers {i - 1}->{i}: widths {layers[i - 1][0].shape[1]} vs {w.shape[0]}"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ShapeError(f"{name} layer {i}: non-finite parameters")
    if out_width is not None and layers[-1][0].shape[1] != out_width:
        raise ShapeError(f"{name}: output width {layers[-1][0].shape[1]}, expected {out_width}")


def validate_params(params: PolicyParams, obs_dim: int | None = None):
    _validate_chain(params.actor, "actor")
    _validate_chain(params.critic, "critic", out_width=1)
    if obs_dim is not None:
        for name, layers in (("actor", params.actor), ("critic", params.critic)):
            if layers[0][0].shape[0] != obs_dim:
                raise ShapeError(f"{name}: input width {layers[0][0].shape[0]}, expected {obs_dim}")


def init_params(obs_dim: int, n_actions: int, hidden=(64, 64), seed: int = 0) -> PolicyParams:
    """Fresh parameters, uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    rng = np.random.default_rng(seed)

    def stack(widths):
        layers = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            layers.append(
                (
                    rng.uniform(-bound, bound, size=(fan_in, fan_out)),
                    rng.uniform(-bound, bound, size=fan_out),
                )
            )
        return layers

    return PolicyParams(
        actor=stack([obs_dim, *hidden, n_actions]),
        critic=stack([obs_dim, *hidden, 1]),
    )


def _forward(obs: np.ndarray, layers: Layers) -> tuple[np.ndarray, list[np.ndarray]]:
    """Tanh-hidden forward pass; returns output and per-layer activations."""
    acts = [np.asarray(obs, dtype=float)]
    h = acts[0]
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def _check_obs(obs, layers, name):
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (layers[0][0].shape[0],):
        raise ShapeError(
            f"{name}: observation shape {obs.shape}, expected ({layers[0][0].shape[0]},)"
        )
    return obs


def actor_forward(obs: np.ndarray, params: PolicyParams) -> np.ndarray:
    """Action scores Q(s, .) of width K+1."""
    obs = _check_obs(obs, params.actor, "actor_forward")
    out, _ = _forward(obs, params.actor)
    return out


def critic_forward(obs: np.ndarray, params: PolicyParams) -> float:
    """State value V(s)."""
    obs = _check_obs(obs, params.critic, "critic_forward")
    out, _ = _forward(obs, params.critic)
    return float(out[0])


@dataclass(frozen=True)
class ActionDistribution:
    probabilities: np.ndarray
    chosen: int
    log_prob_chosen: float


def _masked_softmax(scores: np.ndarray, priorities: np.ndarray, beta: float, live) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    priorities = np.asarray(priorities, dtype=float)
    if scores.shape != priorities.shape:
        raise ShapeError(f"scores {scores.shape} vs priorities {priorities.shape}")
    logits = scores + beta * priorities
    if live is not None:
        logits = np.where(np.asarray(live, dtype=bool), logits, MASK_LOGIT)
    logits = logits - logits.max()
    exps = np.exp(logits)
    return exps / exps.sum()


def select_action(
    scores: np.ndarray,
    priorities: np.ndarray,
    beta: float,
    rng: np.random.Generator,
    live=None,
) -> ActionDistribution:
    """Sample from softmax(score + beta * priority) over live actions."""
    probs = _masked_softmax(scores, priorities, beta, live)
    chosen = int(rng.choice(len(probs), p=probs))
    return ActionDistribution(
        probabilities=probs,
        chosen=chosen,
        log_prob_chosen=float(np.log(probs[chosen])),
    )


def greedy_action(scores: np.ndarray, priorities: np.ndarray, beta: float, live=None) -> int:
    """Argmax of score + beta * priority over live actions."""
    logits = np.asarray(scores, dtype=float) + beta * np.asarray(priorities, dtype=float)
    if live is not None:
        logits = np.where(np.asarray(live, dtype=bool), logits, MASK_LOGIT)
    return int(np.argmax(logits))


def td_error(r: float, v_next: float, v_now: float, discount: float) -> float:
    """One-step TD error ``r + discount * v_next - v_now``."""
    if not 0.0 <= discount <= 1.0:
        raise ValueError(f"discount must be in [0, 1], got {discount}")
    return r + discount * v_next - v_now


def n_step_advantage(rewards, v_bootstrap: float, v_now: float, discount: float) -> float:
    """Discounted n-step return plus discounted bootstrap, minus V(s).

    The bootstrap is discounted by ``discount ** len(rewards)`` so the
    same quantity appears whether the segment ends mid-episode or not
    (terminal successors pass ``v_bootstrap = 0``).
    """
    rewards = list(rewards)
    if not rewards:
        raise ValueError("rewards must be non-empty")
    if not 0.0 <= discount <= 1.0:
        raise ValueError(f"discount must be in [0, 1], got {discount}")
    ret = 0.0
    for r in reversed(rewards):
        ret = r + discount * ret
    return ret + discount ** len(rewards) * v_bootstrap - v_now


@dataclass(frozen=True)
class TrajectoryStep:
    """One step of experience as needed for gradient computation."""

    obs: np.ndarray
    action: int
    reward: float
    bias: np.ndarray  # beta * priorities per action, zero for the ablation
    live: np.ndarray  # boolean mask per action


@dataclass
class Gradients:
    """Parameter-shaped gradient accumulators."""

    actor: Layers
    critic: Layers
    accumulation_count: int = 0

    @classmethod
    def zeros_like(cls, params: PolicyParams) -> "Gradients":
        return cls(
            actor=[(np.zeros_like(w), np.zeros_like(b)) for w, b in params.actor],
            critic=[(np.zeros_like(w), np.zeros_like(b)) for w, b in params.critic],
        )

    def add_(self, other: "Gradients"):
        for mine, theirs in ((self.actor, other.actor), (self.critic, other.critic)):
            for (w, b), (dw, db) in zip(mine, theirs):
                w += dw
                b += db
        self.accumulation_count += other.accumulation_count

    def is_finite(self) -> bool:
        for layers in (self.actor, self.critic):
            for w, b in layers:
                if not (np.isfinite(w).all() and np.isfinite(b).all()):
                    return False
        return True


def global_norm(layers: Layers) -> float:
    return float(np.sqrt(sum(float((w**2).sum() + (b**2).sum()) for w, b in layers)))


def clip_gradients(grads: Gradients, max_norm: float) -> Gradients:
    """Scale each network's gradient stack to a global norm of max_norm."""
    for layers in (grads.actor, grads.critic):
        norm = global_norm(layers)
        if norm > max_norm > 0:
            scale = max_norm / norm
            for w, b in layers:
                w *= scale
                b *= scale
    return grads


def _backward(layers: Layers, acts: list[np.ndarray], d_out: np.ndarray) -> Layers:
    """Backprop d_out through a tanh MLP; returns per-layer (dW, db)."""
    grads: Layers = [None] * len(layers)  # type: ignore[list-item]
    delta = d_out
    for i in reversed(range(len(layers))):
        pre = acts[i]
        grads[i] = (np.outer(pre, delta), delta.copy())
        if i > 0:
            w, _ = layers[i]
            delta = (delta @ w.T) * (1.0 - acts[i] ** 2)
    return grads


def compute_gradients(
    segment: list[TrajectoryStep],
    params: PolicyParams,
    discount: float,
    v_bootstrap: float = 0.0,
) -> Gradients:
    """Accumulated actor/critic gradients over one trajectory segment.

    Returns are bootstrapped backward from ``v_bootstrap`` (zero at
    terminal states); each step contributes
    ``grad log pi(a_i|s_i) * (R_i - V(s_i))`` to the actor stack and the
    gradient of ``(V(s_i) - R_i)^2`` to the critic stack.
    """
    if not segment:
        raise ValueError("segment must be non-empty")
    grads = Gradients.zeros_like(params)
    ret = v_bootstrap
    returns = np.empty(len(segment))
    for i in reversed(range(len(segment))):
        ret = segment[i].reward + discount * ret
        returns[i] = ret

    for i, step in enumerate(segment):
        scores, actor_acts = _forward(np.asarray(step.obs, dtype=float), params.actor)
        value_out, critic_acts = _forward(np.asarray(step.obs, dtype=float), params.critic)
        value = float(value_out[0])
        advantage = returns[i] - value

        logits = scores + step.bias
        logits = np.where(np.asarray(step.live, dtype=bool), logits, MASK_LOGIT)
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        if not np.isfinite(probs).all():
            raise NumericalError("non-finite policy distribution", step_index=i)

        d_scores = -probs * advantage
        d_scores[step.action] += advantage
        actor_step = _backward(params.actor, actor_acts, d_scores)

        d_value = np.array([2.0 * (value - returns[i])])
        critic_step = _backward(params.critic, critic_acts, d_value)

        for (gw, gb), (dw, db) in zip(grads.actor, actor_step):
            gw += dw
            gb += db
        for (gw, gb), (dw, db) in zip(grads.critic, critic_step):
            gw += dw
            gb += db
    grads.accumulation_count = len(segment)
    if not grads.is_finite():
        raise NumericalError("non-finite gradient accumulation", step_index=len(segment) - 1)
    return grads


def save_checkpoint(params: PolicyParams, path) -> None:
    """Dump parameters to a .npz with shape metadata and version."""
    arrays = {"version": np.array(params.version)}
    arrays["n_actor_layers"] = np.array(len(params.actor))
    arrays["n_critic_layers"] = np.array(len(params.critic))
    for i, (w, b) in enumerate(params.actor):
        arrays[f"actor_w{i}"] = w
        arrays[f"actor_b{i}"] = b
    for i, (w, b) in enumerate(params.critic):
        arrays[f"critic_w{i}"] = w
        arrays[f"critic_b{i}"] = b
    np.savez(path, **arrays)


def load_checkpoint(path) -> PolicyParams:
    """Load a checkpoint, validating the layer shape chain."""
    with np.load(path) as data:
        try:
            n_actor = int(data["n_actor_layers"])
            n_critic = int(data["n_critic_layers"])
            actor = [(data[f"actor_w{i}"], data[f"actor_b{i}"]) for i in range(n_actor)]
            critic = [(data[f"critic_w{i}"], data[f"critic_b{i}"]) for i in range(n_critic)]
            version = int(data["version"])
        except KeyError as exc:
            raise ShapeError(f"checkpoint {path}: missing array {exc}") from None
    params = PolicyParams(actor=actor, critic=critic, version=version)
    validate_params(params)
    return params
