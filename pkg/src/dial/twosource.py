"""Synthetic two-source episodic environment.

Each step is one of two latent regimes: intervention-unsuitable states
("I", utility slopes down in the signal) and decision-difficult states
("D", utility slopes up). The per-step mixture drifts with the step
index, an observed binary proxy tracks the latent type with adjustable
fidelity, and triggering the optimizer injects the state's hidden
utility into the step reward. This makes the sign structure of the
signal-utility relationship fully controllable at desk scale.

Conventions (fixed for reproducibility):
  - signal ~ Uniform(0, 1) per step.
  - latent noise is Normal(0, noise_sd), drawn as a standard normal and
    scaled, so seeds align across noise settings.
  - every step also carries a zero-mean reward noise (same sd) shared by
    the triggered and untriggered arms, so the paired return difference
    is exactly the state's true utility while episode returns (and hence
    success rates) remain non-degenerate under the base policy.
  - type_proxy = 1 marks the decision-difficult type ("evidence
    available"); it matches the latent indicator with probability
    (1 + fidelity_q) / 2.
  - num_options is an auxiliary decision-space count drawn independently
    of the latent type (a decoy feature the gate should learn to drop).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional

import numpy as np

from .envs import EnvFault

TYPE_I = "I"
TYPE_D = "D"

_NUM_OPTIONS_LO = 2
_NUM_OPTIONS_HI = 6  # inclusive


class InvalidParams(ValueError):
    """Generative parameters violate their invariants."""


@dataclass(frozen=True)
class TwoSourceParams:
    """Generative parameters of the two-source environment."""

    alpha: float = 1.0            # within-type slope, unsuitable states (> 0)
    beta: float = 1.0             # within-type slope, decision states (> 0)
    p_i0: float = 0.5             # base fraction of unsuitable states
    p_i_slope: float = 0.0        # per-step drift of that fraction
    noise_sd: float = 0.1         # sd of latent utility noise and reward noise
    fidelity_q: float = 1.0       # informativeness of the type proxy, in [0, 1]
    horizon: int = 10             # steps per episode
    base_reward: float = 1.0      # mean untriggered step reward
    success_threshold: float = float("nan")  # default: horizon * base_reward
    trigger_cost_units: float = 5.0          # cost added per trigger, base-step units

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise InvalidParams(f"slopes must be positive, got alpha={self.alpha}, beta={self.beta}")
        if not 0.0 <= self.p_i0 <= 1.0:
            raise InvalidParams(f"p_i0 must be in [0, 1], got {self.p_i0}")
        if self.noise_sd < 0:
            raise InvalidParams(f"noise_sd must be nonnegative, got {self.noise_sd}")
        if not 0.0 <= self.fidelity_q <= 1.0:
            raise InvalidParams(f"fidelity_q must be in [0, 1], got {self.fidelity_q}")
        if self.horizon < 1:
            raise InvalidParams(f"horizon must be a positive count, got {self.horizon}")
        if not self.trigger_cost_units > 0:
            raise InvalidParams(f"trigger_cost_units must be positive, got {self.trigger_cost_units}")
        if np.isnan(self.success_threshold):
            object.__setattr__(self, "success_threshold", self.horizon * self.base_reward)

    def p_i(self, step_index: int) -> float:
        """Unsuitable-state probability at a step: clamp(p_i0 + slope * t, 0, 1)."""
        return float(np.clip(self.p_i0 + self.p_i_slope * step_index, 0.0, 1.0))

    def p_i_star(self) -> float:
        """Mixture at which the aggregate signal-utility correlation crosses zero."""
        return self.beta / (self.alpha + self.beta)


def intervene_mixture(params: TwoSourceParams, mode: str, delta: float) -> TwoSourceParams:
    """Shift the base mixture: info_poor adds delta to p_i0 (more unsuitable
    states), info_rich subtracts it. All other fields unchanged."""
    if mode == "info_poor":
        new_p = params.p_i0 + delta
    elif mode == "info_rich":
        new_p = params.p_i0 - delta
    else:
        raise ValueError(f"unknown intervention mode: {mode!r}")
    if not 0.0 <= new_p <= 1.0:
        raise InvalidParams(f"intervention pushes p_i0 to {new_p:.4f}, outside [0, 1]")
    return replace(params, p_i0=new_p)


@dataclass(frozen=True)
class SimState:
    """One pre-drawn decision step. Hidden fields (latent_type,
    true_utility, reward_noise) are never exposed through observations."""

    step_index: int
    latent_type: str              # TYPE_I or TYPE_D
    signal: float
    type_proxy: int               # noisy indicator of the decision-difficult type
    num_options: int
    true_utility: float
    reward_noise: float
    is_finish: bool


def step_return(params: TwoSourceParams, state: SimState, triggered: bool) -> float:
    """Realized step reward. The triggered-minus-untriggered difference
    from the same state is exactly the state's true utility."""
    reward = params.base_reward + state.reward_noise
    if triggered:
        reward += state.true_utility
    return reward


def _draw_states(
    params: TwoSourceParams,
    rng: np.random.Generator,
    start: int,
    count: int,
) -> List[SimState]:
    """Draw `count` consecutive states starting at step index `start`.

    Draw order is fixed (signal, type, latent noise, reward noise, proxy
    flip, num_options) so identical seeds give identical sequences.
    """
    if count <= 0:
        return []
    steps = np.arange(start, start + count)
    p_i = np.clip(params.p_i0 + params.p_i_slope * steps, 0.0, 1.0)
    signals = rng.random(count)
    is_type_i = rng.random(count) < p_i
    latent_eps = rng.standard_normal(count) * params.noise_sd
    reward_eps = rng.standard_normal(count) * params.noise_sd
    flip = rng.random(count) < (1.0 - params.fidelity_q) / 2.0
    num_options = rng.integers(_NUM_OPTIONS_LO, _NUM_OPTIONS_HI + 1, count)

    slope = np.where(is_type_i, -params.alpha, params.beta)
    utilities = slope * signals + latent_eps
    is_type_d = ~is_type_i
    proxies = np.where(flip, ~is_type_d, is_type_d).astype(int)

    states = []
    for i in range(count):
        t = int(steps[i])
        states.append(
            SimState(
                step_index=t,
                latent_type=TYPE_I if is_type_i[i] else TYPE_D,
                signal=float(signals[i]),
                type_proxy=int(proxies[i]),
                num_options=int(num_options[i]),
                true_utility=float(utilities[i]),
                reward_noise=float(reward_eps[i]),
                is_finish=t == params.horizon - 1,
            )
        )
    return states


class TwoSourceEpisode:
    """Handle over one episode: a deterministic pre-drawn step sequence.

    State transitions are exogenous (trigger decisions never change which
    states arrive), so policies compared under one episode seed see
    identical state streams. Forks snapshot the current state; a fork
    created with ``reseed`` continues on its own noise stream, which is
    how paired rollout arms are decoupled.
    """

    def __init__(
        self,
        params: TwoSourceParams,
        seed: Optional[int] = None,
        _states: Optional[List[SimState]] = None,
        _cursor: int = 0,
        _rng: Optional[np.random.Generator] = None,
    ):
        self.params = params
        if _states is None:
            rng = np.random.default_rng(seed)
            self._states = _draw_states(params, rng, 0, params.horizon)
            self._cursor = 0
            self._rng = rng
        else:
            self._states = _states
            self._cursor = _cursor
            self._rng = _rng

    # -- episode protocol -------------------------------------------------

    def done(self) -> bool:
        return self._cursor >= self.params.horizon

    def _current(self) -> SimState:
        if self.done():
            raise EnvFault("episode is finished")
        if self._cursor >= len(self._states):
            # Lazily extend a fork stepped past its pre-drawn lookahead.
            if self._rng is None:
                raise EnvFault("fork exhausted its pre-drawn states")
            self._states.extend(
                _draw_states(self.params, self._rng, len(self._states), self._cursor - len(self._states) + 1)
            )
        return self._states[self._cursor]

    def observe(self) -> Dict[str, float]:
        return observe(self._current())

    def step(self, triggered: bool) -> float:
        reward = step_return(self.params, self._current(), bool(triggered))
        self._cursor += 1
        return reward

    def candidate_actions(self, k: int) -> List[int]:
        if k < 1:
            raise ValueError("need at least one candidate action")
        return list(range(k))

    def apply_action(self, action: int) -> float:
        return self.step(triggered=action != 0)

    def fork(self, reseed: Optional[int] = None, lookahead: Optional[int] = None) -> "TwoSourceEpisode":
        if self.done():
            raise EnvFault("cannot fork a finished episode")
        self._current()  # materialize the snapshot step
        if reseed is None:
            # Exact replay: share the immutable pre-drawn future.
            return TwoSourceEpisode(
                self.params, _states=list(self._states), _cursor=self._cursor, _rng=None
            )
        remaining = self.params.horizon - self._cursor - 1
        ahead = remaining if lookahead is None else min(lookahead, remaining)
        fork_rng = np.random.default_rng(reseed)
        states = self._states[: self._cursor + 1]
        states = states + _draw_states(self.params, fork_rng, self._cursor + 1, ahead)
        return TwoSourceEpisode(self.params, _states=states, _cursor=self._cursor, _rng=fork_rng)

    def state_digest(self) -> str:
        s = self._current()
        payload = np.array(
            [s.step_index, s.signal, s.type_proxy, s.num_options, s.true_utility, s.reward_noise],
            dtype=np.float64,
        ).tobytes()
        return hashlib.sha256(payload + s.latent_type.encode()).hexdigest()

    def debug_state(self) -> Dict[str, Any]:
        s = self._current()
        return {
            "latent_type": s.latent_type,
            "true_utility": s.true_utility,
            "p_i": self.params.p_i(s.step_index),
        }


class TwoSourceEnv:
    """Environment wrapper: builds episodes and owns the success rule."""

    def __init__(self, params: TwoSourceParams, env_id: str = "twosource"):
        self.params = params
        self.env_id = env_id

    def episode(self, seed: int) -> TwoSourceEpisode:
        return spawn_episode(self.params, seed)

    def episode_success(self, episode_return: float) -> bool:
        return episode_return >= self.params.success_threshold

    def trigger_cost_units(self) -> float:
        return self.params.trigger_cost_units


def spawn_episode(params: TwoSourceParams, seed: int) -> TwoSourceEpisode:
    """Deterministic episode handle for (params, seed)."""
    if not isinstance(params, TwoSourceParams):
        raise InvalidParams("params must be a TwoSourceParams instance")
    return TwoSourceEpisode(params, seed=seed)


def observe(state: SimState) -> Dict[str, float]:
    """Observation record for a state; hidden fields stay hidden."""
    return {
        "step_count": float(state.step_index),
        "signal": float(state.signal),
        "type_proxy": float(state.type_proxy),
        "num_options": float(state.num_options),
        "is_finish": float(state.is_finish),
    }


def sample_states(params: TwoSourceParams, n_states: int, seed: int) -> Dict[str, np.ndarray]:
    """Vectorized state sample for verification sweeps.

    Steps cycle through episode positions (so mixture drift is
    represented) but are drawn in one flat pass; this sampler has its own
    deterministic stream, independent of episode handles.
    """
    if n_states < 1:
        raise ValueError("n_states must be positive")
    rng = np.random.default_rng(seed)
    steps = np.tile(np.arange(params.horizon), n_states // params.horizon + 1)[:n_states]
    p_i = np.clip(params.p_i0 + params.p_i_slope * steps, 0.0, 1.0)
    signals = rng.random(n_states)
    is_type_i = rng.random(n_states) < p_i
    latent_eps = rng.standard_normal(n_states) * params.noise_sd
    reward_eps = rng.standard_normal(n_states) * params.noise_sd
    flip = rng.random(n_states) < (1.0 - params.fidelity_q) / 2.0
    num_options = rng.integers(_NUM_OPTIONS_LO, _NUM_OPTIONS_HI + 1, n_states)
    slope = np.where(is_type_i, -params.alpha, params.beta)
    is_type_d = ~is_type_i
    return {
        "step_index": steps,
        "signal": signals,
        "is_type_d": is_type_d,
        "type_proxy": np.where(flip, ~is_type_d, is_type_d).astype(int),
        "num_options": num_options,
        "true_utility": slope * signals + latent_eps,
        "reward_noise": reward_eps,
        "is_finish": (steps == params.horizon - 1),
    }
