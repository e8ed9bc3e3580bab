"""Episodic environment contract consumed by exploration and deployment.

An Environment builds independent episodes from per-episode seeds; an
Episode is a single-threaded handle over one trajectory. Episodes must
support forking (independent copy, parent never mutated by rollouts on a
fork) so utility labels can be estimated by paired counterfactual
rollouts from the same state snapshot.

Actions are opaque to the callers here; by convention
``candidate_actions()[0]`` is the base policy's action and any other
candidate is an optimizer intervention. Truncated rollouts are scored as
the sum of step rewards, so environments express task-specific scoring
through the reward channel.
"""

from __future__ import annotations

from typing import Any, Dict, List, Optional, Protocol, runtime_checkable


class EnvFault(RuntimeError):
    """An environment failed while stepping; carries episode/step context."""


class CapabilityError(RuntimeError):
    """The environment does not support a required operation (e.g. fork)."""


@runtime_checkable
class Episode(Protocol):
    """One in-progress trajectory."""

    def done(self) -> bool:
        ...

    def observe(self) -> Dict[str, float]:
        """Raw observation record for the current step. Never exposes
        hidden state (latent type, true utility)."""
        ...

    def step(self, triggered: bool) -> float:
        """Execute the current step (base action or optimizer
        intervention) and advance. Returns the realized step reward."""
        ...

    def candidate_actions(self, k: int) -> List[Any]:
        """K candidate actions for the current step, base action first."""
        ...

    def apply_action(self, action: Any) -> float:
        """Execute a specific candidate action and advance."""
        ...

    def fork(self, reseed: Optional[int] = None, lookahead: Optional[int] = None) -> "Episode":
        """Independent copy positioned at the same state. With ``reseed``
        the copy continues on its own noise stream (rollout substream);
        without it the copy replays the parent's future exactly."""
        ...

    def state_digest(self) -> str:
        """Digest of the full current state, for paired-fork assertions."""
        ...

    def debug_state(self) -> Optional[Dict[str, Any]]:
        """Hidden per-step diagnostics (simulators only), or None."""
        ...


@runtime_checkable
class Environment(Protocol):
    """Episode factory plus the episode-level success rule."""

    env_id: str

    def episode(self, seed: int) -> Episode:
        ...

    def episode_success(self, episode_return: float) -> bool:
        ...

    def trigger_cost_units(self) -> float:
        ...
