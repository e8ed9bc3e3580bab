"""Signal-agnostic exploration and paired counterfactual labeling.

Each step triggers the optimizer with a fixed probability, independent
of every observation field, which keeps the collected labels free of
selection bias. A triggered step's utility label is estimated by forking
the episode and scoring the optimizer's pick against the base action
under an identical truncated-rollout protocol; the label is 1 only when
the pick strictly wins. Untriggered steps are persisted unlabeled so
whole-trajectory statistics stay computable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .envs import CapabilityError, EnvFault, Environment, Episode
from .features import extract_universal
from .rng import derive_seed, rng_for

DEFAULT_EPS_EXPLORE = 0.5
DEFAULT_N_EXPLORE = 50
DEFAULT_K_CANDIDATES = 5
DEFAULT_N_ROLLOUTS = 5
DEFAULT_ROLLOUT_HORIZON = 3

_SUMMARY_EXAMPLE_SEED = 20_240_001
_MAX_EXAMPLES_PER_CLASS = 5


@dataclass
class StepRecord:
    """One decision step as collected during exploration."""

    episode_id: int
    step_index: int
    obs: Dict[str, float]
    triggered: bool
    utility_label: Optional[int]
    signal: float
    latent_type_debug: Optional[str] = None       # simulator only, never a feature
    true_utility_debug: Optional[float] = None    # simulator only, never a feature

    def __post_init__(self) -> None:
        if self.triggered != (self.utility_label is not None):
            raise ValueError("utility_label must be present exactly when the step triggered")
        if self.utility_label is not None and self.utility_label not in (0, 1):
            raise ValueError(f"utility_label must be binary, got {self.utility_label}")


@dataclass
class DatasetMeta:
    env_id: str
    seed: int
    eps_explore: float
    n_explore: int
    horizon: int
    k_candidates: int = DEFAULT_K_CANDIDATES
    n_rollouts: int = DEFAULT_N_ROLLOUTS
    rollout_horizon: int = DEFAULT_ROLLOUT_HORIZON
    extra: Dict[str, Any] = field(default_factory=dict)


@dataclass
class LabeledDataset:
    """Ordered step records plus collection provenance."""

    records: List[StepRecord]
    meta: DatasetMeta

    def labeled(self) -> List[StepRecord]:
        return [r for r in self.records if r.utility_label is not None]

    def n_steps(self) -> int:
        return len(self.records)


def estimate_utility_paired(
    episode: Episode,
    k_candidates: int,
    n_rollouts: int,
    horizon_h: int,
    seed: int,
) -> int:
    """Binary utility of invoking the optimizer at the episode's current
    state.

    All candidates (base action first) are scored as the mean of
    ``n_rollouts`` truncated returns from forks of the same snapshot;
    each rollout runs on its own noise substream so the comparison is
    not coupled by shared draws. Returns 1 iff the best candidate
    strictly beats the base action; ties label 0.
    """
    if k_candidates < 2:
        raise ValueError("paired estimation needs the base action plus at least one alternative")
    if horizon_h < 1:
        raise ValueError("rollout horizon must be >= 1")
    if not callable(getattr(episode, "fork", None)):
        raise CapabilityError("environment does not support forking; paired estimation unavailable")

    candidates = episode.candidate_actions(k_candidates)
    values = np.empty(len(candidates))
    for ci, action in enumerate(candidates):
        returns = np.empty(n_rollouts)
        for ri in range(n_rollouts):
            substream = derive_seed(seed, f"rollout:{ci}", ri)
            fork = episode.fork(reseed=substream, lookahead=horizon_h - 1)
            total = fork.apply_action(action)
            steps_taken = 1
            while steps_taken < horizon_h and not fork.done():
                total += fork.step(False)
                steps_taken += 1
            returns[ri] = total
        values[ci] = returns.mean()
    best = int(np.argmax(values))  # first index wins ties, so ties keep the base action
    return int(values[best] > values[0])


def run_exploration(
    env: Environment,
    eps: float = DEFAULT_EPS_EXPLORE,
    n_episodes: int = DEFAULT_N_EXPLORE,
    seed: int = 0,
    *,
    k_candidates: int = DEFAULT_K_CANDIDATES,
    n_rollouts: int = DEFAULT_N_ROLLOUTS,
    horizon_h: int = DEFAULT_ROLLOUT_HORIZON,
    env_meta: Optional[Dict[str, Any]] = None,
) -> LabeledDataset:
    """Collect the exploration dataset.

    Trigger decisions come from a dedicated stream derived from the
    master seed, so they are independent of all observation content.
    Episodes are assembled in episode-index order; replaying with the
    same seed reproduces the dataset exactly.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")

    records: List[StepRecord] = []
    horizon_seen = 0
    for ep_idx in range(n_episodes):
        episode = env.episode(derive_seed(seed, "episode", ep_idx))
        trigger_rng = rng_for(seed, "trigger", ep_idx)
        step_idx = 0
        while not episode.done():
            try:
                obs = episode.observe()
                debug = episode.debug_state() if hasattr(episode, "debug_state") else None
                triggered = bool(trigger_rng.random() < eps)
                label: Optional[int] = None
                if triggered:
                    label = estimate_utility_paired(
                        episode,
                        k_candidates,
                        n_rollouts,
                        horizon_h,
                        seed=derive_seed(seed, f"label:{ep_idx}", step_idx),
                    )
                episode.step(triggered)
            except (CapabilityError, ValueError):
                raise
            except Exception as exc:
                raise EnvFault(f"environment fault at episode {ep_idx}, step {step_idx}: {exc}") from exc
            records.append(
                StepRecord(
                    episode_id=ep_idx,
                    step_index=step_idx,
                    obs=obs,
                    triggered=triggered,
                    utility_label=label,
                    signal=float(obs.get("signal", obs.get("token_entropy", 0.0))),
                    latent_type_debug=None if debug is None else debug.get("latent_type"),
                    true_utility_debug=None if debug is None else debug.get("true_utility"),
                )
            )
            step_idx += 1
        horizon_seen = max(horizon_seen, step_idx)

    meta = DatasetMeta(
        env_id=getattr(env, "env_id", "unknown"),
        seed=seed,
        eps_explore=eps,
        n_explore=n_episodes,
        horizon=horizon_seen,
        k_candidates=k_candidates,
        n_rollouts=n_rollouts,
        rollout_horizon=horizon_h,
        extra=dict(env_meta or {}),
    )
    return LabeledDataset(records=records, meta=meta)


def dataset_summary(dataset: LabeledDataset) -> Dict[str, Any]:
    """Deterministic summary of an exploration dataset: totals, trigger
    rate, positive-utility fraction, per-step breakdown, and up to five
    fixed-seed representative examples per label class."""
    if not dataset.records:
        raise ValueError("cannot summarize an empty dataset")
    records = dataset.records
    labeled = dataset.labeled()
    n_steps = len(records)
    n_labeled = len(labeled)
    positives = [r for r in labeled if r.utility_label == 1]
    negatives = [r for r in labeled if r.utility_label == 0]

    by_step: Dict[int, Dict[str, float]] = {}
    for step in sorted({r.step_index for r in records}):
        at_step = [r for r in records if r.step_index == step]
        lab = [r for r in at_step if r.utility_label is not None]
        pos = sum(r.utility_label for r in lab)
        by_step[step] = {
            "n_steps": len(at_step),
            "n_triggered": len(lab),
            "trigger_rate": len(lab) / len(at_step),
            "positive_fraction": pos / len(lab) if lab else None,
        }

    rng = np.random.default_rng(_SUMMARY_EXAMPLE_SEED)

    def _examples(pool: List[StepRecord]) -> List[Dict[str, Any]]:
        if not pool:
            return []
        take = min(_MAX_EXAMPLES_PER_CLASS, len(pool))
        picks = rng.choice(len(pool), size=take, replace=False)
        return [
            {
                "episode_id": pool[i].episode_id,
                "step_index": pool[i].step_index,
                "obs": dict(pool[i].obs),
                "utility_label": pool[i].utility_label,
            }
            for i in sorted(int(p) for p in picks)
        ]

    return {
        "env_id": dataset.meta.env_id,
        "n_episodes": len({r.episode_id for r in records}),
        "n_steps": n_steps,
        "n_labeled": n_labeled,
        "trigger_rate": n_labeled / n_steps,
        "positive_fraction": len(positives) / n_labeled if n_labeled else None,
        "per_step": by_step,
        "examples_positive": _examples(positives),
        "examples_negative": _examples(negatives),
    }


# -- persistence -------------------------------------------------------------

_CONTRACT_FIELDS = ("episode_id", "step_index", "triggered", "utility_label", "features", "signal", "env_meta")


def dataset_to_jsonl(dataset: LabeledDataset, env_meta: Optional[Dict[str, Any]] = None) -> str:
    """Serialize one record per line.

    Contract fields: episode_id, step_index, triggered, utility_label
    (null when absent), features (name->value map), signal, env_meta.
    The raw observation and simulator debug fields ride along so feature
    pools can be recomputed from the file.
    """
    shared_meta = {
        "env": dataset.meta.env_id,
        "seed": dataset.meta.seed,
        "eps_explore": dataset.meta.eps_explore,
        "n_explore": dataset.meta.n_explore,
        "horizon": dataset.meta.horizon,
        "k_candidates": dataset.meta.k_candidates,
        "n_rollouts": dataset.meta.n_rollouts,
        "rollout_horizon": dataset.meta.rollout_horizon,
    }
    shared_meta.update(dataset.meta.extra)
    shared_meta.update(env_meta or {})
    lines = []
    for r in dataset.records:
        row = {
            "episode_id": r.episode_id,
            "step_index": r.step_index,
            "triggered": r.triggered,
            "utility_label": r.utility_label,
            "features": extract_universal(r.obs).as_dict(),
            "signal": r.signal,
            "env_meta": shared_meta,
            "obs": {k: float(v) for k, v in r.obs.items()},
            "latent_type_debug": r.latent_type_debug,
            "true_utility_debug": r.true_utility_debug,
        }
        lines.append(json.dumps(row, sort_keys=True))
    return "\n".join(lines) + "\n"


def save_dataset_jsonl(dataset: LabeledDataset, path: str, env_meta: Optional[Dict[str, Any]] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dataset_to_jsonl(dataset, env_meta))


def load_dataset_jsonl(path: str) -> LabeledDataset:
    records: List[StepRecord] = []
    shared_meta: Dict[str, Any] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            shared_meta = row["env_meta"]
            records.append(
                StepRecord(
                    episode_id=row["episode_id"],
                    step_index=row["step_index"],
                    obs=row.get("obs", row["features"]),
                    triggered=row["triggered"],
                    utility_label=row["utility_label"],
                    signal=row["signal"],
                    latent_type_debug=row.get("latent_type_debug"),
                    true_utility_debug=row.get("true_utility_debug"),
                )
            )
    if not records:
        raise ValueError(f"dataset file {path} holds no records")
    known = {"env", "seed", "eps_explore", "n_explore", "horizon", "k_candidates", "n_rollouts", "rollout_horizon"}
    meta = DatasetMeta(
        env_id=shared_meta.get("env", "unknown"),
        seed=shared_meta.get("seed", 0),
        eps_explore=shared_meta.get("eps_explore", DEFAULT_EPS_EXPLORE),
        n_explore=shared_meta.get("n_explore", 0),
        horizon=shared_meta.get("horizon", 0),
        k_candidates=shared_meta.get("k_candidates", DEFAULT_K_CANDIDATES),
        n_rollouts=shared_meta.get("n_rollouts", DEFAULT_N_ROLLOUTS),
        rollout_horizon=shared_meta.get("rollout_horizon", DEFAULT_ROLLOUT_HORIZON),
        extra={k: v for k, v in shared_meta.items() if k not in known},
    )
    return LabeledDataset(records=records, meta=meta)
