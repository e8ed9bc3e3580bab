"""Deployment harness: gated policies, success/cost accounting, and the
direction experiments.

All policies evaluated on one environment share the episode seed
schedule, so success-rate differences reflect trigger choices rather
than draw noise. Cost is counted in abstract call units: 1 per step,
plus the environment's trigger cost on triggered steps, normalized by
the never-trigger baseline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .envs import EnvFault, Environment
from .explore import (
    DEFAULT_K_CANDIDATES,
    DEFAULT_N_ROLLOUTS,
    DEFAULT_ROLLOUT_HORIZON,
    LabeledDataset,
    dataset_summary,
    estimate_utility_paired,
    run_exploration,
)
from .features import build_matrix, build_pool, extract_features, propose_llm_features
from .gate import GateModel, fit_gate, reverse_direction
from .rng import derive_seed, rng_for
from .stats import spearman
from .twosource import TwoSourceEnv, TwoSourceParams

logger = logging.getLogger(__name__)

ONLINE_EPS0 = 0.1
ONLINE_DECAY_EPISODES = 100
ONLINE_REFIT_EVERY = 30


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class PolicySpec:
    """A gating policy: the two bounds, a fixed-direction threshold on
    one signal, or a fitted gate (optionally direction-reversed)."""

    kind: str  # base_only | always_trigger | fixed_threshold | dial | reversed_dial
    signal: Optional[str] = None
    direction: int = 1
    threshold: float = 0.5
    model: Optional[GateModel] = None

    def __post_init__(self) -> None:
        kinds = ("base_only", "always_trigger", "fixed_threshold", "dial", "reversed_dial")
        if self.kind not in kinds:
            raise EvalError(f"unknown policy kind {self.kind!r}")
        if self.kind == "fixed_threshold":
            if self.direction not in (1, -1):
                raise EvalError(f"fixed_threshold direction must be +1 or -1, got {self.direction}")
            if not self.signal:
                raise EvalError("fixed_threshold needs a signal name")
        if self.kind in ("dial", "reversed_dial") and self.model is None:
            raise EvalError(f"{self.kind} policy needs a fitted gate model")

    def name(self) -> str:
        if self.kind == "fixed_threshold":
            arrow = ">" if self.direction == 1 else "<"
            return f"fixed({self.signal}{arrow}{self.threshold:g})"
        return self.kind

    def build(self):
        """Realize the per-observation trigger decision."""
        if self.kind == "base_only":
            return lambda obs: False
        if self.kind == "always_trigger":
            return lambda obs: True
        if self.kind == "fixed_threshold":
            signal, direction, theta = self.signal, self.direction, self.threshold
            return lambda obs: direction * float(obs.get(signal, 0.0)) > direction * theta
        model = self.model if self.kind == "dial" else reverse_direction(self.model)
        return model.decide


@dataclass(frozen=True)
class PerStepTrigger:
    step_index: int
    rate: float
    ci_low: float
    ci_high: float
    n: int


@dataclass(frozen=True)
class EvalResult:
    sr: float
    cost_x_base: float
    trigger_rate: float
    per_step_trigger: Tuple[PerStepTrigger, ...]
    n_episodes: int
    seed: int
    policy: str = ""
    env_id: str = ""


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> Tuple[float, float]:
    """95% binomial (Wilson score) interval."""
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def run_deployment(env: Environment, policy: PolicySpec, n_episodes: int, seed: int) -> EvalResult:
    """Evaluate one policy: success rate, cost relative to the
    never-trigger baseline under the same seed schedule, and the
    per-step trigger profile."""
    if n_episodes < 1:
        raise EvalError("n_episodes must be >= 1")
    decide = policy.build()
    tcu = env.trigger_cost_units()

    successes = 0
    total_cost = 0.0
    total_steps = 0
    total_triggers = 0
    step_counts: Dict[int, int] = {}
    step_triggers: Dict[int, int] = {}

    for i in range(n_episodes):
        episode = env.episode(derive_seed(seed, "eval-episode", i))
        episode_return = 0.0
        t = 0
        while not episode.done():
            try:
                obs = episode.observe()
                triggered = bool(decide(obs))
                episode_return += episode.step(triggered)
            except EnvFault:
                raise
            except Exception as exc:
                raise EnvFault(f"environment fault at eval episode {i}, step {t}: {exc}") from exc
            total_cost += 1.0 + (tcu if triggered else 0.0)
            total_steps += 1
            total_triggers += int(triggered)
            step_counts[t] = step_counts.get(t, 0) + 1
            step_triggers[t] = step_triggers.get(t, 0) + int(triggered)
            t += 1
        successes += int(env.episode_success(episode_return))

    profile = []
    for t in sorted(step_counts):
        low, high = wilson_interval(step_triggers[t], step_counts[t])
        profile.append(
            PerStepTrigger(t, step_triggers[t] / step_counts[t], low, high, step_counts[t])
        )
    return EvalResult(
        sr=successes / n_episodes,
        cost_x_base=total_cost / total_steps,  # base policy costs 1 unit per step
        trigger_rate=total_triggers / total_steps,
        per_step_trigger=tuple(profile),
        n_episodes=n_episodes,
        seed=seed,
        policy=policy.name(),
        env_id=getattr(env, "env_id", "unknown"),
    )


def pareto_dominates(a: EvalResult, b: EvalResult) -> bool:
    """True iff a is at least as good on both axes and strictly better
    on one."""
    return a.sr >= b.sr and a.cost_x_base <= b.cost_x_base and (
        a.sr > b.sr or a.cost_x_base < b.cost_x_base
    )


def trigger_rate_by_step(result: EvalResult) -> Tuple[PerStepTrigger, ...]:
    """Per-step trigger profile with binomial CIs; needs enough episodes
    for the intervals to mean anything."""
    if result.n_episodes < 30:
        raise EvalError(f"per-step profile needs >= 30 episodes, got {result.n_episodes}")
    return result.per_step_trigger


# -- gate fitting against an environment -----------------------------------------


def explore_and_fit(
    env: Environment,
    seed: int,
    *,
    eps: float = 0.5,
    n_explore: int = 50,
    horizon: Optional[int] = None,
    proposal_client: Optional[Any] = None,
    regularizer: str = "l1",
    tau: Any = 0.5,
    k_candidates: int = DEFAULT_K_CANDIDATES,
    n_rollouts: int = DEFAULT_N_ROLLOUTS,
    horizon_h: int = DEFAULT_ROLLOUT_HORIZON,
) -> Tuple[GateModel, LabeledDataset]:
    """Convenience pipeline: explore, summarize/propose (optional),
    build the pool, fit the gate."""
    dataset = run_exploration(
        env, eps=eps, n_episodes=n_explore, seed=derive_seed(seed, "explore"),
        k_candidates=k_candidates, n_rollouts=n_rollouts, horizon_h=horizon_h,
    )
    llm_specs = None
    if proposal_client is not None:
        llm_specs = propose_llm_features(dataset_summary(dataset), proposal_client).specs
    specs = build_pool(horizon or max(dataset.meta.horizon, 1), llm_specs)
    X, y, _ = build_matrix(dataset.records, specs)
    model = fit_gate(
        X, y, specs, regularizer=regularizer, seed=derive_seed(seed, "fit"), tau=tau
    )
    return model, dataset


def strongest_signal(dataset: LabeledDataset, specs: Sequence) -> Tuple[str, float]:
    """Feature with the largest |Spearman| against the utility label."""
    X, y, names = build_matrix(dataset.records, specs)
    if len(y) < 3:
        raise EvalError("not enough labeled rows to measure signal strength")
    best_name, best_abs = "", 0.0
    for j, name in enumerate(names):
        report = spearman(X[:, j], y)
        if not report.degenerate and abs(report.rho) > best_abs:
            best_name, best_abs = name, abs(report.rho)
    return best_name, best_abs


# -- direction experiments ---------------------------------------------------------


@dataclass(frozen=True)
class WrongDirectionRow:
    rho_star: float
    dominant_signal: str
    sr_dial: float
    sr_reversed: float
    delta_sr: float
    trigger_rate_dial: float


@dataclass(frozen=True)
class WrongDirectionReport:
    rows: Tuple[WrongDirectionRow, ...]  # sorted by rho_star ascending
    monotone: bool  # delta_sr weakly decreasing in rho_star


def wrong_direction_experiment(
    envs: Sequence[TwoSourceParams],
    seed: int,
    *,
    n_explore: int = 100,
    n_eval: int = 500,
) -> WrongDirectionReport:
    """Fit a gate per environment, evaluate it and its weight-reversed
    copy on shared seeds, and relate the damage to signal strength."""
    if len(envs) < 3:
        raise EvalError("need at least 3 signal strengths")
    rows: List[WrongDirectionRow] = []
    for idx, params in enumerate(envs):
        env = TwoSourceEnv(params, env_id=f"twosource[{idx}]")
        env_seed = derive_seed(seed, "wrong-direction", idx)
        model, dataset = explore_and_fit(env, env_seed, n_explore=n_explore)
        name, rho_star = strongest_signal(dataset, model.feature_specs)
        eval_seed = derive_seed(env_seed, "eval")
        dial = run_deployment(env, PolicySpec("dial", model=model), n_eval, eval_seed)
        rev = run_deployment(env, PolicySpec("reversed_dial", model=model), n_eval, eval_seed)
        rows.append(
            WrongDirectionRow(
                rho_star=rho_star,
                dominant_signal=name,
                sr_dial=dial.sr,
                sr_reversed=rev.sr,
                delta_sr=rev.sr - dial.sr,
                trigger_rate_dial=dial.trigger_rate,
            )
        )
    rows.sort(key=lambda r: r.rho_star)
    monotone = all(rows[i + 1].delta_sr <= rows[i].delta_sr for i in range(len(rows) - 1))
    return WrongDirectionReport(rows=tuple(rows), monotone=monotone)


@dataclass(frozen=True)
class GatePassRecord:
    direction: int
    threshold: float
    sr_a: float
    sr_b: float
    passes_a: bool
    passes_b: bool


@dataclass(frozen=True)
class CounterexampleVerdict:
    base_sr: Tuple[float, float]
    sigma_gates: Tuple[GatePassRecord, ...]
    any_sigma_passes_both: bool
    dial_sr: Tuple[float, float]
    dial_passes_both: bool


def _passes(sr: float, n: int, base_sr: float) -> bool:
    """CI-aware pass rule: the 95% binomial lower bound must reach the
    base success rate minus one point."""
    low, _ = wilson_interval(round(sr * n), n)
    return low >= base_sr - 0.01


def prop1_counterexample(
    env_pair: Tuple[TwoSourceParams, TwoSourceParams],
    threshold_grid: Optional[Sequence[float]] = None,
    seed: int = 0,
    *,
    n_eval: int = 500,
    n_explore: int = 100,
    signal_name: str = "signal",
) -> CounterexampleVerdict:
    """Exhaustively evaluate signal-only threshold gates on a mixture
    pair straddling the direction crossing, against the multi-feature
    gate fitted per environment.

    A policy "passes" an environment when its SR interval lower bound
    reaches that environment's base SR minus 1 point.
    """
    params_a, params_b = env_pair
    if not params_a.p_i0 < params_a.p_i_star():
        raise EvalError(
            f"first environment must be decision-dominated: p_i0={params_a.p_i0} "
            f">= crossing {params_a.p_i_star():.3f}"
        )
    if not params_b.p_i0 > params_b.p_i_star():
        raise EvalError(
            f"second environment must be unsuitable-dominated: p_i0={params_b.p_i0} "
            f"<= crossing {params_b.p_i_star():.3f}"
        )
    grid = np.linspace(0.0, 1.0, 41) if threshold_grid is None else np.asarray(threshold_grid, dtype=float)
    if grid.size < 1:
        raise EvalError("threshold grid is empty")

    env_a = TwoSourceEnv(params_a, env_id="twosource[A]")
    env_b = TwoSourceEnv(params_b, env_id="twosource[B]")
    eval_seed_a = derive_seed(seed, "prop1-eval", 0)
    eval_seed_b = derive_seed(seed, "prop1-eval", 1)

    base_a = run_deployment(env_a, PolicySpec("base_only"), n_eval, eval_seed_a)
    base_b = run_deployment(env_b, PolicySpec("base_only"), n_eval, eval_seed_b)

    gates: List[GatePassRecord] = []
    for direction in (1, -1):
        for theta in grid:
            spec = PolicySpec("fixed_threshold", signal=signal_name, direction=direction, threshold=float(theta))
            res_a = run_deployment(env_a, spec, n_eval, eval_seed_a)
            res_b = run_deployment(env_b, spec, n_eval, eval_seed_b)
            gates.append(
                GatePassRecord(
                    direction=direction,
                    threshold=float(theta),
                    sr_a=res_a.sr,
                    sr_b=res_b.sr,
                    passes_a=_passes(res_a.sr, n_eval, base_a.sr),
                    passes_b=_passes(res_b.sr, n_eval, base_b.sr),
                )
            )

    dial_srs = []
    dial_pass = []
    for env, eval_seed, base in ((env_a, eval_seed_a, base_a), (env_b, eval_seed_b, base_b)):
        model, _ = explore_and_fit(env, derive_seed(seed, f"prop1-fit-{env.env_id}"), n_explore=n_explore)
        res = run_deployment(env, PolicySpec("dial", model=model), n_eval, eval_seed)
        dial_srs.append(res.sr)
        dial_pass.append(_passes(res.sr, n_eval, base.sr))

    return CounterexampleVerdict(
        base_sr=(base_a.sr, base_b.sr),
        sigma_gates=tuple(gates),
        any_sigma_passes_both=any(g.passes_a and g.passes_b for g in gates),
        dial_sr=(dial_srs[0], dial_srs[1]),
        dial_passes_both=all(dial_pass),
    )


# -- online adaptation ----------------------------------------------------------------


@dataclass(frozen=True)
class RefitEvent:
    episode: int
    n_rows: int
    refit: bool
    reason: str


@dataclass(frozen=True)
class OnlineAdaptResult:
    final_model: GateModel
    trace: Tuple[EvalResult, ...]      # one result per refit block
    refits: Tuple[RefitEvent, ...]


def online_override_prob(episode_index: int, eps0: float = ONLINE_EPS0,
                         decay_episodes: int = ONLINE_DECAY_EPISODES) -> float:
    """Override probability: linear decay from eps0 to 0 over the first
    ``decay_episodes`` episodes."""
    return eps0 * max(0.0, 1.0 - episode_index / decay_episodes)


def online_adapt(
    env: Environment,
    initial_model: GateModel,
    n_episodes: int,
    seed: int,
    *,
    refit_every: int = ONLINE_REFIT_EVERY,
    k_candidates: int = DEFAULT_K_CANDIDATES,
    n_rollouts: int = DEFAULT_N_ROLLOUTS,
    horizon_h: int = DEFAULT_ROLLOUT_HORIZON,
) -> OnlineAdaptResult:
    """Deploy with decaying random overrides, refitting on their labels.

    With probability eps(episode) a step ignores the gate and triggers on
    a fair coin; overridden triggered steps get paired utility labels.
    Every ``refit_every`` episodes the gate refits on all labels so far
    with the initial model's solver configuration; a single-class
    accumulation skips the refit with a logged warning.
    """
    model = initial_model
    specs = initial_model.feature_specs
    rows_X: List[np.ndarray] = []
    rows_y: List[int] = []
    trace: List[EvalResult] = []
    refits: List[RefitEvent] = []
    tcu = env.trigger_cost_units()

    block_success = 0
    block_cost = 0.0
    block_steps = 0
    block_triggers = 0
    block_start = 0
    block_step_counts: Dict[int, int] = {}
    block_step_triggers: Dict[int, int] = {}

    for i in range(n_episodes):
        episode = env.episode(derive_seed(seed, "online-episode", i))
        override_rng = rng_for(seed, "online-override", i)
        eps_i = online_override_prob(i)
        episode_return = 0.0
        t = 0
        while not episode.done():
            obs = episode.observe()
            if override_rng.random() < eps_i:
                triggered = bool(override_rng.random() < 0.5)
                if triggered:
                    label = estimate_utility_paired(
                        episode, k_candidates, n_rollouts, horizon_h,
                        seed=derive_seed(seed, f"online-label:{i}", t),
                    )
                    rows_X.append(extract_features(specs, obs).values)
                    rows_y.append(label)
            else:
                triggered = model.decide(obs)
            episode_return += episode.step(triggered)
            block_cost += 1.0 + (tcu if triggered else 0.0)
            block_steps += 1
            block_triggers += int(triggered)
            block_step_counts[t] = block_step_counts.get(t, 0) + 1
            block_step_triggers[t] = block_step_triggers.get(t, 0) + int(triggered)
            t += 1
        block_success += int(env.episode_success(episode_return))

        if (i + 1) % refit_every == 0 or i + 1 == n_episodes:
            profile = tuple(
                PerStepTrigger(
                    s,
                    block_step_triggers[s] / block_step_counts[s],
                    *wilson_interval(block_step_triggers[s], block_step_counts[s]),
                    block_step_counts[s],
                )
                for s in sorted(block_step_counts)
            )
            trace.append(
                EvalResult(
                    sr=block_success / (i + 1 - block_start),
                    cost_x_base=block_cost / block_steps,
                    trigger_rate=block_triggers / block_steps,
                    per_step_trigger=profile,
                    n_episodes=i + 1 - block_start,
                    seed=seed,
                    policy="online_dial",
                    env_id=getattr(env, "env_id", "unknown"),
                )
            )
            block_success, block_cost, block_steps, block_triggers = 0, 0.0, 0, 0
            block_step_counts, block_step_triggers = {}, {}
            block_start = i + 1

        if (i + 1) % refit_every == 0 and i + 1 < n_episodes:
            y = np.asarray(rows_y, dtype=float)
            if len(np.unique(y)) < 2:
                logger.warning(
                    "online refit at episode %d skipped: single-class accumulated data (%d rows)",
                    i + 1, len(rows_y),
                )
                refits.append(RefitEvent(i + 1, len(rows_y), False, "single-class accumulated data"))
            else:
                model = fit_gate(
                    np.vstack(rows_X), y, specs,
                    regularizer=model.regularizer,
                    seed=derive_seed(seed, "online-refit", i + 1),
                    tau=model.tau,
                )
                refits.append(RefitEvent(i + 1, len(rows_y), True, "refit"))

    return OnlineAdaptResult(final_model=model, trace=tuple(trace), refits=tuple(refits))
