"""Deployment harness: policies, cost accounting, direction experiments."""

from __future__ import annotations

import numpy as np
import pytest

from dial.evaluate import (
    EvalError,
    EvalResult,
    PolicySpec,
    explore_and_fit,
    online_adapt,
    online_override_prob,
    pareto_dominates,
    prop1_counterexample,
    run_deployment,
    trigger_rate_by_step,
    wilson_interval,
    wrong_direction_experiment,
)
from dial.gate import GateModel, Standardizer, reverse_direction
from dial.features import FeatureSpec
from dial.twosource import TwoSourceEnv, TwoSourceParams


def _env(**kwargs):
    return TwoSourceEnv(TwoSourceParams(**kwargs))


def _signal_model(weight, bias=0.0, tau=0.5):
    spec = (FeatureSpec("sig", "llm", "signal * 1"),)
    std = Standardizer(("sig",), np.zeros(1), np.ones(1), ())
    return GateModel(
        feature_specs=spec, standardizer=std, weights=np.array([float(weight)]),
        bias=bias, tau=tau, regularizer="l1",
    )


# -- policy construction -------------------------------------------------------


def test_policy_kind_validation():
    with pytest.raises(EvalError):
        PolicySpec("sometimes")
    with pytest.raises(EvalError):
        PolicySpec("fixed_threshold", signal="signal", direction=2)
    with pytest.raises(EvalError):
        PolicySpec("fixed_threshold", direction=1)
    with pytest.raises(EvalError):
        PolicySpec("dial")


def test_fixed_threshold_directions():
    up = PolicySpec("fixed_threshold", signal="signal", direction=1, threshold=0.5).build()
    down = PolicySpec("fixed_threshold", signal="signal", direction=-1, threshold=0.5).build()
    assert up({"signal": 0.9}) and not up({"signal": 0.1})
    assert down({"signal": 0.1}) and not down({"signal": 0.9})
    assert not up({"signal": 0.5}) and not down({"signal": 0.5})  # strict


# -- run_deployment and cost accounting --------------------------------------------


def test_base_only_cost_is_exactly_one():
    result = run_deployment(_env(), PolicySpec("base_only"), 50, seed=0)
    assert result.cost_x_base == 1.0
    assert result.trigger_rate == 0.0


def test_always_trigger_cost_matches_units():
    result = run_deployment(_env(trigger_cost_units=5.0), PolicySpec("always_trigger"), 50, seed=0)
    assert result.cost_x_base == pytest.approx(6.0, abs=1e-12)
    assert result.trigger_rate == 1.0


def test_cost_formula_hand_arithmetic_three_episode_fixture():
    # 3 episodes x horizon 4; count the triggers of a threshold policy by
    # hand from the observed signals, then check the cost identity.
    env = _env(horizon=4, trigger_cost_units=5.0)
    policy = PolicySpec("fixed_threshold", signal="signal", direction=1, threshold=0.5)
    result = run_deployment(env, policy, 3, seed=21)

    from dial.rng import derive_seed

    triggered = 0
    for i in range(3):
        ep = env.episode(derive_seed(21, "eval-episode", i))
        while not ep.done():
            triggered += int(ep.observe()["signal"] > 0.5)
            ep.step(False)
    expected = 1.0 + 5.0 * triggered / 12.0
    assert result.cost_x_base == pytest.approx(expected, abs=1e-9)
    assert result.trigger_rate == pytest.approx(triggered / 12.0, abs=1e-12)


def test_never_firing_gate_equals_base_only():
    env = _env(noise_sd=0.2)
    silent = _signal_model(weight=0.0, bias=0.0, tau=0.5)  # sigmoid(0) = 0.5, never > tau
    base = run_deployment(env, PolicySpec("base_only"), 80, seed=3)
    gated = run_deployment(env, PolicySpec("dial", model=silent), 80, seed=3)
    assert gated.sr == base.sr
    assert gated.cost_x_base == 1.0


def test_deployment_deterministic():
    env = _env(noise_sd=0.3)
    policy = PolicySpec("fixed_threshold", signal="signal", direction=1, threshold=0.3)
    a = run_deployment(env, policy, 60, seed=5)
    b = run_deployment(env, policy, 60, seed=5)
    assert a == b


def test_deployment_validates_episode_count():
    with pytest.raises(EvalError):
        run_deployment(_env(), PolicySpec("base_only"), 0, seed=0)


# -- pareto --------------------------------------------------------------------------


def test_pareto_dominates_examples():
    def result(sr, cost):
        return EvalResult(sr=sr, cost_x_base=cost, trigger_rate=0.5,
                          per_step_trigger=(), n_episodes=100, seed=0)

    assert pareto_dominates(result(0.9, 2.0), result(0.8, 3.0))
    assert not pareto_dominates(result(0.9, 2.0), result(0.9, 2.0))  # needs a strict edge
    assert not pareto_dominates(result(0.9, 3.0), result(0.8, 2.0))  # trade-off
    assert pareto_dominates(result(0.9, 2.0), result(0.9, 2.5))


# -- trigger profiles ------------------------------------------------------------------


def test_trigger_profile_bounds_policies():
    env = _env(horizon=6)
    always = run_deployment(env, PolicySpec("always_trigger"), 40, seed=1)
    base = run_deployment(env, PolicySpec("base_only"), 40, seed=1)
    assert all(p.rate == 1.0 for p in trigger_rate_by_step(always))
    assert all(p.rate == 0.0 for p in trigger_rate_by_step(base))
    assert [p.step_index for p in always.per_step_trigger] == list(range(6))


def test_trigger_profile_needs_episodes():
    result = run_deployment(_env(), PolicySpec("base_only"), 10, seed=0)
    with pytest.raises(EvalError):
        trigger_rate_by_step(result)


def test_wilson_interval_sanity():
    low, high = wilson_interval(50, 100)
    assert 0.4 < low < 0.5 < high < 0.6
    assert wilson_interval(0, 100)[0] == pytest.approx(0.0, abs=1e-12)
    assert wilson_interval(100, 100)[1] == 1.0


def test_profile_decays_when_late_steps_turn_unsuitable():
    # Mixture drifts toward unsuitable over the episode; the fitted gate
    # should trigger less at later steps.
    params = TwoSourceParams(p_i0=0.1, p_i_slope=0.09, noise_sd=0.2, fidelity_q=1.0)
    env = TwoSourceEnv(params)
    model, _ = explore_and_fit(env, seed=8, n_explore=120)
    result = run_deployment(env, PolicySpec("dial", model=model), 500, seed=9)
    profile = trigger_rate_by_step(result)
    early = np.mean([p.rate for p in profile[:3]])
    late = np.mean([p.rate for p in profile[-3:]])
    assert late < early


# -- reversal -------------------------------------------------------------------------


def test_reversed_policy_complements_zero_bias_gate():
    env = _env(noise_sd=0.2)
    model = _signal_model(weight=2.0, bias=0.0, tau=0.5)
    dial = run_deployment(env, PolicySpec("dial", model=model), 50, seed=11)
    rev = run_deployment(env, PolicySpec("reversed_dial", model=model), 50, seed=11)
    assert dial.trigger_rate + rev.trigger_rate == pytest.approx(1.0, abs=1e-12)
    for p_d, p_r in zip(dial.per_step_trigger, rev.per_step_trigger):
        assert p_d.rate + p_r.rate == pytest.approx(1.0, abs=1e-12)


def test_dial_beats_base_where_rollouts_harm_on_average():
    params = TwoSourceParams(alpha=2.0, beta=1.0, p_i0=0.85, noise_sd=0.2, fidelity_q=1.0)
    env = TwoSourceEnv(params)
    model, _ = explore_and_fit(env, seed=5, n_explore=100)
    base = run_deployment(env, PolicySpec("base_only"), 300, seed=77)
    always = run_deployment(env, PolicySpec("always_trigger"), 300, seed=77)
    dial = run_deployment(env, PolicySpec("dial", model=model), 300, seed=77)
    assert always.sr < base.sr  # net-harmful optimizer
    assert dial.sr >= base.sr - 0.02
    assert dial.trigger_rate < always.trigger_rate


# -- wrong-direction experiment ----------------------------------------------------------


def test_wrong_direction_requires_three_strengths():
    with pytest.raises(EvalError):
        wrong_direction_experiment([TwoSourceParams(), TwoSourceParams()], seed=0)


def test_wrong_direction_smoke():
    envs = [
        TwoSourceParams(p_i0=0.5, fidelity_q=0.0, noise_sd=0.3),
        TwoSourceParams(p_i0=0.5, fidelity_q=0.5, noise_sd=0.15, alpha=0.6, beta=0.6),
        TwoSourceParams(p_i0=0.5, fidelity_q=1.0, noise_sd=0.1),
    ]
    report = wrong_direction_experiment(envs, seed=1, n_explore=40, n_eval=120)
    assert len(report.rows) == 3
    rhos = [r.rho_star for r in report.rows]
    assert rhos == sorted(rhos)
    assert report.rows[-1].delta_sr < -0.15


# -- counterexample -----------------------------------------------------------------------


def test_prop1_rejects_same_side_pair():
    pair = (TwoSourceParams(p_i0=0.1), TwoSourceParams(p_i0=0.1))
    with pytest.raises(EvalError):
        prop1_counterexample(pair, seed=0)


def test_prop1_degenerate_grid_still_well_formed():
    pair = (TwoSourceParams(p_i0=0.1, fidelity_q=1.0, noise_sd=0.1),
            TwoSourceParams(p_i0=0.9, fidelity_q=1.0, noise_sd=0.1))
    verdict = prop1_counterexample(pair, threshold_grid=[0.5], seed=2, n_eval=60, n_explore=30)
    assert len(verdict.sigma_gates) == 2  # one threshold x two directions
    assert isinstance(verdict.any_sigma_passes_both, bool)
    assert isinstance(verdict.dial_passes_both, bool)


# -- online adaptation ----------------------------------------------------------------------


def test_override_probability_schedule():
    assert online_override_prob(0) == pytest.approx(0.1)
    assert online_override_prob(50) == pytest.approx(0.05)
    assert online_override_prob(100) == 0.0
    assert online_override_prob(250) == 0.0


def test_online_adapt_refit_boundaries():
    params = TwoSourceParams(p_i0=0.5, noise_sd=0.1, fidelity_q=1.0)
    env = TwoSourceEnv(params)
    initial, _ = explore_and_fit(env, seed=11, n_explore=60)
    result = online_adapt(env, initial, n_episodes=100, seed=13)
    assert [r.episode for r in result.refits] == [30, 60, 90]
    assert all(r.refit for r in result.refits)  # balanced mixture: both classes seen
    assert len(result.trace) == 4  # blocks ending at 30/60/90/100


def test_online_adapt_skips_single_class_refits():
    # Pure decision-type, noise-free: every override label is 1, so no
    # refit has two classes to work with.
    params = TwoSourceParams(p_i0=0.0, noise_sd=0.0, fidelity_q=1.0)
    env = TwoSourceEnv(params)
    initial = _signal_model(weight=1.0)
    result = online_adapt(env, initial, n_episodes=60, seed=19)
    assert [r.episode for r in result.refits] == [30]
    assert not result.refits[0].refit
    assert "single-class" in result.refits[0].reason
    assert result.final_model is initial


def test_online_adapt_stationary_agreement():
    params = TwoSourceParams(p_i0=0.5, noise_sd=0.1, fidelity_q=1.0)
    env = TwoSourceEnv(params)
    initial, _ = explore_and_fit(env, seed=11, n_explore=100)
    result = online_adapt(env, initial, n_episodes=120, seed=13)
    from dial.twosource import sample_states

    states = sample_states(params, 1500, seed=999)
    agree = 0
    for i in range(1500):
        obs = {
            "step_count": float(states["step_index"][i]),
            "signal": float(states["signal"][i]),
            "type_proxy": float(states["type_proxy"][i]),
            "num_options": float(states["num_options"][i]),
            "is_finish": float(states["is_finish"][i]),
        }
        agree += int(result.final_model.decide(obs) == initial.decide(obs))
    assert agree / 1500 >= 0.9
