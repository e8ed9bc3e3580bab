"""Two-source environment: determinism, mixture structure, reward rule."""

from __future__ import annotations

import numpy as np
import pytest

from dial.envs import EnvFault
from dial.stats import spearman
from dial.twosource import (
    InvalidParams,
    SimState,
    TwoSourceEnv,
    TwoSourceParams,
    intervene_mixture,
    sample_states,
    spawn_episode,
    step_return,
)


def collect_episode(params, seed):
    ep = spawn_episode(params, seed)
    rows = []
    while not ep.done():
        obs = ep.observe()
        debug = ep.debug_state()
        rows.append((obs, debug))
        ep.step(False)
    return rows


def test_same_seed_identical_step_sequence():
    params = TwoSourceParams(noise_sd=0.2, fidelity_q=0.7)
    assert collect_episode(params, 123) == collect_episode(params, 123)


def test_different_seeds_differ():
    params = TwoSourceParams()
    a = collect_episode(params, 1)
    b = collect_episode(params, 2)
    assert any(ra[0]["signal"] != rb[0]["signal"] for ra, rb in zip(a, b))


def test_degenerate_horizon_rejected():
    with pytest.raises(InvalidParams):
        TwoSourceParams(horizon=0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"alpha": 0.0},
        {"beta": -1.0},
        {"p_i0": 1.5},
        {"noise_sd": -0.1},
        {"fidelity_q": 2.0},
        {"trigger_cost_units": 0.0},
    ],
)
def test_invalid_params_rejected(kwargs):
    with pytest.raises(InvalidParams):
        TwoSourceParams(**kwargs)


def test_mixture_schedule_clamp_arithmetic():
    params = TwoSourceParams(p_i0=0.3, p_i_slope=0.05, horizon=10)
    assert params.p_i(9) == pytest.approx(0.75)
    assert params.p_i(0) == pytest.approx(0.3)
    steep = TwoSourceParams(p_i0=0.9, p_i_slope=0.2, horizon=10)
    assert steep.p_i(9) == 1.0  # clamped


def test_fidelity_one_makes_proxy_deterministic():
    states = sample_states(TwoSourceParams(fidelity_q=1.0), 5000, seed=0)
    assert np.array_equal(states["type_proxy"], states["is_type_d"].astype(int))


def test_fidelity_zero_decouples_proxy_from_type():
    states = sample_states(TwoSourceParams(fidelity_q=0.0, p_i0=0.5), 10_000, seed=1)
    corr = np.corrcoef(states["type_proxy"], states["is_type_d"].astype(float))[0, 1]
    assert abs(corr) < 0.05


def test_intermediate_fidelity_match_probability():
    q = 0.6
    states = sample_states(TwoSourceParams(fidelity_q=q, p_i0=0.5), 20_000, seed=2)
    match = (states["type_proxy"] == states["is_type_d"].astype(int)).mean()
    assert match == pytest.approx((1 + q) / 2, abs=0.02)


def test_observation_hides_latent_fields():
    ep = spawn_episode(TwoSourceParams(), seed=3)
    obs = ep.observe()
    assert set(obs) == {"step_count", "signal", "type_proxy", "num_options", "is_finish"}
    assert "true_utility" not in obs and "latent_type" not in obs


def _state(latent, signal, utility, reward_noise=0.0, step=0, horizon=10):
    return SimState(
        step_index=step,
        latent_type=latent,
        signal=signal,
        type_proxy=int(latent == "D"),
        num_options=3,
        true_utility=utility,
        reward_noise=reward_noise,
        is_finish=step == horizon - 1,
    )


def test_step_return_difference_is_utility_type_d():
    params = TwoSourceParams(beta=1.0, noise_sd=0.0)
    state = _state("D", signal=0.4, utility=0.4)
    diff = step_return(params, state, True) - step_return(params, state, False)
    assert diff == pytest.approx(0.4)


def test_step_return_difference_is_utility_type_i():
    params = TwoSourceParams(alpha=1.0, noise_sd=0.0)
    state = _state("I", signal=0.4, utility=-0.4)
    diff = step_return(params, state, True) - step_return(params, state, False)
    assert diff == pytest.approx(-0.4)


def test_zero_signal_zero_noise_arms_equal():
    params = TwoSourceParams(noise_sd=0.0)
    state = _state("I", signal=0.0, utility=0.0)
    assert step_return(params, state, True) == step_return(params, state, False)


def test_reward_noise_shared_between_arms():
    # The paired difference stays exactly the utility even with noise.
    params = TwoSourceParams(noise_sd=0.5)
    state = _state("D", signal=0.7, utility=0.9, reward_noise=0.31)
    diff = step_return(params, state, True) - step_return(params, state, False)
    assert diff == pytest.approx(0.9, abs=1e-12)


def test_intervention_shifts():
    params = TwoSourceParams(p_i0=0.5)
    assert intervene_mixture(params, "info_poor", 0.3).p_i0 == pytest.approx(0.8)
    assert intervene_mixture(params, "info_rich", 0.3).p_i0 == pytest.approx(0.2)
    assert intervene_mixture(params, "info_poor", 0.3).alpha == params.alpha


def test_intervention_range_violation():
    with pytest.raises(InvalidParams):
        intervene_mixture(TwoSourceParams(p_i0=0.9), "info_poor", 0.3)
    with pytest.raises(ValueError):
        intervene_mixture(TwoSourceParams(), "info_medium", 0.1)


def test_pure_type_extremes_have_exact_rank_correlation():
    pure_i = sample_states(TwoSourceParams(p_i0=1.0, noise_sd=0.0), 500, seed=4)
    assert spearman(pure_i["signal"], pure_i["true_utility"]).rho == pytest.approx(-1.0)
    pure_d = sample_states(TwoSourceParams(p_i0=0.0, noise_sd=0.0), 500, seed=5)
    assert spearman(pure_d["signal"], pure_d["true_utility"]).rho == pytest.approx(1.0)


def test_mixture_sign_tracks_prediction():
    # Quick version of the full acceptance sweep.
    for p_i0, expect in ((0.25, 1), (0.75, -1)):
        states = sample_states(
            TwoSourceParams(p_i0=p_i0, noise_sd=0.3), 5000, seed=int(p_i0 * 100)
        )
        rho = spearman(states["signal"], states["true_utility"]).rho
        assert np.sign(rho) == expect


def test_simpson_reversal_at_high_mixture():
    states = sample_states(TwoSourceParams(p_i0=0.8, noise_sd=0.3), 5000, seed=6)
    d = states["is_type_d"]
    within_d = spearman(states["signal"][d], states["true_utility"][d]).rho
    aggregate = spearman(states["signal"], states["true_utility"]).rho
    assert within_d > 0.3 and aggregate < -0.1


def test_episode_return_is_sum_of_step_returns_and_reproducible():
    params = TwoSourceParams(noise_sd=0.2)
    triggers = [True, False] * 5
    totals = []
    for _ in range(2):
        ep = spawn_episode(params, seed=7)
        total = 0.0
        for trig in triggers:
            total += ep.step(trig)
        totals.append(total)
    assert totals[0] == totals[1]  # bit-identical


def test_fork_without_reseed_replays_parent():
    ep = spawn_episode(TwoSourceParams(noise_sd=0.3), seed=8)
    ep.step(False)
    fork = ep.fork()
    assert fork.state_digest() == ep.state_digest()
    while not fork.done():
        assert fork.observe() == ep.observe()
        assert fork.step(False) == ep.step(False)


def test_fork_reseed_shares_snapshot_but_diverges_later():
    ep = spawn_episode(TwoSourceParams(noise_sd=0.3), seed=9)
    ep.step(False)
    fork_a = ep.fork(reseed=100)
    fork_b = ep.fork(reseed=200)
    assert fork_a.state_digest() == fork_b.state_digest() == ep.state_digest()
    fork_a.step(False)
    fork_b.step(False)
    assert fork_a.observe()["signal"] != fork_b.observe()["signal"]


def test_fork_rollouts_do_not_mutate_parent():
    ep = spawn_episode(TwoSourceParams(), seed=10)
    before = ep.state_digest()
    fork = ep.fork(reseed=1, lookahead=2)
    fork.apply_action(3)
    while not fork.done():
        fork.step(False)
    assert ep.state_digest() == before


def test_stepping_past_horizon_raises():
    ep = spawn_episode(TwoSourceParams(horizon=2), seed=11)
    ep.step(False)
    ep.step(False)
    assert ep.done()
    with pytest.raises(EnvFault):
        ep.step(False)


def test_success_threshold_defaults_to_base_return():
    params = TwoSourceParams(horizon=10, base_reward=1.0)
    assert params.success_threshold == pytest.approx(10.0)
    env = TwoSourceEnv(params)
    assert env.episode_success(10.0) and not env.episode_success(9.99)


def test_base_only_success_rate_is_interior_with_noise():
    # Shared reward noise makes the never-trigger return a proper
    # distribution around the threshold instead of a point mass.
    params = TwoSourceParams(noise_sd=0.1)
    env = TwoSourceEnv(params)
    successes = 0
    for i in range(400):
        ep = env.episode(i)
        total = 0.0
        while not ep.done():
            total += ep.step(False)
        successes += int(env.episode_success(total))
    assert 0.35 < successes / 400 < 0.65
