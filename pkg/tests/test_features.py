"""Feature extraction, the expression language, and the proposal layer."""

from __future__ import annotations

import json

import numpy as np
import pytest

from dial.dsl import DslError, parse_expr
from dial.features import (
    FeatureError,
    FeatureProposal,
    FeatureSpec,
    HttpProposalClient,
    MockProposalClient,
    ProviderError,
    UNIVERSAL_FEATURES,
    build_pool,
    derive_features,
    derived_specs,
    evaluate_dsl,
    extract_features,
    extract_universal,
    propose_llm_features,
)

SIM_OBS = {"step_count": 3.0, "signal": 0.7, "type_proxy": 0.0, "num_options": 4.0, "is_finish": 0.0}


# -- universal / derived -----------------------------------------------------


def test_universal_maps_simulator_observation():
    vec = extract_universal(SIM_OBS)
    assert vec.names == UNIVERSAL_FEATURES
    assert vec.values.tolist() == [3.0, 0.7, 0.0, 4.0, 0.0]


def test_universal_defaults_to_zero_for_unexposed_signals():
    vec = extract_universal({"step_count": 2.0, "signal": 0.4})
    assert vec.values.tolist() == [2.0, 0.4, 0.0, 0.0, 0.0]


def test_finish_flag_passes_through():
    vec = extract_universal({**SIM_OBS, "is_finish": 1.0})
    assert vec.values[-1] == 1.0


def test_universal_prefers_exact_names_over_aliases():
    vec = extract_universal({"token_entropy": 0.9, "signal": 0.1})
    assert vec.values[1] == 0.9


def test_derived_formulas():
    base = extract_universal({"step_count": 5.0, "signal": 0.5})
    vec = derive_features(base, max_steps=10)
    assert vec.names[-3:] == ("step_ratio", "entropy_sq", "step_x_entropy")
    assert vec.values[-3:].tolist() == [0.5, 0.25, 2.5]


def test_derived_zero_cases():
    zero_sigma = derive_features(extract_universal({"step_count": 5.0, "signal": 0.0}), 10)
    assert zero_sigma.values[-2:].tolist() == [0.0, 0.0]
    zero_step = derive_features(extract_universal({"step_count": 0.0, "signal": 0.3}), 10)
    assert zero_step.values[-3] == 0.0 and zero_step.values[-1] == 0.0


def test_derived_rejects_zero_max_steps():
    base = extract_universal(SIM_OBS)
    with pytest.raises(FeatureError):
        derive_features(base, 0)
    with pytest.raises(FeatureError):
        derived_specs(0)


def test_extraction_is_pure():
    specs = build_pool(10)
    a = extract_features(specs, SIM_OBS)
    b = extract_features(specs, dict(SIM_OBS))
    assert np.array_equal(a.values, b.values)


# -- DSL ----------------------------------------------------------------------


def test_dsl_length_arithmetic():
    spec = FeatureSpec("f", "llm", 'length("abcd") / 2')
    assert evaluate_dsl(spec, {}) == 2.0


def test_dsl_keyword_count_empty_text():
    spec = FeatureSpec("f", "llm", 'keyword_count(state_text, "click")')
    assert evaluate_dsl(spec, {"state_text": ""}) == 0.0
    assert evaluate_dsl(spec, {}) == 0.0


def test_dsl_keyword_count_case_insensitive():
    spec = FeatureSpec("f", "llm", 'keyword_count(state_text, "Click")')
    assert evaluate_dsl(spec, {"state_text": "click[a] CLICK[b]"}) == 2.0


def test_dsl_regex_count():
    spec = FeatureSpec("f", "llm", 'regex_count(state_text, "[0-9]+")')
    assert evaluate_dsl(spec, {"state_text": "a1 b22 c"}) == 2.0


def test_dsl_clamp_endpoint():
    spec = FeatureSpec("f", "llm", "clamp(5, 0, 1)")
    assert evaluate_dsl(spec, {}) == 1.0


def test_dsl_comparison_is_indicator():
    spec = FeatureSpec("f", "llm", "signal > 0.5")
    assert evaluate_dsl(spec, {"signal": 0.7}) == 1.0
    assert evaluate_dsl(spec, {"signal": 0.5}) == 0.0


def test_dsl_division_by_zero_flagged_as_zero():
    compiled = parse_expr("signal / step_count")
    value, flags = compiled.evaluate({"signal": 1.0, "step_count": 0.0})
    assert value == 0.0 and flags.division_by_zero


def test_dsl_missing_field_defaults_to_zero():
    compiled = parse_expr("unknown_field + 1")
    value, flags = compiled.evaluate({})
    assert value == 1.0 and "unknown_field" in flags.missing_fields


@pytest.mark.parametrize(
    "bad",
    [
        "__import__('os')",
        "obs.attr",
        "x[0]",
        "lambda: 1",
        "f(1)",
        "regex_count(t, '[')",
        "'bare string'",
        "1 < 2 < 3",
        "keyword_count(t)",
        "",
    ],
)
def test_dsl_rejects_out_of_language_constructs(bad):
    with pytest.raises(DslError):
        parse_expr(bad)


def test_dsl_deterministic():
    compiled = parse_expr("max(signal, 0.2) * min(step_count, 3) - abs(0 - 1)")
    ns = {"signal": 0.6, "step_count": 5}
    assert compiled(ns) == compiled(ns) == 0.6 * 3 - 1


# -- pool assembly -------------------------------------------------------------


def test_pool_merges_with_unique_names():
    proposal = propose_llm_features({"any": "summary"}, MockProposalClient())
    pool = build_pool(10, proposal.specs)
    assert len(pool) == len(UNIVERSAL_FEATURES) + 3 + 5
    names = [s.name for s in pool]
    assert len(set(names)) == len(names)
    assert list(names[:5]) == list(UNIVERSAL_FEATURES)


def test_pool_rejects_duplicate_names():
    dupe = (FeatureSpec("step_ratio", "llm", "signal + 1"),) + tuple(
        FeatureSpec(f"f{i}", "llm", "signal") for i in range(4)
    )
    with pytest.raises(FeatureError):
        build_pool(10, dupe)


def test_mock_provider_is_deterministic():
    client = MockProposalClient()
    first = propose_llm_features({"a": 1}, client)
    second = propose_llm_features({"b": 2}, client)
    assert first.specs == second.specs
    assert len(first.specs) == 5


def test_proposal_requires_exactly_five():
    with pytest.raises(FeatureError):
        FeatureProposal(tuple(FeatureSpec(f"f{i}", "llm", "signal") for i in range(4)))


def test_proposal_rejects_unparseable_expression():
    specs = tuple(FeatureSpec(f"f{i}", "llm", "signal") for i in range(4))
    with pytest.raises(DslError):
        FeatureProposal(specs + (FeatureSpec("f4", "llm", "x[0]"),))


# -- HTTP client ----------------------------------------------------------------


class FakeResponse:
    def __init__(self, content):
        self._content = content

    def raise_for_status(self):
        pass

    def json(self):
        return {"choices": [{"message": {"content": self._content}}]}


GOOD_REPLY = json.dumps(
    [{"name": f"h{i}", "expr": "signal * 2"} for i in range(5)]
)


def _client(tmp_path, **kwargs):
    return HttpProposalClient(
        url="http://llm.invalid/v1/chat/completions",
        api_key="key",
        model="test-model",
        cache_path=str(tmp_path / "cache.json"),
        **kwargs,
    )


def test_http_client_parses_good_reply(tmp_path, monkeypatch):
    calls = []

    def fake_post(url, headers=None, json=None, timeout=None):
        calls.append(json)
        return FakeResponse("Here you go:\n" + GOOD_REPLY)

    monkeypatch.setattr("requests.post", fake_post)
    proposal = propose_llm_features({"n_steps": 10}, _client(tmp_path))
    assert len(proposal.specs) == 5
    assert calls and calls[0]["model"] == "test-model"


def test_http_client_uses_cache(tmp_path, monkeypatch):
    calls = []

    def fake_post(url, headers=None, json=None, timeout=None):
        calls.append(1)
        return FakeResponse(GOOD_REPLY)

    monkeypatch.setattr("requests.post", fake_post)
    client = _client(tmp_path)
    summary = {"n_steps": 10}
    propose_llm_features(summary, client)
    propose_llm_features(summary, _client(tmp_path))
    assert len(calls) == 1  # second call answered from cache


def test_http_client_retries_once_then_fails(tmp_path, monkeypatch):
    calls = []
    four = json.dumps([{"name": f"h{i}", "expr": "signal"} for i in range(4)])

    def fake_post(url, headers=None, json=None, timeout=None):
        calls.append(1)
        return FakeResponse(four)

    monkeypatch.setattr("requests.post", fake_post)
    with pytest.raises(ProviderError):
        _client(tmp_path).propose({"n": 1})
    assert len(calls) == 2


def test_http_client_unreachable(tmp_path, monkeypatch):
    def fake_post(url, headers=None, json=None, timeout=None):
        raise ConnectionError("no route to host")

    monkeypatch.setattr("requests.post", fake_post)
    with pytest.raises(ProviderError):
        _client(tmp_path).propose({"n": 1})


def test_http_client_requires_endpoint(monkeypatch):
    monkeypatch.delenv("DIAL_LLM_URL", raising=False)
    with pytest.raises(ProviderError):
        HttpProposalClient()


def test_dsl_nested_calls():
    spec = FeatureSpec("f", "llm", 'clamp(keyword_count(state_text, "go") + 0.5, 0, 2)')
    assert evaluate_dsl(spec, {"state_text": "go go go"}) == 2.0


def test_default_exploration_constants():
    from dial import explore

    assert explore.DEFAULT_EPS_EXPLORE == 0.5
    assert explore.DEFAULT_N_EXPLORE == 50
    assert explore.DEFAULT_K_CANDIDATES == 5
    assert explore.DEFAULT_N_ROLLOUTS == 5
    assert explore.DEFAULT_ROLLOUT_HORIZON == 3
