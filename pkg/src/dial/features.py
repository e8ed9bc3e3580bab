"""Candidate feature pool: universal, derived, and proposed features.

The pool an environment's gate is fit over is the union of a small
universal set (computed identically everywhere, missing signals default
to zero), three derived transforms of it, and optionally five
task-specific features proposed by an external model from an exploration
summary. Proposals are constrained to the feature expression language
(see dsl); the sparse fit downstream is what disposes of bad proposals.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .dsl import CompiledExpr, DslError, parse_expr

UNIVERSAL_FEATURES: Tuple[str, ...] = (
    "step_count",
    "token_entropy",
    "evidence_count",
    "num_available_actions",
    "is_finish",
)

DERIVED_FEATURES: Tuple[str, ...] = ("step_ratio", "entropy_sq", "step_x_entropy")

# Simulator aliases: the scalar signal plays the token-entropy role and
# the type proxy plays the evidence-count role. Documented aliasing, not
# separate features.
_ALIASES: Dict[str, Tuple[str, ...]] = {
    "step_count": ("step_count",),
    "token_entropy": ("token_entropy", "signal"),
    "evidence_count": ("evidence_count", "type_proxy"),
    "num_available_actions": ("num_available_actions", "num_options"),
    "is_finish": ("is_finish",),
}

N_LLM_FEATURES = 5


class FeatureError(ValueError):
    """Malformed feature specification or pool."""


class ProviderError(RuntimeError):
    """The proposal provider failed or returned an unusable reply."""


@dataclass(frozen=True)
class FeatureSpec:
    """One named feature: a builtin extractor or a DSL expression."""

    name: str
    source: str  # universal | derived | llm
    extractor: str  # "builtin:<universal name>" or a DSL expression
    default_value: float = 0.0

    def __post_init__(self) -> None:
        if self.source not in ("universal", "derived", "llm"):
            raise FeatureError(f"unknown feature source {self.source!r}")
        if not self.name.isidentifier():
            raise FeatureError(f"feature name {self.name!r} is not an identifier")

    def compiled(self) -> Optional[CompiledExpr]:
        if self.extractor.startswith("builtin:"):
            return None
        return parse_expr(self.extractor)


@dataclass(frozen=True)
class FeatureVector:
    """Values aligned to a fixed feature-name ordering."""

    names: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.names),):
            raise FeatureError("feature vector misaligned with its names")
        if not np.all(np.isfinite(values)):
            raise FeatureError("feature vector contains non-finite values")
        object.__setattr__(self, "values", values)

    def as_dict(self) -> Dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}


def _resolve(obs: Dict[str, Any], universal_name: str) -> float:
    for key in _ALIASES[universal_name]:
        if key in obs:
            value = obs[key]
            if isinstance(value, (int, float, bool)):
                return float(value)
    return 0.0


def extract_universal(obs: Dict[str, Any]) -> FeatureVector:
    """Universal feature vector; unexposed signals default to zero."""
    values = np.array([_resolve(obs, name) for name in UNIVERSAL_FEATURES])
    return FeatureVector(UNIVERSAL_FEATURES, values)


def derive_features(base: FeatureVector, max_steps: int) -> FeatureVector:
    """Extend a universal vector with step_ratio, entropy_sq and
    step_x_entropy."""
    if max_steps < 1:
        raise FeatureError(f"max_steps must be >= 1, got {max_steps}")
    if base.names[: len(UNIVERSAL_FEATURES)] != UNIVERSAL_FEATURES:
        raise FeatureError("derive_features expects a universal feature vector")
    step = base.values[0]
    entropy = base.values[1]
    extra = np.array([step / max_steps, entropy**2, step * entropy])
    return FeatureVector(base.names + DERIVED_FEATURES, np.concatenate([base.values, extra]))


def universal_specs() -> List[FeatureSpec]:
    return [FeatureSpec(name, "universal", f"builtin:{name}") for name in UNIVERSAL_FEATURES]


def derived_specs(max_steps: int) -> List[FeatureSpec]:
    if max_steps < 1:
        raise FeatureError(f"max_steps must be >= 1, got {max_steps}")
    return [
        FeatureSpec("step_ratio", "derived", f"step_count / {float(max_steps)}"),
        FeatureSpec("entropy_sq", "derived", "token_entropy * token_entropy"),
        FeatureSpec("step_x_entropy", "derived", "step_count * token_entropy"),
    ]


def build_pool(max_steps: int, llm_specs: Optional[Sequence[FeatureSpec]] = None) -> List[FeatureSpec]:
    """Assemble the candidate pool; universal features are never dropped."""
    pool = universal_specs() + derived_specs(max_steps)
    if llm_specs:
        pool = pool + list(llm_specs)
    names = [s.name for s in pool]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise FeatureError(f"duplicate feature names in pool: {dupes}")
    return pool


def extract_features(specs: Sequence[FeatureSpec], obs: Dict[str, Any]) -> FeatureVector:
    """Evaluate a full pool on one observation.

    DSL features see the raw observation fields plus the universal
    feature names, so proposals can reference either namespace. Pure:
    identical observations give identical vectors.
    """
    universal = extract_universal(obs)
    namespace: Dict[str, Any] = dict(obs)
    namespace.update(universal.as_dict())
    values = np.empty(len(specs))
    for i, spec in enumerate(specs):
        if spec.extractor.startswith("builtin:"):
            values[i] = namespace.get(spec.extractor[len("builtin:") :], spec.default_value)
        else:
            compiled = _compiled_cached(spec.extractor)
            values[i] = compiled(namespace)
    return FeatureVector(tuple(s.name for s in specs), values)


_COMPILE_CACHE: Dict[str, CompiledExpr] = {}


def _compiled_cached(expr: str) -> CompiledExpr:
    hit = _COMPILE_CACHE.get(expr)
    if hit is None:
        hit = parse_expr(expr)
        _COMPILE_CACHE[expr] = hit
    return hit


def evaluate_dsl(spec: FeatureSpec, obs: Dict[str, Any]) -> float:
    """Evaluate one DSL feature spec on an observation."""
    if spec.extractor.startswith("builtin:"):
        raise FeatureError("evaluate_dsl expects a DSL extractor, not a builtin")
    value, _ = _compiled_cached(spec.extractor).evaluate(dict(obs))
    return value


def build_matrix(
    records: Iterable[Any], specs: Sequence[FeatureSpec]
) -> Tuple[np.ndarray, np.ndarray, Tuple[str, ...]]:
    """Feature matrix and label vector over the labeled records."""
    rows, labels = [], []
    for record in records:
        if record.utility_label is None:
            continue
        rows.append(extract_features(specs, record.obs).values)
        labels.append(record.utility_label)
    names = tuple(s.name for s in specs)
    if not rows:
        return np.empty((0, len(names))), np.empty(0), names
    return np.vstack(rows), np.asarray(labels, dtype=float), names


# -- proposal layer ---------------------------------------------------------


@dataclass(frozen=True)
class FeatureProposal:
    """Exactly five proposed features, all parseable in the DSL."""

    specs: Tuple[FeatureSpec, ...]

    def __post_init__(self) -> None:
        if len(self.specs) != N_LLM_FEATURES:
            raise FeatureError(f"proposal must contain exactly {N_LLM_FEATURES} features, got {len(self.specs)}")
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise FeatureError("proposal contains duplicate feature names")
        reserved = set(UNIVERSAL_FEATURES) | set(DERIVED_FEATURES)
        clash = sorted(set(names) & reserved)
        if clash:
            raise FeatureError(f"proposal reuses reserved feature names: {clash}")
        for spec in self.specs:
            if spec.source != "llm":
                raise FeatureError(f"proposed feature {spec.name!r} must have source 'llm'")
            spec.compiled()  # raises DslError if unparseable


def propose_llm_features(summary: Dict[str, Any], client: "ProposalProvider") -> FeatureProposal:
    """Ask a provider for five task-specific features for this dataset."""
    raw = client.propose(summary)
    specs = tuple(
        FeatureSpec(name=str(item["name"]), source="llm", extractor=str(item["expr"]))
        for item in raw
    )
    return FeatureProposal(specs)


class ProposalProvider:
    """Interface: propose(summary) -> list of {"name": ..., "expr": ...}."""

    def propose(self, summary: Dict[str, Any]) -> List[Dict[str, str]]:
        raise NotImplementedError


class MockProposalClient(ProposalProvider):
    """Deterministic offline provider with simulator-flavored features."""

    FIXED = [
        {"name": "proxy_x_entropy", "expr": "evidence_count * token_entropy"},
        {"name": "high_entropy_flag", "expr": "token_entropy > 0.66"},
        {"name": "low_entropy_flag", "expr": "token_entropy < 0.33"},
        {"name": "late_step_flag", "expr": "step_count > 6"},
        {"name": "options_per_step", "expr": "num_available_actions / max(step_count, 1)"},
    ]

    def propose(self, summary: Dict[str, Any]) -> List[Dict[str, str]]:
        return [dict(item) for item in self.FIXED]


PROMPT_TEMPLATE = """You are assisting an agent that explored an interactive environment. \
At some decision steps it invoked extra rollout computation; each invoked step carries a \
binary utility label (1 = the rollout improved the outcome, 0 = it did not).

Exploration summary (aggregate statistics, per-step breakdown, and representative \
positive/negative examples):
{summary}

Task: propose observation features that discriminate the label-1 steps from the label-0 steps.

Requirements:
- Reply with a JSON array of exactly 5 objects, each {{"name": <identifier>, "expr": <expression>}}.
- Each expression must use only this language: observation field names, numbers, + - * /, \
comparisons (which evaluate to 0 or 1), min(a,b), max(a,b), clamp(x,lo,hi), abs(x), \
keyword_count(field,"kw"), regex_count(field,"pattern"), length(field).
- Every feature must evaluate to a number; missing fields read as 0.
- Prefer features whose values differ between the positive and negative examples.
- Output the JSON array only, no prose."""


def summary_digest(summary: Dict[str, Any]) -> str:
    canonical = json.dumps(summary, sort_keys=True, default=str).encode()
    return hashlib.sha256(canonical).hexdigest()


class HttpProposalClient(ProposalProvider):
    """Chat-completion client for the proposal step.

    Configured via DIAL_LLM_URL / DIAL_LLM_KEY / DIAL_LLM_MODEL (or
    constructor arguments). Replies are cached in a JSON file keyed by
    the summary digest, so a run never re-queries for the same dataset.
    Retries once on an unusable reply, then fails hard: silently
    degrading the pool would bias ablations.
    """

    def __init__(
        self,
        url: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        cache_path: Optional[str] = None,
        timeout: float = 60.0,
    ):
        self.url = url or os.environ.get("DIAL_LLM_URL", "")
        self.api_key = api_key or os.environ.get("DIAL_LLM_KEY", "")
        self.model = model or os.environ.get("DIAL_LLM_MODEL", "")
        self.cache_path = cache_path
        self.timeout = timeout
        if not self.url:
            raise ProviderError("no proposal endpoint configured (set DIAL_LLM_URL)")

    # -- cache ---------------------------------------------------------

    def _cache_load(self) -> Dict[str, Any]:
        if not self.cache_path or not os.path.exists(self.cache_path):
            return {}
        with open(self.cache_path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def _cache_store(self, digest: str, items: List[Dict[str, str]]) -> None:
        if not self.cache_path:
            return
        cache = self._cache_load()
        cache[digest] = items
        with open(self.cache_path, "w", encoding="utf-8") as fh:
            json.dump(cache, fh, sort_keys=True, indent=1)

    # -- request -------------------------------------------------------

    def _request(self, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        try:
            resp = requests.post(self.url, headers=headers, json=body, timeout=self.timeout)
            resp.raise_for_status()
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except Exception as exc:  # noqa: BLE001 - network/shape faults all map to ProviderError
            raise ProviderError(f"proposal endpoint failed: {exc}") from exc

    @staticmethod
    def _parse_reply(content: str) -> List[Dict[str, str]]:
        start, end = content.find("["), content.rfind("]")
        if start < 0 or end <= start:
            raise ProviderError("reply contains no JSON array")
        try:
            items = json.loads(content[start : end + 1])
        except json.JSONDecodeError as exc:
            raise ProviderError(f"reply is not valid JSON: {exc}") from exc
        if not isinstance(items, list) or len(items) != N_LLM_FEATURES:
            raise ProviderError(f"reply must contain exactly {N_LLM_FEATURES} features")
        cleaned = []
        for item in items:
            if not isinstance(item, dict) or "name" not in item or "expr" not in item:
                raise ProviderError("each proposed feature needs 'name' and 'expr'")
            try:
                parse_expr(str(item["expr"]))
            except DslError as exc:
                raise ProviderError(f"proposed expression rejected: {exc}") from exc
            cleaned.append({"name": str(item["name"]), "expr": str(item["expr"])})
        return cleaned

    def propose(self, summary: Dict[str, Any]) -> List[Dict[str, str]]:
        digest = summary_digest(summary)
        cache = self._cache_load()
        if digest in cache:
            return cache[digest]
        prompt = PROMPT_TEMPLATE.format(summary=json.dumps(summary, sort_keys=True, default=str, indent=1))
        last_error: Optional[Exception] = None
        for _ in range(2):  # one retry on an unusable reply
            try:
                items = self._parse_reply(self._request(prompt))
                self._cache_store(digest, items)
                return items
            except ProviderError as exc:
                last_error = exc
        raise ProviderError(f"proposal failed after retry: {last_error}")
