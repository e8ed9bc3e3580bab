"""Command-line front-end tying the pipeline together.

Subcommands map to pipeline phases: explore (collect the labeled
dataset), fit (build the gate), eval (deploy policies), stats (dataset
reports), verify (two-source verification bundle), sweep (grid of runs
over one config axis). Every output embeds the effective config digest,
its input's digest, the seed, and the tool version; inputs are never
mutated and outputs are write-once. Re-running a subcommand with
identical inputs reproduces identical bytes.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .explore import (
    LabeledDataset,
    dataset_summary,
    load_dataset_jsonl,
    run_exploration,
    save_dataset_jsonl,
)
from .features import (
    HttpProposalClient,
    MockProposalClient,
    build_matrix,
    build_pool,
    propose_llm_features,
)
from .gate import (
    DEFAULT_C_GRID,
    DEFAULT_FOLDS,
    DEFAULT_MI_BINS,
    DEFAULT_MI_K,
    GateModel,
    data_digest,
    fit_gate,
    load_model_json,
    save_model_json,
    weight_diagnostic,
)
from .evaluate import EvalResult, PolicySpec, run_deployment
from .rng import derive_seed
from .stats import (
    CellKey,
    pearson,
    predicted_rho,
    quantile_normalize,
    report_row,
    simpson_decomposition,
    spearman,
    temporal_split_rho,
    transform_suite,
    write_report_csv,
    write_report_json,
)
from .twosource import TwoSourceEnv, TwoSourceParams, sample_states

EQ2_SWEEP_POINTS = (0.0, 0.25, 0.5, 0.75, 1.0)
EQ2_SWEEP_N = 5000
VERIFY_TEMPORAL_EPISODES = 240
# Canonical drift diagnostic: binary labels expose within-type gradients
# only when the latent noise is comparable to the slope range, so the
# temporal check runs on a dedicated variant rather than the raw config.
VERIFY_TEMPORAL_P0 = 0.1
VERIFY_TEMPORAL_SLOPE = 0.08
VERIFY_TEMPORAL_MIN_NOISE = 0.35
VERIFY_STATIONARY_P0 = 0.4


class ConfigError(ValueError):
    pass


_SECTION_KEYS = {
    "environment": {
        "type", "alpha", "beta", "p_i0", "p_i_slope", "noise_sd", "fidelity_q",
        "horizon", "base_reward", "success_threshold", "trigger_cost_units",
    },
    "exploration": {"eps", "n_episodes", "k_candidates", "n_rollouts", "horizon_h"},
    "gate": {"regularizer", "c_grid", "folds", "tau", "llm_features", "mi_k", "mi_bins"},
    "eval": {"policies", "n_episodes", "trigger_cost_units"},
}
_TOP_KEYS = {"environment", "exploration", "gate", "eval", "seed", "output_dir"}


@dataclass
class RunConfig:
    raw: Dict[str, Any]
    env_params: TwoSourceParams
    seed: int
    output_dir: str

    @property
    def exploration(self) -> Dict[str, Any]:
        return self.raw["exploration"]

    @property
    def gate(self) -> Dict[str, Any]:
        return self.raw["gate"]

    @property
    def eval(self) -> Dict[str, Any]:
        return self.raw["eval"]

    def digest(self) -> str:
        """Digest of the run content: the config minus its output
        placement, so identical runs match wherever they are written."""
        content = {k: v for k, v in self.raw.items() if k != "output_dir"}
        canonical = json.dumps(content, sort_keys=True).encode()
        return hashlib.sha256(canonical).hexdigest()

    def short_digest(self) -> str:
        return self.digest()[:8]


_DEFAULT_CONFIG: Dict[str, Any] = {
    "environment": {"type": "twosource"},
    "exploration": {"eps": 0.5, "n_episodes": 50, "k_candidates": 5, "n_rollouts": 5, "horizon_h": 3},
    "gate": {
        "regularizer": "l1",
        "c_grid": list(DEFAULT_C_GRID),
        "folds": DEFAULT_FOLDS,
        "tau": 0.5,
        "llm_features": "mock",
        "mi_k": DEFAULT_MI_K,
        "mi_bins": DEFAULT_MI_BINS,
    },
    "eval": {
        "policies": ["base_only", "always_trigger", "dial", "reversed_dial"],
        "n_episodes": 500,
        "trigger_cost_units": None,
    },
    "seed": 0,
    "output_dir": "runs/out",
}


def _check_keys(section: str, payload: Dict[str, Any]) -> None:
    unknown = sorted(set(payload) - _SECTION_KEYS[section])
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}: unknown key")


def load_config(path: str, seed_override: Optional[int] = None,
                out_override: Optional[str] = None) -> RunConfig:
    """Parse, merge with defaults, and validate every section before any
    work starts. Unknown keys are errors, not warnings."""
    with open(path, "r", encoding="utf-8") as fh:
        user = json.load(fh)
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    unknown_top = sorted(set(user) - _TOP_KEYS)
    if unknown_top:
        raise ConfigError(f"{unknown_top[0]}: unknown key")

    merged = copy.deepcopy(_DEFAULT_CONFIG)
    for section in ("environment", "exploration", "gate", "eval"):
        payload = user.get(section, {})
        if not isinstance(payload, dict):
            raise ConfigError(f"{section}: must be an object")
        _check_keys(section, payload)
        merged[section].update(payload)
    merged["seed"] = int(user.get("seed", merged["seed"]))
    merged["output_dir"] = str(user.get("output_dir", merged["output_dir"]))
    if seed_override is not None:
        merged["seed"] = int(seed_override)
    if out_override is not None:
        merged["output_dir"] = out_override

    env_section = dict(merged["environment"])
    env_type = env_section.pop("type", "twosource")
    if env_type != "twosource":
        raise ConfigError(f"environment.type: unsupported environment {env_type!r}")
    try:
        env_params = TwoSourceParams(**env_section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"environment: {exc}") from exc

    expl = merged["exploration"]
    if not 0.0 <= float(expl["eps"]) <= 1.0:
        raise ConfigError(f"exploration.eps: must lie in [0, 1], got {expl['eps']}")
    if int(expl["n_episodes"]) < 1:
        raise ConfigError("exploration.n_episodes: must be >= 1")
    if int(expl["k_candidates"]) < 2:
        raise ConfigError("exploration.k_candidates: must be >= 2")
    gate_cfg = merged["gate"]
    if gate_cfg["regularizer"] not in ("l1", "l2", "none", "elastic_net", "mi_topk"):
        raise ConfigError(f"gate.regularizer: unknown value {gate_cfg['regularizer']!r}")
    if gate_cfg["tau"] != "cv" and not 0.0 < float(gate_cfg["tau"]) < 1.0:
        raise ConfigError("gate.tau: must be 'cv' or a probability in (0, 1)")
    if gate_cfg["llm_features"] not in ("off", "mock", "http"):
        raise ConfigError(f"gate.llm_features: unknown value {gate_cfg['llm_features']!r}")
    for spec in merged["eval"]["policies"]:
        _parse_policy(spec, model=None, allow_unfitted=True)
    if int(merged["eval"]["n_episodes"]) < 1:
        raise ConfigError("eval.n_episodes: must be >= 1")

    return RunConfig(
        raw=merged,
        env_params=env_params,
        seed=merged["seed"],
        output_dir=merged["output_dir"],
    )


def _parse_policy(spec: Any, model: Optional[GateModel], allow_unfitted: bool = False) -> Optional[PolicySpec]:
    if isinstance(spec, str):
        if spec in ("base_only", "always_trigger"):
            return PolicySpec(spec)
        if spec in ("dial", "reversed_dial"):
            if model is None and not allow_unfitted:
                raise ConfigError(f"eval.policies: {spec} requires a fitted model file")
            return None if model is None else PolicySpec(spec, model=model)
        raise ConfigError(f"eval.policies: unknown policy {spec!r}")
    if isinstance(spec, dict):
        if spec.get("kind") != "fixed_threshold":
            raise ConfigError(f"eval.policies: unknown policy object {spec!r}")
        extra = set(spec) - {"kind", "signal", "direction", "threshold"}
        if extra:
            raise ConfigError(f"eval.policies.{sorted(extra)[0]}: unknown key")
        return PolicySpec(
            "fixed_threshold",
            signal=spec.get("signal", "signal"),
            direction=int(spec.get("direction", 1)),
            threshold=float(spec.get("threshold", 0.5)),
        )
    raise ConfigError(f"eval.policies: unsupported entry {spec!r}")


# -- output discipline ---------------------------------------------------------


def _fresh(path: str) -> str:
    if os.path.exists(path):
        raise FileExistsError(f"refusing to overwrite existing output {path}")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    return path


def _file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _provenance(config: RunConfig, input_digest: Optional[str]) -> Dict[str, Any]:
    return {
        "config_digest": config.digest(),
        "input_digest": input_digest,
        "seed": config.seed,
        "tool_version": __version__,
    }


def _check_input_digest(kind: str, embedded: Optional[str], config: RunConfig) -> None:
    if embedded != config.digest():
        raise ConfigError(
            f"{kind} was produced under config digest {str(embedded)[:12]}..., "
            f"current config digest is {config.digest()[:12]}...; refusing to proceed"
        )


# -- subcommands ------------------------------------------------------------------


def cmd_explore(config: RunConfig) -> str:
    env = TwoSourceEnv(config.env_params)
    expl = config.exploration
    dataset = run_exploration(
        env,
        eps=float(expl["eps"]),
        n_episodes=int(expl["n_episodes"]),
        seed=derive_seed(config.seed, "explore"),
        k_candidates=int(expl["k_candidates"]),
        n_rollouts=int(expl["n_rollouts"]),
        horizon_h=int(expl["horizon_h"]),
    )
    path = _fresh(os.path.join(config.output_dir, f"dataset-{config.short_digest()}.jsonl"))
    save_dataset_jsonl(dataset, path, env_meta=_provenance(config, input_digest=None))
    return path


def _proposal_specs(config: RunConfig, dataset: LabeledDataset, force_mock: bool):
    mode = "mock" if force_mock else config.gate["llm_features"]
    if mode == "off":
        return None
    summary = dataset_summary(dataset)
    if mode == "mock":
        client = MockProposalClient()
    else:
        cache = os.path.join(config.output_dir, "proposal_cache.json")
        os.makedirs(config.output_dir, exist_ok=True)
        client = HttpProposalClient(cache_path=cache)
    return propose_llm_features(summary, client).specs


def cmd_fit(config: RunConfig, dataset_path: str, force_mock: bool = False) -> str:
    dataset = load_dataset_jsonl(dataset_path)
    _check_input_digest("dataset", dataset.meta.extra.get("config_digest"), config)
    if not dataset.labeled():
        raise ConfigError(
            "dataset has no labeled rows; re-run the explore step with exploration.eps > 0"
        )
    llm_specs = _proposal_specs(config, dataset, force_mock)
    specs = build_pool(max(dataset.meta.horizon, 1), llm_specs)
    X, y, _ = build_matrix(dataset.records, specs)
    gate_cfg = config.gate
    model = fit_gate(
        X, y, specs,
        regularizer=gate_cfg["regularizer"],
        c_grid=tuple(float(c) for c in gate_cfg["c_grid"]),
        folds=int(gate_cfg["folds"]),
        seed=derive_seed(config.seed, "fit"),
        tau=gate_cfg["tau"],
        mi_k=int(gate_cfg["mi_k"]),
        mi_bins=int(gate_cfg["mi_bins"]),
        meta={
            **_provenance(config, _file_digest(dataset_path)),
            "data_digest": data_digest(X, y),
        },
    )
    # The saved model records its own signed-weight reading.
    diagnostic = weight_diagnostic(model).classifications
    model = replace(model, meta={**model.meta, "direction_diagnostic": diagnostic})
    path = _fresh(os.path.join(config.output_dir, f"model-{config.short_digest()}.json"))
    save_model_json(model, path)
    return path


def _eval_env(config: RunConfig) -> TwoSourceEnv:
    params = config.env_params
    override = config.eval.get("trigger_cost_units")
    if override is not None:
        params = replace(params, trigger_cost_units=float(override))
    return TwoSourceEnv(params)


def cmd_eval(config: RunConfig, model_path: str) -> Dict[str, str]:
    model = load_model_json(model_path)
    _check_input_digest("model", model.meta.get("config_digest"), config)
    env = _eval_env(config)
    n_episodes = int(config.eval["n_episodes"])
    eval_seed = derive_seed(config.seed, "eval")

    results: List[EvalResult] = []
    for raw_spec in config.eval["policies"]:
        policy = _parse_policy(raw_spec, model)
        results.append(run_deployment(env, policy, n_episodes, eval_seed))

    digest8 = config.short_digest()
    json_path = _fresh(os.path.join(config.output_dir, f"eval-{digest8}.json"))
    payload = {
        "provenance": _provenance(config, _file_digest(model_path)),
        "results": [
            {
                "policy": r.policy,
                "env": r.env_id,
                "sr": r.sr,
                "cost_x_base": r.cost_x_base,
                "trigger_rate": r.trigger_rate,
                "n_episodes": r.n_episodes,
                "per_step_trigger": [
                    {"step": p.step_index, "rate": p.rate, "ci_low": p.ci_low, "ci_high": p.ci_high, "n": p.n}
                    for p in r.per_step_trigger
                ],
            }
            for r in results
        ],
    }
    write_report_json(json_path, payload)

    csv_path = _fresh(os.path.join(config.output_dir, f"eval_summary-{digest8}.csv"))
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "env", "SR", "cost_x_base", "trigger_rate"])
        for r in results:
            writer.writerow([r.policy, r.env_id, f"{r.sr:.6f}", f"{r.cost_x_base:.6f}", f"{r.trigger_rate:.6f}"])

    profile_path = _fresh(os.path.join(config.output_dir, f"trigger_profile-{digest8}.csv"))
    with open(profile_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "step", "trigger_rate", "ci_low", "ci_high", "n"])
        for r in results:
            for p in r.per_step_trigger:
                writer.writerow([r.policy, p.step_index, f"{p.rate:.6f}", f"{p.ci_low:.6f}", f"{p.ci_high:.6f}", p.n])
    return {"json": json_path, "summary": csv_path, "profile": profile_path}


def cmd_stats(config: RunConfig, dataset_path: str) -> Dict[str, str]:
    dataset = load_dataset_jsonl(dataset_path)
    _check_input_digest("dataset", dataset.meta.extra.get("config_digest"), config)
    labeled = dataset.labeled()
    if len(labeled) < 6:
        raise ConfigError("dataset has too few labeled rows for correlation reports")
    sig = [r.signal for r in labeled]
    lab = [float(r.utility_label) for r in labeled]
    boot_seed = derive_seed(config.seed, "stats-boot")

    rows = [report_row("all", spearman(sig, lab, ci=True, seed=boot_seed), pearson(sig, lab))]
    temporal: Optional[Dict[str, Any]] = None
    try:
        early, late, delta = temporal_split_rho(dataset.records)
        median = float(np.median([r.step_index for r in labeled]))
        for tag, report in (("early", early), ("late", late)):
            bucket = [r for r in labeled if (r.step_index <= median) == (tag == "early")]
            pe = pearson([r.signal for r in bucket], [float(r.utility_label) for r in bucket])
            rows.append(report_row(tag, report, pe))
        temporal = {"early": early, "late": late, "delta": delta}
    except Exception:
        pass  # single-step datasets have no late bucket

    transforms = transform_suite(sig, lab)
    for row in transforms:
        rows.append(
            {
                "group": f"transform:{row['transform']}",
                "n": len(sig),
                "spearman": row["spearman"],
                "pearson": row["pearson"],
                "p_value": None,
                "ci_low": None,
                "ci_high": None,
            }
        )

    payload: Dict[str, Any] = {
        "provenance": _provenance(config, _file_digest(dataset_path)),
        "overall": rows[0],
        "temporal": temporal,
        "transforms": transforms,
    }
    try:
        payload["simpson"] = simpson_decomposition(dataset.records)
    except Exception:
        payload["simpson"] = None

    digest8 = config.short_digest()
    json_path = _fresh(os.path.join(config.output_dir, f"stats-{digest8}.json"))
    write_report_json(json_path, payload)
    csv_path = _fresh(os.path.join(config.output_dir, f"stats_cells-{digest8}.csv"))
    write_report_csv(csv_path, rows)
    return {"json": json_path, "cells": csv_path}


def cmd_verify(config: RunConfig) -> Dict[str, str]:
    """Two-source verification bundle: direction-vs-mixture sweep,
    within-type decomposition, temporal drift, monotone-transform and
    quantile-normalization invariance."""
    params = config.env_params
    digest8 = config.short_digest()
    out = config.output_dir
    verify_seed = derive_seed(config.seed, "verify")

    sweep_rows = []
    for i, p in enumerate(EQ2_SWEEP_POINTS):
        point = replace(params, p_i0=p, p_i_slope=0.0)
        states = sample_states(point, EQ2_SWEEP_N, derive_seed(verify_seed, "eq2", i))
        rho = spearman(states["signal"], states["true_utility"])
        prediction = predicted_rho(point.alpha, point.beta, p)
        if abs(prediction.value) >= 0.1:
            sign_ok = np.sign(rho.rho) == np.sign(prediction.value)
        else:
            sign_ok = abs(rho.rho) < 0.1
        sweep_rows.append(
            {
                "p_i0": p,
                "predicted": prediction.value,
                "crossing": prediction.crossing,
                "empirical_spearman": rho.rho,
                "n": rho.n,
                "sign_match": bool(sign_ok),
            }
        )

    simpson_rows = []
    for i, p in enumerate((0.8, 0.2)):
        point = replace(params, p_i0=p, p_i_slope=0.0)
        states = sample_states(point, EQ2_SWEEP_N, derive_seed(verify_seed, "simpson", i))
        records = _states_as_records(states)
        rep = simpson_decomposition(records)
        simpson_rows.append(
            {
                "p_i0": p,
                "within_i": rep.within_i.rho,
                "within_d": rep.within_d.rho,
                "aggregate": rep.aggregate.rho,
            }
        )

    noise = max(params.noise_sd, VERIFY_TEMPORAL_MIN_NOISE)
    drifting = replace(
        params, p_i0=VERIFY_TEMPORAL_P0, p_i_slope=VERIFY_TEMPORAL_SLOPE, noise_sd=noise
    )
    stationary = replace(params, p_i0=VERIFY_STATIONARY_P0, p_i_slope=0.0, noise_sd=noise)
    temporal_rows = []
    for tag, point in (("drifting", drifting), ("stationary", stationary)):
        env = TwoSourceEnv(point)
        ds = run_exploration(
            env, eps=1.0, n_episodes=VERIFY_TEMPORAL_EPISODES,
            seed=derive_seed(verify_seed, f"temporal-{tag}"),
        )
        early, late, delta = temporal_split_rho(ds.records)
        temporal_rows.append(
            {"env": tag, "early_rho": early.rho, "late_rho": late.rho, "delta": delta,
             "n_early": early.n, "n_late": late.n}
        )

    states = sample_states(params, EQ2_SWEEP_N, derive_seed(verify_seed, "transforms"))
    transform_rows = transform_suite(states["signal"], states["true_utility"])

    norm_rows = []
    cell_values, cell_keys, cell_tags = [], [], []
    for i, p in enumerate((0.2, 0.5, 0.8)):
        point = replace(params, p_i0=p, p_i_slope=0.0)
        st = sample_states(point, 600, derive_seed(verify_seed, "norm", i))
        cell_values.extend(st["signal"].tolist())
        cell_keys.extend([CellKey(f"cell{i}", "default")] * 600)
        cell_tags.append((f"cell{i}", st))
    cell_values = np.asarray(cell_values)
    for scheme in ("S1_per_cell", "S2_per_backbone", "S3_per_environment"):
        normalized = quantile_normalize(cell_values, cell_keys, scheme)
        offset = 0
        for tag, st in cell_tags:
            raw_rho = spearman(st["signal"], st["true_utility"]).rho
            norm_rho = spearman(normalized[offset : offset + 600], st["true_utility"]).rho
            norm_rows.append(
                {"scheme": scheme, "cell": tag, "raw_spearman": raw_rho,
                 "normalized_spearman": norm_rho, "abs_diff": abs(raw_rho - norm_rho)}
            )
            offset += 600

    bundle = {
        "provenance": _provenance(config, input_digest=None),
        "eq2_sweep": sweep_rows,
        "simpson": simpson_rows,
        "temporal": temporal_rows,
        "transforms": transform_rows,
        "normalization": norm_rows,
    }
    paths = {"json": _fresh(os.path.join(out, f"verify-{digest8}.json"))}
    write_report_json(paths["json"], bundle)
    for name, rows in (
        ("eq2_sweep", sweep_rows),
        ("simpson", simpson_rows),
        ("temporal", temporal_rows),
        ("transforms", transform_rows),
        ("normalization", norm_rows),
    ):
        path = _fresh(os.path.join(out, f"verify_{name}-{digest8}.csv"))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        paths[name] = path
    return paths


def _states_as_records(states: Dict[str, np.ndarray]):
    from .explore import StepRecord

    records = []
    for i in range(len(states["signal"])):
        records.append(
            StepRecord(
                episode_id=0,
                step_index=int(states["step_index"][i]),
                obs={"signal": float(states["signal"][i])},
                triggered=False,
                utility_label=None,
                signal=float(states["signal"][i]),
                latent_type_debug="D" if states["is_type_d"][i] else "I",
                true_utility_debug=float(states["true_utility"][i]),
            )
        )
    return records


def cmd_sweep(config: RunConfig, axis: str) -> str:
    """Run explore -> fit -> eval for each value on one config axis,
    each run isolated in its own output directory."""
    try:
        key_path, values_text = axis.split("=", 1)
        section, key = key_path.split(".", 1)
        values = [v.strip() for v in values_text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad sweep axis {axis!r}; expected section.key=v1,v2,...") from exc
    if section not in _SECTION_KEYS or key not in _SECTION_KEYS[section]:
        raise ConfigError(f"bad sweep axis: {section}.{key} is not a config key")
    if not values:
        raise ConfigError("sweep axis has no values")

    summary_rows = []
    sweep_dir = os.path.join(config.output_dir, f"sweep_{section}.{key}")
    for value in values:
        raw = copy.deepcopy(config.raw)
        try:
            parsed: Any = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        raw[section][key] = parsed
        sub_dir = os.path.join(sweep_dir, f"{key}={value}")
        sub_path = os.path.join(sub_dir, "config.json")
        os.makedirs(sub_dir, exist_ok=True)
        raw["output_dir"] = sub_dir
        with open(sub_path, "w", encoding="utf-8") as fh:
            json.dump(raw, fh, sort_keys=True, indent=1)
        sub_config = load_config(sub_path)
        dataset_path = cmd_explore(sub_config)
        model_path = cmd_fit(sub_config, dataset_path)
        outputs = cmd_eval(sub_config, model_path)
        with open(outputs["summary"], "r", encoding="utf-8") as fh:
            for row in list(csv.DictReader(fh)):
                row[f"{section}.{key}"] = value
                summary_rows.append(row)

    summary_path = _fresh(os.path.join(sweep_dir, "sweep_summary.csv"))
    fieldnames = [f"{section}.{key}", "policy", "env", "SR", "cost_x_base", "trigger_rate"]
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(summary_rows)
    return summary_path


# -- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dial", description=__doc__)
    parser.add_argument("--version", action="version", version=f"dial {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="run config (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--llm-mock", action="store_true", help="force the mock proposal provider")

    p_explore = sub.add_parser("explore", help="collect the exploration dataset")
    common(p_explore)

    p_fit = sub.add_parser("fit", help="fit the gate from a dataset file")
    common(p_fit)
    p_fit.add_argument("--dataset", required=True)

    p_eval = sub.add_parser("eval", help="evaluate policies with a fitted model")
    common(p_eval)
    p_eval.add_argument("--model", required=True)

    p_stats = sub.add_parser("stats", help="correlation reports for a dataset")
    common(p_stats)
    p_stats.add_argument("--dataset", required=True)

    p_verify = sub.add_parser("verify", help="two-source verification bundle")
    common(p_verify)

    p_sweep = sub.add_parser("sweep", help="grid of runs over one config axis")
    common(p_sweep)
    p_sweep.add_argument("--axis", required=True, help="section.key=v1,v2,...")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    config = load_config(args.config, seed_override=args.seed, out_override=args.out)
    if args.command == "explore":
        print(cmd_explore(config))
    elif args.command == "fit":
        print(cmd_fit(config, args.dataset, force_mock=args.llm_mock))
    elif args.command == "eval":
        for name, path in cmd_eval(config, args.model).items():
            print(f"{name}: {path}")
    elif args.command == "stats":
        for name, path in cmd_stats(config, args.dataset).items():
            print(f"{name}: {path}")
    elif args.command == "verify":
        for name, path in cmd_verify(config).items():
            print(f"{name}: {path}")
    elif args.command == "sweep":
        print(cmd_sweep(config, args.axis))
    return 0


if __name__ == "__main__":
    sys.exit(main())
