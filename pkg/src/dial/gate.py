"""Sparse logistic gate: fitting, selection, and the deployed decision rule.

The gate is a linear model over standardized candidate features with a
sigmoid threshold. The loss is the summed binary cross-entropy plus a
(1/C)-weighted penalty on the weights (bias unpenalized):

    l1           (1/C) * sum(|w|)
    l2           (1/C) * 0.5 * sum(w^2)
    elastic_net  (1/C) * (0.5 * sum(|w|) + 0.25 * sum(w^2))   (mixing 0.5)
    none         no penalty
    mi_topk      hard top-k selection by mutual information, then
                 an unregularized fit on the selected features

l1 and elastic_net are solved by cyclic coordinate descent with
soft-thresholding; l2 and none by full-gradient descent. Both stop when
the largest parameter update falls below 1e-8 or after 10,000 sweeps.
Fitting is single-threaded and deterministic; a fitted model is
immutable and can be shared freely.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .features import FeatureSpec, extract_features
from .rng import rng_for

DEFAULT_C_GRID = (0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0)
DEFAULT_FOLDS = 5
DEFAULT_TAU = 0.5
DEFAULT_MI_K = 3
DEFAULT_MI_BINS = 10

SOLVER_TOL = 1e-8
SOLVER_MAX_ITER = 10_000

REGULARIZERS = ("l1", "l2", "none", "elastic_net", "mi_topk")

_ELASTIC_MIX = 0.5  # fixed l1/l2 mixing for elastic_net


class SingleClassError(ValueError):
    """Both label classes are required; fall back to an intercept-only
    gate (constant trigger probability) when only one class is present."""


class GateError(ValueError):
    pass


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_sum(z: np.ndarray, y: np.ndarray) -> float:
    """Summed binary cross-entropy of logits z against labels y."""
    return float(np.logaddexp(0.0, z).sum() - y @ z)


def penalty_value(w: np.ndarray, c: float, reg: str) -> float:
    lam = 1.0 / c
    if reg == "l1":
        return lam * float(np.abs(w).sum())
    if reg == "l2":
        return lam * 0.5 * float(w @ w)
    if reg == "elastic_net":
        return lam * (_ELASTIC_MIX * float(np.abs(w).sum()) + 0.5 * (1 - _ELASTIC_MIX) * float(w @ w))
    return 0.0


def objective(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, c: float, reg: str) -> float:
    return bce_sum(X @ w + b, y) + penalty_value(w, c, reg)


# -- standardization ---------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    """Per-feature location/scale fitted once on the exploration data.

    Uses the population convention (divide by n). Zero-variance features
    are dropped and recorded; apply() always uses the stored statistics.
    """

    feature_names: Tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray
    dropped: Tuple[str, ...]

    @property
    def retained(self) -> Tuple[str, ...]:
        return tuple(n for n in self.feature_names if n not in self.dropped)

    def apply_matrix(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != len(self.feature_names):
            raise GateError(
                f"feature dimension mismatch: got {X.shape[1]}, expected {len(self.feature_names)}"
            )
        keep = np.array([n not in self.dropped for n in self.feature_names])
        return (X[:, keep] - self.means[keep]) / self.sds[keep]

    def apply_vector(self, v: np.ndarray) -> np.ndarray:
        return self.apply_matrix(np.asarray(v, dtype=float).reshape(1, -1))[0]


def fit_standardizer(X: np.ndarray, names: Sequence[str]) -> Standardizer:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise GateError("standardizer needs at least 2 rows")
    if X.shape[1] != len(names):
        raise GateError("names misaligned with matrix columns")
    means = X.mean(axis=0)
    sds = np.sqrt(((X - means) ** 2).mean(axis=0))
    dropped = tuple(str(names[j]) for j in range(X.shape[1]) if sds[j] == 0.0)
    return Standardizer(tuple(str(n) for n in names), means, sds, dropped)


# -- solvers ------------------------------------------------------------------


def _check_two_classes(y: np.ndarray) -> None:
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassError(
            "training labels contain a single class; fit an intercept-only gate instead"
        )
    if not set(classes.tolist()) <= {0.0, 1.0}:
        raise GateError(f"labels must be binary, got classes {classes}")


def _soft(target: float, lam1: float) -> float:
    return math.copysign(max(abs(target) - lam1, 0.0), target)


_INNER_REFINEMENTS = 40
_WEIGHT_FLOOR = 1e-5  # curvature clamp for the working weights


def _inner_weighted_cd(
    X: np.ndarray, response: np.ndarray, weights: np.ndarray,
    u: np.ndarray, ub: float, lam1: float, lam2: float, tol: float,
) -> Tuple[np.ndarray, float]:
    """Solve one weighted quadratic subproblem:
    min over (u, ub) of 0.5*sum(weights*(response - X u - ub)^2)
    + lam1*|u| + 0.5*lam2*u^2 (bias unpenalized).

    Cyclic soft-thresholding sweeps settle the active sign pattern; the
    pattern is then finished with an exact bordered linear solve,
    accepted only when signs stay consistent and the inactive
    coordinates satisfy their subgradient bound.
    """
    n, d = X.shape
    col_h = weights @ (X**2)
    weight_sum = float(weights.sum())
    resid = response - X @ u - ub
    live = np.flatnonzero(col_h > 0.0)
    for _ in range(_INNER_REFINEMENTS):
        for _ in range(3):  # sweeps to settle the active set
            max_delta = 0.0
            delta_b = float(weights @ resid) / weight_sum
            ub += delta_b
            resid -= delta_b
            max_delta = abs(delta_b)
            for j in live:
                x_j = X[:, j]
                rho = float((weights * x_j) @ resid) + col_h[j] * u[j]
                new_u = _soft(rho, lam1) / (col_h[j] + lam2)
                delta = new_u - u[j]
                if delta != 0.0:
                    u[j] = new_u
                    resid -= delta * x_j
                    max_delta = max(max_delta, abs(delta))
            if max_delta < tol:
                return u, ub
        active = live if lam1 == 0.0 else np.flatnonzero(u != 0.0)
        signs = np.sign(u[active])
        Xa = X[:, active]
        wXa = weights[:, None] * Xa
        k = active.size
        system = np.empty((k + 1, k + 1))
        system[:k, :k] = Xa.T @ wXa + lam2 * np.eye(k)
        system[:k, k] = wXa.sum(axis=0)
        system[k, :k] = wXa.sum(axis=0)
        system[k, k] = weight_sum
        rhs = np.empty(k + 1)
        rhs[:k] = wXa.T @ response - lam1 * signs
        rhs[k] = float(weights @ response)
        try:
            solution = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError:
            continue
        u_exact, ub_exact = solution[:k], float(solution[k])
        if lam1 > 0.0 and np.any(u_exact * signs <= 0.0):
            continue  # sign pattern not settled yet, keep sweeping
        resid_exact = response - Xa @ u_exact - ub_exact
        inactive = np.setdiff1d(live, active, assume_unique=False)
        if inactive.size:
            grad = (weights * resid_exact) @ X[:, inactive]
            if np.any(np.abs(grad) > lam1 * (1 + 1e-9) + 1e-9):
                continue  # an excluded coordinate violates its bound
        u = np.zeros(d)
        u[active] = u_exact
        return u, ub_exact
    return u, ub


def _fit_coordinate_descent(
    X: np.ndarray, y: np.ndarray, lam1: float, lam2: float,
    tol: float, max_iter: int,
    w_init: Optional[np.ndarray] = None, b_init: float = 0.0,
) -> Tuple[np.ndarray, float]:
    """Proximal-Newton outer loop with cyclic soft-thresholding
    coordinate descent on each quadratic subproblem, plus a halving line
    search that keeps the penalized objective monotone. Stops when the
    largest parameter update falls below ``tol`` or after ``max_iter``
    outer iterations. Warm starts only shorten the path (the problem is
    convex with a unique optimum for lam1 > 0 or lam2 > 0).
    """
    n, d = X.shape
    w = np.zeros(d) if w_init is None else w_init.astype(float).copy()
    b = float(b_init)
    z = X @ w + b

    def penalty(wv: np.ndarray) -> float:
        return lam1 * float(np.abs(wv).sum()) + 0.5 * lam2 * float(wv @ wv)

    obj = bce_sum(z, y) + penalty(w)
    for _ in range(max_iter):
        p = _sigmoid(z)
        p_safe = np.clip(p, _WEIGHT_FLOOR, 1.0 - _WEIGHT_FLOOR)
        weights = p_safe * (1.0 - p_safe)
        response = z + (y - p) / weights
        u, ub = _inner_weighted_cd(X, response, weights, w.copy(), b, lam1, lam2, tol)
        dir_w = u - w
        dir_b = ub - b
        dir_z = X @ dir_w + dir_b
        step = 1.0
        accepted = False
        for _ in range(50):  # halve until the penalized objective strictly decreases
            w_try = w + step * dir_w
            z_try = z + step * dir_z
            obj_try = bce_sum(z_try, y) + penalty(w_try)
            if obj_try < obj - 1e-12 * (1.0 + abs(obj)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # no double-precision improvement left: converged
        max_delta = step * max(float(np.max(np.abs(dir_w))) if d else 0.0, abs(dir_b))
        w, b = w_try, b + step * dir_b
        z, obj = z_try, obj_try
        if max_delta < tol:
            break
    return w, b


def _fit_gradient_descent(
    X: np.ndarray, y: np.ndarray, lam2: float,
    tol: float, max_iter: int,
) -> Tuple[np.ndarray, float]:
    """Full-gradient descent with the Lipschitz step of the logistic loss."""
    n, d = X.shape
    design = np.hstack([X, np.ones((n, 1))])
    lipschitz = np.linalg.norm(design, 2) ** 2 / 4.0 + lam2
    step = 1.0 / lipschitz
    w = np.zeros(d)
    b = 0.0
    for _ in range(max_iter):
        p = _sigmoid(X @ w + b)
        resid = p - y
        grad_w = X.T @ resid + lam2 * w
        grad_b = float(resid.sum())
        new_w = w - step * grad_w
        new_b = b - step * grad_b
        max_delta = max(float(np.max(np.abs(new_w - w))) if d else 0.0, abs(new_b - b))
        w, b = new_w, new_b
        if max_delta < tol:
            break
    return w, b


def fit_sparse_logistic(
    X: np.ndarray,
    y: np.ndarray,
    c: float,
    reg: str = "l1",
    *,
    tol: float = SOLVER_TOL,
    max_iter: int = SOLVER_MAX_ITER,
    warm_start: Optional[Tuple[np.ndarray, float]] = None,
) -> Tuple[np.ndarray, float]:
    """Minimize summed BCE plus (1/C)*penalty over (weights, bias).

    Inputs are expected standardized. Deterministic for fixed inputs;
    ``warm_start`` only shortens the iteration (the problem is convex).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise GateError("matrix and labels misaligned")
    if c <= 0:
        raise GateError(f"C must be positive, got {c}")
    if reg not in ("l1", "l2", "none", "elastic_net"):
        raise GateError(f"unknown regularizer {reg!r} for the solver")
    _check_two_classes(y)
    lam = 1.0 / c
    w0, b0 = (None, 0.0) if warm_start is None else warm_start
    if reg == "l1":
        return _fit_coordinate_descent(
            X, y, lam1=lam, lam2=0.0, tol=tol, max_iter=max_iter, w_init=w0, b_init=b0
        )
    if reg == "elastic_net":
        return _fit_coordinate_descent(
            X, y, lam1=_ELASTIC_MIX * lam, lam2=(1 - _ELASTIC_MIX) * lam,
            tol=tol, max_iter=max_iter, w_init=w0, b_init=b0,
        )
    return _fit_gradient_descent(X, y, lam2=lam if reg == "l2" else 0.0, tol=tol, max_iter=max_iter)


# -- cross-validation ---------------------------------------------------------


def _stratified_folds(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Seeded stratified fold ids: shuffle within each class, deal
    round-robin."""
    rng = rng_for(seed, "cv-folds")
    assignment = np.empty(len(y), dtype=int)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        assignment[idx] = np.arange(len(idx)) % folds
    return assignment


def mean_logloss(z: np.ndarray, y: np.ndarray) -> float:
    return bce_sum(z, y) / len(y)


def cross_validate_c(
    X: np.ndarray,
    y: np.ndarray,
    grid: Sequence[float] = DEFAULT_C_GRID,
    folds: int = DEFAULT_FOLDS,
    seed: int = 0,
    reg: str = "l1",
) -> Tuple[float, List[Dict[str, Any]]]:
    """Pick C by mean held-out log-loss across seeded stratified folds.

    Folds whose training split is single-class are skipped for every C;
    ties go to the smaller C (more regularization).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if folds < 2:
        raise GateError("need at least 2 folds")
    if len(grid) == 0:
        raise GateError("empty C grid")
    if len(y) < folds:
        raise GateError(f"not enough rows ({len(y)}) for {folds} folds")
    _check_two_classes(y)

    fold_ids = _stratified_folds(y, folds, seed)
    grid_sorted = sorted(float(c) for c in grid)
    losses: Dict[float, List[float]] = {c: [] for c in grid_sorted}
    skipped: List[int] = []
    for f in range(folds):
        train = fold_ids != f
        test = ~train
        if test.sum() == 0 or np.unique(y[train]).size < 2:
            skipped.append(f)
            continue
        warm = None  # ascend the C path, warm-starting each fit
        for c in grid_sorted:
            w, b = fit_sparse_logistic(X[train], y[train], c, reg, warm_start=warm)
            warm = (w, b)
            losses[c].append(mean_logloss(X[test] @ w + b, y[test]))
    if all(len(v) == 0 for v in losses.values()):
        raise GateError("every fold was skipped (single-class training splits)")

    report = [
        {"c": c, "mean_heldout_logloss": float(np.mean(losses[c])), "fold_losses": losses[c]}
        for c in grid_sorted
    ]
    best = min(report, key=lambda r: r["mean_heldout_logloss"])  # first minimum = smallest C
    if skipped:
        for row in report:
            row["skipped_folds"] = skipped
    return float(best["c"]), report


# -- mutual-information selection ----------------------------------------------


def mi_topk_select(
    X: np.ndarray,
    y: np.ndarray,
    names: Sequence[str],
    k: int = DEFAULT_MI_K,
    bins: int = DEFAULT_MI_BINS,
) -> List[str]:
    """Top-k features by mutual information with the label, each feature
    discretized into quantile bins. Ties break by name order."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if k < 1:
        raise GateError("k must be >= 1")
    if k > X.shape[1]:
        raise GateError(f"k={k} exceeds feature count {X.shape[1]}")
    if bins < 2:
        raise GateError("need at least 2 bins")
    n = len(y)
    scores: List[Tuple[float, str]] = []
    for j, name in enumerate(names):
        edges = np.unique(np.quantile(X[:, j], np.linspace(0, 1, bins + 1)[1:-1]))
        assignments = np.digitize(X[:, j], edges)
        mi = 0.0
        for a in np.unique(assignments):
            in_a = assignments == a
            pa = in_a.mean()
            for cls in (0.0, 1.0):
                p_joint = (in_a & (y == cls)).mean()
                if p_joint > 0:
                    p_cls = (y == cls).mean()
                    mi += p_joint * np.log(p_joint / (pa * p_cls))
        scores.append((float(mi), str(name)))
    ranked = sorted(scores, key=lambda s: (-s[0], s[1]))
    return [name for _, name in ranked[:k]]


# -- the deployed gate ----------------------------------------------------------


@dataclass(frozen=True)
class GateModel:
    """Deployable gate: feature pool, standardizer, signed weights,
    bias, and decision threshold."""

    feature_specs: Tuple[FeatureSpec, ...]
    standardizer: Standardizer
    weights: np.ndarray            # aligned with standardizer.retained
    bias: float
    tau: float
    regularizer: str
    cv_report: Tuple[Dict[str, Any], ...] = ()
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise GateError(f"threshold must lie in (0, 1), got {self.tau}")
        if len(self.weights) != len(self.standardizer.retained):
            raise GateError("weights misaligned with retained features")

    @property
    def feature_names(self) -> Tuple[str, ...]:
        return self.standardizer.retained

    def score(self, obs: Dict[str, Any]) -> float:
        phi = extract_features(self.feature_specs, obs)
        x = self.standardizer.apply_vector(phi.values)
        return float(_sigmoid(np.array([x @ self.weights + self.bias]))[0])

    def decide(self, obs: Dict[str, Any]) -> bool:
        return self.score(obs) > self.tau

    def nnz(self) -> int:
        return int(np.count_nonzero(self.weights))


def gate_decide(model: GateModel, obs: Dict[str, Any]) -> bool:
    """Trigger iff sigmoid(w . phi_std(s) + b) exceeds tau (strictly)."""
    return model.decide(obs)


def reverse_direction(model: GateModel) -> GateModel:
    """Adversarially wrong-direction copy: every weight negated, bias,
    threshold, and standardizer untouched."""
    return replace(model, weights=-model.weights)


@dataclass(frozen=True)
class WeightDiagnostic:
    """Per-feature direction classification from weight signs."""

    classifications: Dict[str, str]  # type_d_proxy | type_i_proxy | uninformative


def weight_diagnostic(model: GateModel) -> WeightDiagnostic:
    exact = model.regularizer in ("l1", "elastic_net")
    out: Dict[str, str] = {}
    for name, w in zip(model.feature_names, model.weights):
        if (w == 0.0) if exact else (abs(w) < 1e-10):
            out[name] = "uninformative"
        elif w > 0:
            out[name] = "type_d_proxy"
        else:
            out[name] = "type_i_proxy"
    return WeightDiagnostic(out)


# -- orchestration ---------------------------------------------------------------


_TAU_GRID = tuple(round(0.30 + 0.05 * i, 2) for i in range(9))  # 0.30 .. 0.70


def _cv_tau(X: np.ndarray, y: np.ndarray, c: float, reg: str, folds: int, seed: int) -> float:
    """Sweep tau on held-out folds, maximizing trigger/label agreement;
    ties prefer the value nearest 0.5 (then the smaller one)."""
    fold_ids = _stratified_folds(y, folds, seed)
    accuracy = {tau: [] for tau in _TAU_GRID}
    for f in range(folds):
        train = fold_ids != f
        if np.unique(y[train]).size < 2 or (~train).sum() == 0:
            continue
        w, b = fit_sparse_logistic(X[train], y[train], c, reg)
        p = _sigmoid(X[~train] @ w + b)
        for tau in _TAU_GRID:
            accuracy[tau].append(float(((p > tau) == (y[~train] == 1.0)).mean()))
    usable = {t: np.mean(v) for t, v in accuracy.items() if v}
    if not usable:
        return DEFAULT_TAU
    best_acc = max(usable.values())
    candidates = sorted([t for t, a in usable.items() if a == best_acc], key=lambda t: (abs(t - 0.5), t))
    return float(candidates[0])


def fit_gate(
    X: np.ndarray,
    y: np.ndarray,
    specs: Sequence[FeatureSpec],
    *,
    regularizer: str = "l1",
    c_grid: Sequence[float] = DEFAULT_C_GRID,
    folds: int = DEFAULT_FOLDS,
    seed: int = 0,
    tau: Any = DEFAULT_TAU,
    mi_k: int = DEFAULT_MI_K,
    mi_bins: int = DEFAULT_MI_BINS,
    meta: Optional[Dict[str, Any]] = None,
) -> GateModel:
    """Standardize, select C by CV, fit, and package the deployable gate.

    ``tau`` is either a float (default 0.5) or "cv" for a held-out sweep.
    ``regularizer`` accepts the ablation family: l1, l2, none,
    elastic_net, mi_topk.
    """
    if regularizer not in REGULARIZERS:
        raise GateError(f"unknown regularizer {regularizer!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    names = [s.name for s in specs]
    if X.shape[1] != len(names):
        raise GateError("matrix columns misaligned with feature specs")

    standardizer = fit_standardizer(X, names)
    Xs = standardizer.apply_matrix(X)
    retained = standardizer.retained

    cv_report: List[Dict[str, Any]] = []
    chosen_c: Optional[float] = None
    tau_matrix = Xs  # what a "cv" threshold sweep refits on
    tau_reg = "none"
    if regularizer == "mi_topk":
        selected = set(mi_topk_select(Xs, y, retained, k=min(mi_k, len(retained)), bins=mi_bins))
        keep = np.array([n in selected for n in retained])
        w_sel, b = fit_sparse_logistic(Xs[:, keep], y, c=1.0, reg="none")
        weights = np.zeros(len(retained))
        weights[keep] = w_sel
        tau_matrix = Xs[:, keep]
    elif regularizer == "none":
        weights, b = fit_sparse_logistic(Xs, y, c=1.0, reg="none")
    else:
        chosen_c, cv_report = cross_validate_c(Xs, y, c_grid, folds, seed, reg=regularizer)
        warm = None  # final fit rides the same ascending path
        for c in sorted(float(c) for c in c_grid):
            if c > chosen_c:
                break
            warm = fit_sparse_logistic(Xs, y, c, reg=regularizer, warm_start=warm)
        weights, b = warm if warm is not None else fit_sparse_logistic(Xs, y, chosen_c, reg=regularizer)
        tau_reg = regularizer

    if tau == "cv":
        tau_value = _cv_tau(tau_matrix, y, chosen_c if chosen_c is not None else 1.0,
                            tau_reg, folds, seed)
    else:
        tau_value = float(tau)

    model_meta = {"seed": seed, "chosen_c": chosen_c, "n_rows": int(len(y))}
    model_meta.update(meta or {})
    return GateModel(
        feature_specs=tuple(specs),
        standardizer=standardizer,
        weights=weights,
        bias=float(b),
        tau=tau_value,
        regularizer=regularizer,
        cv_report=tuple(cv_report),
        meta=model_meta,
    )


# -- serialization -----------------------------------------------------------------


def model_to_dict(model: GateModel) -> Dict[str, Any]:
    return {
        "feature_specs": [
            {"name": s.name, "source": s.source, "extractor": s.extractor, "default_value": s.default_value}
            for s in model.feature_specs
        ],
        "feature_names": list(model.feature_names),
        "weights": [float(w) for w in model.weights],
        "bias": model.bias,
        "tau": model.tau,
        "regularizer": model.regularizer,
        "standardizer": {
            "feature_names": list(model.standardizer.feature_names),
            "means": [float(m) for m in model.standardizer.means],
            "sds": [float(s) for s in model.standardizer.sds],
            "dropped": list(model.standardizer.dropped),
        },
        "cv_report": list(model.cv_report),
        "meta": model.meta,
    }


def model_from_dict(payload: Dict[str, Any]) -> GateModel:
    std = payload["standardizer"]
    standardizer = Standardizer(
        feature_names=tuple(std["feature_names"]),
        means=np.array(std["means"], dtype=float),
        sds=np.array(std["sds"], dtype=float),
        dropped=tuple(std["dropped"]),
    )
    specs = tuple(
        FeatureSpec(
            name=s["name"], source=s["source"], extractor=s["extractor"],
            default_value=s.get("default_value", 0.0),
        )
        for s in payload["feature_specs"]
    )
    return GateModel(
        feature_specs=specs,
        standardizer=standardizer,
        weights=np.array(payload["weights"], dtype=float),
        bias=float(payload["bias"]),
        tau=float(payload["tau"]),
        regularizer=payload["regularizer"],
        cv_report=tuple(payload.get("cv_report", [])),
        meta=dict(payload.get("meta", {})),
    )


def save_model_json(model: GateModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True, indent=1)


def load_model_json(path: str) -> GateModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def data_digest(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.float64).tobytes())
    return h.hexdigest()
