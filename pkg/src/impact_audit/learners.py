"""Balanced-error-rate classifiers: weighted hinge SVM, balanced logistic
regression, Gaussian naive Bayes with a fixed (1/2, 1/2) class prior.

All three weight (or condition) the two classes equally, so the training
objective targets balanced error rather than raw accuracy.  Example j of
class y_j carries weight

    D_j = n / (2 * n_{y_j}),

which makes the D_j / n a probability distribution over examples and
splits the total weight evenly between the classes.

The SVM trains by deterministic full-batch subgradient descent with the
fixed step schedule eta_t = eta0 / (1 + t/T0) and iterate averaging; the
solver state only ever advances to a candidate with a lower objective, so
its objective trace is non-increasing by construction.  Logistic
regression has a smooth objective and is minimized with L-BFGS-B on a
hand-written objective/gradient pair.  Everything is deterministic given
the data; no randomness is used outside cross-validation fold assignment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .metrics import ber

__all__ = [
    "LinearModel",
    "GaussianNBModel",
    "CVPlan",
    "CVResult",
    "ConvergenceError",
    "class_weights",
    "svm_objective",
    "logreg_objective",
    "train_weighted_svm",
    "train_balanced_logreg",
    "train_balanced_gnb",
    "cross_validate",
    "predict",
    "model_to_json",
    "model_from_json",
]

DEFAULT_COST_GRID = tuple(float(c) for c in np.logspace(-3.0, 3.0, 13))


class ConvergenceError(RuntimeError):
    """Raised when a solver hits its iteration cap; carries the best iterate."""

    def __init__(self, message: str, model=None):
        super().__init__(message)
        self.model = model


@dataclass(frozen=True)
class LinearModel:
    """Linear decision function: predict 1 iff <w, x> + b >= 0."""

    weights: np.ndarray
    bias: float
    cost: float
    kind: str  # "svm" | "logreg"
    column_names: Optional[tuple] = None

    def decision_function(self, rows) -> np.ndarray:
        X = np.asarray(rows, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if self.weights.size == 1 else X.reshape(1, -1)
        if X.shape[1] != self.weights.size:
            raise ValueError(
                f"row width {X.shape[1]} does not match model width {self.weights.size}"
            )
        return X @ self.weights + self.bias


@dataclass(frozen=True)
class GaussianNBModel:
    """Per-class per-feature Gaussians with a fixed balanced class prior.

    Ties in the posterior comparison go to class 0.
    """

    class_means: np.ndarray      # (2, k)
    class_variances: np.ndarray  # (2, k)
    column_names: Optional[tuple] = None
    class_prior: tuple = (0.5, 0.5)

    def log_joint(self, rows) -> np.ndarray:
        X = np.asarray(rows, dtype=float)
        if X.ndim == 1:
            k = self.class_means.shape[1]
            X = X.reshape(-1, 1) if k == 1 else X.reshape(1, -1)
        if X.shape[1] != self.class_means.shape[1]:
            raise ValueError(
                f"row width {X.shape[1]} does not match model width "
                f"{self.class_means.shape[1]}"
            )
        out = np.empty((X.shape[0], 2))
        for c in (0, 1):
            mu = self.class_means[c]
            var = self.class_variances[c]
            ll = -0.5 * (np.log(2.0 * np.pi * var) + (X - mu) ** 2 / var)
            out[:, c] = ll.sum(axis=1) + np.log(self.class_prior[c])
        return out


@dataclass(frozen=True)
class CVPlan:
    """k-fold cross-validation over a log-spaced cost grid, scored by BER."""

    folds: int = 3
    cost_grid: tuple = DEFAULT_COST_GRID
    seed: int = 42
    objective: str = "ber"

    def __post_init__(self) -> None:
        grid = np.asarray(self.cost_grid, dtype=float)
        if grid.size < 1 or (np.diff(grid) <= 0).any():
            raise ValueError("cost grid must be strictly increasing")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if self.objective != "ber":
            raise ValueError("only the BER objective is supported")


@dataclass(frozen=True)
class CVResult:
    model: object
    best_cost: float
    fold_bers: np.ndarray  # (len(grid), folds)
    mean_bers: np.ndarray  # (len(grid),)


def class_weights(targets) -> np.ndarray:
    """Per-example weights D_j = n / (2 n_{y_j}); the D_j/n sum to 1."""
    y = np.asarray(targets)
    if y.dtype != bool:
        y = y.astype(np.int64)
        if not np.isin(y, (0, 1)).all():
            raise ValueError("targets must be binary")
        y = y.astype(bool)
    n = y.size
    n1 = int(y.sum())
    n0 = n - n1
    if n0 == 0 or n1 == 0:
        raise ValueError("both classes must be present")
    D = np.where(y, n / (2.0 * n1), n / (2.0 * n0))
    return D


def _as_xy(features, targets):
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(targets)
    if y.dtype != bool:
        y = y.astype(np.int64).astype(bool)
    if X.shape[0] != y.size:
        raise ValueError("features and targets disagree on row count")
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")
    return X, y


def svm_objective(features, targets, cost: float, weights, bias: float) -> float:
    """0.5 ||w||^2 + (C/n) sum_j D_j max(0, 1 - y_j (<w,x_j> + b))."""
    X, y = _as_xy(features, targets)
    D = class_weights(y)
    ysign = np.where(y, 1.0, -1.0)
    w = np.asarray(weights, dtype=float)
    margins = ysign * (X @ w + bias)
    hinge = np.maximum(0.0, 1.0 - margins)
    return float(0.5 * w @ w + (cost / y.size) * (D * hinge).sum())


def logreg_objective(features, targets, cost: float, weights, bias: float,
                     with_grad: bool = False):
    """0.5 ||w||^2 + C sum_j (D_j/n) log(1 + exp(-y_j (<w,x_j> + b)))."""
    X, y = _as_xy(features, targets)
    Dn = class_weights(y) / y.size
    ysign = np.where(y, 1.0, -1.0)
    w = np.asarray(weights, dtype=float)
    z = ysign * (X @ w + bias)
    value = float(0.5 * w @ w + cost * (Dn * np.logaddexp(0.0, -z)).sum())
    if not with_grad:
        return value
    s = expit(-z)  # d/dz log(1+exp(-z)) = -sigmoid(-z)
    coef = cost * Dn * ysign * s
    grad_w = w - X.T @ coef
    grad_b = -float(coef.sum())
    return value, grad_w, grad_b


# --- SVM subgradient solver ------------------------------------------------

# Step schedule eta_t = eta0/(1 + t/T0) with eta0 = 1/(1 + C) per cost
# (subgradient magnitude scales with C, so the first steps are normalized),
# tail-restarted iterate averaging, and best-candidate state advancement.
_SVM_T0 = 100.0
_SVM_MAX_ITER = 200_000
_SVM_PATIENCE = 400
_SVM_REL_TOL = 1e-8
_SVM_AVG_EVERY = 10
_SVM_AVG_RESTART = 500


def _svm_fit_batch(X, y, costs, collect_trace=False):
    """Train one SVM per cost simultaneously (vectorized over costs).

    Returns (W_best (k, m), B_best (m,), obj_best (m,), traces).
    """
    n, k = X.shape
    D = class_weights(y)
    Dn = D / n
    ysign = np.where(y, 1.0, -1.0)
    C = np.asarray(costs, dtype=float)
    Dyn = (Dn * ysign)[:, None]
    ycol = ysign[:, None]
    Dncol = Dn[:, None]

    active = np.arange(C.size)
    W = np.zeros((k, C.size))
    B = np.zeros(C.size)
    SW = np.zeros_like(W)
    SB = np.zeros_like(B)
    avg_count = 0
    best_W = np.zeros((k, C.size))
    best_B = np.zeros(C.size)
    # objective at the (0, 0) start is exactly C: every margin violates by 1
    # and the D_j/n sum to 1
    best_obj = C.copy()
    since = np.zeros(C.size, dtype=np.int64)
    eta0 = 1.0 / (1.0 + C)
    traces = [[] for _ in range(C.size)] if collect_trace else None

    def improve(cols, objs, Wc, Bc):
        # advance solver state only to strictly better candidates
        better = objs < best_obj[cols] - _SVM_REL_TOL * np.maximum(1.0, np.abs(best_obj[cols]))
        hit = cols[better]
        best_obj[hit] = objs[better]
        best_W[:, hit] = Wc[:, better]
        best_B[hit] = Bc[better]
        return better

    t = 0
    while active.size and t < _SVM_MAX_ITER:
        Ca = C[active]
        scores = X @ W + B
        margins = ycol * scores
        hinge = np.maximum(0.0, 1.0 - margins)
        objs = 0.5 * (W * W).sum(axis=0) + Ca * (Dncol * hinge).sum(axis=0)
        got_better = improve(active, objs, W, B)

        if avg_count and t % _SVM_AVG_EVERY == 0:
            AW = SW / avg_count
            AB = SB / avg_count
            amarg = ycol * (X @ AW + AB)
            ahinge = np.maximum(0.0, 1.0 - amarg)
            aobjs = 0.5 * (AW * AW).sum(axis=0) + Ca * (Dncol * ahinge).sum(axis=0)
            got_better |= improve(active, aobjs, AW, AB)

        since[active] = np.where(got_better, 0, since[active] + 1)
        if collect_trace:
            for col in active:
                traces[col].append(float(best_obj[col]))

        coef = np.where(hinge > 0.0, Dyn, 0.0)
        grad_W = W - (X.T @ coef) * Ca
        grad_B = -Ca * coef.sum(axis=0)
        eta = eta0[active] / (1.0 + t / _SVM_T0)
        W = W - eta * grad_W
        B = B - eta * grad_B
        SW += W
        SB += B
        avg_count += 1
        if avg_count >= _SVM_AVG_RESTART:
            SW[:] = 0.0
            SB[:] = 0.0
            avg_count = 0

        done = since[active] >= _SVM_PATIENCE
        if done.any():
            keep = ~done
            active = active[keep]
            W = W[:, keep]
            B = B[keep]
            SW = SW[:, keep]
            SB = SB[keep]
        t += 1

    if active.size:
        raise ConvergenceError(
            f"SVM solver hit the {_SVM_MAX_ITER}-iteration cap for costs "
            f"{C[active].tolist()}",
            model=(best_W, best_B, best_obj),
        )
    return best_W, best_B, best_obj, traces


def train_weighted_svm(features, targets, cost: float, column_names=None,
                       collect_trace: bool = False):
    """Class-weighted hinge-loss linear SVM at a fixed cost C."""
    X, y = _as_xy(features, targets)
    if cost <= 0:
        raise ValueError("cost must be positive")
    W, B, _, traces = _svm_fit_batch(X, y, [float(cost)], collect_trace=collect_trace)
    model = LinearModel(
        weights=W[:, 0].copy(), bias=float(B[0]), cost=float(cost), kind="svm",
        column_names=tuple(column_names) if column_names else None,
    )
    if collect_trace:
        return model, traces[0]
    return model


# --- balanced logistic regression -------------------------------------------

def train_balanced_logreg(features, targets, cost: float, column_names=None,
                          collect_trace: bool = False):
    """L2-regularized, class-balanced logistic regression at a fixed cost."""
    X, y = _as_xy(features, targets)
    if cost <= 0:
        raise ValueError("cost must be positive")
    k = X.shape[1]
    trace: list = []

    def fun(theta):
        w, b = theta[:k], theta[k]
        value, gw, gb = logreg_objective(X, y, cost, w, b, with_grad=True)
        return value, np.concatenate([gw, [gb]])

    theta0 = np.zeros(k + 1)
    _, g0 = fun(theta0)
    gref = max(1.0, float(np.linalg.norm(g0)))
    theta = theta0
    for _ in range(3):
        result = minimize(
            fun, theta, jac=True, method="L-BFGS-B",
            callback=(lambda th: trace.append(fun(th)[0])) if collect_trace else None,
            options={"maxiter": 1000, "ftol": 1e-15, "gtol": 1e-10},
        )
        theta = result.x
        gnorm = float(np.linalg.norm(fun(theta)[1]))
        if gnorm <= 1e-6 * gref:
            break
    else:
        raise ConvergenceError(
            f"logistic solver stalled with |grad| = {gnorm:.3e} (ref {gref:.3e})",
            model=LinearModel(theta[:k].copy(), float(theta[k]), float(cost), "logreg"),
        )
    model = LinearModel(
        weights=theta[:k].copy(), bias=float(theta[k]), cost=float(cost),
        kind="logreg",
        column_names=tuple(column_names) if column_names else None,
    )
    if collect_trace:
        return model, trace
    return model


# --- Gaussian naive Bayes ----------------------------------------------------

def train_balanced_gnb(features, targets, column_names=None) -> GaussianNBModel:
    """Per-class Gaussians with a balanced prior and a variance floor."""
    X, y = _as_xy(features, targets)
    if X.shape[1] == 0:
        raise ValueError("need at least one feature")
    counts = (int((~y).sum()), int(y.sum()))
    if min(counts) < 2:
        raise ValueError("need at least 2 rows per class")
    means = np.vstack([X[~y].mean(axis=0), X[y].mean(axis=0)])
    variances = np.vstack([X[~y].var(axis=0), X[y].var(axis=0)])
    vmax = float(np.var(X, axis=0).max())
    floor = 1e-9 * vmax if vmax > 0 else 1e-9
    variances = np.maximum(variances, floor)
    return GaussianNBModel(
        class_means=means, class_variances=variances,
        column_names=tuple(column_names) if column_names else None,
    )


# --- prediction, CV, serialization -------------------------------------------

def predict(model, rows) -> np.ndarray:
    """Binary {0,1} labels; linear ties (decision value 0) go to class 1,
    GNB posterior ties go to class 0."""
    if isinstance(model, LinearModel):
        return (model.decision_function(rows) >= 0.0).astype(np.int64)
    if isinstance(model, GaussianNBModel):
        lj = model.log_joint(rows)
        return (lj[:, 1] > lj[:, 0]).astype(np.int64)
    raise TypeError(f"unknown model type {type(model)!r}")


def _stratified_folds(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    assignment = np.full(y.size, -1, dtype=np.int64)
    for cls in (False, True):
        idx = np.flatnonzero(y == cls)
        if idx.size < folds:
            raise ValueError(
                f"class {int(cls)} has {idx.size} rows; cannot fill {folds} folds"
            )
        assignment[rng.permutation(idx)] = np.arange(idx.size) % folds
    return assignment


def cross_validate(learner: str, features, targets, plan: CVPlan,
                   column_names=None) -> CVResult:
    """Grid-search the cost by k-fold BER; refit on all rows at the best cost.

    Ties in mean validation BER resolve to the smaller cost.
    """
    X, y = _as_xy(features, targets)
    if learner not in ("svm", "logreg"):
        raise ValueError("cross_validate supports the 'svm' and 'logreg' learners")
    grid = np.asarray(plan.cost_grid, dtype=float)
    assignment = _stratified_folds(y, plan.folds, plan.seed)
    fold_bers = np.empty((grid.size, plan.folds))
    for f in range(plan.folds):
        tr = assignment != f
        va = ~tr
        if learner == "svm":
            W, B, _, _ = _svm_fit_batch(X[tr], y[tr], grid)
            scores = X[va] @ W + B
            for g in range(grid.size):
                pred = (scores[:, g] >= 0.0).astype(np.int64)
                fold_bers[g, f] = ber(pred, y[va].astype(np.int64))
        else:
            for g, cost in enumerate(grid):
                model = train_balanced_logreg(X[tr], y[tr], float(cost))
                fold_bers[g, f] = ber(predict(model, X[va]), y[va].astype(np.int64))
    mean_bers = fold_bers.mean(axis=1)
    best = int(np.argmin(mean_bers))  # first minimum = smallest cost on ties
    best_cost = float(grid[best])
    if learner == "svm":
        model = train_weighted_svm(X, y, best_cost, column_names=column_names)
    else:
        model = train_balanced_logreg(X, y, best_cost, column_names=column_names)
    return CVResult(model=model, best_cost=best_cost, fold_bers=fold_bers,
                    mean_bers=mean_bers)


def model_to_json(model) -> dict:
    if isinstance(model, LinearModel):
        return {
            "kind": model.kind,
            "weights": [float(v) for v in model.weights],
            "bias": float(model.bias),
            "cost": float(model.cost),
            "column_names": list(model.column_names) if model.column_names else None,
        }
    if isinstance(model, GaussianNBModel):
        return {
            "kind": "gnb",
            "class_means": [[float(v) for v in row] for row in model.class_means],
            "class_variances": [[float(v) for v in row] for row in model.class_variances],
            "class_prior": list(model.class_prior),
            "column_names": list(model.column_names) if model.column_names else None,
        }
    raise TypeError(f"unknown model type {type(model)!r}")


def model_from_json(doc: dict):
    kind = doc["kind"]
    names = tuple(doc["column_names"]) if doc.get("column_names") else None
    if kind in ("svm", "logreg"):
        return LinearModel(
            weights=np.asarray(doc["weights"], dtype=float),
            bias=float(doc["bias"]), cost=float(doc["cost"]), kind=kind,
            column_names=names,
        )
    if kind == "gnb":
        return GaussianNBModel(
            class_means=np.asarray(doc["class_means"], dtype=float),
            class_variances=np.asarray(doc["class_variances"], dtype=float),
            column_names=names,
            class_prior=tuple(doc.get("class_prior", (0.5, 0.5))),
        )
    raise ValueError(f"unknown model kind {kind!r}")
