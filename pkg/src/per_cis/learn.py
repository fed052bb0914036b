"""L1-regularised logistic regression and classification metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Dataset

DEFAULT_LAMBDA = 1e-3


def _loss(z: np.ndarray, y: np.ndarray) -> float:
    # mean logistic loss with y in {0, 1}
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _soft(x: float, t: float) -> float:
    return float(np.sign(x) * max(abs(x) - t, 0.0))


@dataclass(frozen=True)
class LinearModel:
    """Logistic model on standardised features.

    ``weights`` act on ``(x - mean) / scale``; features with zero training
    variance have scale 1 and weight 0 and are listed in ``flags``.
    """

    features: tuple[str, ...]
    weights: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    lam: float
    n_iter: int = 0
    objective: float = float("nan")
    converged: bool = True
    trace: tuple[float, ...] = ()
    flags: tuple[str, ...] = ()

    def decision(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.mean) / self.scale) @ self.weights + self.intercept

    def to_json(self) -> dict:
        return {"features": list(self.features), "weights": self.weights.tolist(),
                "intercept": self.intercept, "mean": self.mean.tolist(), "scale": self.scale.tolist(),
                "lambda": self.lam, "n_iter": self.n_iter, "objective": self.objective,
                "converged": self.converged, "flags": list(self.flags)}

    @classmethod
    def from_json(cls, doc) -> "LinearModel":
        return cls(tuple(doc["features"]), np.asarray(doc["weights"], float), float(doc["intercept"]),
                   np.asarray(doc["mean"], float), np.asarray(doc["scale"], float), float(doc["lambda"]),
                   int(doc.get("n_iter", 0)), float(doc.get("objective", "nan")),
                   bool(doc.get("converged", True)), (), tuple(doc.get("flags", ())))


def binary_label(values) -> np.ndarray:
    y = np.asarray(values)
    uniq = set(np.unique(y).tolist())
    if not uniq <= {0, 1}:
        raise ValueError(f"label must be binary 0/1, found values {sorted(uniq)[:5]}")
    return y.astype(float)


def l1_objective(w: np.ndarray, b: float, xs: np.ndarray, y: np.ndarray, lam: float) -> float:
    """Mean logistic loss plus ``lam * |w|_1`` on already standardised ``xs``."""
    return _loss(xs @ w + b, y) + lam * float(np.abs(w).sum())


def standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    const = ~(sd > 1e-12 * np.maximum(1.0, np.abs(mean)))
    scale = np.where(const, 1.0, sd)
    return (x - mean) / scale, mean, scale


def fit_logistic_l1(ds: Dataset, features: Sequence[str], label: str, lam: float = DEFAULT_LAMBDA,
                    seed=0, tol: float = 1e-7, max_sweeps: int = 10_000) -> LinearModel:
    """Coordinate-wise proximal Newton descent on the L1-penalised logistic loss.

    Each coordinate takes the proximal step under its exact curvature; if that
    fails to lower the objective it falls back to the step under the global
    curvature bound ``mean(x_j^2) / 4``, which always descends. The intercept
    is unpenalised. ``seed`` fixes the order in which features are swept.
    """
    features = list(features)
    if not features:
        raise ValueError("need at least one feature")
    if ds.n_rows < 10:
        raise ValueError("need at least 10 rows")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    y = binary_label(ds[label])
    if y.min() == y.max():
        raise ValueError("label has a single class")
    xs, mean, scale = standardize(ds.matrix(features))
    n, d = xs.shape
    const = np.flatnonzero(np.isclose(xs.std(axis=0), 0.0))
    flags = [f"constant feature {features[j]}" for j in const]
    active = [j for j in np.random.default_rng(seed).permutation(d) if j not in set(const)]
    if not active:
        flags.append("intercept-only fit")
    curv_bound = (xs ** 2).mean(axis=0) / 4.0

    w = np.zeros(d)
    rate = y.mean()
    b = float(np.log(rate / (1 - rate)))
    z = np.full(n, b)
    obj = _loss(z, y)
    trace = [obj]
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        biggest = 0.0
        for j in active:
            xj = xs[:, j]
            p = _sigmoid(z)
            g = float(xj @ (p - y)) / n
            h = float((xj ** 2) @ (p * (1 - p))) / n
            old = w[j]
            base = obj
            for curv in (h, curv_bound[j]):
                if curv <= 0:
                    continue
                new = _soft(curv * old - g, lam) / curv
                z_new = z + (new - old) * xj
                cand = _loss(z_new, y) + lam * (float(np.abs(w).sum()) - abs(old) + abs(new))
                if cand <= base:
                    break
            else:
                new, z_new, cand = old, z, base
            w[j] = new
            z = z_new
            obj = cand
            biggest = max(biggest, abs(new - old))
        # intercept: Newton step with the same safeguard
        p = _sigmoid(z)
        g = float((p - y).mean())
        h = float((p * (1 - p)).mean())
        pen = lam * float(np.abs(w).sum())
        for curv in (h, 0.25):
            if curv <= 0:
                continue
            step = -g / curv
            cand = _loss(z + step, y) + pen
            if cand <= obj:
                b += step
                z = z + step
                obj = cand
                biggest = max(biggest, abs(step))
                break
        trace.append(obj)
        if biggest < tol:
            converged = True
            break
    if not converged:
        flags.append("reached max sweeps")
    return LinearModel(tuple(features), w, b, mean, scale, lam, sweep, obj, converged, tuple(trace), tuple(flags))


def predict_proba(model: LinearModel, ds: Dataset) -> np.ndarray:
    return _sigmoid(model.decision(ds.matrix(model.features)))


def predict(model: LinearModel, ds: Dataset) -> np.ndarray:
    return (predict_proba(model, ds) >= 0.5).astype(int)


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    f1: float
    n: int
    tp: int
    fp: int
    fn: int
    tn: int
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy, "f1": self.f1, "n": self.n,
                "confusion": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}}


def metrics_from_predictions(y_true, y_pred) -> EvalMetrics:
    """Accuracy and positive-class F1; F1 is 0 when there are no positives at all."""
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    if len(y_true) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    tp = int(((y_true == 1) & (y_pred == 1)).sum())
    fp = int(((y_true == 0) & (y_pred == 1)).sum())
    fn = int(((y_true == 1) & (y_pred == 0)).sum())
    tn = int(((y_true == 0) & (y_pred == 0)).sum())
    denom = 2 * tp + fp + fn
    return EvalMetrics((tp + tn) / len(y_true), 2 * tp / denom if denom else 0.0, len(y_true), tp, fp, fn, tn)


def evaluate(model: LinearModel, ds: Dataset, label: str) -> EvalMetrics:
    if ds.n_rows == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    return metrics_from_predictions(binary_label(ds[label]), predict(model, ds))
