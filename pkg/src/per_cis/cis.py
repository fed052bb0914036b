"""Causal information splitting.

An ambiguous source is mapped to per-label-stratum predictions of a good
target proxy. Each stratum model sees only its own rows, so the emitted
columns keep what the source says about the target given Y and drop what
the source carries about Y-dependent shifts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._config import pmap
from .dataset import Dataset
from .learn import fit_logistic_l1


@dataclass(frozen=True)
class Learner:
    """Auxiliary learner: ``"linear"`` (ridge least squares), ``"logistic"`` or ``"auto"``.

    ``auto`` picks logistic for 0/1 targets and linear otherwise. ``ridge`` is
    the penalty per row on standardised inputs; the intercept is never penalised.
    """

    kind: str = "auto"
    ridge: float = 1e-6
    lam: float = 1e-4

    def resolve(self, target: np.ndarray) -> str:
        if self.kind != "auto":
            if self.kind not in ("linear", "logistic"):
                raise ValueError(f"unknown learner {self.kind!r}")
            return self.kind
        vals = set(np.unique(target).tolist())
        return "logistic" if vals <= {0, 1} and len(vals) == 2 else "linear"


@dataclass(frozen=True)
class StratumModel:
    kind: str
    weights: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    n_rows: int
    constant: bool = False

    def predict(self, x: np.ndarray) -> np.ndarray:
        z = ((x - self.mean) / self.scale) @ self.weights + self.intercept
        if self.kind == "logistic" and not self.constant:
            return 0.5 * (1.0 + np.tanh(0.5 * z))
        return z

    def to_json(self) -> dict:
        return {"kind": self.kind, "weights": self.weights.tolist(), "intercept": self.intercept,
                "mean": self.mean.tolist(), "scale": self.scale.tolist(), "n_rows": self.n_rows,
                "constant": self.constant}

    @classmethod
    def from_json(cls, doc) -> "StratumModel":
        return cls(doc["kind"], np.asarray(doc["weights"], float), float(doc["intercept"]),
                   np.asarray(doc["mean"], float), np.asarray(doc["scale"], float),
                   int(doc["n_rows"]), bool(doc.get("constant", False)))


def _fit(x: np.ndarray, t: np.ndarray, kind: str, learner: Learner) -> StratumModel:
    n = len(t)
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    scale = np.where(sd > 0, sd, 1.0)
    xs = (x - mean) / scale
    if np.ptp(t) == 0:
        # degenerate target: the constant is the exact minimiser of either loss
        return StratumModel(kind, np.zeros(x.shape[1]), float(t[0]), mean, scale, n, constant=True)
    if kind == "linear":
        tc = t - t.mean()
        gram = xs.T @ xs + learner.ridge * n * np.eye(x.shape[1])
        w = np.linalg.solve(gram, xs.T @ tc)
        return StratumModel(kind, w, float(t.mean()), mean, scale, n)
    names = [f"x{j}" for j in range(x.shape[1])]
    m = fit_logistic_l1(Dataset({**dict(zip(names, xs.T)), "t": t.astype(int)}), names, "t", lam=learner.lam)
    # fold the learner's own standardisation into the weights
    w = m.weights / m.scale
    b = m.intercept - float(m.mean @ w)
    return StratumModel(kind, w, b, mean, scale, n)


@dataclass(frozen=True)
class IsolationFeatureSet:
    target: str
    source: tuple[str, ...]
    y: str
    models: Mapping  # label value -> StratumModel, sorted by value
    flags: tuple[str, ...] = ()

    @property
    def columns(self) -> list[str]:
        return [f"cis_{self.target}_{self.y}{v}" for v in self.models]

    def to_json(self) -> dict:
        return {"target": self.target, "source": list(self.source), "y": self.y,
                "models": [{"y": v, **m.to_json()} for v, m in self.models.items()],
                "columns": self.columns, "flags": list(self.flags)}

    @classmethod
    def from_json(cls, doc) -> "IsolationFeatureSet":
        models = {d["y"]: StratumModel.from_json(d) for d in doc["models"]}
        return cls(doc["target"], tuple(doc["source"]), doc["y"], models, tuple(doc.get("flags", ())))


def train_isolation(ds: Dataset, target: str, source: Sequence[str], y: str,
                    learner: Learner | None = None, min_rows: int = 50) -> IsolationFeatureSet:
    """Fit one source -> target predictor per value of ``y``, each on its own stratum only."""
    learner = learner or Learner()
    source = list(source)
    if not source:
        raise ValueError("need at least one source column")
    ds.require([target, y] + source)
    strata = ds.strata(y)
    small = {v: len(i) for v, i in strata.items() if len(i) < min_rows}
    if small:
        raise ValueError(f"strata below {min_rows} rows: {small}")
    t_all = ds[target].astype(float)
    kind = learner.resolve(t_all)
    x_all = ds.matrix(source)

    def fit_one(item):
        v, idx = item
        return v, _fit(x_all[idx], t_all[idx], kind, learner)

    models = dict(pmap(fit_one, list(strata.items())))
    flags = tuple(f"constant target in stratum {y}={v}" for v, m in models.items() if m.constant)
    return IsolationFeatureSet(target, tuple(source), y, models, flags)


def emit_features(fs: IsolationFeatureSet, ds: Dataset) -> Dataset:
    """Append every stratum model's prediction, evaluated on every row."""
    x = ds.matrix(fs.source)
    return ds.with_columns({c: m.predict(x) for c, m in zip(fs.columns, fs.models.values())})


@dataclass(frozen=True)
class ImprovementReport:
    pooled_error: float
    stratified_error: float
    margin: float
    stratum_errors: dict = field(default_factory=dict)

    @property
    def condition_met(self) -> bool:
        return self.pooled_error - self.stratified_error > self.margin * self.pooled_error

    def to_json(self) -> dict:
        return {"pooled_error": self.pooled_error, "stratified_error": self.stratified_error,
                "margin": self.margin, "condition_met": self.condition_met,
                "stratum_errors": {str(k): v for k, v in self.stratum_errors.items()}}


def _error(pred: np.ndarray, t: np.ndarray, kind: str) -> np.ndarray:
    if kind == "linear":
        return (pred - t) ** 2
    p = np.clip(pred, 1e-12, 1 - 1e-12)
    return -(t * np.log(p) + (1 - t) * np.log(1 - p))


def _cv_error(x, t, kind, learner, folds, rng) -> float:
    n = len(t)
    if n < 2 * folds:
        raise ValueError(f"{n} rows is too few for {folds}-fold cross-validation")
    parts = np.array_split(rng.permutation(n), folds)
    total = 0.0
    for k in range(folds):
        train = np.sort(np.concatenate([p for i, p in enumerate(parts) if i != k]))
        m = _fit(x[train], t[train], kind, learner)
        total += float(_error(m.predict(x[parts[k]]), t[parts[k]], kind).sum())
    return total / n


def check_improvement(ds: Dataset, target: str, source: Sequence[str], y: str,
                      learner: Learner | None = None, folds: int = 5, margin: float = 0.01,
                      seed=0) -> ImprovementReport:
    """Cross-validated pooled error against the label-weighted per-stratum error.

    The condition holds when splitting by ``y`` lowers the error by more than
    the relative ``margin``.
    """
    learner = learner or Learner()
    source = list(source)
    ds.require([target, y] + source)
    strata = ds.strata(y)
    if len(strata) < 2:
        raise ValueError("the improvement condition needs at least two label values")
    t = ds[target].astype(float)
    kind = learner.resolve(t)
    x = ds.matrix(source)
    rng = np.random.default_rng(seed)
    pooled = _cv_error(x, t, kind, learner, folds, rng)
    per = {v: _cv_error(x[i], t[i], kind, learner, folds, rng) for v, i in strata.items()}
    strat = sum(len(strata[v]) / ds.n_rows * e for v, e in per.items())
    return ImprovementReport(pooled, strat, margin, per)


def oracle_isolation_linear(ds: Dataset, columns: Sequence[str], mixing, keep: Sequence[int] = (0,),
                            names: Sequence[str] | None = None) -> Dataset:
    """Undo a known linear mixing of ``columns`` and append the kept components.

    ``mixing`` maps components to observed columns (observed = mixing @ components).
    """
    columns = list(columns)
    a = np.asarray(mixing, float)
    if a.shape != (len(columns), len(columns)):
        raise ValueError("mixing matrix must be square over the given columns")
    if np.linalg.matrix_rank(a) < len(columns):
        raise ValueError("mixing matrix is not invertible")
    comps = np.linalg.solve(a, ds.matrix(columns).T)
    names = list(names) if names is not None else [f"{columns[0]}_component{k}" for k in keep]
    return ds.with_columns({nm: comps[k] for nm, k in zip(names, keep)})


def rotation(deg: float) -> np.ndarray:
    th = np.deg2rad(deg)
    return np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
