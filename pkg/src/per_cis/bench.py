"""Benchmarks: the Gaussian three-proxy sweep and the tabular income pipeline.

Four feature sets are compared throughout:

* ``all_features``: every observed proxy,
* ``limited_features``: only the good proxies,
* ``engineered_features``: good proxies plus CIS columns built from the rest,
* ``oracle_component`` (synthetic only): good proxies plus the true good
  component of the mixed proxy.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ._config import pmap
from .cis import Learner, emit_features, oracle_isolation_linear, rotation, train_isolation
from .dataset import Dataset
from .learn import DEFAULT_LAMBDA, evaluate, fit_logistic_l1

METHODS = ("all_features", "limited_features", "engineered_features", "oracle_component")


@dataclass(frozen=True)
class SyntheticConfig:
    sigma_mg: float = 1.0
    sigma_mb: float = 1.0
    noise_sd: float = 0.2
    rotation_deg: float = 45.0
    flip_prob: float = 0.05
    n_train: int = 20_000
    n_test: int = 20_000
    repetitions: int = 20
    seed: int = 0
    lam: float = DEFAULT_LAMBDA
    sweep: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)

    def __post_init__(self):
        if min(self.sigma_mg, self.sigma_mb, self.noise_sd) <= 0 or min(self.sweep, default=1) <= 0:
            raise ValueError("standard deviations must be positive")
        if not 0 <= self.flip_prob < 0.5:
            raise ValueError("flip_prob must be in [0, 0.5)")
        if self.n_train < 10 or self.n_test < 1 or self.repetitions < 1:
            raise ValueError("n_train >= 10, n_test >= 1 and repetitions >= 1 required")

    @classmethod
    def from_json(cls, doc: Mapping) -> "SyntheticConfig":
        doc = dict(doc)
        if "sweep" in doc:
            doc["sweep"] = tuple(float(s) for s in doc["sweep"])
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def env_points(self) -> list[tuple[float, float]]:
        """Shift one mechanism at a time away from the training environment."""
        pts = [(s, self.sigma_mb) for s in self.sweep]
        pts += [(self.sigma_mg, s) for s in self.sweep if (self.sigma_mg, s) not in pts]
        return pts


def generate_synthetic(cfg: SyntheticConfig, env: tuple[float, float] | None = None, n: int | None = None,
                       seed=None) -> Dataset:
    """Sample the linear-Gaussian three-proxy model.

    Non-label vertices are the mean of their parents plus N(0, noise_sd) noise.
    Y is ``U_G > 0`` with flipped labels; it enters ``U_B`` as the signed
    value ``2Y - 1`` so that both parents of ``U_B`` are centred. ``V_A1`` and
    ``V_A2`` are the rotated pair of components ``V_A_G`` and ``V_A_B``.
    """
    s_mg, s_mb = env if env is not None else (cfg.sigma_mg, cfg.sigma_mb)
    n = cfg.n_train if n is None else n
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    eps = lambda: rng.normal(0.0, cfg.noise_sd, n)  # noqa: E731
    m_g = rng.normal(0.0, s_mg, n)
    m_b = rng.normal(0.0, s_mb, n)
    u_g = m_g + eps()
    y = (u_g > 0).astype(int)
    flip = rng.random(n) < cfg.flip_prob
    y = np.where(flip, 1 - y, y)
    u_b = ((2 * y - 1) + m_b) / 2 + eps()
    v_g = u_g + eps()
    v_b = u_b + eps()
    a_g = u_g + eps()
    a_b = u_b + eps()
    v_a = rotation(cfg.rotation_deg) @ np.vstack([a_g, a_b])
    return Dataset({"M_G": m_g, "M_B": m_b, "U_G": u_g, "U_B": u_b, "Y": y, "V_G": v_g, "V_B": v_b,
                    "V_A1": v_a[0], "V_A2": v_a[1], "V_A_G": a_g, "V_A_B": a_b})


@dataclass
class BenchReport:
    """Mean and sd of each metric per condition and method.

    ``conditions`` is a list of ``{"condition": {...}, "metrics": {method:
    {metric_mean, metric_sd}}}`` records.
    """

    kind: str
    methods: tuple[str, ...]
    conditions: list
    config: dict
    notes: list = field(default_factory=list)
    runtime_s: float | None = None

    def to_json(self, include_runtime: bool = True) -> dict:
        out = {"kind": self.kind, "methods": list(self.methods), "config": self.config,
               "conditions": self.conditions, "notes": self.notes}
        if include_runtime and self.runtime_s is not None:
            out["runtime_s"] = self.runtime_s
        return out

    def metric(self, method: str, metric: str = "accuracy", **cond) -> tuple[float, float]:
        for c in self.conditions:
            if all(c["condition"].get(k) == v for k, v in cond.items()):
                m = c["metrics"][method]
                return m[f"{metric}_mean"], m[f"{metric}_sd"]
        raise KeyError(f"no condition matching {cond}")

    def curves_frame(self) -> pd.DataFrame:
        rows = []
        for c in self.conditions:
            for meth, m in c["metrics"].items():
                rows.append({**c["condition"], "method": meth, **m})
        return pd.DataFrame(rows)


def _summary(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, float)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def _aggregate(per_rep: list[dict], methods: Sequence[str], key_order: list) -> list:
    """``per_rep[r][cond_key][method]`` holds EvalMetrics; collapse over reps."""
    out = []
    for key, cond in key_order:
        metrics = {}
        for meth in methods:
            acc = [r[key][meth].accuracy for r in per_rep]
            f1 = [r[key][meth].f1 for r in per_rep]
            am, asd = _summary(acc)
            fm, fsd = _summary(f1)
            metrics[meth] = {"accuracy_mean": am, "accuracy_sd": asd, "f1_mean": fm, "f1_sd": fsd}
        out.append({"condition": cond, "metrics": metrics})
    return out


SYNTH_GOOD = ["V_G"]
SYNTH_SOURCE = ["V_A1", "V_A2"]


def _synthetic_features(cfg: SyntheticConfig, train: Dataset):
    """Fit the four models on a training set; returns a function adding derived columns and the feature lists."""
    fs = train_isolation(train, "V_G", SYNTH_SOURCE, "Y", Learner("linear"))
    mix = rotation(cfg.rotation_deg)

    def augment(ds: Dataset) -> Dataset:
        ds = emit_features(fs, ds)
        return oracle_isolation_linear(ds, SYNTH_SOURCE, mix, keep=(0,), names=["V_A_G_hat"])

    feats = {"all_features": SYNTH_GOOD + SYNTH_SOURCE,
             "limited_features": SYNTH_GOOD,
             "engineered_features": SYNTH_GOOD + fs.columns,
             "oracle_component": SYNTH_GOOD + ["V_A_G_hat"]}
    return augment, feats


def run_synthetic_sweep(cfg: SyntheticConfig, env_points: Sequence[tuple[float, float]] | None = None) -> BenchReport:
    """Train all four models at the configured environment and evaluate them across shifted ones."""
    t0 = time.perf_counter()
    points = list(env_points) if env_points is not None else cfg.env_points()

    def one_rep(r: int) -> dict:
        train = generate_synthetic(cfg, n=cfg.n_train, seed=[cfg.seed, r, 0])
        augment, feats = _synthetic_features(cfg, train)
        train = augment(train)
        models = {m: fit_logistic_l1(train, f, "Y", lam=cfg.lam, seed=cfg.seed) for m, f in feats.items()}
        res = {}
        for k, env in enumerate(points):
            test = augment(generate_synthetic(cfg, env, n=cfg.n_test, seed=[cfg.seed, r, 1, k]))
            res[k] = {m: evaluate(models[m], test, "Y") for m in METHODS}
        return res

    per_rep = pmap(one_rep, range(cfg.repetitions))
    order = [(k, {"sigma_mg": env[0], "sigma_mb": env[1]}) for k, env in enumerate(points)]
    conf = asdict(cfg)
    conf["sweep"] = list(cfg.sweep)
    return BenchReport("synthetic", METHODS, _aggregate(per_rep, METHODS, order), conf,
                       runtime_s=time.perf_counter() - t0)


# -- tabular ----------------------------------------------------------------

DEFAULT_FILTERS = (("AGEP", ">", 16), ("PINCP", ">", 100), ("WKHP", ">", 0), ("PWGTP", ">=", 1))
HINS4_MAP = {1: 1, 2: 0}
_OPS = {">": np.greater, ">=": np.greater_equal, "<": np.less, "<=": np.less_equal,
        "==": np.equal, "!=": np.not_equal}


@dataclass(frozen=True)
class TabularConfig:
    train_csv: str
    test_csv: str
    target: str = "SCHL"
    sources: tuple[str, ...] = ("HINS4", "JWMNP")
    income_col: str = "PINCP"
    threshold: float = 50_000
    state_col: str = "ST"
    states: tuple | None = None
    filters: tuple = DEFAULT_FILTERS
    repetitions: int = 10
    holdout_fraction: float = 0.2
    seed: int = 0
    lam: float = DEFAULT_LAMBDA
    min_stratum: int = 50

    @property
    def features(self) -> list[str]:
        return [self.target, *self.sources]

    @classmethod
    def from_json(cls, doc: Mapping, base_dir: str | Path | None = None) -> "TabularConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for k in ("train_csv", "test_csv"):
            if k not in doc:
                raise ValueError(f"config needs {k!r}")
            if base_dir is not None and not Path(doc[k]).is_absolute():
                doc[k] = str(Path(base_dir) / doc[k])
        for k in ("sources", "states"):
            if doc.get(k) is not None:
                doc[k] = tuple(doc[k])
        if "filters" in doc:
            doc["filters"] = tuple(tuple(f) for f in doc["filters"])
        return cls(**doc)


def ingest_csv(path, cfg: TabularConfig) -> tuple[Dataset, dict]:
    """Load one era: apply row filters, drop incomplete rows, binarise income.

    Returns the dataset (features, ``label``, and the state column when
    present) and a report of how many rows each step removed.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    df = pd.read_csv(path)
    need = cfg.features + [cfg.income_col]
    missing = [c for c in need if c not in df.columns]
    if missing:
        raise KeyError(f"{path}: missing column(s) {', '.join(missing)}")
    report = {"path": str(path), "rows_in": len(df), "filters": [], "skipped_filters": []}
    if cfg.states is not None:
        if cfg.state_col not in df.columns:
            raise KeyError(f"{path}: missing column {cfg.state_col}")
        df = df[df[cfg.state_col].isin(cfg.states)]
    for col, op, val in cfg.filters:
        if col not in df.columns:
            report["skipped_filters"].append(f"{col} {op} {val}")
            continue
        keep = _OPS[op](df[col].to_numpy(), val) & df[col].notna().to_numpy()
        report["filters"].append({"rule": f"{col} {op} {val}", "dropped": int((~keep).sum())})
        df = df[keep]
    complete = df[need].notna().all(axis=1)
    report["dropped_missing"] = int((~complete).sum())
    df = df[complete]
    if "HINS4" in cfg.sources:
        mapped = df["HINS4"].map(HINS4_MAP)
        report["hins4_mapping"] = {str(k): v for k, v in HINS4_MAP.items()}
        report["dropped_unmapped_hins4"] = int(mapped.isna().sum())
        df = df[mapped.notna()].assign(HINS4=mapped[mapped.notna()].astype(int))
    report["rows_out"] = len(df)
    cols = {c: df[c].to_numpy(dtype=float) for c in cfg.features}
    cols["label"] = (df[cfg.income_col].to_numpy(dtype=float) > cfg.threshold).astype(int)
    if cfg.state_col in df.columns:
        cols[cfg.state_col] = df[cfg.state_col].to_numpy()
    return Dataset(cols), report


def ingest_tabular(cfg: TabularConfig) -> tuple[Dataset, Dataset, dict]:
    train, r1 = ingest_csv(cfg.train_csv, cfg)
    test, r2 = ingest_csv(cfg.test_csv, cfg)
    return train, test, {"train": r1, "test": r2}


def _tabular_group(cfg: TabularConfig, train: Dataset, test: Dataset) -> list[dict]:
    def one_rep(r: int) -> dict:
        fit_set, held = train.split(cfg.holdout_fraction, seed=[cfg.seed, r])
        fs = train_isolation(fit_set, cfg.target, cfg.sources, "label", Learner("linear"),
                             min_rows=cfg.min_stratum)
        fit_set, held_e, test_e = (emit_features(fs, d) for d in (fit_set, held, test))
        feats = {"all_features": cfg.features, "limited_features": [cfg.target],
                 "engineered_features": [cfg.target] + fs.columns}
        out = {"in_domain": {}, "out_of_domain": {}}
        for m, f in feats.items():
            model = fit_logistic_l1(fit_set, f, "label", lam=cfg.lam, seed=cfg.seed)
            out["in_domain"][m] = evaluate(model, held_e, "label")
            out["out_of_domain"][m] = evaluate(model, test_e, "label")
        return out

    return pmap(one_rep, range(cfg.repetitions))


def run_tabular(cfg: TabularConfig) -> BenchReport:
    """Fit each feature set on the first era, score on its held-out rows and on the second era.

    With ``states`` set, each state is its own group and an ``avg`` row
    averages the per-state means.
    """
    t0 = time.perf_counter()
    train, test, notes = ingest_tabular(cfg)
    methods = METHODS[:3]
    groups = [("all", train, test)]
    if cfg.states is not None:
        groups = []
        for s in cfg.states:
            groups.append((s, *(d.take(np.flatnonzero(d[cfg.state_col] == s)) for d in (train, test))))
    conditions = []
    for name, tr, te in groups:
        per_rep = _tabular_group(cfg, tr, te)
        for split in ("in_domain", "out_of_domain"):
            conditions += _aggregate(per_rep, methods, [(split, {"group": name, "split": split})])
    if len(groups) > 1:
        for split in ("in_domain", "out_of_domain"):
            rows = [c for c in conditions if c["condition"]["split"] == split]
            avg = {m: {k: float(np.mean([c["metrics"][m][k] for c in rows]))
                       for k in rows[0]["metrics"][m]} for m in methods}
            conditions.append({"condition": {"group": "avg", "split": split}, "metrics": avg})
    conf = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
    return BenchReport("tabular", methods, conditions, conf, [notes], time.perf_counter() - t0)


def make_smoke_fixture(out_dir, n: int = 1000, seed: int = 0) -> tuple[Path, Path]:
    """Write two identical person-level CSVs with the census columns the pipeline reads.

    Both eras share one file's content, so no method should beat another by
    more than sampling noise.
    """
    rng = np.random.default_rng(seed)
    schl = rng.integers(1, 25, n)
    hins4 = rng.choice([1, 2], n, p=[0.2, 0.8])
    jwmnp = rng.integers(1, 90, n).astype(float)
    z = 0.35 * (schl - 17) - 0.2 * (hins4 == 1) + 0.003 * (jwmnp - 25) + rng.normal(0, 1, n)
    pincp = np.round(np.exp(10.6 + 0.45 * z))
    df = pd.DataFrame({"ST": rng.choice([6, 36, 48], n), "AGEP": rng.integers(17, 80, n), "WKHP": rng.integers(1, 60, n),
                       "PWGTP": rng.integers(1, 200, n), "SCHL": schl, "HINS4": hins4, "JWMNP": jwmnp,
                       "PINCP": pincp})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = out / "smoke_2019.csv", out / "smoke_2021.csv"
    for p in paths:
        df.to_csv(p, index=False)
    return paths


def smoke_config(out_dir, **overrides) -> TabularConfig:
    train, test = make_smoke_fixture(out_dir)
    return replace(TabularConfig(str(train), str(test)), **overrides)
