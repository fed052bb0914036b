"""Command-line front end: ``per-cis <subcommand> ...``.

All results are JSON (sorted keys) or CSV. Errors go to stderr as
``{"error": {"type", "message", "exit_code", "stage"}}`` with exit code 2 for
bad input or configuration and 1 for internal failures.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _config
from .bench import SyntheticConfig, TabularConfig, run_synthetic_sweep, run_tabular, smoke_config
from .bootstrap import (CITest, ProxyClass, bootstrap_labels, dependence_graph_oracle,
                        dependence_graph_statistical, parse_seeds, verify_seed_conditions)
from .cis import IsolationFeatureSet, Learner, check_improvement, emit_features, train_isolation
from .dataset import NULL, Dataset
from .dropout_scm import DropoutScm, EnumerationTooLarge, sample
from .graph import DistributionShiftDiagram, classify_hidden, classify_proxies, validate_dsd
from .info import BOUNDS, Binning, InfoQuery, check_bounds
from .learn import DEFAULT_LAMBDA, evaluate, fit_logistic_l1

SUBCOMMANDS = ("validate", "sample", "info", "bounds", "bootstrap", "cis", "bench", "pipeline")


class UserError(Exception):
    """Bad input or configuration (exit code 2)."""


class StageError(Exception):
    def __init__(self, stage: str, err: Exception):
        super().__init__(str(err))
        self.stage, self.err = stage, err


USER_ERRORS = (UserError, FileNotFoundError, json.JSONDecodeError, KeyError, ValueError, EnumerationTooLarge)


def _read_json(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    with p.open() as fh:
        return json.load(fh)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _emit(obj, out: str | None) -> None:
    text = _dumps(obj)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def load_model(path) -> DropoutScm | DistributionShiftDiagram:
    """Read a diagram or a dropout SCM; SCM files carry root distributions."""
    doc = _read_json(path)
    if any("dist" in v for v in doc.get("vertices", ())):
        return DropoutScm.from_json(doc)
    return DistributionShiftDiagram.from_json(doc)


def _dsd_of(model) -> DistributionShiftDiagram:
    return model.dsd if isinstance(model, DropoutScm) else model


def _require_scm(model, path) -> DropoutScm:
    if not isinstance(model, DropoutScm):
        raise UserError(f"{path} describes a diagram without alphas and distributions")
    return model


def _partition_json(dsd: DistributionShiftDiagram) -> dict:
    names = dsd.dag.names
    hp = classify_hidden(dsd)
    pp = classify_proxies(dsd, hp)
    nm = lambda s: sorted(names[v] for v in s)  # noqa: E731
    return {"hidden": {"good": nm(hp.good), "bad": nm(hp.bad), "reoriented": nm(hp.disagreements)},
            "proxies": {"good": nm(pp.good), "bad": nm(pp.bad), "ambiguous": nm(pp.ambiguous)}}


# -- subcommands ------------------------------------------------------------

def cmd_validate(args) -> int:
    dsd = _dsd_of(load_model(args.model))
    violations = validate_dsd(dsd)
    report = {"valid": not violations, "violations": violations}
    if not violations:
        report.update(_partition_json(dsd))
    _emit(report, args.out)
    return 0 if not violations else 2


def cmd_sample(args) -> int:
    scm = _require_scm(load_model(args.scm), args.scm)
    ds = sample(scm, args.n, args.seed)
    if args.out:
        ds.to_csv(args.out)
    else:
        ds.to_frame().to_csv(sys.stdout, index=False)
    return 0


def cmd_info(args) -> int:
    scm = _require_scm(load_model(args.scm), args.scm)
    docs = _read_json(args.queries)
    if isinstance(docs, dict):
        docs = [docs]
    results = []
    for d in docs:
        q = InfoQuery.from_json(d)
        results.append({"query": d, "bits": q.evaluate(scm, cap=args.cap)})
    _emit(results, args.out)
    return 0


def cmd_bounds(args) -> int:
    scm = _require_scm(load_model(args.scm), args.scm)
    reports = check_bounds(scm, seed=args.seed, per_bound=args.per_bound, cap=args.cap)
    _emit([r.to_json() for r in reports], args.out)
    return 0


def _ci_test(args) -> CITest:
    return CITest(method=args.test, alpha_level=args.alpha_level, min_stratum=args.min_stratum,
                  binning=Binning(args.bins), seed=args.seed)


def cmd_bootstrap(args) -> int:
    seeds = parse_seeds(_read_json(args.seeds))
    out = {}
    if args.scm:
        dsd = _dsd_of(load_model(args.scm))
        g = dependence_graph_oracle(dsd)
        out["conditions"] = verify_seed_conditions(dsd, seeds).to_json()
    elif args.data:
        if not args.y:
            raise UserError("--y is required with --data")
        ds = Dataset.read_csv(args.data)
        g = dependence_graph_statistical(ds, args.y, args.proxies, _ci_test(args))
    else:
        raise UserError("give either --scm or --data")
    state = bootstrap_labels(g, seeds)
    out.update({"labels": state.to_json(), "dependence_graph": g.to_json()})
    _emit(out, args.out)
    return 0


def _learner(doc) -> Learner:
    doc = doc or {}
    if isinstance(doc, str):
        return Learner(doc)
    return Learner(**doc)


def cmd_cis(args) -> int:
    spec = _read_json(args.spec)
    for k in ("target", "source", "y"):
        if k not in spec:
            raise UserError(f"column spec needs {k!r}")
    ds = Dataset.read_csv(args.data)
    learner = _learner(spec.get("learner"))
    source = [spec["source"]] if isinstance(spec["source"], str) else list(spec["source"])
    fs = train_isolation(ds, spec["target"], source, spec["y"], learner, min_rows=spec.get("min_rows", 50))
    rep = check_improvement(ds, spec["target"], source, spec["y"], learner,
                            folds=spec.get("folds", 5), margin=spec.get("margin", 0.01), seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_features(fs, ds).to_csv(out_dir / "engineered.csv")
    (out_dir / "improvement.json").write_text(_dumps(rep.to_json()))
    (out_dir / "isolation_model.json").write_text(_dumps(fs.to_json()))
    return 0


def cmd_bench(args) -> int:
    if args.kind == "synthetic":
        cfg = SyntheticConfig.from_json(_read_json(args.config)) if args.config else SyntheticConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        report = run_synthetic_sweep(cfg)
    else:
        if args.smoke:
            cfg = smoke_config(args.smoke)
        elif args.config:
            cfg = TabularConfig.from_json(_read_json(args.config), base_dir=Path(args.config).parent)
        else:
            raise UserError("bench tabular needs --config or --smoke DIR")
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        report = run_tabular(cfg)
    _emit(report.to_json(include_runtime=args.timing), args.out)
    if args.curves:
        report.curves_frame().to_csv(args.curves, index=False, float_format="%.17g")
    return 0


# -- pipeline ----------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """Inputs for the four-stage procedure.

    Exactly one of ``data`` (CSV) or ``scm`` (JSON) is given. With an SCM the
    dependence graph comes from d-separation and ``n`` rows are sampled for
    the learning stages; rows whose label dropped out are discarded. ``proxies`` defaults to every column except ``y``.
    """

    seeds: str
    out_dir: str
    y: str = "Y"
    data: str | None = None
    scm: str | None = None
    n: int = 20_000
    proxies: tuple[str, ...] | None = None
    test_data: str | None = None
    lam: float = DEFAULT_LAMBDA
    learner: object = None
    alpha_level: float = 0.01
    min_stratum: int = 30
    bins: int = 8

    @classmethod
    def from_json(cls, doc, base_dir=None) -> "PipelineConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise UserError(f"unknown pipeline config keys: {sorted(unknown)}")
        for k in ("seeds", "out_dir"):
            if k not in doc:
                raise UserError(f"pipeline config needs {k!r}")
        for k in ("seeds", "data", "scm", "test_data", "out_dir"):
            if doc.get(k) and base_dir is not None and not Path(doc[k]).is_absolute():
                doc[k] = str(Path(base_dir) / doc[k])
        if doc.get("proxies") is not None:
            doc["proxies"] = tuple(doc["proxies"])
        return cls(**doc)


def run_pipeline(cfg: PipelineConfig, seed: int = 0) -> dict:
    """Dependence graph, bootstrapping, CIS on ambiguous proxies, final model.

    Unlabeled proxies are left out of the final model. Returns a summary and
    writes ``labels.json``, ``engineered.csv``, ``model.json`` and
    ``metrics.json`` into ``cfg.out_dir``.
    """
    if (cfg.data is None) == (cfg.scm is None):
        raise UserError("pipeline config needs exactly one of 'data' or 'scm'")
    for p in (cfg.seeds, cfg.data, cfg.scm, cfg.test_data):
        if p is not None and not Path(p).exists():
            raise UserError(f"no such file: {p}")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = "load"
    try:
        seeds = parse_seeds(_read_json(cfg.seeds))
        stage = "dependence_graph"
        if cfg.scm:
            scm = _require_scm(load_model(cfg.scm), cfg.scm)
            g = dependence_graph_oracle(scm.dsd)
            ds = sample(scm, cfg.n, seed)
            ds = ds.select(list(g.proxies) + [cfg.y])
            # a dropped-out label leaves nothing to predict
            keep = np.flatnonzero(ds[cfg.y] != NULL)
            dropped_null = ds.n_rows - len(keep)
            ds = ds.take(keep)
            conditions = verify_seed_conditions(scm.dsd, seeds).to_json()
        else:
            ds = Dataset.read_csv(cfg.data)
            test = CITest(alpha_level=cfg.alpha_level, min_stratum=cfg.min_stratum, binning=Binning(cfg.bins), seed=seed)
            g = dependence_graph_statistical(ds, cfg.y, cfg.proxies, test)
            conditions = None
        stage = "bootstrap"
        state = bootstrap_labels(g, seeds)
        good = state.with_class(ProxyClass.GOOD)
        ambiguous = state.with_class(ProxyClass.AMBIGUOUS)
        labels = {"labels": state.to_json(), "dependence_graph": g.to_json()}
        if conditions is not None:
            labels["conditions"] = conditions
            labels["dropped_null_label_rows"] = dropped_null
        (out_dir / "labels.json").write_text(_dumps(labels))
        if not good:
            raise UserError("no proxy ended up Good; the final model would have no inputs")
        stage = "cis"
        engineered: list[str] = []
        iso_models = []
        learner = _learner(cfg.learner)
        if ambiguous:
            for target in good:
                fs = train_isolation(ds, target, ambiguous, cfg.y, learner)
                ds = emit_features(fs, ds)
                engineered += fs.columns
                iso_models.append(fs.to_json())
        ds.select([*good, *engineered, cfg.y]).to_csv(out_dir / "engineered.csv")
        stage = "model"
        features = good + engineered
        model = fit_logistic_l1(ds, features, cfg.y, lam=cfg.lam, seed=seed)
        (out_dir / "model.json").write_text(_dumps({"final": model.to_json(), "isolation": iso_models}))
        metrics = {"train": evaluate(model, ds, cfg.y).to_json()}
        if cfg.test_data:
            test_ds = Dataset.read_csv(cfg.test_data)
            for m in iso_models:
                test_ds = emit_features(IsolationFeatureSet.from_json(m), test_ds)
            metrics["test"] = evaluate(model, test_ds, cfg.y).to_json()
        (out_dir / "metrics.json").write_text(_dumps(metrics))
    except USER_ERRORS as err:
        raise StageError(stage, err) from err
    return {"labels": state.to_json(), "features": features, "engineered": engineered,
            "unlabeled": state.with_class(ProxyClass.UNLABELED), "out_dir": str(out_dir)}


def cmd_pipeline(args) -> int:
    cfg = PipelineConfig.from_json(_read_json(args.config), base_dir=Path(args.config).parent)
    _emit(run_pipeline(cfg, seed=args.seed or 0), args.out)
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker cap; PER_CIS_THREADS is used when absent")
    common.add_argument("--out", default=None, help="output path (default stdout)")

    p = argparse.ArgumentParser(prog="per-cis", description="Proxy-based robustness tools: "
                                "diagram checks, dropout SCMs, information bounds, proxy bootstrapping, "
                                "causal information splitting and benchmarks.")
    sub = p.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")

    s = sub.add_parser("validate", parents=[common], help="check a diagram or SCM and classify its vertices")
    s.add_argument("model")
    s.set_defaults(fn=cmd_validate)

    s = sub.add_parser("sample", parents=[common], help="draw rows from a dropout SCM as CSV")
    s.add_argument("--scm", required=True)
    s.add_argument("--n", type=int, required=True)
    s.set_defaults(fn=cmd_sample)

    s = sub.add_parser("info", parents=[common], help="exact information quantities on a dropout SCM")
    s.add_argument("--scm", required=True)
    s.add_argument("--queries", required=True, help="JSON query or list of queries")
    s.add_argument("--cap", type=int, default=10**7)
    s.set_defaults(fn=cmd_info)

    s = sub.add_parser("bounds", parents=[common], help=f"check {', '.join(BOUNDS)}")
    s.add_argument("--scm", required=True)
    s.add_argument("--per-bound", type=int, default=8)
    s.add_argument("--cap", type=int, default=10**7)
    s.set_defaults(fn=cmd_bounds)

    s = sub.add_parser("bootstrap", parents=[common], help="label proxies from seeds")
    s.add_argument("--scm", help="diagram or SCM JSON (d-separation mode)")
    s.add_argument("--data", help="CSV dataset (statistical mode)")
    s.add_argument("--y")
    s.add_argument("--proxies", nargs="+")
    s.add_argument("--seeds", required=True)
    s.add_argument("--test", choices=("g", "permutation"), default="g")
    s.add_argument("--alpha-level", type=float, default=0.01)
    s.add_argument("--min-stratum", type=int, default=30)
    s.add_argument("--bins", type=int, default=8)
    s.set_defaults(fn=cmd_bootstrap)

    s = sub.add_parser("cis", parents=[common], help="train isolation models and emit engineered columns")
    s.add_argument("--data", required=True)
    s.add_argument("--spec", required=True, help="JSON with target, source, y and optional learner")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(fn=cmd_cis)

    s = sub.add_parser("bench", parents=[common], help="synthetic sweep or tabular benchmark")
    s.add_argument("kind", choices=("synthetic", "tabular"))
    s.add_argument("--config")
    s.add_argument("--smoke", metavar="DIR", help="tabular: generate the smoke fixture in DIR and run it")
    s.add_argument("--curves", help="also write per-condition metrics as CSV")
    s.add_argument("--timing", action="store_true", help="include wall-clock runtime in the report")
    s.set_defaults(fn=cmd_bench)

    s = sub.add_parser("pipeline", parents=[common], help="dependence graph, bootstrap, CIS and final model")
    s.add_argument("--config", required=True)
    s.set_defaults(fn=cmd_pipeline)
    return p


def _fail(err: Exception, code: int, stage: str | None = None) -> int:
    # KeyError quotes its message
    msg = str(err.args[0]) if isinstance(err, KeyError) and err.args else str(err)
    doc = {"error": {"type": type(err).__name__, "message": msg, "exit_code": code}}
    if stage:
        doc["error"]["stage"] = stage
    sys.stderr.write(_dumps(doc))
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.threads is not None:
            _config.set_threads(args.threads)
        if args.seed is None and args.command != "bench":
            args.seed = 0
        return args.fn(args)
    except StageError as e:
        return _fail(e.err, 2, e.stage)
    except USER_ERRORS as e:
        return _fail(e, 2)
    except Exception as e:  # noqa: BLE001
        return _fail(e, 1)
    finally:
        _config.set_threads(None)


if __name__ == "__main__":
    sys.exit(main())
