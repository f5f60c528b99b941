"""Experiment harness: repeated train/evaluate runs, ablation sweeps, CLI.

Usage::

    fedforest synth-data --out blobs.csv
    fedforest run --data blobs.csv --model proposed --alpha 2 --runs 10 --out results/
    fedforest ablate --config exp.json --param max_depth --values 5,10,none --out results/
    fedforest partition-stats --data blobs.csv --alpha 2 --clients 10

Exit codes: 0 success, 1 config error, 2 data error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import derive_seed
from .baselines import train_centralized_rf, train_cffcp, train_markovic, train_ncff
from .data import (
    DataError,
    Dataset,
    load_csv,
    make_blobs,
    partition_alpha_chunking,
    partition_iid,
    save_csv,
    stratified_split,
)
from .evaluation import EvalReport, evaluate, mean_report
from .federation import AuditLog, FederationConfig, shards_from_plan, train
from .tree import GrowthParams

logger = logging.getLogger(__name__)

MODELS = ("proposed", "centralized", "ncff", "cffcp", "markovic")
SWEEPABLE = ("alpha", "max_depth", "n_trees", "min_samples_split")
PARTITION_ATTEMPTS = 100


class ConfigError(ValueError):
    pass


class InvariantError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    data_path: str | None = None
    label_column: str | int = -1
    synthetic: dict | None = None  # make_blobs kwargs, used when data_path is None
    model: str = "proposed"
    k: int = 10
    m: int = 100
    alpha: int | None = 2
    iid: bool = False
    max_depth: int | None = None
    min_samples_split: int = 2
    feature_sample_count: int | None = None
    runs: int = 10
    master_seed: int = 0
    test_fraction: float = 0.2
    per_client_forest_size: int = 100
    top_t: int = 10
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def growth(self) -> GrowthParams:
        return GrowthParams(
            feature_sample_count=self.feature_sample_count,
            max_depth=self.max_depth,
            min_samples_split=self.min_samples_split,
        )

    def errors(self) -> list[str]:
        errs = []
        if self.model not in MODELS:
            errs.append(f"model must be one of {MODELS}, got {self.model!r}")
        if self.data_path is None and self.synthetic is None:
            errs.append("either data_path or synthetic must be given")
        if self.k < 1:
            errs.append(f"k must be >= 1, got {self.k}")
        if self.m < 1:
            errs.append(f"m must be >= 1, got {self.m}")
        if self.model in ("proposed", "cffcp") and self.m < self.k:
            errs.append(f"collaborative models need m >= k (m={self.m}, k={self.k})")
        if not self.iid and (self.alpha is None or self.alpha < 1):
            errs.append("alpha must be >= 1 unless iid is set")
        if self.max_depth is not None and self.max_depth < 1:
            errs.append(f"max_depth must be >= 1 or null, got {self.max_depth}")
        if self.min_samples_split < 1:
            errs.append(f"min_samples_split must be >= 1, got {self.min_samples_split}")
        if self.feature_sample_count is not None and self.feature_sample_count < 1:
            errs.append("feature_sample_count must be >= 1 or null")
        if self.runs < 1:
            errs.append(f"runs must be >= 1, got {self.runs}")
        if not 0 < self.test_fraction < 1:
            errs.append(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.model == "markovic" and not 1 <= self.top_t <= self.per_client_forest_size:
            errs.append("need 1 <= top_t <= per_client_forest_size")
        return errs

    def validate(self) -> None:
        errs = self.errors()
        if errs:
            raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(errs))


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.data_path is not None:
        try:
            return load_csv(config.data_path, config.label_column)
        except OSError as exc:
            raise DataError(f"cannot read {config.data_path}: {exc}") from exc
    return make_blobs(**config.synthetic)


def make_partition(config: ExperimentConfig, ds: Dataset, train_idx, seed: int):
    """Partition with retries: an empty shard re-draws with a fresh derived seed."""
    if config.iid:
        return partition_iid(ds, train_idx, config.k, seed)
    last = None
    for attempt in range(PARTITION_ATTEMPTS):
        try:
            return partition_alpha_chunking(
                ds, train_idx, config.k, config.alpha, derive_seed(seed, attempt)
            )
        except DataError as exc:
            if "empty" not in str(exc):
                raise
            last = exc
    raise DataError(f"no valid partition after {PARTITION_ATTEMPTS} attempts: {last}")


def check_model(model, k: int, n_classes: int) -> None:
    for t, tree in enumerate(model.trees):
        for leaf, labels in tree.label_lists.items():
            if len(labels) > k or any(not 0 <= v < n_classes for v in labels):
                raise InvariantError(f"tree {t} leaf {leaf} has invalid label list {labels}")
        for leaf, p in tree.leaf_probs.items():
            if abs(float(np.sum(p)) - 1.0) > 1e-9 or np.min(p) < 0:
                raise InvariantError(f"tree {t} leaf {leaf} has invalid probabilities")


def fit_model(config: ExperimentConfig, ds: Dataset, plan, seed: int, audit=None):
    params = config.growth()
    c = ds.class_count
    if config.model == "proposed":
        return train(FederationConfig(config.m, config.k, params, seed), ds, plan, audit)
    if config.model == "cffcp":
        return train_cffcp(FederationConfig(config.m, config.k, params, seed), ds, plan, audit)
    shards = shards_from_plan(ds, plan)
    if config.model == "ncff":
        return train_ncff(shards, config.m, params, seed, c)
    if config.model == "markovic":
        return train_markovic(
            shards, params, config.per_client_forest_size, config.top_t, seed=seed, n_classes=c
        )
    rows = np.sort(np.concatenate(plan.client_shards))
    return train_centralized_rf(ds.features[rows], ds.labels[rows], config.m, params, seed, c)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list
    mean: EvalReport
    audit: list = field(default_factory=list)


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None, audit: bool = False) -> ExperimentResult:
    """Repeat split -> partition -> train -> evaluate ``config.runs`` times."""
    config.validate()
    ds = dataset if dataset is not None else load_dataset(config)
    reports, audit_lines = [], []
    for r in range(config.runs):
        seed = derive_seed(config.master_seed, r)
        split = stratified_split(ds, config.test_fraction, seed)
        plan = make_partition(config, ds, split.train_indices, seed)
        log = AuditLog() if audit else None
        model = fit_model(config, ds, plan, seed, log)
        check_model(model, config.k, ds.class_count)
        rep = evaluate(
            model, ds.features[split.test_indices], ds.labels[split.test_indices], seed
        )
        reports.append(rep)
        if log is not None:
            audit_lines.extend({"run": r, **rec} for rec in log.records)
        logger.info("run %d/%d: accuracy %.4f", r + 1, config.runs, rep.accuracy)
    return ExperimentResult(config, reports, mean_report(reports), audit_lines)


def _with_param(config: ExperimentConfig, name: str, value) -> ExperimentConfig:
    if name == "n_trees":
        return dataclasses.replace(config, m=int(value))
    if name == "alpha":
        return dataclasses.replace(config, alpha=int(value), iid=False)
    if name == "max_depth":
        return dataclasses.replace(config, max_depth=None if value is None else int(value))
    return dataclasses.replace(config, min_samples_split=int(value))


def run_ablation(config: ExperimentConfig, param: str, values, dataset: Dataset | None = None):
    """One experiment per value; everything else (including the seed) is shared."""
    if param not in SWEEPABLE:
        raise ConfigError(f"unknown sweep parameter {param!r}; choose from {SWEEPABLE}")
    points = [_with_param(config, param, v) for v in values]
    errs = [f"{param}={v}: {e}" for v, p in zip(values, points) for e in p.errors()]
    if errs:
        raise ConfigError("invalid sweep:\n  - " + "\n  - ".join(errs))
    ds = dataset if dataset is not None else load_dataset(config)
    return [(v, run_experiment(p, ds)) for v, p in zip(values, points)]


RESULT_FIELDS = (
    "param", "value", "run", "seed", "model", "k", "m", "alpha", "iid",
    "max_depth", "min_samples_split", *EvalReport.CSV_FIELDS,
)


def results_csv(points: list) -> str:
    """``points`` is a list of ``(param, value, ExperimentResult)``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for param, value, res in points:
        c = res.config
        for r, rep in enumerate(res.runs):
            w.writerow(
                [param, value, r, rep.seeds[0], c.model, c.k, c.m, c.alpha, c.iid,
                 c.max_depth, c.min_samples_split, *(repr(x) if isinstance(x, float) else x for x in rep.csv_row())]
            )
    return buf.getvalue()


def summary_json(points: list) -> str:
    return json.dumps(
        [
            {
                "param": param,
                "value": value,
                "config": res.config.to_dict(),
                "mean": dataclasses.asdict(res.mean),
                "runs": [dataclasses.asdict(r) for r in res.runs],
            }
            for param, value, res in points
        ],
        indent=2,
        sort_keys=True,
    )


def write_outputs(out: str | Path, points: list) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(points), encoding="utf-8")
    (out / "summary.json").write_text(summary_json(points) + "\n", encoding="utf-8")
    with (out / "audit.log").open("w", encoding="utf-8") as fh:
        for param, value, res in points:
            for rec in res.audit:
                fh.write(json.dumps({"param": param, "value": value, **rec}, sort_keys=True) + "\n")


# -- argument handling -----------------------------------------------------


def _int_or_none(text: str):
    return None if text.lower() in ("none", "null", "") else int(text)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--data", dest="data_path", help="CSV dataset path")
    p.add_argument("--label-column", help="label column name or index")
    p.add_argument("--seed", dest="master_seed", type=int)
    p.add_argument("--model", choices=MODELS)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--alpha", type=int)
    grp.add_argument("--iid", action="store_true", default=None)
    p.add_argument("--trees", dest="m", type=int)
    p.add_argument("--clients", dest="k", type=int)
    p.add_argument("--max-depth", type=_int_or_none)
    p.add_argument("--min-split", dest="min_samples_split", type=int)
    p.add_argument("--features-per-node", dest="feature_sample_count", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedforest", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("run", help="repeated train/evaluate runs"))

    ab = sub.add_parser("ablate", help="sweep one parameter")
    _add_common(ab)
    ab.add_argument("--param", required=True, choices=SWEEPABLE)
    ab.add_argument("--values", required=True, help="comma-separated; 'none' for no depth cap")

    ps = sub.add_parser("partition-stats", help="per-client class histograms")
    _add_common(ps)

    sd = sub.add_parser("synth-data", help="write a seeded Gaussian-blob CSV")
    sd.add_argument("--out", required=True)
    sd.add_argument("--seed", type=int, default=0)
    sd.add_argument("--classes", type=int, default=6)
    sd.add_argument("--n-per-class", type=int, default=625)
    sd.add_argument("--features", type=int, default=10)
    sd.add_argument("--clusters", type=int, default=8)
    sd.add_argument("--spread", type=float, default=0.7)
    return parser


_FLAG_KEYS = (
    "data_path", "label_column", "master_seed", "model", "alpha", "iid", "m", "k",
    "max_depth", "min_samples_split", "feature_sample_count", "runs", "out",
)


def config_from_args(args) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for key in _FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    if getattr(args, "alpha", None) is not None:
        base["iid"] = False
    if "max_depth" in base and isinstance(base["max_depth"], str):
        base["max_depth"] = _int_or_none(base["max_depth"])
    try:
        return ExperimentConfig.from_dict(base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _sweep_values(param: str, text: str) -> list:
    try:
        vals = [_int_or_none(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values {text!r}: {exc}") from exc
    if param != "max_depth" and any(v is None for v in vals):
        raise ConfigError(f"'none' is only valid for max_depth")
    return vals


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    try:
        if args.command == "synth-data":
            ds = make_blobs(
                args.n_per_class, args.classes, args.features, args.clusters, args.spread,
                seed=args.seed,
            )
            save_csv(ds, args.out)
            return 0

        config = config_from_args(args)
        if args.command == "partition-stats":
            config.validate()
            ds = load_dataset(config)
            split = stratified_split(ds, config.test_fraction, derive_seed(config.master_seed, 0))
            plan = make_partition(config, ds, split.train_indices, derive_seed(config.master_seed, 0))
            text = json.dumps(plan.report(ds.labels, ds.class_count), indent=2)
            if config.out:
                Path(config.out).write_text(text + "\n", encoding="utf-8")
            print(text)
            return 0

        if args.command == "run":
            config.validate()
            points = [("", "", run_experiment(config, audit=True))]
        else:
            values = _sweep_values(args.param, args.values)
            points = [(args.param, v, res) for v, res in run_ablation(config, args.param, values)]

        for param, value, res in points:
            label = f"{param}={value} " if param else ""
            print(f"{label}model={res.config.model} mean accuracy {res.mean.accuracy:.4f} "
                  f"over {res.mean.runs} run(s), {res.mean.mean_nodes:.1f} nodes/tree")
        if config.out:
            write_outputs(config.out, points)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
