"""Command line experiment runner.

    aggmle run --config exp.cfg [--seed N] [--out DIR]
    aggmle verify
    aggmle dump --config exp.cfg [--trial T]

Exit codes: 0 success, 1 failed verification, 2 configuration error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import AggregationKind, RetryExhausted, indicator_distance, make_aggregate_dataset, write_dump
from .data import DataError, SplitSpec, load_csv, make_blobs, make_linear, read_schema, split, standardize
from .estimator import AggregateClassifier, AggregateRegressor
from .likelihood import FAMILIES
from .metrics import accuracy, aggregate_trials, best_permutation, error_variance, mse, permutation_accuracy

logger = logging.getLogger("aggmle")

AGGREGATIONS = ("direct",) + tuple(FAMILIES)
METRICS = ("mse", "error_variance", "accuracy", "permutation_accuracy")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str
    aggregation: str = "mean"
    k: int | None = None
    n_sets: int | None = None
    model: str = "linear"
    hidden: int = 64
    loss: str | None = None
    optimizer: str | None = None
    lr: float | None = None
    epochs: int | None = None
    batch_size: int | None = None
    weight_decay: float = 0.01
    trials: int = 10
    seed: int = 0
    sigma: float = 1.0
    metric: list[str] = field(default_factory=list)
    schema: str | None = None
    task: str | None = None
    name: str | None = None
    classes: int = 3
    n: int = 1000
    dim: int = 2
    spread: float = 5.0
    noise: float = 1.0
    positive_class: int = 1
    base_dir: Path = field(default=Path("."), repr=False)

    @property
    def is_classification(self) -> bool:
        return self.aggregation in ("similarity", "triplet", "multi_instance")

    @property
    def family(self) -> str | None:
        if self.aggregation == "direct":
            return self.loss or "gauss"
        return self.loss

    @property
    def method(self) -> str:
        fam = self.family or FAMILIES.get(self.aggregation, ("gauss",))[0]
        return f"{self.aggregation}/{fam}/{self.model}"


_TYPES = {
    "k": int, "n_sets": int, "hidden": int, "epochs": int, "batch_size": int, "trials": int,
    "seed": int, "classes": int, "n": int, "dim": int, "positive_class": int,
    "lr": float, "weight_decay": float, "sigma": float, "spread": float, "noise": float,
}


def parse_config(text: str, base_dir=Path(".")) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    known = set(RunConfig.__dataclass_fields__) - {"base_dir"}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            if key == "metric":
                values[key] = [m.strip() for m in value.split(",") if m.strip()]
            elif key in _TYPES:
                values[key] = _TYPES[key](value)
            else:
                values[key] = value
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    if "dataset" not in values:
        raise ConfigError("missing required key 'dataset'")
    cfg = RunConfig(base_dir=Path(base_dir), **values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.aggregation not in AGGREGATIONS:
        raise ConfigError(f"aggregation must be one of {AGGREGATIONS}")
    if cfg.model not in ("linear", "mlp"):
        raise ConfigError("model must be linear or mlp")
    allowed = FAMILIES.get(cfg.aggregation, ("gauss", "cauchy"))
    if cfg.loss is not None and cfg.loss not in allowed:
        raise ConfigError(f"loss for {cfg.aggregation} must be one of {allowed}")
    if cfg.optimizer is not None and cfg.optimizer not in ("sgd", "adamw"):
        raise ConfigError("optimizer must be sgd or adamw")
    if cfg.trials < 1:
        raise ConfigError("trials must be at least 1")
    if cfg.sigma <= 0 or (cfg.lr is not None and cfg.lr <= 0):
        raise ConfigError("sigma and lr must be positive")
    for m in cfg.metric:
        if m not in METRICS:
            raise ConfigError(f"unknown metric {m!r}; expected one of {METRICS}")
    if cfg.dataset not in ("blobs", "linear") and cfg.schema is None:
        raise ConfigError("CSV datasets need a 'schema' file")
    if cfg.dataset == "linear" and cfg.is_classification:
        raise ConfigError("the linear generator has real targets; use a regression aggregation")
    if cfg.dataset == "blobs" and not cfg.is_classification:
        raise ConfigError("the blob generator has class targets; use a classification aggregation")


def default_metrics(cfg: RunConfig) -> list[str]:
    if cfg.metric:
        return cfg.metric
    if cfg.aggregation in ("similarity", "triplet"):
        return ["permutation_accuracy"]
    if cfg.aggregation == "multi_instance":
        return ["accuracy"]
    if cfg.aggregation in ("rank_pair", "rank_list"):
        return ["error_variance"]
    return ["mse"]


def load_dataset(cfg: RunConfig):
    if cfg.dataset == "blobs":
        return make_blobs(cfg.classes, cfg.n, cfg.dim, cfg.spread, cfg.noise, seed=cfg.seed)
    if cfg.dataset == "linear":
        return make_linear(cfg.n, cfg.dim, noise=cfg.noise, seed=cfg.seed)
    path = cfg.base_dir / cfg.dataset
    schema = read_schema(cfg.base_dir / cfg.schema)
    classification = cfg.task == "classification" or (cfg.task is None and cfg.is_classification)
    return load_csv(path, schema, name=cfg.name, classification=classification)


def _kind(cfg: RunConfig, n_classes: int) -> AggregationKind:
    if cfg.aggregation == "direct":
        return AggregationKind("mean", k=1)
    if cfg.aggregation == "triplet":
        return AggregationKind("triplet", distance=indicator_distance(n_classes))
    if cfg.aggregation == "multi_instance":
        return AggregationKind("multi_instance", k=cfg.k, positive_class=cfg.positive_class)
    if cfg.aggregation in ("similarity", "rank_pair"):
        return AggregationKind(cfg.aggregation)
    return AggregationKind(cfg.aggregation, k=cfg.k)


def _estimator(cfg: RunConfig, kind: AggregationKind, n_classes: int, seed: int):
    common = dict(
        model=cfg.model,
        hidden_layer_sizes=(cfg.hidden,),
        optimizer=cfg.optimizer,
        lr=cfg.lr,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        weight_decay=cfg.weight_decay,
        random_state=seed,
    )
    if cfg.is_classification:
        return AggregateClassifier(
            n_classes, kind.tag, distance=kind.distance, positive_class=cfg.positive_class, **common
        )
    return AggregateRegressor(kind.tag, cfg.family, sigma=cfg.sigma, **common)


def _prepare_trial(cfg: RunConfig, data, trial: int):
    seed = cfg.seed + trial
    train, _val, test = split(data, SplitSpec(seed=seed))
    center = not cfg.is_classification and cfg.aggregation != "sum"
    train, test = standardize(train, test, center_targets=center)
    n_classes = int(data.targets.max()) + 1 if cfg.is_classification else 0
    kind = _kind(cfg, n_classes)
    sets = make_aggregate_dataset(train.features, train.targets, kind, n_sets=cfg.n_sets, seed=seed)
    return seed, train, test, kind, sets, n_classes


def run_trial(cfg: RunConfig, data, trial: int):
    """Train on aggregated training data; return test predictions, truth and metric values."""
    seed, _train, test, kind, sets, n_classes = _prepare_trial(cfg, data, trial)
    est = _estimator(cfg, kind, n_classes, seed).fit(sets)
    pred = est.predict(test.features)
    truth = test.targets
    values, meta = {}, {}
    for m in default_metrics(cfg):
        if m == "mse":
            values[m] = mse(pred, truth)
        elif m == "error_variance":
            values[m] = error_variance(pred, truth)
        elif m == "accuracy":
            values[m] = accuracy(pred, truth)
        else:
            values[m] = permutation_accuracy(pred, truth, n_classes)
            meta["permutation"] = best_permutation(pred, truth, n_classes)
    return pred, truth, values, meta


def _fmt(v) -> str:
    # shortest round-trip text, so metrics can be recomputed exactly from the file
    return str(int(v)) if isinstance(v, np.integer) else repr(float(v))


def run_experiment(cfg: RunConfig, out_dir: Path | None = None) -> list[str]:
    data = load_dataset(cfg)
    per_metric: dict[str, list[float]] = {}
    pred_lines, meta_lines = [], []
    for trial in range(cfg.trials):
        pred, truth, values, meta = run_trial(cfg, data, trial)
        if not all(np.isfinite(v) for v in values.values()) or not np.all(np.isfinite(pred)):
            raise FloatingPointError(f"non-finite predictions in trial {trial}")
        for m, v in values.items():
            per_metric.setdefault(m, []).append(v)
        for i, (p, t) in enumerate(zip(pred, truth)):
            pred_lines.append(f"{trial}\t{i}\t{_fmt(t)}\t{_fmt(p)}\n")
        if "permutation" in meta:
            meta_lines.append(f"{trial}\tpermutation\t{','.join(str(int(v)) for v in meta['permutation'])}\n")

    name = cfg.name or data.name
    rows = []
    for m in sorted(per_metric):
        mean, std, _ = aggregate_trials(per_metric[m])
        rows.append(f"{name}\t{cfg.method}\t{m}\t{mean:.6f}\t{std:.6f}")
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "results.tsv").write_text("".join(r + "\n" for r in rows), encoding="utf-8")
        (out_dir / "predictions.tsv").write_text(
            "trial\trow\ttruth\tprediction\n" + "".join(pred_lines), encoding="utf-8"
        )
        (out_dir / "metadata.tsv").write_text("".join(meta_lines), encoding="utf-8")
    return rows


def _read_config(path, seed):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    cfg = parse_config(text, Path(path).parent)
    if seed is not None:
        cfg.seed = seed
    return cfg


def _cmd_run(args) -> int:
    cfg = _read_config(args.config, args.seed)
    for row in run_experiment(cfg, Path(args.out) if args.out else None):
        print(row)
    return 0


def _cmd_verify(args) -> int:
    from .verify import run_checks

    checks = run_checks(seed=args.seed or 0)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return 1 if failed else 0


def _cmd_dump(args) -> int:
    cfg = _read_config(args.config, args.seed)
    *_, sets, _ = _prepare_trial(cfg, load_dataset(cfg), args.trial)
    write_dump(sets, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aggmle", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config and print the result table")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.set_defaults(func=_cmd_run)

    ver = sub.add_parser("verify", help="cross-check likelihoods against the oracles")
    ver.add_argument("--seed", type=int)
    ver.set_defaults(func=_cmd_verify)

    dump = sub.add_parser("dump", help="print the aggregate training sets of one trial")
    dump.add_argument("--config", required=True)
    dump.add_argument("--seed", type=int)
    dump.add_argument("--trial", type=int, default=0)
    dump.set_defaults(func=_cmd_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, RetryExhausted) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
