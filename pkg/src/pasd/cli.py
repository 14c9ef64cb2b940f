"""Command-line front end: ``pasd {fit,predict,ensemble,combine,simulate}``.

Input is a UTF-8 CSV with a header row.  One column is the outcome, one or
more columns hold the outputs of already fitted prediction models, and by
default every remaining column is a covariate.  Models are written as JSON
(schemas in ``pasd/schemas``) and carry their covariate names, so ``predict``
picks columns by name from any file that contains them.

Exit status is 0 on success.  Package errors exit with their own
``exit_code``; see ``EXIT_CODES``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import errors
from .combination import combiner_from_dict, fit_em_combiner, fit_vote_combiner
from .data import Dataset
from .ensembles import BoostedModel, Forest, fit_boosting, fit_forest
from .measures import Measure, individual_loss
from .pruning import SelectionConfig, SelectionRule, select_final_cv_error, select_final_cv_split_complexity
from .simulation import (
    CombinationConfig,
    EnsembleConfig,
    ExperimentConfig,
    Setting,
    run_combination_experiment,
    run_ensemble_experiment,
    run_experiment,
    summarize_combination,
    summarize_ensemble,
    write_csv,
)
from .tree import Criterion, GrowthConfig, Tree, grow_tree, honest_estimate

# Exit statuses outside the package error hierarchy.
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INVALID_VALUE = 4
EXIT_BAD_MODEL_FILE = 5

EXIT_CODES = {
    "usage": EXIT_USAGE,
    "io": EXIT_IO,
    "invalid value": EXIT_INVALID_VALUE,
    "bad model file": EXIT_BAD_MODEL_FILE,
    **{cls.__name__: cls.exit_code for cls in (
        errors.PasdError, errors.GroupLevelMeasure, errors.MeasureMismatch, errors.SubgroupTooSmall,
        errors.DatasetTooSmall, errors.DimensionMismatch, errors.WeightSumViolation,
        errors.DegenerateComponent, errors.SingularHessian, errors.TooFewRows, errors.MissingColumn,
        errors.ParseError, errors.ReplicateError)},
}

COMMAND_METHODS = {
    "fit": ("cart-to", "pasd1", "pasd2"),
    "ensemble": ("forest", "boosting"),
    "combine": ("mv", "em", "em-analytic"),
    "simulate": ("cart-to", "pasd1", "pasd2", "forest", "boosting", "mv", "em", "em-analytic"),
}
DEFAULT_METHOD = {"fit": "pasd2", "ensemble": "forest", "combine": "mv"}

# Methods whose estimator or objective needs one loss value per observation.
INDIVIDUAL_ONLY = {"cart-to", "pasd1", "boosting", "em", "em-analytic"}


class UsageError(Exception):
    pass


class ModelFileError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    data_path: str | None = None
    outcome_column: str | None = None
    prediction_columns: tuple[str, ...] = ()
    feature_columns: tuple[str, ...] = ()
    measure: Measure = Measure.SQUARED_ERROR
    method: str | None = None
    folds: int = 10
    alpha_prime: tuple[float | str, ...] = (4.0,)
    B: int = 100
    mtry: int | None = None
    M: int = 200
    shrinkage: float = 0.1
    max_depth: int | None = None
    min_node: int | None = None
    honest: float | None = None
    seed: int = 0
    threads: int = 1
    output_path: str | None = None
    full: bool = False
    model_path: str | None = None
    setting: str | None = None
    reps: int | None = None
    n: int = 1000
    test_n: int | None = None
    loss: str = "l2"
    provider: str = "forest"
    measure_given: bool = False

    def validate(self) -> None:
        allowed = COMMAND_METHODS.get(self.command)
        if allowed is not None and self.method is not None and self.method not in allowed:
            raise UsageError(f"{self.command} does not support --method {self.method}; "
                             f"choose from {', '.join(allowed)}")
        if self.method in INDIVIDUAL_ONLY and not self.measure.is_individual:
            raise errors.MeasureMismatch(
                f"--method {self.method} needs an individual-level measure, not {self.measure.value}")
        if self.honest is not None and not 0 < self.honest < 1:
            raise UsageError("--honest takes the growth fraction, strictly between 0 and 1")
        if self.command in ("fit", "ensemble", "combine"):
            for flag, value in (("--data", self.data_path), ("--outcome", self.outcome_column)):
                if not value:
                    raise UsageError(f"{self.command} needs {flag}")
            if not self.prediction_columns:
                raise UsageError(f"{self.command} needs --predictions")
            if self.command in ("fit", "ensemble") and len(self.prediction_columns) != 1:
                raise UsageError(f"{self.command} evaluates one model; pass a single --predictions column")
        if self.command == "predict" and not (self.model_path and self.data_path):
            raise UsageError("predict needs --model and --data")
        if self.command == "simulate" and not self.setting:
            raise UsageError("simulate needs --setting")


# --------------------------------------------------------------------------
# CSV input
# --------------------------------------------------------------------------


def _parse_cell(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise errors.ParseError(row, column, text) from None
    if not math.isfinite(value):
        raise errors.ParseError(row, column, text)
    return value


def read_columns(path, columns: list[str] | None = None) -> tuple[list[str], dict[str, np.ndarray]]:
    """Header and numeric columns of a CSV file.

    Only ``columns`` are parsed when given (all columns otherwise).  Rows are
    numbered from 1, not counting the header, in ``ParseError``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise errors.DatasetTooSmall(f"{path} is empty") from None
        wanted = header if columns is None else columns
        for name in wanted:
            if name not in header:
                raise errors.MissingColumn(name)
        pos = [header.index(name) for name in wanted]
        values: list[list[float]] = [[] for _ in wanted]
        for row, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise errors.ParseError(row, "<row>", f"{len(cells)} cells for {len(header)} columns")
            for out, j, name in zip(values, pos, wanted):
                out.append(_parse_cell(cells[j].strip(), row, name))
    return header, {name: np.asarray(v, dtype=float) for name, v in zip(wanted, values)}


def ingest_csv(path, outcome: str, predictions, features=None) -> Dataset:
    """Validated dataset from a CSV file.

    Covariates are ``features`` when given, otherwise every column that is
    neither the outcome nor a prediction column, in file order.
    """
    predictions = list(predictions)
    header, _ = read_columns(path, [])
    for name in [outcome, *predictions, *(features or ())]:
        if name not in header:
            raise errors.MissingColumn(name)
    if features:
        features = list(features)
    else:
        features = [h for h in header if h != outcome and h not in predictions]
    if not features:
        raise errors.DimensionMismatch("no covariate columns left after removing outcome and predictions")
    _, cols = read_columns(path, [outcome, *predictions, *features])
    y = cols[outcome]
    if y.size == 0:
        raise errors.DatasetTooSmall(f"{path} has no data rows")
    X = np.column_stack([cols[f] for f in features])
    H = np.column_stack([cols[p] for p in predictions])
    return Dataset(X, y, H, tuple(features), tuple(predictions))


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


def _write_json(doc: dict, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _rows_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _emit(text: str, path, out) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    else:
        out.write(text)


def _sibling(path, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.stem + suffix)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _growth_config(cfg: RunConfig, criterion: Criterion) -> GrowthConfig:
    kw = {"criterion": criterion, "rng_seed": cfg.seed}
    if cfg.max_depth is not None:
        kw["max_depth"] = cfg.max_depth
    if cfg.min_node is not None:
        if cfg.measure.is_individual:
            kw["min_node_size"] = cfg.min_node
        else:
            kw["min_cases"] = kw["min_controls"] = cfg.min_node
    return GrowthConfig(**kw)


def _honest_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(round(fraction * n))
    if cut < 1 or cut >= n:
        raise errors.DatasetTooSmall("honest split leaves one part empty")
    return np.sort(perm[:cut]), np.sort(perm[cut:])


def _alpha_value(a, n: int) -> float:
    if isinstance(a, str):
        return math.log(n)
    return float(a)


def fit_tree(cfg: RunConfig, data: Dataset) -> Tree:
    criterion = Criterion.CART_TO if cfg.method == "cart-to" else Criterion.PASD
    growth = _growth_config(cfg, criterion)
    grow_rows, est_rows = (None, None)
    if cfg.honest is not None:
        grow_rows, est_rows = _honest_split(data.n, cfg.honest, cfg.seed)
    train = data if grow_rows is None else data.subset(grow_rows)
    if cfg.full:
        tree = grow_tree(train, cfg.measure, 0, growth)
    elif cfg.method == "pasd2":
        sel = SelectionConfig(cfg.folds, SelectionRule.CV_SPLIT_COMPLEXITY,
                              _alpha_value(cfg.alpha_prime[0], train.n), cfg.seed)
        tree = select_final_cv_split_complexity(train, cfg.measure, 0, growth, sel)
    else:
        sel = SelectionConfig(cfg.folds, SelectionRule.CV_PREDICTION_ERROR, 4.0, cfg.seed)
        tree = select_final_cv_error(train, cfg.measure, 0, growth, sel)
    if est_rows is not None:
        tree = honest_estimate(tree, data.subset(est_rows))
    return tree


def _tree_document(tree: Tree, names) -> dict:
    doc = tree.to_dict()
    doc["feature_names"] = list(names)
    return doc


def cmd_fit(cfg: RunConfig, out) -> int:
    data = ingest_csv(cfg.data_path, cfg.outcome_column, cfg.prediction_columns, cfg.feature_columns or None)
    tree = fit_tree(cfg, data)
    rendering = tree.render(list(data.feature_names)) + "\n"
    if cfg.output_path:
        _write_json(_tree_document(tree, data.feature_names), cfg.output_path)
        _sibling(cfg.output_path, ".txt").write_text(rendering, encoding="utf-8")
    out.write(rendering)
    return 0


def cmd_ensemble(cfg: RunConfig, out) -> int:
    data = ingest_csv(cfg.data_path, cfg.outcome_column, cfg.prediction_columns, cfg.feature_columns or None)
    if cfg.method == "forest":
        overrides = {}
        if cfg.max_depth is not None:
            overrides["max_depth"] = cfg.max_depth
        if cfg.min_node is not None:
            keys = ("min_node_size",) if cfg.measure.is_individual else ("min_cases", "min_controls")
            overrides.update(dict.fromkeys(keys, cfg.min_node))
        growth = GrowthConfig.fully_grown(cfg.measure, **overrides)
        model = fit_forest(data, cfg.measure, 0, cfg.B, cfg.mtry, growth, cfg.seed)
        estimates = model.predict(data.X)
    else:
        losses = individual_loss(cfg.measure, data.y, data.H[:, 0])
        base = GrowthConfig(max_depth=cfg.max_depth if cfg.max_depth is not None else 3,
                            min_node_size=cfg.min_node if cfg.min_node is not None else 20)
        model = fit_boosting(data.X, losses, cfg.M, cfg.shrinkage, base, cfg.loss, cfg.seed, cfg.measure)
        estimates = model.predict(data.X)
    doc = model.to_dict()
    doc["feature_names"] = list(data.feature_names)
    if cfg.output_path:
        _write_json(doc, cfg.output_path)
    out.write(f"{cfg.method}: fitted on {data.n} rows, {data.p} covariates; "
              f"mean estimated {cfg.measure.value} {float(np.mean(estimates)):.6g}\n")
    return 0


def cmd_combine(cfg: RunConfig, out) -> int:
    data = ingest_csv(cfg.data_path, cfg.outcome_column, cfg.prediction_columns, cfg.feature_columns or None)
    models = tuple(range(data.n_models))
    if cfg.method == "mv":
        comb = fit_vote_combiner(data, models, cfg.measure, cfg.B, cfg.mtry, cfg.seed, threads=cfg.threads)
    else:
        comb = fit_em_combiner(data, models, analytic=cfg.method == "em-analytic", provider=cfg.provider,
                               B=cfg.B, mtry=cfg.mtry, M=cfg.M, shrinkage=cfg.shrinkage, seed=cfg.seed,
                               measure=cfg.measure)
    W = comb.weights(data.X)
    combined = comb.predict(data.X, data.H)
    doc = comb.to_dict()
    doc["feature_names"] = list(data.feature_names)
    doc["model_names"] = list(data.model_names)
    table = _combined_table(combined, W, data.model_names)
    if cfg.output_path:
        _write_json(doc, cfg.output_path)
        _sibling(cfg.output_path, ".predictions.csv").write_text(table, encoding="utf-8")
    else:
        out.write(table)
    return 0


def _combined_table(combined, W, model_names) -> str:
    header = ["row", "combined", *(f"weight_{m}" for m in model_names)]
    rows = ([i + 1, combined[i], *W[i]] for i in range(combined.size))
    return _rows_csv(header, rows)


def load_model(path):
    """Deserialize any model file written by this tool; returns ``(model, document)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not JSON ({exc})") from None
    kind = doc.get("format") if isinstance(doc, dict) else None
    try:
        if kind == "pasd-tree":
            return Tree.from_dict(doc), doc
        if kind == "pasd-forest":
            return Forest.from_dict(doc), doc
        if kind == "pasd-boosting":
            return BoostedModel.from_dict(doc), doc
        if kind == "pasd-combiner":
            return combiner_from_dict(doc), doc
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: malformed {kind} document ({exc!r})") from None
    raise ModelFileError(f"{path}: unrecognised model format {kind!r}")


def cmd_predict(cfg: RunConfig, out) -> int:
    model, doc = load_model(cfg.model_path)
    names = doc.get("feature_names")
    if names is None:
        header, _ = read_columns(cfg.data_path, [])
        skip = {cfg.outcome_column, *cfg.prediction_columns}
        names = [h for h in header if h not in skip]
    cols_needed = list(names)
    if doc["format"] == "pasd-combiner":
        model_names = doc.get("model_names") or list(cfg.prediction_columns)
        if not model_names:
            raise UsageError("combiner file lacks model names; pass --predictions")
        cols_needed += [m for m in model_names if m not in cols_needed]
    _, cols = read_columns(cfg.data_path, cols_needed)
    X = np.column_stack([cols[f] for f in names]) if names else np.empty((0, 0))
    if doc["format"] == "pasd-combiner":
        H = np.column_stack([cols[m] for m in model_names])
        table = _combined_table(model.predict(X, H), model.weights(X), model_names)
    elif doc["format"] == "pasd-tree":
        est, node = model.predict(X), model.apply(X)
        table = _rows_csv(["row", "node", "estimate"], ([i + 1, int(node[i]), est[i]] for i in range(est.size)))
    else:
        est = model.predict(X)
        table = _rows_csv(["row", "estimate"], ([i + 1, est[i]] for i in range(est.size)))
    _emit(table, cfg.output_path, out)
    return 0


def cmd_simulate(cfg: RunConfig, out) -> int:
    setting = Setting.parse(cfg.setting)
    method = cfg.method
    threads = max(1, cfg.threads)
    if setting in (Setting.S1, Setting.S2, Setting.S3, Setting.S4):
        methods = (method,) if method else ("cart-to", "pasd1", "pasd2")
        if not set(methods) <= {"cart-to", "pasd1", "pasd2"}:
            raise UsageError(f"setting {setting.value} runs tree methods (cart-to, pasd1, pasd2)")
        growth = GrowthConfig(
            max_depth=cfg.max_depth if cfg.max_depth is not None else GrowthConfig.max_depth,
            min_node_size=cfg.min_node if cfg.min_node is not None else GrowthConfig.min_node_size)
        eval_n = cfg.test_n or 1000
        alphas = tuple(_alpha_value(a, eval_n) for a in cfg.alpha_prime)
        ec = ExperimentConfig((setting.value,), methods, cfg.reps or 200, cfg.n, eval_n, alphas,
                              cfg.folds, threads, growth)
        summary, per_rep = run_experiment(ec, cfg.seed)
    elif method in (None, "forest", "boosting", "cart-to", "pasd2") and setting is Setting.FRIEDMAN:
        ec = EnsembleConfig(cfg.reps or 100, cfg.n, cfg.test_n or 10_000, cfg.B, cfg.mtry, cfg.M,
                            cfg.shrinkage, _alpha_value(cfg.alpha_prime[0], cfg.n), cfg.folds, threads)
        per_rep = run_ensemble_experiment(ec, cfg.seed)
        summary = summarize_ensemble(per_rep)
    else:
        method = method or "mv"
        if method not in ("mv", "em", "em-analytic"):
            raise UsageError(f"setting {setting.value} runs combination methods (mv, em, em-analytic)")
        measure = cfg.measure.value if cfg.measure_given else None
        cc = CombinationConfig(setting.value, method, cfg.reps or 100, cfg.n, cfg.test_n or 10_000, cfg.B,
                               cfg.mtry, measure, threads)
        per_rep = run_combination_experiment(cc, cfg.seed)
        summary = summarize_combination(per_rep)
    if cfg.output_path:
        base = Path(cfg.output_path)
        base.mkdir(parents=True, exist_ok=True)
        write_csv(summary, base / "summary.csv")
        if cfg.full:
            write_csv(per_rep, base / "replicates.csv")
    else:
        out.write(write_csv(per_rep if cfg.full else summary))
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "ensemble": cmd_ensemble,
    "combine": cmd_combine,
    "simulate": cmd_simulate,
}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _alpha_list(text: str) -> tuple[float | str, ...]:
    out = []
    for part in text.split(","):
        part = part.strip().lower()
        if part in ("log", "logn", "log(n)"):
            out.append("log")
            continue
        try:
            value = float(part)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number or 'log': {part!r}") from None
        if not value > 0:
            raise argparse.ArgumentTypeError("alpha' must be positive")
        out.append(value)
    return tuple(out)


def _column_list(text: str) -> tuple[str, ...]:
    return tuple(c.strip() for c in text.split(",") if c.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("data")
    g.add_argument("--data", help="input CSV with a header row")
    g.add_argument("--outcome", help="outcome column")
    g.add_argument("--predictions", type=_column_list, default=(),
                   help="comma-separated prediction-model columns")
    g.add_argument("--features", type=_column_list, default=(),
                   help="comma-separated covariate columns (default: all other columns)")
    g.add_argument("--measure",
                   help="squared_error (default), absolute_error, brier or auc")
    m = common.add_argument_group("method")
    m.add_argument("--method", help="cart-to, pasd1, pasd2, forest, boosting, mv, em or em-analytic")
    m.add_argument("--folds", type=int, default=10, help="cross-validation folds")
    m.add_argument("--alpha-prime", type=_alpha_list, default=(4.0,),
                   help="split-complexity penalty for pasd2; comma list or 'log' for simulate")
    m.add_argument("--B", type=int, default=100, help="trees per forest")
    m.add_argument("--mtry", type=int, help="covariates tried per split in forests (default ceil(p/3))")
    m.add_argument("--M", type=int, default=200, help="boosting stages")
    m.add_argument("--lambda", dest="shrinkage", type=float, default=0.1, help="boosting shrinkage")
    m.add_argument("--loss", choices=("l2", "l1"), default="l2", help="boosting loss")
    m.add_argument("--provider", choices=("forest", "boosting"), default="forest",
                   help="ensemble that estimates conditional performance for em combination")
    m.add_argument("--max-depth", type=int)
    m.add_argument("--min-node", type=int,
                   help="minimum child size (cases and controls each, for auc)")
    m.add_argument("--honest", type=float, nargs="?", const=0.5, metavar="FRACTION",
                   help="grow on this fraction of rows (0.5 if omitted) and re-estimate nodes on the rest")
    r = common.add_argument_group("run")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--out", help="output file (simulate: output directory)")
    r.add_argument("--full", action="store_true",
                   help="fit: keep the unpruned tree; simulate: also emit per-replicate rows")
    r.add_argument("--model", help="model JSON for predict")
    r.add_argument("--setting", help="simulate: 1, 2, 3, 4, friedman, logistic, moons or circles")
    r.add_argument("--reps", type=int)
    r.add_argument("--n", type=int, default=1000, help="simulate: training rows per replicate")
    r.add_argument("--test-n", type=int, help="simulate: evaluation rows per replicate")

    parser = argparse.ArgumentParser(prog="pasd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fit": "grow, prune and select one performance tree",
        "predict": "apply a saved tree, ensemble or combiner to a CSV",
        "ensemble": "fit a random forest or boosted model of conditional performance",
        "combine": "combine several prediction models by voting or EM",
        "simulate": "run a replicated synthetic experiment",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    method = ns.method.lower() if ns.method else DEFAULT_METHOD.get(ns.command)
    try:
        measure = Measure.parse(ns.measure or "squared_error")
    except ValueError:
        raise UsageError(f"unknown measure {ns.measure!r}") from None
    return RunConfig(
        command=ns.command,
        data_path=ns.data,
        outcome_column=ns.outcome,
        prediction_columns=tuple(ns.predictions),
        feature_columns=tuple(ns.features),
        measure=measure,
        measure_given=ns.measure is not None,
        method=method,
        folds=ns.folds,
        alpha_prime=ns.alpha_prime,
        B=ns.B,
        mtry=ns.mtry,
        M=ns.M,
        shrinkage=ns.shrinkage,
        max_depth=ns.max_depth,
        min_node=ns.min_node,
        honest=ns.honest,
        seed=ns.seed,
        threads=ns.threads,
        output_path=ns.out,
        full=ns.full,
        model_path=ns.model,
        setting=ns.setting,
        reps=ns.reps,
        n=ns.n,
        test_n=ns.test_n,
        loss=ns.loss,
        provider=ns.provider,
    )


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(ns)
        cfg.validate()
        return COMMANDS[cfg.command](cfg, out)
    except UsageError as exc:
        err.write(f"pasd {ns.command}: {exc}\n")
        return EXIT_USAGE
    except errors.PasdError as exc:
        err.write(f"pasd {ns.command}: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except ModelFileError as exc:
        err.write(f"pasd {ns.command}: {exc}\n")
        return EXIT_BAD_MODEL_FILE
    except OSError as exc:
        err.write(f"pasd {ns.command}: {exc}\n")
        return EXIT_IO
    except ValueError as exc:
        err.write(f"pasd {ns.command}: invalid value: {exc}\n")
        return EXIT_INVALID_VALUE


if __name__ == "__main__":
    sys.exit(main())
