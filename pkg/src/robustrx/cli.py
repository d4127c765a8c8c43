"""Command-line interface: gen-data, train, prescribe, evaluate, bench.

Exit codes: 0 ok, 2 usage, 3 data error, 4 solver did not converge.
All randomness derives from ``--seed`` (command -> repetition -> record).
"""
import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import __version__
from .bundle import load_pipeline, save_pipeline
from .data import CsvSchema, load_csv, split, write_csv
from .errors import DataError, RobustRxError, ShapeMismatch
from .evaluation import SOC_MODES, bench, bench_table, evaluate_policies, write_bench_csv
from .knn import DEFAULT_K_GRID
from .pipeline import BENCH_METHODS, POLICY_METHODS, PRIMARY, PipelineConfig, train_pipeline
from .policy import DEFAULT_XI_GRID, DETERMINISTIC, RANDOMIZED
from .rlad import DEFAULT_R_GRID, SolverOptions
from .seeding import derive_seed
from .synth import GeneratorConfig, generate, write_oracle_csv
from .synth import load_oracle_csv
from .threshold import DEFAULT_EPS_BAR, DEFAULT_SUBSAMPLE_FRAC, DEFAULT_SUBSAMPLE_REPS, prescribe_batch

CONFIG_DIR_ENV = "ROBUSTRX_CONFIG_DIR"
DEFAULT_GENERATOR_CONFIG = "generator.conf"

log = logging.getLogger("robustrx")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(choices):
    def parse(text):
        out = tuple(v.strip() for v in text.split(",") if v.strip())
        bad = [v for v in out if v not in choices]
        if bad or not out:
            raise argparse.ArgumentTypeError(f"choose from {', '.join(choices)}")
        return out
    return parse


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def resolve_config(path):
    """Config path, looked up in $ROBUSTRX_CONFIG_DIR when relative and absent locally."""
    base = os.environ.get(CONFIG_DIR_ENV)
    if path is None:
        if base is None:
            return None
        candidate = os.path.join(base, DEFAULT_GENERATOR_CONFIG)
        return candidate if os.path.exists(candidate) else None
    if not os.path.isabs(path) and not os.path.exists(path) and base:
        return os.path.join(base, path)
    return path


def _schema(args):
    return CsvSchema.from_file(args.schema) if getattr(args, "schema", None) else None


def _add_tuning(p):
    p.add_argument("--r-grid", type=_floats, default=DEFAULT_R_GRID, help="RLAD penalty grid")
    p.add_argument("--k-grid", type=_ints, default=DEFAULT_K_GRID, help="neighbor-count grid")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--rlad-tol", type=float, default=SolverOptions.tolerance, help="certified duality gap")
    p.add_argument("--rlad-max-iters", type=int, default=SolverOptions.max_iters)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schema", help="column-role file (key = value)")


def _pipeline_config(args, **extra):
    return PipelineConfig(
        r_grid=args.r_grid, k_grid=args.k_grid, folds=args.folds,
        solver=SolverOptions(args.rlad_tol, args.rlad_max_iters), **extra,
    )


def build_parser():
    ap = argparse.ArgumentParser(prog="robustrx", description="Robust prediction-based treatment prescription.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic cohort with its oracle")
    g.add_argument("config", nargs="?", help=f"generator config file (default: ${CONFIG_DIR_ENV}/{DEFAULT_GENERATOR_CONFIG})")
    g.add_argument("--set", type=_key_value, action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key")
    g.add_argument("--seed", type=int, help="data seed (overrides the config)")
    g.add_argument("--train-frac", type=float, default=0.8)
    g.add_argument("--out", required=True, help="output directory")

    t = sub.add_parser("train", help="fit every method on a training CSV")
    t.add_argument("--train-csv", required=True)
    t.add_argument("--out-model", required=True)
    _add_tuning(t)
    t.add_argument("--methods", type=_names(BENCH_METHODS), default=POLICY_METHODS)
    t.add_argument("--k-rule", choices=("sqrt-law", "cv"), default="sqrt-law")
    t.add_argument("--xi", type=float, help="fix xi instead of tuning it")
    t.add_argument("--xi-grid", type=_floats, default=DEFAULT_XI_GRID)
    t.add_argument("--eps-bar", type=float, default=DEFAULT_EPS_BAR)
    t.add_argument("--subsample-frac", type=float, default=DEFAULT_SUBSAMPLE_FRAC)
    t.add_argument("--subsample-reps", type=int, default=DEFAULT_SUBSAMPLE_REPS)

    p = sub.add_parser("prescribe", help="prescribe for every record of a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--input-csv", required=True)
    p.add_argument("--method", default=PRIMARY, choices=BENCH_METHODS)
    p.add_argument("--policy", choices=(RANDOMIZED, DETERMINISTIC), default=RANDOMIZED)
    p.add_argument("--xi", type=float, help="override the trained xi")
    p.add_argument("--eps-bar", type=float, help="override the trained eps_bar")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schema")
    p.add_argument("--out", required=True)

    e = sub.add_parser("evaluate", help="score policies on a test CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--test-csv", required=True)
    e.add_argument("--oracle-csv", help="true outcomes (id, m, y_true) for oracle scoring")
    e.add_argument("--reps", type=int, default=5)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--soc", choices=SOC_MODES, default="modal-knn")
    e.add_argument("--schema")
    e.add_argument("--out", required=True, help="report CSV (method, policy_mode, mean, std, reps)")

    b = sub.add_parser("bench", help="predictive metrics of universal models")
    b.add_argument("--train-csv", required=True)
    b.add_argument("--test-csv", required=True)
    b.add_argument("--methods", type=_names(BENCH_METHODS), default=BENCH_METHODS)
    _add_tuning(b)
    b.add_argument("--out", help="metrics CSV")
    return ap


def cmd_gen_data(args):
    path = resolve_config(args.config)
    overrides = dict(args.set)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    cfg = GeneratorConfig.from_file(path, overrides) if path else GeneratorConfig.from_mapping(overrides)
    cohort = generate(cfg)
    os.makedirs(args.out, exist_ok=True)
    write_csv(cohort.dataset, os.path.join(args.out, "cohort.csv"))
    write_oracle_csv(cohort, os.path.join(args.out, "oracle.csv"))
    train, test = split(cohort.dataset, args.train_frac, derive_seed(cfg.seed, "gen-data", "split"))
    write_csv(train, os.path.join(args.out, "train.csv"))
    write_csv(test, os.path.join(args.out, "test.csv"))
    with open(os.path.join(args.out, "generator.conf"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())
    print(f"wrote {len(cohort.dataset)} records ({len(train)} train, {len(test)} test) to {args.out}")
    return 0


def cmd_train(args):
    train = load_csv(args.train_csv, _schema(args))
    cfg = _pipeline_config(
        args, methods=args.methods, k_rule=args.k_rule, xi=args.xi, xi_grid=args.xi_grid,
        eps_bar=args.eps_bar, subsample_frac=args.subsample_frac, subsample_reps=args.subsample_reps,
    )
    pipe = train_pipeline(train, cfg, derive_seed(args.seed, "train"))
    save_pipeline(pipe, args.out_model)
    for name, m in pipe.methods.items():
        k = "" if m.tuned_k is None else f" K={[p.k for p in m.predictors]}"
        print(f"{name}: xi={m.policy.xi:g}{k}")
    print(f"model written to {args.out_model}")
    return 0


def _load_matching(path, pipe, schema=None):
    ds = load_csv(path, schema, treatment_names=pipe.treatment_names)
    if tuple(ds.feature_names) != tuple(pipe.feature_names):
        raise ShapeMismatch(f"{path}: feature columns {list(ds.feature_names)} do not match the model's "
                            f"{list(pipe.feature_names)}")
    return ds


def cmd_prescribe(args):
    pipe = load_pipeline(args.model)
    if args.method not in pipe.methods:
        raise DataError(f"method {args.method!r} is not in the model (has {', '.join(pipe.methods)})")
    ds = _load_matching(args.input_csv, pipe, _schema(args))
    ds_n = pipe.normalize(ds)
    cfg = pipe.policy(args.method, args.policy, args.xi)
    eps_bar = pipe.eps_bar if args.eps_bar is None else args.eps_bar
    y_hat = pipe.methods[args.method].predict(ds_n.X)
    mu, c = pipe.mu_c(ds_n.X)
    chosen, frozen, T, probs = prescribe_batch(y_hat, ds.outcome_current, ds.treatment, mu, c, cfg,
                                               eps_bar, derive_seed(args.seed, "prescribe"))
    tmp = f"{args.out}.tmp{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"p_{lab}" for lab in pipe.treatment_names] + ["chosen", "frozen", "threshold"])
        for i, rid in enumerate(ds.ids):
            w.writerow([rid] + [repr(float(v)) for v in probs[i]]
                       + [pipe.treatment_names[chosen[i]], int(frozen[i]), repr(float(T[i]))])
    os.replace(tmp, args.out)
    print(f"{len(ds)} prescriptions ({int(np.sum(frozen))} frozen) written to {args.out}")
    return 0


def cmd_evaluate(args):
    pipe = load_pipeline(args.model)
    test = _load_matching(args.test_csv, pipe, _schema(args))
    oracle = load_oracle_csv(args.oracle_csv, test) if args.oracle_csv else None
    report = evaluate_policies(pipe, test, oracle, args.reps, derive_seed(args.seed, "evaluate"), args.soc)
    report.to_csv(args.out)
    if oracle is not None:
        root, ext = os.path.splitext(args.out)
        report.to_csv(f"{root}.imputed{ext or '.csv'}", imputed=True)
    print(report.to_table())
    return 0


def cmd_bench(args):
    train = load_csv(args.train_csv, _schema(args))
    test = load_csv(args.test_csv, _schema(args), treatment_names=train.treatment_names)
    cfg = _pipeline_config(args, k_rule="cv", methods=args.methods)
    results = bench(train, test, args.methods, cfg, derive_seed(args.seed, "bench"))
    print(bench_table(results))
    if args.out:
        write_bench_csv(results, args.out)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "prescribe": cmd_prescribe,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except RobustRxError as exc:
        print(f"robustrx {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"robustrx {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
