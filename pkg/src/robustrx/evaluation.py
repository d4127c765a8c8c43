"""Predictive metrics, counterfactual scoring of policies, and benchmarks.

Improvements are future outcome minus current outcome in raw units, so
negative numbers are reductions (the clinical gain).
"""
from dataclasses import dataclass, field
import csv
import os

import numpy as np

from .data import TreatmentGroup, normalize
from .errors import ConstantTarget, ShapeMismatch
from .knn import apply_k_rule
from .pipeline import (
    BENCH_METHODS, LABELS, PRIMARY, PipelineConfig, fit_imputation_model, fit_method,
    train_pipeline, treatment_features,
)
from .policy import DETERMINISTIC, RANDOMIZED
from .seeding import derive_seed
from .threshold import prescribe_batch

CURRENT = "Current prescription"
SOC = "Standard of care"
SOC_MODES = ("modal-knn", "modal-global")
CSV_COLUMNS = ("method", "policy_mode", "mean", "std", "reps")


# --- metrics -------------------------------------------------------------

def _pair(y, y_hat):
    y = np.asarray(y, dtype=float).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=float).reshape(-1)
    if y.shape != y_hat.shape or y.size == 0:
        raise ShapeMismatch("y and y_hat must have equal, nonzero length")
    return y, y_hat


def mse(y, y_hat):
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def mean_ae(y, y_hat):
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def median_ae(y, y_hat):
    y, y_hat = _pair(y, y_hat)
    return float(np.median(np.abs(y - y_hat)))


def r_square(y, y_hat):
    """1 - sum (y - y_hat)^2 / sum (y - mean y)^2."""
    y, y_hat = _pair(y, y_hat)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise ConstantTarget("R^2 is undefined for a constant target")
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot


@dataclass(frozen=True)
class MetricsReport:
    r2: float
    mse: float
    mean_ae: float
    median_ae: float

    @classmethod
    def compute(cls, y, y_hat):
        return cls(r_square(y, y_hat), mse(y, y_hat), mean_ae(y, y_hat), median_ae(y, y_hat))


# --- feature importance --------------------------------------------------

def feature_importance(model, names, top=20):
    """Features ranked by |coefficient|, signed values, ties by feature index.

    ``model`` is a fitted linear model (anything with ``beta``) or a
    coefficient vector; entries past ``len(names)`` (an intercept) are
    ignored.
    """
    beta = np.asarray(getattr(model, "beta", model), dtype=float)[: len(names)]
    order = np.argsort(-np.abs(beta), kind="stable")
    ranked = [(names[j], float(beta[j])) for j in order if beta[j] != 0]
    return ranked[:top]


# --- policy scoring ------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    method: str
    policy_mode: str
    mean: float
    std: float
    reps: int


@dataclass
class ImprovementReport:
    """Mean/std of improvement per (method, mode) over repetitions.

    ``rows`` are scored on the true oracle when one was supplied, else on
    the imputation model; ``imputed_rows`` are always imputation-scored.
    """

    rows: list
    imputed_rows: list
    reps: int
    basis: str  # "oracle" or "imputed"
    samples: dict = field(default_factory=dict, repr=False)  # (label, mode) -> per-rep values

    def row(self, method, mode):
        for r in self.rows:
            if r.method == method and r.policy_mode == mode:
                return r
        raise KeyError((method, mode))

    def to_csv(self, path, imputed=False):
        _write_rows(path, self.imputed_rows if imputed else self.rows)

    def to_table(self):
        both = self.basis == "oracle"
        head = ["method", "policy", f"mean ({self.basis})", "std"]
        if both:
            head += ["mean (imputed)", "std"]
        lines = [head]
        for r, ri in zip(self.rows, self.imputed_rows):
            line = [r.method, r.policy_mode, f"{r.mean:.4f}", f"{r.std:.4f}"]
            if both:
                line += [f"{ri.mean:.4f}", f"{ri.std:.4f}"]
            lines.append(line)
        widths = [max(len(row[j]) for row in lines) for j in range(len(head))]
        text = ["  ".join(c.ljust(w) if j < 2 else c.rjust(w) for j, (c, w) in enumerate(zip(row, widths)))
                for row in lines]
        text.insert(1, "-" * len(text[0]))
        text.append(f"({self.reps} repetitions; negative = reduction)")
        return "\n".join(text)


def _write_rows(path, rows):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.method, r.policy_mode, repr(r.mean), repr(r.std), r.reps])
    os.replace(tmp, path)


def impute_counterfactuals(model, ds):
    """(n, M) outcome table: recorded outcome on the factual arm, imputed elsewhere."""
    table = model.impute_all(ds.X)
    table[np.arange(len(ds)), ds.treatment] = ds.outcome_next
    return table


def improvement(chosen, outcomes, x_co):
    """Mean of outcome[i, chosen_i] - x_co_i."""
    return float(np.mean(outcomes[np.arange(len(chosen)), chosen] - x_co))


def standard_of_care(pipe, test_n, mode="modal-knn"):
    """Population-practice comparator.

    ``modal-knn`` prescribes the most common treatment among the K nearest
    training records (imputation metric on clinical features, ties to the
    lowest index); ``modal-global`` the most common training treatment.
    """
    if mode not in SOC_MODES:
        raise ValueError(f"soc must be one of {SOC_MODES}")
    if mode == "modal-global":
        return np.full(len(test_n), pipe.soc_mode, dtype=int)
    imp = pipe.imputation
    p = test_n.n_features
    train_t = np.argmax(imp.knn.X[:, p:], axis=1)
    nbrs = imp.neighbors(test_n.X, imp.knn.k)
    votes = np.zeros((len(test_n), pipe.n_treatments), dtype=int)
    for j in range(nbrs.shape[1]):
        np.add.at(votes, (np.arange(len(test_n)), train_t[nbrs[:, j]]), 1)
    return np.argmax(votes, axis=1)


def imputation_for_test(pipe, test_n, seed=0):
    """Universal model on the test records with K sized to the test set."""
    rule = pipe.methods[PRIMARY].k_rule if PRIMARY in pipe.methods else None
    k = apply_k_rule(rule, len(test_n)) if rule is not None else pipe.imputation.knn.k
    return fit_imputation_model(test_n, pipe.config, seed, r=pipe.imputation.r, k=k)


def score_pipeline(pipe, test, oracle=None, modes=(DETERMINISTIC, RANDOMIZED), soc="modal-knn",
                   policy_seed=0, methods=None):
    """One repetition: improvement per (label, mode) on a raw test dataset.

    Returns ``{(label, mode): (primary, imputed)}`` where ``primary`` uses
    the oracle when given.
    """
    test_n = pipe.normalize(test)
    x_co = test.outcome_current
    imputed = impute_counterfactuals(imputation_for_test(pipe, test_n, policy_seed), test_n)
    truth = imputed if oracle is None else np.asarray(oracle, dtype=float)
    if truth.shape != imputed.shape:
        raise ShapeMismatch("oracle must be (n_test, M)")
    mu, c = pipe.mu_c(test_n.X)

    out = {}
    for name in methods or pipe.methods:
        y_hat = pipe.methods[name].predict(test_n.X)
        for mode in modes:
            cfg = pipe.policy(name, mode)
            chosen, _, _, _ = prescribe_batch(y_hat, x_co, test.treatment, mu, c, cfg, pipe.eps_bar,
                                              derive_seed(policy_seed, name, mode))
            out[(LABELS[name], mode)] = (improvement(chosen, truth, x_co), improvement(chosen, imputed, x_co))
    factual = np.asarray(test.treatment, dtype=int)
    out[(CURRENT, "-")] = (improvement(factual, truth, x_co), improvement(factual, imputed, x_co))
    soc_choice = standard_of_care(pipe, test_n, soc)
    out[(SOC, "-")] = (improvement(soc_choice, truth, x_co), improvement(soc_choice, imputed, x_co))
    return out


def _aggregate(per_rep, reps, basis):
    keys = list(per_rep[0])
    rows, irows, samples = [], [], {}
    for key in keys:
        vals = np.array([rep[key][0] for rep in per_rep])
        ivals = np.array([rep[key][1] for rep in per_rep])
        sd = float(vals.std(ddof=1)) if reps > 1 else 0.0
        isd = float(ivals.std(ddof=1)) if reps > 1 else 0.0
        rows.append(ReportRow(key[0], key[1], float(vals.mean()), sd, reps))
        irows.append(ReportRow(key[0], key[1], float(ivals.mean()), isd, reps))
        samples[key] = vals
    return ImprovementReport(rows, irows, reps, basis, samples)


def evaluate_policies(pipe, test, oracle=None, reps=5, seed=0, soc="modal-knn", methods=None):
    """Score a trained pipeline on a test set; repetitions resample the policies."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    per_rep = [score_pipeline(pipe, test, oracle, soc=soc, methods=methods,
                              policy_seed=derive_seed(seed, "rep", r))
               for r in range(reps)]
    return _aggregate(per_rep, reps, "imputed" if oracle is None else "oracle")


def run_protocol(ds, oracle=None, reps=5, seed=0, cfg=None, train_frac=0.8, soc="modal-knn"):
    """Full protocol: each repetition resplits, retrains and rescores.

    Seeds chain as root -> repetition -> (split, train, policy).
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    per_rep = []
    for r in range(reps):
        rep_seed = derive_seed(seed, "rep", r)
        train_idx, test_idx = _split_index(len(ds), train_frac, derive_seed(rep_seed, "split"))
        pipe = train_pipeline(ds.subset(train_idx), cfg, derive_seed(rep_seed, "train"))
        sub_oracle = None if oracle is None else np.asarray(oracle)[test_idx]
        per_rep.append(score_pipeline(pipe, ds.subset(test_idx), sub_oracle, soc=soc,
                                      policy_seed=derive_seed(rep_seed, "policy")))
    return _aggregate(per_rep, reps, "imputed" if oracle is None else "oracle")


def _split_index(n, train_frac, seed):
    n_train = int(round(train_frac * n))
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


# --- predictive benchmark ------------------------------------------------

def bench(train, test, methods=BENCH_METHODS, cfg=None, seed=0):
    """Out-of-sample metrics of universal models (treatment one-hot as a predictor).

    Returns ``{label: MetricsReport}`` in the order of ``methods``.
    """
    cfg = cfg or PipelineConfig(k_rule="cv")
    train_n, (test_n,) = normalize(train, [test])
    M = train.n_treatments
    Z = treatment_features(train_n.X, train_n.treatment, M)
    Zt = treatment_features(test_n.X, test_n.treatment, M)
    group = TreatmentGroup(0, Z, np.asarray(train_n.outcome_next), np.arange(len(train_n)))
    onehot = range(train_n.n_features, Z.shape[1])
    out = {}
    for name in methods:
        # the full one-hot block spans the constant, so no separate intercept
        model = fit_method(name, [group], cfg, derive_seed(seed, "bench"), intercept=False, free=onehot)
        out[LABELS[name]] = MetricsReport.compute(test_n.outcome_next, model.predictors[0].predict(Zt))
    return out


def bench_table(results):
    head = ("method", "R2", "MSE", "MeanAE", "MedianAE")
    lines = [head] + [(name, f"{m.r2:.4f}", f"{m.mse:.4f}", f"{m.mean_ae:.4f}", f"{m.median_ae:.4f}")
                      for name, m in results.items()]
    widths = [max(len(row[j]) for row in lines) for j in range(len(head))]
    text = ["  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(row, widths)))
            for row in lines]
    text.insert(1, "-" * len(text[0]))
    return "\n".join(text)


def write_bench_csv(results, path):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "r2", "mse", "mean_ae", "median_ae"])
        for name, m in results.items():
            w.writerow([name, repr(m.r2), repr(m.mse), repr(m.mean_ae), repr(m.median_ae)])
    os.replace(tmp, path)
