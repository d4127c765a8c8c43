"""Training of per-arm outcome predictors and the universal imputation model.

A *method* is a way of predicting each arm's future outcome from the
normalized features. Every method is fitted separately on each treatment
group. Linear fits see an appended intercept column; K-NN composites
weight their metric by the squared non-intercept coefficients.
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from . import baselines
from .cv import cv_select
from .data import group_by_treatment, normalize, apply_normalization
from .errors import DegeneratePairs
from .knn import DEFAULT_K_GRID, KnnPredictor, apply_k_rule, fit_k_rule, tune_k
from .policy import DEFAULT_XI_GRID, DETERMINISTIC, RANDOMIZED, PolicyConfig
from .rlad import DEFAULT_R_GRID, SolverOptions, cross_validate_r, fit_rlad
from .seeding import derive_seed
from .threshold import (
    DEFAULT_EPS_BAR, DEFAULT_SUBSAMPLE_FRAC, DEFAULT_SUBSAMPLE_REPS,
    fit_subsample_ensemble, freeze_mask, subsample_size,
)

logger = logging.getLogger(__name__)

# prescriptive methods compared in the policy table, with display labels
POLICY_METHODS = ("lasso", "cart", "ols-knn", "rlad-knn")
# predictive methods compared in the metrics table
BENCH_METHODS = ("ols", "lasso", "huber", "rlad", "knn", "ols-knn", "lasso-knn", "huber-knn", "rlad-knn", "cart")
LABELS = {
    "ols": "OLS", "lasso": "LASSO", "huber": "Huber", "rlad": "RLAD", "knn": "K-NN",
    "ols-knn": "OLS+K-NN", "lasso-knn": "LASSO+K-NN", "huber-knn": "Huber+K-NN",
    "rlad-knn": "RLAD+K-NN", "cart": "CART",
}
PRIMARY = "rlad-knn"


@dataclass(frozen=True)
class PipelineConfig:
    r_grid: tuple = DEFAULT_R_GRID
    k_grid: tuple = DEFAULT_K_GRID
    lasso_grid: tuple = (1e-3, 1e-2, 1e-1, 1.0)
    cart_depths: tuple = (2, 4, 6)
    cart_min_leaf: int = 10
    huber_delta: float = baselines.HUBER_DELTA
    folds: int = 5
    k_rule: str = "sqrt-law"          # or "cv"
    xi_grid: tuple = DEFAULT_XI_GRID
    xi: float = None                  # fixes xi instead of tuning it
    eps_bar: float = DEFAULT_EPS_BAR
    subsample_frac: float = DEFAULT_SUBSAMPLE_FRAC
    subsample_reps: int = DEFAULT_SUBSAMPLE_REPS
    solver: SolverOptions = field(default_factory=SolverOptions)
    methods: tuple = POLICY_METHODS

    def __post_init__(self):
        if self.k_rule not in ("sqrt-law", "cv"):
            raise ValueError("k_rule must be 'sqrt-law' or 'cv'")
        unknown = set(self.methods) - set(BENCH_METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")


def with_intercept(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.column_stack([X, np.ones(X.shape[0])])


@dataclass(frozen=True)
class LinearPredictor:
    """Linear model on [features, 1], or on the features alone without intercept."""

    kind: str
    beta: np.ndarray
    hyper: float = 0.0
    intercept: bool = True

    def predict(self, X):
        return (with_intercept(X) if self.intercept else np.atleast_2d(np.asarray(X, dtype=float))) @ self.beta


def _fit_linear(kind, X, y, cfg, seed, intercept=True, free=()):
    """Fit one linear model, hyperparameters by CV.

    Without ``intercept`` the features must span the constant (e.g. a full
    one-hot block); ``free`` lists columns LASSO leaves unpenalized.
    """
    Xd = with_intercept(X) if intercept else np.asarray(X, dtype=float)
    free = [Xd.shape[1] - 1] if intercept else list(free)
    if kind == "ols":
        return LinearPredictor(kind, baselines.fit_ols(Xd, y).beta, 0.0, intercept)
    if kind == "rlad":
        r = cross_validate_r(Xd, y, cfg.r_grid, cfg.folds, seed, cfg.solver)
        return LinearPredictor(kind, fit_rlad(Xd, y, r, cfg.solver).beta, r, intercept)
    if kind == "huber":
        return LinearPredictor(kind, baselines.fit_huber(Xd, y, cfg.huber_delta).beta, cfg.huber_delta, intercept)
    if kind == "lasso":
        def fp(Xa, ya, Xb, lam):
            return Xb @ baselines.fit_lasso(Xa, ya, lam, unpenalized=free).beta
        lam = cv_select(fp, Xd, y, cfg.lasso_grid, cfg.folds, seed, prefer="larger")
        return LinearPredictor(kind, baselines.fit_lasso(Xd, y, lam, unpenalized=free).beta, lam, intercept)
    raise ValueError(kind)


def _fit_cart(X, y, cfg, seed):
    def fp(Xa, ya, Xb, depth):
        return baselines.fit_cart(Xa, ya, depth, cfg.cart_min_leaf).predict(Xb)
    depth = cv_select(fp, X, y, cfg.cart_depths, cfg.folds, seed, prefer="smaller")
    return baselines.fit_cart(X, y, depth, cfg.cart_min_leaf)


def knn_weights(kind, X, y, cfg, seed, intercept=True, free=()):
    """Metric weights for a K-NN method and the linear fit behind them."""
    if kind == "knn":
        return np.ones(X.shape[1]), None
    lin = _fit_linear(kind[: -len("-knn")], X, y, cfg, seed, intercept, free)
    return lin.beta[: X.shape[1]] ** 2, lin


@dataclass
class MethodModel:
    """One method fitted on every treatment group."""

    name: str
    predictors: list                 # one per arm, each with .predict(X)
    linear: list = None              # underlying linear fits of K-NN composites
    tuned_k: list = None
    k_rule: tuple = None
    policy: PolicyConfig = None      # randomized-mode config with tuned xi

    def predict(self, X):
        """Predicted outcome under every arm, shape (n, M)."""
        return np.column_stack([p.predict(X) for p in self.predictors])


def fit_method(name, groups, cfg, seed, intercept=True, free=()):
    """Fit ``name`` on every group; ``intercept``/``free`` as in the linear fits."""
    preds, linear, tuned = [], [], []
    for g in groups:
        s = derive_seed(seed, name, g.treatment)
        if name == "cart":
            preds.append(_fit_cart(g.X, g.y, cfg, s))
        elif name.endswith("knn"):
            w, lin = knn_weights(name, g.X, g.y, cfg, s, intercept, free)
            linear.append(lin)
            tuned.append(tune_k(g.X, g.y, w, cfg.k_grid, cfg.folds, derive_seed(s, "k")))
            preds.append(KnnPredictor(w, g.X, g.y, tuned[-1], g.treatment))
        else:
            preds.append(_fit_linear(name, g.X, g.y, cfg, s, intercept, free))
    model = MethodModel(name, preds, linear or None, tuned or None)
    if tuned and cfg.k_rule == "sqrt-law":
        try:
            model.k_rule = fit_k_rule([(g.size, k) for g, k in zip(groups, tuned)])
        except DegeneratePairs:
            logger.info("%s: fewer than two distinct group sizes; keeping CV-tuned K", name)
        else:
            model.predictors = [
                KnnPredictor(p.weights, p.X, p.y, apply_k_rule(model.k_rule, g.size), p.group)
                for p, g in zip(preds, groups)
            ]
    return model


# --- universal imputation model --------------------------------------------

def treatment_features(X, treatment, M):
    """Append one-hot treatment indicators to the features."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    onehot = np.zeros((X.shape[0], M))
    onehot[np.arange(X.shape[0]), np.asarray(treatment, dtype=int)] = 1.0
    return np.column_stack([X, onehot])


@dataclass(frozen=True)
class ImputationModel:
    """RLAD + K-NN on all records, with the treatment as a predictor."""

    beta: np.ndarray        # on [features, one-hot]; the one-hot block carries the intercept
    r: float
    knn: KnnPredictor       # reference set: [features, one-hot]
    n_treatments: int

    def impute(self, X, m):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.knn.predict(treatment_features(X, np.full(X.shape[0], m), self.n_treatments))

    def impute_all(self, X):
        return np.column_stack([self.impute(X, m) for m in range(self.n_treatments)])

    def neighbors(self, X, k):
        """Indices of the k nearest reference records on clinical features only."""
        from .knn import nearest_indices

        p = np.shape(X)[1]
        return nearest_indices(X, self.knn.X[:, :p], self.knn.weights[:p], k)


def fit_imputation_model(ds, cfg=None, seed=0, r=None, k=None, rule=None):
    """Universal RLAD+K-NN fitted on a normalized dataset.

    ``r`` defaults to cross-validation on ``ds``. The neighbor count is
    ``k`` if given, else ``rule`` applied to ``len(ds)``, else tuned by CV.
    """
    cfg = cfg or PipelineConfig()
    Z = treatment_features(ds.X, ds.treatment, ds.n_treatments)
    y = ds.outcome_next
    if r is None:
        r = cross_validate_r(Z, y, cfg.r_grid, cfg.folds, derive_seed(seed, "impute-r"), cfg.solver)
    beta = fit_rlad(Z, y, r, cfg.solver).beta
    w = beta ** 2
    if k is None:
        if rule is not None:
            k = apply_k_rule(rule, len(ds))
        else:
            k = tune_k(Z, y, w, cfg.k_grid, cfg.folds, derive_seed(seed, "impute-k"))
    return ImputationModel(beta, float(r), KnnPredictor(w, Z, y, int(min(k, len(ds)))), ds.n_treatments)


def impute_outcome(model, x, m):
    return float(model.impute(np.asarray(x, dtype=float)[None, :], m)[0])


# --- the trained pipeline ----------------------------------------------------

@dataclass
class Pipeline:
    """Everything needed to prescribe for new, raw (un-normalized) records."""

    feature_names: tuple
    treatment_names: tuple
    co_index: int
    means: np.ndarray
    stds: np.ndarray
    methods: dict                   # name -> MethodModel
    ensembles: list                 # per-arm SubsampleEnsemble on [features, 1]
    imputation: ImputationModel
    soc_mode: int                   # modal training treatment
    eps_bar: float = DEFAULT_EPS_BAR
    config: PipelineConfig = None

    @property
    def n_treatments(self):
        return len(self.treatment_names)

    def normalize(self, ds):
        return apply_normalization(ds, self.means, self.stds)

    def mu_c(self, Xn):
        Xd = with_intercept(Xn)
        parts = [e.mu_c(Xd) for e in self.ensembles]
        return np.column_stack([m for m, _ in parts]), np.column_stack([c for _, c in parts])

    def policy(self, method, mode, xi=None):
        base = self.methods[method].policy
        if mode == DETERMINISTIC:
            return PolicyConfig(base.xi, DETERMINISTIC, base.scale)
        return PolicyConfig(base.xi if xi is None else xi, RANDOMIZED, base.scale)


def prediction_scale(y_hat):
    """Pooled within-record spread of predictions across arms."""
    if y_hat.shape[1] < 2:
        return 1.0
    s = float(np.sqrt(np.mean(np.var(y_hat, axis=1))))
    return s if s > 0 else 1.0


def expected_improvement(y_hat, probs, frozen, imputed, ds):
    """Mean over records of E[outcome] - x_co under the given policy.

    Unobserved arms use ``imputed``; the factual arm uses the record.
    """
    outcomes = np.array(imputed, dtype=float)
    rows = np.arange(len(ds))
    outcomes[rows, ds.treatment] = ds.outcome_next
    value = np.where(frozen, ds.outcome_next, np.sum(probs * outcomes, axis=1))
    return float(np.mean(value - ds.outcome_current))


def tune_xi(y_hat, scale, mu, c, imputed, ds, grid, eps_bar):
    """Grid xi with the best (most negative) mean imputed improvement; ties -> smaller xi."""
    best = None
    for xi in sorted(grid):
        cfg = PolicyConfig(xi, RANDOMIZED, scale)
        probs = cfg.probs(y_hat)
        frozen, _ = freeze_mask(y_hat, probs, ds.outcome_current, mu, c, cfg, eps_bar)
        score = expected_improvement(y_hat, probs, frozen, imputed, ds)
        if best is None or score < best[0]:
            best = (score, xi)
    return best[1]


def train_pipeline(train, cfg=None, seed=0):
    """Fit every configured method on a raw training dataset."""
    cfg = cfg or PipelineConfig()
    train_n, _ = normalize(train)
    means, stds = train_n.normalization
    groups = group_by_treatment(train_n)

    methods = {}
    for name in cfg.methods:
        methods[name] = fit_method(name, groups, cfg, derive_seed(seed, "method"))

    # per-arm RLAD penalties drive the subsample ensembles for the threshold
    rlad_r = []
    for g in groups:
        rm = methods.get(PRIMARY)
        if rm is not None:
            rlad_r.append(rm.linear[g.treatment].hyper)
        else:
            rlad_r.append(cross_validate_r(with_intercept(g.X), g.y, cfg.r_grid, cfg.folds,
                                           derive_seed(seed, "rlad-r", g.treatment), cfg.solver))
    ensembles = [
        fit_subsample_ensemble(with_intercept(g.X), g.y, r, subsample_size(g.size, cfg.subsample_frac),
                               cfg.subsample_reps, derive_seed(seed, "subsample", g.treatment),
                               cfg.solver, g.treatment)
        for g, r in zip(groups, rlad_r)
    ]

    rule = methods[PRIMARY].k_rule if PRIMARY in methods else None
    imputation = fit_imputation_model(train_n, cfg, derive_seed(seed, "impute"), rule=rule)
    soc_mode = int(np.argmax(np.bincount(train_n.treatment, minlength=train_n.n_treatments)))

    pipe = Pipeline(tuple(train.feature_names), tuple(train.treatment_names), train.co_index,
                    means, stds, methods, ensembles, imputation, soc_mode, cfg.eps_bar, cfg)

    mu, c = pipe.mu_c(train_n.X)
    imputed = imputation.impute_all(train_n.X)
    for name, model in methods.items():
        y_hat = model.predict(train_n.X)
        scale = prediction_scale(y_hat)
        xi = cfg.xi if cfg.xi is not None else tune_xi(y_hat, scale, mu, c, imputed, train_n,
                                                       cfg.xi_grid, cfg.eps_bar)
        model.policy = PolicyConfig(xi, RANDOMIZED, scale)
    return pipe
