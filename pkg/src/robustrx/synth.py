"""Synthetic visit cohorts with known outcomes under every treatment.

Outcome model for arm m:

    y_m = offset_m + x' beta*_m + h_m(z) + eps_m

``x`` holds the raw features: standard-normal draws ``z`` except at
``co_index``, where the current outcome ``baseline_mean + baseline_std * z``
sits. ``h_m`` is a local nonlinearity evaluated on ``z``. Noise is drawn
once per (record, arm), so the factual outcome is exactly the oracle entry
of the assigned arm.
"""
from dataclasses import dataclass, fields, replace
import csv
import os

import numpy as np

from .data import make_dataset, read_key_values
from .errors import InvalidConfig, UnknownRecord
from .seeding import derive_seed

NONLINEARITIES = ("none", "quadratic", "radial")
NOISE_KINDS = ("gaussian", "laplace", "contaminated")
ASSIGNMENTS = ("random", "outcome-biased")


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 5000
    p: int = 10
    m: int = 3
    beta_star: tuple = None      # m rows of p coefficients; drawn from param_seed if None
    offsets: tuple = None        # per-arm intercepts; drawn from param_seed if None
    nonlinearity: str = "quadratic"
    amplitude: float = 0.5
    noise_std: tuple = (1.0,)    # one value per arm, or a single shared value
    noise_kind: str = "gaussian"
    contamination_frac: float = 0.1
    contamination_shift: float = 10.0
    assignment: str = "outcome-biased"
    assignment_strength: float = 0.5
    co_index: int = 0
    baseline_mean: float = 140.0
    baseline_std: float = 15.0
    param_seed: int = 0
    seed: int = 0

    def validate(self):
        if self.n < 1 or self.p < 1 or self.m < 1:
            raise InvalidConfig("n, p and m must be positive")
        if not 0 <= self.co_index < self.p:
            raise InvalidConfig(f"co_index {self.co_index} outside [0, {self.p})")
        if self.nonlinearity not in NONLINEARITIES:
            raise InvalidConfig(f"nonlinearity must be one of {NONLINEARITIES}")
        if self.noise_kind not in NOISE_KINDS:
            raise InvalidConfig(f"noise_kind must be one of {NOISE_KINDS}")
        if self.assignment not in ASSIGNMENTS:
            raise InvalidConfig(f"assignment must be one of {ASSIGNMENTS}")
        eta = np.asarray(self.noise_std, dtype=float)
        if eta.size not in (1, self.m) or np.any(eta <= 0):
            raise InvalidConfig("noise_std must be positive, one value or one per arm")
        if not 0 <= self.contamination_frac < 0.5:
            raise InvalidConfig("contamination_frac must lie in [0, 0.5)")
        if not 0 <= self.assignment_strength <= 1:
            raise InvalidConfig("assignment_strength must lie in [0, 1]")
        if self.beta_star is not None and np.shape(self.beta_star) != (self.m, self.p):
            raise InvalidConfig(f"beta_star must be {self.m} x {self.p}")
        if self.offsets is not None and np.shape(self.offsets) != (self.m,):
            raise InvalidConfig(f"offsets must have {self.m} entries")
        if self.baseline_std < 0:
            raise InvalidConfig("baseline_std must be >= 0")
        return self

    @classmethod
    def from_mapping(cls, kv):
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in kv.items():
            if key not in types:
                raise InvalidConfig(f"unknown generator key {key!r}")
            try:
                out[key] = _convert(key, types[key], raw)
            except ValueError as exc:
                raise InvalidConfig(f"bad value for {key}: {raw!r} ({exc})") from None
        return cls(**out).validate()

    @classmethod
    def from_file(cls, path, overrides=None):
        kv = read_key_values(path)
        kv.update(overrides or {})
        return cls.from_mapping(kv)

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if f.name == "beta_star":
                v = "; ".join(", ".join(repr(float(b)) for b in row) for row in v)
            elif isinstance(v, tuple):
                v = ", ".join(repr(float(b)) for b in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _convert(key, typ, raw):
    if not isinstance(raw, str):
        return raw
    if key == "beta_star":
        return tuple(tuple(float(v) for v in row.split(",")) for row in raw.split(";") if row.strip())
    if typ == "tuple" or typ is tuple:
        return tuple(float(v) for v in raw.split(","))
    if typ in ("int", int):
        return int(raw)
    if typ in ("float", float):
        return float(raw)
    return raw


@dataclass(frozen=True)
class OutcomeModel:
    beta_star: np.ndarray   # (m, p), applies to raw features
    offsets: np.ndarray     # (m,)
    quad: np.ndarray        # (m, p, p) symmetric
    centers: np.ndarray     # (m, p)

    def nonlinear(self, z, kind, amplitude):
        if kind == "none":
            return np.zeros((z.shape[0], self.offsets.size))
        if kind == "quadratic":
            return amplitude * np.einsum("ij,mjk,ik->im", z, self.quad, z) / z.shape[1]
        d2 = ((z[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=2)
        return amplitude * np.exp(-d2)


def outcome_model(cfg):
    """Ground-truth parameters implied by ``cfg`` (deterministic in param_seed)."""
    gen = np.random.default_rng(derive_seed(cfg.param_seed, "synth-params"))
    shared = gen.normal(0.0, 1.0, cfg.p)
    beta = shared + gen.normal(0.0, 0.5, (cfg.m, cfg.p))
    beta[:, cfg.co_index] = 1.0
    offsets = gen.normal(-2.0, 0.5, cfg.m)
    A = gen.normal(size=(cfg.m, cfg.p, cfg.p))
    quad = (A + A.transpose(0, 2, 1)) / 2
    centers = gen.normal(size=(cfg.m, cfg.p))
    if cfg.beta_star is not None:
        beta = np.array(cfg.beta_star, dtype=float)
    if cfg.offsets is not None:
        offsets = np.array(cfg.offsets, dtype=float)
    return OutcomeModel(beta, offsets, quad, centers)


@dataclass(frozen=True)
class SyntheticCohort:
    dataset: object
    oracle: np.ndarray  # (n, m) true outcome of every record under every arm
    config: GeneratorConfig
    model: OutcomeModel

    def __post_init__(self):
        self.oracle.setflags(write=False)

    def subset(self, index):
        index = np.asarray(index, dtype=int)
        return replace(self, dataset=self.dataset.subset(index), oracle=self.oracle[index].copy())


def _noise(gen, cfg, shape):
    eta = np.broadcast_to(np.asarray(cfg.noise_std, dtype=float), (cfg.m,))
    if cfg.noise_kind == "laplace":
        return gen.laplace(0.0, 1.0 / np.sqrt(2.0), shape) * eta
    eps = gen.normal(size=shape) * eta
    if cfg.noise_kind == "contaminated":
        eps = eps + cfg.contamination_shift * (gen.random(shape) < cfg.contamination_frac)
    return eps


def generate(cfg):
    cfg.validate()
    model = outcome_model(cfg)
    gen = np.random.default_rng(derive_seed(cfg.seed, "synth-data"))
    z = gen.normal(size=(cfg.n, cfg.p))
    x = z.copy()
    x[:, cfg.co_index] = cfg.baseline_mean + cfg.baseline_std * z[:, cfg.co_index]
    eps = _noise(gen, cfg, (cfg.n, cfg.m))
    oracle = model.offsets + x @ model.beta_star.T + model.nonlinear(z, cfg.nonlinearity, cfg.amplitude) + eps

    uniform = gen.integers(0, cfg.m, cfg.n)
    if cfg.assignment == "random":
        treatment = uniform
    else:
        biased = gen.random(cfg.n) < cfg.assignment_strength
        treatment = np.where(biased, np.argmin(oracle, axis=1), uniform)

    names = [f"x{j}" for j in range(cfg.p)]
    names[cfg.co_index] = "outcome_current"
    ids = [f"r{i:06d}" for i in range(cfg.n)]
    ds = make_dataset(ids, x, treatment, oracle[np.arange(cfg.n), treatment], names,
                      [f"T{m}" for m in range(cfg.m)], cfg.co_index)
    return SyntheticCohort(ds, oracle, cfg, model)


def true_outcome(cohort, record_id, m):
    try:
        i = cohort.dataset.ids.index(record_id)
    except ValueError:
        raise UnknownRecord(f"no record with id {record_id!r}") from None
    if not 0 <= m < cohort.oracle.shape[1]:
        raise UnknownRecord(f"treatment index {m} out of range")
    return float(cohort.oracle[i, m])


def write_oracle_csv(cohort, path):
    ds = cohort.dataset
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "m", "y_true"])
        for i, rid in enumerate(ds.ids):
            for m, label in enumerate(ds.treatment_names):
                w.writerow([rid, label, repr(float(cohort.oracle[i, m]))])
    os.replace(tmp, path)


def load_oracle_csv(path, ds):
    """Oracle table aligned with ``ds`` rows and treatment indices."""
    pos = {rid: i for i, rid in enumerate(ds.ids)}
    label = {lab: m for m, lab in enumerate(ds.treatment_names)}
    table = np.full((len(ds), ds.n_treatments), np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            i = pos.get(row["id"])
            if i is not None and row["m"] in label:
                table[i, label[row["m"]]] = float(row["y_true"])
    if np.isnan(table).any():
        raise UnknownRecord(f"{path} does not cover every (record, treatment) pair")
    return table
