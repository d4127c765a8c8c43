import math

import numpy as np
import pytest

from robustrx.baselines import fit_ols
from robustrx.errors import InvalidConfig, UnknownRecord
from robustrx.rlad import fit_rlad
from robustrx.synth import GeneratorConfig, generate, load_oracle_csv, true_outcome, write_oracle_csv


def _with_intercept(X):
    return np.column_stack([X, np.ones(len(X))])


def test_noiseless_limit_is_linear():
    cfg = GeneratorConfig(n=400, p=4, m=3, noise_std=(1e-12,), nonlinearity="none", seed=2)
    c = generate(cfg)
    ds, model = c.dataset, c.model
    expect = model.offsets[ds.treatment] + np.einsum("ij,ij->i", ds.X, model.beta_star[ds.treatment])
    np.testing.assert_allclose(ds.outcome_next, expect, rtol=0, atol=1e-9)


def test_random_assignment_is_balanced():
    n = 10_000
    ds = generate(GeneratorConfig(n=n, p=3, m=2, assignment="random", seed=5)).dataset
    ones = int(ds.treatment.sum())
    assert abs(ones - n / 2) <= 3 * math.sqrt(n * 0.25)


def test_outcome_biased_prefers_best_arm():
    c = generate(GeneratorConfig(n=3000, p=3, m=3, assignment_strength=0.8, seed=1))
    best = np.argmin(c.oracle, axis=1)
    # 0.8 biased plus one third of the uniform draws
    assert np.mean(c.dataset.treatment == best) == pytest.approx(0.8 + 0.2 / 3, abs=0.03)


def test_generation_is_bit_identical(small_cohort):
    again = generate(small_cohort.config)
    assert np.array_equal(again.oracle, small_cohort.oracle)
    assert np.array_equal(again.dataset.X, small_cohort.dataset.X)
    assert np.array_equal(again.dataset.treatment, small_cohort.dataset.treatment)
    other = generate(GeneratorConfig(n=600, p=5, m=3, seed=12, param_seed=3))
    assert not np.array_equal(other.oracle, small_cohort.oracle)


def test_factual_lookup(small_cohort):
    ds = small_cohort.dataset
    for i in (0, 17, 599):
        assert true_outcome(small_cohort, ds.ids[i], int(ds.treatment[i])) == ds.outcome_next[i]
    with pytest.raises(UnknownRecord):
        true_outcome(small_cohort, ds.ids[0], 3)
    with pytest.raises(UnknownRecord):
        true_outcome(small_cohort, "nobody", 0)


def test_oracle_best_arm_beats_any_policy(small_cohort):
    oracle = small_cohort.oracle
    x_co = small_cohort.dataset.outcome_current
    best = np.mean(oracle.min(axis=1) - x_co)
    gen = np.random.default_rng(0)
    for _ in range(50):
        chosen = gen.integers(0, 3, len(x_co))
        assert best <= np.mean(oracle[np.arange(len(x_co)), chosen] - x_co)


def test_config_text_round_trip(tmp_path):
    cfg = GeneratorConfig(n=50, p=2, m=2, beta_star=((1.0, 0.5), (1.0, -0.25)), offsets=(0.1, -0.2),
                          noise_std=(0.5, 2.0), noise_kind="laplace", seed=9)
    path = tmp_path / "gen.conf"
    path.write_text(cfg.to_text())
    assert GeneratorConfig.from_file(path) == cfg
    assert GeneratorConfig.from_file(path, {"seed": "10"}).seed == 10


@pytest.mark.parametrize("kw", [
    dict(n=0), dict(co_index=5, p=3), dict(nonlinearity="cubic"), dict(noise_kind="cauchy"),
    dict(noise_std=(1.0, 2.0)), dict(contamination_frac=0.6), dict(beta_star=((1.0,),)),
])
def test_invalid_configs(kw):
    with pytest.raises(InvalidConfig):
        generate(GeneratorConfig(**kw))


def test_unknown_key_rejected():
    with pytest.raises(InvalidConfig):
        GeneratorConfig.from_mapping({"bogus": "1"})
    with pytest.raises(InvalidConfig):
        GeneratorConfig.from_mapping({"n": "many"})


def test_oracle_csv_round_trip(tmp_path, small_cohort):
    path = tmp_path / "oracle.csv"
    write_oracle_csv(small_cohort, path)
    assert np.array_equal(load_oracle_csv(path, small_cohort.dataset), small_cohort.oracle)
    lines = path.read_text().splitlines()
    (tmp_path / "short.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(UnknownRecord):
        load_oracle_csv(tmp_path / "short.csv", small_cohort.dataset)


def test_rlad_recovers_linear_truth():
    c = generate(GeneratorConfig(n=5000, p=5, m=1, nonlinearity="none", noise_kind="gaussian", seed=4))
    ds = c.dataset
    beta = fit_rlad(_with_intercept(ds.X), ds.outcome_next, 1e-3).beta
    assert np.linalg.norm(beta[:5] - c.model.beta_star[0]) <= 0.1


def test_rlad_more_robust_than_ols_under_contamination():
    wins = 0
    for seed in range(20):
        c = generate(GeneratorConfig(n=400, p=5, m=1, nonlinearity="none", noise_kind="contaminated",
                                     seed=seed, param_seed=seed))
        Z = _with_intercept(c.dataset.X)
        y = c.dataset.outcome_next
        truth = c.model.beta_star[0]
        e_rlad = np.linalg.norm(fit_rlad(Z, y, 1e-3).beta[:5] - truth)
        e_ols = np.linalg.norm(fit_ols(Z, y).beta[:5] - truth)
        wins += e_rlad <= e_ols
    assert wins > 10
