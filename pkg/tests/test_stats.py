import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from causal_hts import (
    DegenerateDataError,
    KernelSpec,
    NumericalError,
    ParameterError,
    TestConfig,
    conditional_independent,
    krr_residuals,
    marginal_independent,
    ols_residuals,
)
from causal_hts.stats import (
    STAGE2_KERNEL,
    STAGE4_KERNEL,
    distance_covariance_stat,
    ols_fit,
    residualize_sequential,
)
from causal_hts.synth import ScmConfig, sample
from oracles import A, D, naive_dcov2, walkthrough

RNG = np.random.default_rng


# configuration types


@pytest.mark.parametrize(
    "kwargs", [dict(alpha=0), dict(alpha=1), dict(method="bootstrap"), dict(method="permutation", permutations=10)]
)
def test_test_config_validation(kwargs):
    with pytest.raises(ParameterError):
        TestConfig(**kwargs)


@pytest.mark.parametrize(
    "factory",
    [
        lambda: KernelSpec.rbf(0, 1),
        lambda: KernelSpec.rbf(1, 0),
        lambda: KernelSpec.polynomial(degree=0),
        lambda: KernelSpec("linear", 1.0),
    ],
)
def test_kernel_spec_validation(factory):
    with pytest.raises(ParameterError):
        factory()


def test_default_kernels():
    assert (STAGE2_KERNEL.kind, STAGE2_KERNEL.degree, STAGE2_KERNEL.coef0, STAGE2_KERNEL.ridge) == ("polynomial", 3, 1.0, 1.0)
    assert (STAGE4_KERNEL.kind, STAGE4_KERNEL.gamma, STAGE4_KERNEL.ridge) == ("rbf", 0.01, 0.1)


# ordinary least squares


def test_ols_exact_fit():
    x = RNG(0).normal(size=200)
    assert np.max(np.abs(ols_residuals(2 * x, x))) < 1e-10


def test_ols_unrelated_regressor():
    x, y = RNG(1).normal(size=(2, 1000))
    r = ols_residuals(y, x)
    assert np.corrcoef(r, y)[0, 1] > 0.95


def test_ols_intercept_only():
    y = RNG(2).normal(size=50) + 3
    assert np.allclose(ols_residuals(y, None), y - y.mean())


def test_ols_rank_deficient_flagged():
    x = RNG(3).normal(size=100)
    fit = ols_fit(x**2, np.column_stack([x, 2 * x]))
    assert fit.rank_deficient and fit.rank == 2


def test_ols_too_few_samples():
    with pytest.raises(ParameterError):
        ols_residuals(np.ones(2), np.ones((2, 1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(20, 200))
def test_ols_residual_orthogonal(seed, p, n):
    rng = RNG(seed)
    X = rng.normal(size=(n, p))
    y = X @ rng.normal(size=p) + rng.normal(size=n)
    r = ols_residuals(y, X)
    scale = np.linalg.norm(X, axis=0) * np.linalg.norm(y)
    assert np.all(np.abs(X.T @ r) < 1e-8 * n * scale)
    assert abs(r.sum()) < 1e-8 * n * np.linalg.norm(y)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_sequential_residual_equals_joint_regression(seed, p):
    rng = RNG(seed)
    Z = rng.normal(size=(300, p)) @ rng.normal(size=(p, p))
    y = Z @ rng.normal(size=p) + rng.uniform(-1, 1, 300)
    seq = residualize_sequential(y, [Z[:, k] for k in range(p)])
    assert np.allclose(seq, ols_residuals(y, Z), atol=1e-8)
    rev = residualize_sequential(y, [Z[:, k] for k in reversed(range(p))])
    assert np.allclose(seq, rev, atol=1e-8)


# kernel ridge


def test_krr_zero_response():
    x = RNG(0).normal(size=(100, 1))
    assert np.max(np.abs(krr_residuals(np.zeros(100), x, STAGE4_KERNEL))) < 1e-12


def test_krr_matches_closed_form():
    rng = RNG(1)
    x = rng.normal(size=(80, 2))
    y = rng.normal(size=80)
    K = np.exp(-0.3 * ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    expected = y - K @ np.linalg.solve(K + 0.5 * np.eye(80), y)
    assert np.allclose(krr_residuals(y, x, KernelSpec.rbf(0.3, 0.5)), expected)


def test_krr_deterministic():
    rng = RNG(2)
    x, y = rng.normal(size=(2, 150))
    a = krr_residuals(y, x, STAGE2_KERNEL)
    b = krr_residuals(y, x, STAGE2_KERNEL)
    assert np.array_equal(a, b)


def test_krr_needs_regressors_and_samples():
    with pytest.raises(ParameterError):
        krr_residuals(np.ones(20), np.empty((20, 0)), STAGE4_KERNEL)
    with pytest.raises(ParameterError):
        krr_residuals(np.ones(5), np.ones((5, 1)), STAGE4_KERNEL)


def test_krr_ridge_ladder(monkeypatch):
    seen = []
    real = linalg.solve

    def flaky(a, b, **kw):
        seen.append(a[0, 0])
        if len(seen) < 3:
            raise linalg.LinAlgError("singular")
        return real(a, b, **kw)

    monkeypatch.setattr(linalg, "solve", flaky)
    x = RNG(3).normal(size=(30, 1))
    krr_residuals(np.ones(30), x, KernelSpec.rbf(1.0, 0.1))
    diag = np.array(seen) - 1.0  # rbf diagonal is 1
    assert np.allclose(diag, [0.1, 1.0, 10.0])


def test_krr_ridge_ladder_gives_up(monkeypatch):
    calls = []

    def broken(a, b, **kw):
        calls.append(1)
        raise linalg.LinAlgError("singular")

    monkeypatch.setattr(linalg, "solve", broken)
    with pytest.raises(NumericalError):
        krr_residuals(np.ones(30), RNG(4).normal(size=(30, 1)), STAGE4_KERNEL)
    assert len(calls) == 4


def test_krr_square_default_rbf_residual_independent():
    rng = RNG(5)
    x = rng.normal(size=500)
    y = x**2 + 0.1 * rng.normal(size=500)
    r = krr_residuals(y, x, STAGE4_KERNEL)
    assert marginal_independent(r, x).independent


def test_krr_product_needs_both_parents():
    rng = RNG(6)
    x1, x2 = rng.uniform(-1, 1, (2, 1000))
    x3 = x1 * x2 + 0.1 * rng.uniform(-1, 1, 1000)
    alone = krr_residuals(x3, x1, STAGE2_KERNEL)
    both = krr_residuals(x3, np.column_stack([x1, x2]), STAGE2_KERNEL)
    assert not marginal_independent(alone, x1).independent
    assert marginal_independent(both, x1).independent


# marginal test


def test_dcov_statistic_matches_naive():
    rng = RNG(7)
    for n in (5, 37, 200):
        x, y = rng.normal(size=(2, n))
        y = y + x**2
        assert np.isclose(distance_covariance_stat(x, y), n * naive_dcov2(x, y), rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(20, 120))
def test_dcov_statistic_matches_naive_random(seed, n):
    rng = RNG(seed)
    x = rng.normal(size=n)
    y = rng.standard_t(3, size=n) + np.sin(x)
    assert np.isclose(distance_covariance_stat(x, y), n * naive_dcov2(x, y), rtol=1e-8, atol=1e-12)


def test_marginal_identical_columns_dependent():
    x = RNG(8).normal(size=100)
    res = marginal_independent(x, x)
    assert not res.independent and res.p_value < 1e-6


def test_marginal_detects_uncorrelated_square():
    x = RNG(9).normal(size=500)
    assert abs(np.corrcoef(x, x**2)[0, 1]) < 0.15
    assert not marginal_independent(x, x**2).independent


def test_marginal_constant_column():
    with pytest.raises(DegenerateDataError):
        marginal_independent(np.ones(50), RNG(0).normal(size=50))


@pytest.mark.parametrize("n", [5, 19])
def test_marginal_needs_twenty_samples(n):
    with pytest.raises(ParameterError):
        marginal_independent(RNG(0).normal(size=n), RNG(1).normal(size=n))


def test_marginal_length_mismatch():
    with pytest.raises(ParameterError):
        marginal_independent(RNG(0).normal(size=30), RNG(1).normal(size=31))


@pytest.mark.parametrize("method", ["asymptotic", "permutation"])
def test_verdict_matches_p_value(method):
    rng = RNG(10)
    x, y = rng.normal(size=(2, 100))
    cfg = TestConfig(method=method, permutations=99)
    for a, b in [(x, y), (x, x + 0.5 * y)]:
        res = marginal_independent(a, b, cfg)
        assert 0 <= res.p_value <= 1
        assert res.independent == (res.p_value > cfg.alpha)


def test_permutation_p_value_resolution():
    rng = RNG(11)
    x = rng.normal(size=60)
    res = marginal_independent(x, x, TestConfig(method="permutation", permutations=199))
    assert res.p_value == pytest.approx(1 / 200)


def test_permutation_reproducible():
    rng = RNG(12)
    x, y = rng.normal(size=(2, 80))
    cfg = TestConfig(method="permutation", seed=3)
    assert marginal_independent(x, y, cfg) == marginal_independent(x, y, cfg)


# conditional test


def _linear_chain(n, seed):
    rng = RNG(seed)
    a = rng.uniform(-1, 1, n)
    b = a + 0.5 * rng.uniform(-1, 1, n)
    c = b + 0.5 * rng.uniform(-1, 1, n)
    return a, b, c


def test_ci_chain_screened_off():
    a, b, c = _linear_chain(1000, 0)
    assert conditional_independent(a, c, b).independent
    assert not conditional_independent(a, c).independent


def test_ci_collider_opens():
    rng = RNG(1)
    a, b = rng.uniform(-1, 1, (2, 1000))
    c = a + b + 0.3 * rng.uniform(-1, 1, 1000)
    assert conditional_independent(a, b, None).independent
    assert not conditional_independent(a, b, c).independent


def test_ci_walkthrough_quadratic():
    ds = sample(walkthrough(), 1000, ScmConfig("quadratic", "uniform", seed=0))
    res = conditional_independent(ds.column(A), ds.column(D), ds.columns([1, 2]))
    assert res.independent


@pytest.mark.parametrize("method", ["asymptotic", "permutation"])
def test_ci_empty_z_delegates(method):
    rng = RNG(2)
    x, y = rng.normal(size=(2, 120))
    y = y + 0.2 * x
    cfg = TestConfig(method=method, seed=5)
    assert conditional_independent(x, y, np.empty((120, 0)), cfg) == marginal_independent(x, y, cfg)


def test_ci_constant_conditioning_column():
    rng = RNG(3)
    x, y = rng.normal(size=(2, 50))
    with pytest.raises(DegenerateDataError):
        conditional_independent(x, y, np.ones(50))


def test_ci_permutation_mode_agrees_on_clear_cases():
    a, b, c = _linear_chain(400, 4)
    cfg = TestConfig(method="permutation", seed=0)
    assert conditional_independent(a, c, b, cfg).independent
    assert not conditional_independent(a, b, c, cfg).independent


def test_power_grows_with_n():
    # non-strict monotonicity of the rejection rate for a weak quadratic alternative
    rates = []
    for n in (100, 300, 1000):
        hits = 0
        for seed in range(50):
            rng = RNG(seed)
            x = rng.normal(size=n)
            y = 0.15 * x**2 + rng.normal(size=n)
            hits += not marginal_independent(x, y).independent
        rates.append(hits / 50)
    assert rates[0] <= rates[1] <= rates[2]
    assert rates[2] > 0.5
