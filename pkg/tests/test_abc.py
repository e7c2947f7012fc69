import numpy as np
import pytest
from scipy import stats

from gkdist import ConfigError, DegenerateSummaryError, DomainError, QdParams, sample
from gkdist.abc import (
    AbcConfig,
    SummaryKind,
    batch_generators,
    run_abc,
    simulate_summaries,
    summarize,
    uniform_box_prior,
    weighted_distances,
)
from gkdist.abc import _weights

TRUTH = np.array([3.0, 1.0, 2.0, 0.5])
LO = [0.0, 0.0, 0.0, 0.0]
HI = [10.0, 5.0, 5.0, 10.0]


@pytest.fixture(scope="module")
def data():
    return sample(1000, QdParams.gk(*TRUTH), seed=100)


def test_summarize_examples():
    np.testing.assert_array_equal(summarize([3, 1, 2], "order"), [1, 2, 3])
    np.testing.assert_array_equal(summarize(np.arange(1, 9), SummaryKind.OCTILES), np.arange(1, 8))
    np.testing.assert_allclose(summarize(np.arange(1, 9), "moment"), [4, 4, 0, 1])


def test_summarize_errors():
    with pytest.raises(DomainError):
        summarize([], "order")
    with pytest.raises(DomainError):
        summarize([1, 2, 3], "octile")
    with pytest.raises(DomainError):
        summarize([1, 2, 3], "quartiles")


def test_config_validation():
    prior = uniform_box_prior(LO, HI)
    with pytest.raises(ConfigError):
        AbcConfig(N=10, M=11, rprior=prior)
    with pytest.raises(ConfigError):
        AbcConfig(N=10, M=0, rprior=prior)
    with pytest.raises(ConfigError):
        AbcConfig(N=100, M=20, rprior=prior, batch_size=10)
    with pytest.raises(ConfigError):
        uniform_box_prior([0, 0, 0, 1], [1, 1, 1, 1])


def _prior_draws(cfg):
    sizes = [cfg.batch_size] * (cfg.N // cfg.batch_size) + ([cfg.N % cfg.batch_size] if cfg.N % cfg.batch_size else [])
    out = []
    for size, rng in zip(sizes, batch_generators(cfg.seed, len(sizes))):
        out.append(cfg.rprior(size, rng))
    return np.vstack(out)


def test_accept_everything_returns_prior_sample(data):
    cfg = AbcConfig(N=3000, M=3000, rprior=uniform_box_prior(LO, HI), batch_size=3000, seed=1)
    res = run_abc(data, cfg)
    prior = _prior_draws(cfg)
    key = lambda a: a[np.lexsort(a.T[::-1])]
    np.testing.assert_array_equal(key(res.accepted), key(prior))


def test_partial_last_batch(data):
    cfg = AbcConfig(N=2500, M=100, rprior=uniform_box_prior(LO, HI), batch_size=1000, seed=2)
    res = run_abc(data, cfg)
    prior = _prior_draws(cfg)
    assert len(prior) == 2500
    # every accepted row is one of the prior draws
    assert all(np.any(np.all(prior == row, axis=1)) for row in res.accepted)


def test_point_mass_prior(data):
    prior = lambda count, rng: np.tile(TRUTH, (count, 1))
    res = run_abc(data, AbcConfig(N=2000, M=2000, rprior=prior, batch_size=2000, seed=3))
    np.testing.assert_array_equal(res.accepted, np.tile(TRUTH, (2000, 1)))
    # weights are the simulation variances at the truth, so distances behave
    # roughly like chi-square(4) draws
    assert np.all(np.isfinite(res.distances))
    assert np.median(res.distances) < stats.chi2(4).ppf(0.99)


def test_selects_the_m_smallest_distances(data):
    cfg = AbcConfig(N=5000, M=50, rprior=uniform_box_prior(LO, HI), batch_size=5000, seed=4)
    res = run_abc(data, cfg)
    rng = batch_generators(4, 1)[0]
    theta = cfg.rprior(5000, rng)
    sims = simulate_summaries(theta, data.size, "moment", "gk", rng)
    ok = np.all(np.isfinite(sims), axis=1)
    v = np.var(sims[ok], axis=0, ddof=1)
    s0 = summarize(data, "moment")
    d = np.array([np.sum((s - s0) ** 2 / v) if np.all(np.isfinite(s)) else np.inf for s in sims])
    order = np.argsort(d, kind="stable")[:50]
    np.testing.assert_allclose(res.distances, d[order], rtol=1e-12)
    np.testing.assert_array_equal(res.accepted, theta[order])
    np.testing.assert_allclose(res.weights_v, v, rtol=1e-12)


def test_batched_equals_single_selection(data):
    b = 2000
    cfg = AbcConfig(N=2 * b, M=40, rprior=uniform_box_prior(LO, HI), batch_size=b, seed=5)
    res = run_abc(data, cfg)
    thetas, sims = [], []
    for rng in batch_generators(5, 2):
        th = cfg.rprior(b, rng)
        thetas.append(th)
        sims.append(simulate_summaries(th, data.size, "moment", "gk", rng))
    v = _weights(sims[0])
    theta, sim = np.vstack(thetas), np.vstack(sims)
    d = weighted_distances(sim, summarize(data, "moment"), v)
    order = np.argsort(d, kind="stable")[:40]
    np.testing.assert_array_equal(res.accepted, theta[order])
    np.testing.assert_array_equal(res.distances, d[order])


def test_deterministic_given_seed(data):
    cfg = dict(N=4000, M=20, rprior=uniform_box_prior(LO, HI), batch_size=1000, seed=6)
    a = run_abc(data, AbcConfig(**cfg))
    b = run_abc(data, AbcConfig(**cfg))
    np.testing.assert_array_equal(a.accepted, b.accepted)


def test_scale_equivariance(data):
    a, b = -2.0, 3.0
    cfg = dict(N=4000, M=30, batch_size=2000, seed=7)
    res = run_abc(data, AbcConfig(rprior=uniform_box_prior(LO, HI), **cfg))
    lo2 = [a + b * LO[0], b * LO[1], LO[2], LO[3]]
    hi2 = [a + b * HI[0], b * HI[1], HI[2], HI[3]]
    res2 = run_abc(a + b * data, AbcConfig(rprior=uniform_box_prior(lo2, hi2), **cfg))
    expected = res.accepted.copy()
    expected[:, 0] = a + b * expected[:, 0]
    expected[:, 1] = b * expected[:, 1]
    np.testing.assert_allclose(res2.accepted, expected, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(res2.distances, res.distances, rtol=1e-6)


@pytest.mark.parametrize("kind", ["order", "octile", "moment"])
@pytest.mark.parametrize("family", ["gk", "gh"])
def test_all_summary_kinds_run(kind, family):
    x = sample(200, QdParams(family, 3, 1, 2, 0.3), seed=8)
    res = run_abc(x, AbcConfig(N=1000, M=10, rprior=uniform_box_prior(LO, [10, 5, 5, 1]), kind=kind, batch_size=500, seed=9), family)
    assert res.accepted.shape == (10, 4)
    assert np.all(np.diff(res.distances) >= 0)
    assert np.all((res.accepted >= LO) & (res.accepted <= [10, 5, 5, 1]))


def test_failed_simulations_are_never_accepted(data):
    def prior(count, rng):
        th = rng.uniform(LO, HI, size=(count, 4))
        th[::2, 1] = -1.0
        return th

    res = run_abc(data, AbcConfig(N=2000, M=50, rprior=prior, batch_size=1000, seed=10))
    assert res.diagnostics["failed_simulations"] == 1000
    assert np.all(res.accepted[:, 1] > 0)


def test_degenerate_weights():
    prior = lambda count, rng: np.tile([0.0, -1.0, 0.0, 0.0], (count, 1))
    with pytest.raises(DegenerateSummaryError):
        run_abc(np.arange(20.0), AbcConfig(N=100, M=5, rprior=prior, batch_size=100, seed=0))
    sims = np.column_stack([np.arange(5.0), np.ones(5)])
    with pytest.raises(DegenerateSummaryError, match="coordinate 1"):
        _weights(sims)


def test_bad_prior_shape():
    prior = lambda count, rng: np.zeros((count, 3))
    with pytest.raises(ConfigError):
        run_abc(np.arange(20.0), AbcConfig(N=100, M=5, rprior=prior, batch_size=100, seed=0))


def test_prior_draws_within_box():
    rprior = uniform_box_prior(LO, HI)
    th = rprior(10_000, np.random.default_rng(0))
    assert np.all((th >= LO) & (th <= HI))
