"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting; a test that raises first is recorded as a FAIL by conftest.
"""

import csv
import functools
import math
import os
import time

import numpy as np
import pytest
from scipy import integrate, optimize, stats

from conftest import random_valid_params
from gkdist import QdParams, cdf, pdf, quantile, sample
from gkdist.abc import AbcConfig, _weights, batch_generators, run_abc, simulate_summaries, summarize
from gkdist.abc import uniform_box_prior, weighted_distances
from gkdist.bench import OPERATIONS, run_bench
from gkdist.fdsa import FdsaConfig, GainSchedule, batch_loss, fdsa_gradient, run_fdsa
from gkdist.mcmc import McmcConfig, log_likelihood, positive_k_prior, run_mcmc
from gkdist.orderstats import simulate_octiles
from gkdist.pipeline import AnalyzeConfig, analyze
from gkdist.validity import compute_c_star, safe_k_floor, validity_grid

TRUTH = np.array([3.0, 1.0, 2.0, 0.5])
FAMILIES = ("gk", "gh")


@pytest.fixture(scope="module")
def gk_data():
    return sample(1000, QdParams.gk(*TRUTH), seed=2024)


def exact_nll(x, theta, logB):
    return -log_likelihood(x, theta, logB=logB)


# --- 1 ---------------------------------------------------------------------------------


def test_c_star(record_acceptance):
    record = functools.partial(record_acceptance, "1 c* reproduction")
    start = time.perf_counter()
    c = compute_c_star()
    elapsed = time.perf_counter() - start
    ok = abs(c - 0.83) <= 0.01 and elapsed < 1.0
    record(ok, f"c* = {c:.6f} (target 0.83 +/- 0.01), {elapsed:.3f} s (limit 1 s)")
    assert ok


# --- 2 ---------------------------------------------------------------------------------


def test_validity_region(record_acceptance):
    record = functools.partial(record_acceptance, "2 validity region")
    g = np.round(np.arange(-100, 101) / 10, 1)
    k = np.round(np.arange(-60, 11) / 100, 2)
    start = time.perf_counter()
    cells = validity_grid(g, k, c=0.8)
    elapsed = time.perf_counter() - start
    bad_a = [(gi, ki) for gi, ki, v in cells if ki >= 0 and not v.valid]
    bad_b = [(gi, ki) for gi, ki, v in cells if ki < -0.5 and v.valid]
    bad_c = [(gi, ki) for gi, ki, v in cells if ki >= safe_k_floor(gi) - 1e-12 and not v.valid]
    ok = not (bad_a or bad_b or bad_c) and elapsed < 300
    record(
        ok,
        f"{len(cells)} cells; violations (a) {len(bad_a)}, (b) {len(bad_b)}, (c) {len(bad_c)}; {elapsed:.1f} s (limit 300 s)",
    )
    assert ok, (bad_a[:5], bad_b[:5], bad_c[:5])


# --- 3 ---------------------------------------------------------------------------------


def test_normal_reduction(record_acceptance):
    record = functools.partial(record_acceptance, "3 normal reduction")
    u = np.arange(1, 1000) / 1000
    A, B = 1.5, 0.7
    worst = 0.0
    for fam in FAMILIES:
        p = QdParams(fam, A, B, 0.0, 0.0)
        x = stats.norm.ppf(u, A, B)
        worst = max(
            worst,
            np.max(np.abs(quantile(u, p) - x)),
            np.max(np.abs(cdf(x, p) - u)),
            np.max(np.abs(pdf(x, p) - stats.norm.pdf(x, A, B))),
        )
    ok = worst <= 1e-8
    record(ok, f"max abs deviation {worst:.2e} over u = 0.001..0.999, both families (limit 1e-8)")
    assert ok


# --- 4 ---------------------------------------------------------------------------------


def test_roundtrips(record_acceptance):
    record = functools.partial(record_acceptance, "4 roundtrip suite")
    rng = np.random.default_rng(404)
    worst_u, worst_x = 0.0, 0.0
    for fam in FAMILIES:
        for _ in range(1000):
            p = random_valid_params(rng, fam)
            u = rng.uniform(1e-4, 1 - 1e-4)
            worst_u = max(worst_u, abs(cdf(quantile(u, p), p) - u))
            x = quantile(rng.uniform(1e-4, 1 - 1e-4), p)
            # relative error with a floor at the distribution's scale for x near zero
            worst_x = max(worst_x, abs(quantile(cdf(x, p), p) - x) / max(abs(x), p.B))
    ok = worst_u <= 1e-8 and worst_x <= 1e-6
    record(ok, f"cdf(quantile) max err {worst_u:.2e} (limit 1e-8); quantile(cdf) max rel err {worst_x:.2e} (limit 1e-6); 2 x 1000 pairs")
    assert ok


# --- 5 ---------------------------------------------------------------------------------


def test_density(record_acceptance):
    record = functools.partial(record_acceptance, "5 density correctness")
    rng = np.random.default_rng(505)
    probes = np.array([0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.98])
    cuts = [1e-9, 1e-4, 0.01, 0.1, 0.5, 0.9, 0.99, 1 - 1e-4, 1 - 1e-9]
    worst_fd, worst_mass = 0.0, 0.0
    for i in range(20):
        p = random_valid_params(rng, FAMILIES[i % 2])
        iqr = quantile(0.75, p) - quantile(0.25, p)
        # near the validity boundary the density bends sharply, so the step is small;
        # cdf rounding error at this step is still around 1e-10 relative
        h = 1e-6 * iqr
        x = quantile(probes, p)
        fd = (cdf(x + h, p) - cdf(x - h, p)) / (2 * h)
        worst_fd = max(worst_fd, np.max(np.abs(pdf(x, p) / fd - 1)))
        edges = quantile(np.array(cuts), p)
        mass = sum(
            integrate.quad(lambda t: pdf(t, p), lo, hi, limit=200, epsabs=1e-12, epsrel=1e-10)[0]
            for lo, hi in zip(edges[:-1], edges[1:])
        )
        # the two tails beyond the outer cuts carry 2e-9 of mass
        worst_mass = max(worst_mass, abs(mass + 2e-9 - 1))
    ok = worst_fd <= 1e-5 and worst_mass <= 1e-4
    record(ok, f"pdf vs central difference max rel err {worst_fd:.2e} (limit 1e-5); |integral - 1| max {worst_mass:.2e} (limit 1e-4); 20 sets")
    assert ok


# --- 6 ---------------------------------------------------------------------------------


def test_sampler(record_acceptance):
    record = functools.partial(record_acceptance, "6 sampler correctness")
    rng = np.random.default_rng(606)
    pvals = []
    for i in range(20):
        p = random_valid_params(rng, FAMILIES[i % 2])
        x = sample(10_000, p, rng)
        pvals.append(stats.kstest(x, lambda t: cdf(t, p)).pvalue)
    octile_p = {}
    for n, reps in ((8, 5000), (1000, 2000)):
        p = QdParams.gk(*TRUTH)
        fast = simulate_octiles(p, n, seed=rng, size=reps)
        full = np.sort(sample(reps * n, p, rng).reshape(reps, n), axis=1)
        idx = np.array([1, 2, 3, 4, 5, 6, 7]) * n // 8 - 1
        octile_p[n] = min(stats.ks_2samp(fast[:, j], full[:, idx[j]]).pvalue for j in range(7))
    # seven octiles per n are tested jointly, so each KS test gets a Bonferroni share of 1%
    ok = min(pvals) > 0.01 and all(v > 0.01 / 7 for v in octile_p.values())
    record(
        ok,
        f"draws vs cdf: min KS p = {min(pvals):.3f} over 20 sets (level 0.01); "
        f"octiles vs sorting: min p n=8 {octile_p[8]:.3f}, n=1000 {octile_p[1000]:.3f} (level 0.01/7)",
    )
    assert ok


# --- 7 ---------------------------------------------------------------------------------


def test_mcmc_recovery(record_acceptance, gk_data):
    record = functools.partial(record_acceptance, "7 adaptive MCMC recovery")
    cfg = McmcConfig(
        N=10_000,
        theta0=[2.5, 1.5, 1.0, 0.2],
        Sigma0=0.01 * np.eye(4),
        log_prior=positive_k_prior,
    )
    start = time.perf_counter()
    res = run_mcmc(gk_data, cfg, seed=7)
    elapsed = time.perf_counter() - start
    half = res.chain[res.chain.shape[0] // 2 :]
    mean, sd = half.mean(axis=0), half.std(axis=0, ddof=1)
    z = np.abs(mean - TRUTH) / sd
    cov_err = float(np.max(np.abs(res.sample_cov - np.cov(res.chain[1:].T))))
    ok = bool(np.all(z <= 3)) and cov_err <= 1e-10 and elapsed < 900
    record(
        ok,
        f"second-half means {np.round(mean, 3).tolist()}, |error|/sd {np.round(z, 2).tolist()} (limit 3); "
        f"incremental vs batch covariance {cov_err:.1e} (limit 1e-10); {elapsed:.0f} s",
    )
    assert ok


# --- 8 ---------------------------------------------------------------------------------


def test_fdsa_recovery(record_acceptance, gk_data):
    record = functools.partial(record_acceptance, "8 FDSA recovery")
    x = gk_data
    start = np.array([2.5, math.log(1.5), 1.0, 0.2])
    ref = optimize.minimize(
        lambda th: exact_nll(x, th, True) if th[3] >= 0 else np.inf,
        start,
        method="Nelder-Mead",
        options=dict(xatol=1e-9, fatol=1e-9, maxiter=40_000, maxfev=80_000),
    )
    cfg = FdsaConfig(
        N=10_000,
        theta0=start,
        bounds_lo=[-np.inf, -np.inf, -np.inf, 0.0],
        batch_size=100,
        gains=GainSchedule(a0=1e-2, c0=0.1),
        logB=True,
        seed=3,
    )
    res = run_fdsa(x, cfg)
    nll = exact_nll(x, res.final, True)
    rel = abs(nll - ref.fun) / abs(ref.fun)

    theta = np.array([2.8, 0.1, 1.7, 0.4])
    lo, hi = np.array([-np.inf, -np.inf, -np.inf, 0.0]), np.full(4, np.inf)
    c_t = np.full(4, 0.05)
    grad, _ = fdsa_gradient(lambda th: batch_loss(x, x.size, th, logB=True), theta, c_t, lo, hi)
    eye = np.eye(4)
    fd = np.array([(exact_nll(x, theta + c_t * e, True) - exact_nll(x, theta - c_t * e, True)) / (2 * c_t[i]) for i, e in enumerate(eye)])
    grad_err = float(np.max(np.abs(grad - fd) / np.maximum(1, np.abs(fd))))

    ok = rel <= 1e-3 and grad_err <= 1e-10
    record(
        ok,
        f"final exact NLL {nll:.4f} vs reference {ref.fun:.4f}, rel diff {rel:.1e} (limit 1e-3); "
        f"m=n gradient vs central differences {grad_err:.1e} (limit 1e-10)",
    )
    assert ok


def test_exchange_rate_fit(record_acceptance, tmp_path):
    record = functools.partial(record_acceptance, "8 exchange-rate MLE (conditional)")
    path = os.environ.get("GKDIST_EXCHANGE_CSV")
    if not path:
        record(None, "GKDIST_EXCHANGE_CSV not set; the original dataset is not bundled")
        pytest.skip("exchange-rate dataset not supplied")
    analyze(path, tmp_path, AnalyzeConfig(stage="fdsa", fdsa_N=10_000, seed=0))
    with open(tmp_path / "estimates.csv") as fh:
        rows = {r["stage"]: r for r in csv.DictReader(fh)}
    est = np.array([float(rows["fdsa"][k]) for k in ("A", "B", "g", "k")])
    target = np.array([9.1e-5, 1.7e-3, 0.020, 0.35])
    rel = np.abs(est / target - 1)
    ok = bool(np.all(rel <= 0.2))
    record(ok, f"FDSA estimate {est.tolist()}, relative errors {np.round(rel, 3).tolist()} (limit 0.2)")
    assert ok


# --- 9 ---------------------------------------------------------------------------------

ABC_LO, ABC_HI = [0.0, 0.0, 0.0, 0.0], [10.0, 5.0, 5.0, 10.0]


def test_abc_prior_sample(record_acceptance, gk_data):
    record = functools.partial(record_acceptance, "9 ABC prior sample at M=N")
    # M = N needs one batch holding every draw
    cfg = AbcConfig(N=5000, M=5000, rprior=uniform_box_prior(ABC_LO, ABC_HI), batch_size=5000, seed=1)
    res = run_abc(gk_data, cfg)
    prior = cfg.rprior(5000, batch_generators(1, 1)[0])
    key = lambda a: a[np.lexsort(a.T[::-1])]
    ok = res.accepted.shape == prior.shape and np.array_equal(key(res.accepted), key(prior))
    record(ok, "accepted set equals the 5000 prior draws exactly" if ok else "accepted set differs from the prior draws")
    assert ok


def test_abc_envelope(record_acceptance):
    record = functools.partial(record_acceptance, "9 ABC recovery envelope")
    x = sample(10_000, QdParams.gk(*TRUTH), seed=909)
    prior = uniform_box_prior(ABC_LO, ABC_HI)
    means, sds = [], []
    runs = 60
    for seed in range(runs):
        res = run_abc(x, AbcConfig(N=1_000_000, M=200, rprior=prior, kind="moment", seed=seed))
        means.append(res.accepted.mean(axis=0))
        sds.append(res.accepted.std(axis=0, ddof=1))
    means, sds = np.array(means), np.array(sds)
    # runs 0..29 are the runs under test, runs 30..59 build the envelope
    test, ref = means[: runs // 2], means[runs // 2 :]
    lo, hi = np.percentile(ref, [2.5, 97.5], axis=0)
    centre = test.mean(axis=0)
    inside = bool(np.all((centre >= lo) & (centre <= hi)))
    spread = 3 * sds.mean(axis=0)
    covers = bool(np.all((TRUTH >= lo - spread) & (TRUTH <= hi + spread)))
    ok = inside and covers
    record(
        ok,
        f"mean of {len(test)} run means {np.round(centre, 3).tolist()} within 95% envelope of {len(ref)} other runs "
        f"[{np.round(lo, 3).tolist()}, {np.round(hi, 3).tolist()}]: {inside}; truth within envelope +/- 3 sd: {covers}",
    )
    assert ok


def test_abc_batched(record_acceptance, gk_data):
    record = functools.partial(record_acceptance, "9 ABC batched equals single batch")
    b = 2000
    cfg = AbcConfig(N=2 * b, M=40, rprior=uniform_box_prior(ABC_LO, ABC_HI), batch_size=b, seed=5)
    res = run_abc(gk_data, cfg)
    thetas, sims = [], []
    for rng in batch_generators(5, 2):
        th = cfg.rprior(b, rng)
        thetas.append(th)
        sims.append(simulate_summaries(th, gk_data.size, "moment", "gk", rng))
    theta, sim = np.vstack(thetas), np.vstack(sims)
    d = weighted_distances(sim, summarize(gk_data, "moment"), _weights(sims[0]))
    order = np.argsort(d, kind="stable")[:40]
    ok = np.array_equal(res.accepted, theta[order]) and np.array_equal(res.distances, d[order])
    record(ok, f"N = 2 x {b}: accepted rows and distances identical to one selection over all {2 * b}")
    assert ok


# --- 10 --------------------------------------------------------------------------------


def test_bench_orderings(record_acceptance):
    record = functools.partial(record_acceptance, "10 bench orderings")
    rep = run_bench(n_points=100, repeats=30, warmup=3, seed=0)
    rows = {op: rep.row(op) for op in OPERATIONS}
    checks = {}
    for fam in FAMILIES:
        t = {op: getattr(rows[op], f"{fam}_us") for op in OPERATIONS}
        checks[f"{fam} cdf>quantile"] = t["cdf"] > t["quantile"]
        checks[f"{fam} pdf>sample"] = t["pdf"] > t["sample"]
    ok = all(checks.values())
    ratios = {op: round(rows[op].ratio_gk, 1) for op in OPERATIONS}
    record(ok, f"{checks}; GK/normal time ratios {ratios}")
    assert ok
