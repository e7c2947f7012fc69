"""
End-to-end fit of a g-and-k model to log returns of a price series.

The stages chain: ABC with moment-estimate summaries gives a rough
posterior; its mean (with ``B`` on the log scale) starts FDSA; the final FDSA
state and the covariance of its last 1000 states start adaptive Metropolis.
Each stage writes its own CSV, and plot-ready density and QQ tables are
written for every fitted parameter vector.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from gkdist.abc import AbcConfig, run_abc, uniform_box_prior
from gkdist.core import Family, QdParams, pdf, quantile
from gkdist.fdsa import FdsaConfig, GainSchedule, run_fdsa
from gkdist.io import RunManifest, log_returns, read_price_csv, write_csv
from gkdist.mcmc import McmcConfig, flat_b_prior, run_mcmc

__all__ = ["AnalyzeConfig", "STAGES", "analyze", "stage_seeds", "scaled_c0", "fdsa_sigma0"]

log = logging.getLogger(__name__)

STAGES = ("abc", "fdsa", "mcmc", "all")


@dataclass
class AnalyzeConfig:
    stage: str = "all"
    seed: int = 0
    price_column: str = "price"
    abc_N: int = 1_000_000
    abc_M: int = 200
    abc_batch_size: int = 10_000
    prior_lo: list = field(default_factory=lambda: [-1.0, 0.0, -5.0, 0.0])
    prior_hi: list = field(default_factory=lambda: [1.0, 1.0, 5.0, 10.0])
    fdsa_N: int = 5_000
    fdsa_batch_size: int = 100
    fdsa_a0: list = field(default_factory=lambda: [1e-6, 1e-2, 1e-2, 1e-2])
    fdsa_c0: list | str = "scaled"
    fdsa_lo: list = field(default_factory=lambda: [-np.inf, -np.inf, -np.inf, 0.0])
    fdsa_hi: list = field(default_factory=lambda: [np.inf, np.inf, np.inf, np.inf])
    mcmc_N: int = 5_000
    mcmc_t0: int = 100
    mcmc_epsilon: float = 1e-6
    sigma0_window: int = 1000
    c: float = 0.8

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if isinstance(self.fdsa_c0, str) and self.fdsa_c0 not in ("scaled", "auto"):
            raise ValueError(f"fdsa_c0 must be 'scaled', 'auto' or numbers, got {self.fdsa_c0!r}")

    def runs(self, stage: str) -> bool:
        order = {"abc": 0, "fdsa": 1, "mcmc": 2, "all": 2}
        return order[stage] <= order[self.stage]


def stage_seeds(seed: int) -> tuple[int, int, int]:
    a, b, c = np.random.SeedSequence(seed).generate_state(3)
    return int(a), int(b), int(c)


def scaled_c0(x: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    """Perturbation widths matched to each coordinate's scale.

    ``A`` is perturbed by a fraction of the robust spread of the data and the
    remaining coordinates (``log B``, ``g``, ``k``) by the fraction itself.
    The single loss-spread width used by ``auto`` is far too wide for ``A``
    when the data are on a small scale, such as daily log returns.
    """
    q25, q75 = np.quantile(x, [0.25, 0.75])
    spread = (q75 - q25) / 1.349
    if not spread > 0:
        spread = float(np.std(x)) or 1.0
    return fraction * np.array([spread, 1.0, 1.0, 1.0])


def fdsa_sigma0(trajectory: np.ndarray, window: int = 1000) -> np.ndarray:
    """Covariance of the last ``window + 1`` FDSA states, nudged to be positive definite."""
    tail = trajectory[-(window + 1) :]
    sigma = np.atleast_2d(np.cov(tail.T)) if len(tail) > 1 else np.zeros((4, 4))
    scale = np.maximum(np.abs(np.diag(sigma)), 1e-300)
    ridge = 1e-10 * np.diag(np.where(np.diag(sigma) > 0, scale, 1e-12))
    for _ in range(60):
        try:
            np.linalg.cholesky(sigma + ridge)
            return sigma + ridge
        except np.linalg.LinAlgError:
            ridge = ridge * 10.0
    raise np.linalg.LinAlgError("could not regularise FDSA covariance")


def _fit_tables(x: np.ndarray, fits: dict[str, QdParams], out_dir: Path) -> list[str]:
    n = x.size
    lo, hi = np.min(x), np.max(x)
    pad = 0.05 * (hi - lo)
    grid = np.linspace(lo - pad, hi + pad, 400)
    counts, edges = np.histogram(x, bins=min(100, max(10, int(np.sqrt(n)))), density=True)

    paths = []
    write_csv(out_dir / "histogram.csv", ("bin_left", "bin_right", "density"), zip(edges[:-1], edges[1:], counts))
    paths.append("histogram.csv")

    cols = {name: pdf(grid, p) for name, p in fits.items()}
    write_csv(
        out_dir / "density.csv",
        ("x", *[f"pdf_{k}" for k in cols]),
        zip(grid, *cols.values()),
    )
    paths.append("density.csv")

    probs = (np.arange(1, n + 1) - 0.5) / n
    qcols = {name: quantile(probs, p) for name, p in fits.items()}
    write_csv(
        out_dir / "qq.csv",
        ("prob", "observed", *[f"q_{k}" for k in qcols]),
        zip(probs, np.sort(x), *qcols.values()),
    )
    paths.append("qq.csv")
    return paths


def analyze(price_csv: str | Path, out_dir: str | Path, cfg: AnalyzeConfig, argv: list[str] | None = None) -> RunManifest:
    """Run the requested stages and write artifacts plus ``manifest.json`` into ``out_dir``.

    If a stage raises, the manifest is still written with status ``failed``
    and the artifacts produced so far, and the exception propagates.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = asdict(cfg)
    params["price_csv"] = str(price_csv)
    manifest = RunManifest("analyze", params, cfg.seed, list(argv or []))
    abc_seed, fdsa_seed, mcmc_seed = stage_seeds(cfg.seed)
    fits: dict[str, QdParams] = {}
    estimates = []

    try:
        x = log_returns(read_price_csv(price_csv, cfg.price_column))
        write_csv(out / "returns.csv", ("t", "x"), enumerate(x))
        manifest.artifacts.append("returns.csv")

        log.info("ABC: N=%d M=%d", cfg.abc_N, cfg.abc_M)
        abc = run_abc(
            x,
            AbcConfig(
                N=cfg.abc_N,
                M=cfg.abc_M,
                rprior=uniform_box_prior(cfg.prior_lo, cfg.prior_hi),
                kind="moment",
                batch_size=cfg.abc_batch_size,
                seed=abc_seed,
                c=cfg.c,
            ),
        )
        write_csv(out / "abc.csv", ("A", "B", "g", "k", "distance"), np.column_stack([abc.accepted, abc.distances]))
        manifest.artifacts.append("abc.csv")
        abc_mean = abc.accepted.mean(axis=0)
        fits["abc"] = QdParams.from_theta(abc_mean, Family.GK, False, cfg.c)
        estimates.append(("abc", *abc_mean))

        if cfg.runs("fdsa"):
            tf = abc.accepted.copy()
            tf[:, 1] = np.log(tf[:, 1])
            theta0 = tf.mean(axis=0)
            theta0 = np.clip(theta0, cfg.fdsa_lo, cfg.fdsa_hi)
            if isinstance(cfg.fdsa_c0, str):
                c0 = scaled_c0(x) if cfg.fdsa_c0 == "scaled" else None
            else:
                c0 = cfg.fdsa_c0
            log.info("FDSA: N=%d from %s", cfg.fdsa_N, theta0)
            fd = run_fdsa(
                x,
                FdsaConfig(
                    N=cfg.fdsa_N,
                    theta0=theta0,
                    bounds_lo=cfg.fdsa_lo,
                    bounds_hi=cfg.fdsa_hi,
                    batch_size=min(cfg.fdsa_batch_size, x.size),
                    gains=GainSchedule(a0=cfg.fdsa_a0, c0=c0),
                    logB=True,
                    seed=fdsa_seed,
                    c=cfg.c,
                ),
            )
            losses = np.append(fd.loss_estimates, np.nan)
            write_csv(
                out / "fdsa.csv",
                ("iter", "A", "logB", "g", "k", "loss_est"),
                ((t, *row, loss) for t, (row, loss) in enumerate(zip(fd.trajectory, losses))),
            )
            manifest.artifacts.append("fdsa.csv")
            fits["fdsa"] = QdParams.from_theta(fd.final, Family.GK, True, cfg.c)
            estimates.append(("fdsa", fd.final[0], np.exp(fd.final[1]), fd.final[2], fd.final[3]))

        if cfg.runs("mcmc"):
            sigma0 = fdsa_sigma0(fd.trajectory, cfg.sigma0_window)
            log.info("MCMC: N=%d", cfg.mcmc_N)
            mc = run_mcmc(
                x,
                McmcConfig(
                    N=cfg.mcmc_N,
                    theta0=fd.final,
                    Sigma0=sigma0,
                    t0=cfg.mcmc_t0,
                    epsilon=cfg.mcmc_epsilon,
                    logB=True,
                    log_prior=flat_b_prior,
                    c=cfg.c,
                ),
                seed=mcmc_seed,
            )
            write_csv(
                out / "mcmc.csv",
                ("iter", "A", "logB", "g", "k"),
                ((t, *row) for t, row in enumerate(mc.chain)),
            )
            manifest.artifacts.append("mcmc.csv")
            second = mc.chain[len(mc.chain) // 2 :].copy()
            second[:, 1] = np.exp(second[:, 1])
            post_mean = second.mean(axis=0)
            fits["mcmc"] = QdParams.from_theta(post_mean, Family.GK, False, cfg.c)
            estimates.append(("mcmc", *post_mean))

        write_csv(out / "estimates.csv", ("stage", "A", "B", "g", "k"), estimates)
        manifest.artifacts.append("estimates.csv")
        manifest.artifacts.extend(_fit_tables(x, fits, out))
    except Exception as exc:
        manifest.status = "failed"
        manifest.error = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        manifest.write(out / "manifest.json")
    return manifest
