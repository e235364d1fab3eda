"""Simulation designs, the method benchmark, and Monte Carlo checks of the asymptotics."""

from __future__ import annotations

import enum
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import baselines, core
from .errors import BenchmarkFailure, BScalingError

G_SLOPE = 20.0
LOG_FLOOR = 1e-12


class Latent(str, enum.Enum):
    UNIFORM = "uniform"
    NORMAL = "normal"


class Family(str, enum.Enum):
    LOGIT = "logit"
    MIXED = "mixed"


@dataclass(frozen=True)
class SimConfig:
    n: int
    K: int
    latent: Latent = Latent.UNIFORM
    noise_variance: float = 0.1
    nu: float = 2.0
    H: int = 5
    family: Family = Family.LOGIT
    seed: int = 0
    # Seed for the measurement functions (s_k, Z_kt); None draws them from ``seed``.
    world_seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "latent", Latent(self.latent))
        object.__setattr__(self, "family", Family(self.family))
        if self.n < 1 or self.K < 2 or self.H < 1 or self.noise_variance < 0:
            raise ValueError(f"invalid simulation config {self}")


# Stream ids inside one seed family, so each draw can be reproduced in isolation.
_LATENT, _WORLD, _NOISE = 0, 1, 2


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 stream addressed by ``(seed, *key)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def logit_g(x):
    return 1.0 / (1.0 + np.exp(G_SLOPE * (np.asarray(x, dtype=float) - 0.5)))


def log_g(x, t):
    x = np.asarray(x, dtype=float)
    x = np.where(np.abs(x) < LOG_FLOOR, np.where(x < 0, -LOG_FLOOR, LOG_FLOOR), x)
    return np.log(np.abs(t / x))


def deltas(nu: float, H: int) -> np.ndarray:
    t = np.arange(1, H + 1, dtype=float)
    return (-1.0) ** (t + 1) * t ** (-nu / 2)


def gen_latent(cfg: SimConfig) -> np.ndarray:
    rng = rng_for(cfg.seed, _LATENT)
    if cfg.latent is Latent.UNIFORM:
        return rng.uniform(0.0, 1.0, cfg.n)
    return rng.standard_normal(cfg.n)


def gen_measurements(y, cfg: SimConfig) -> np.ndarray:
    """``w_ik = sum_t s_k Z_kt delta_t g_(t)(y_i + eps_ik)`` with one noise draw per (i, k)."""
    y = np.asarray(y, dtype=float)
    K, H = cfg.K, cfg.H
    world = rng_for(cfg.seed if cfg.world_seed is None else cfg.world_seed, _WORLD)
    s = world.uniform(-10.0, 10.0, K)
    Z = world.uniform(-np.sqrt(3.0), np.sqrt(3.0), (K, H))
    eps = rng_for(cfg.seed, _NOISE).normal(0.0, np.sqrt(cfg.noise_variance), (y.size, K))
    d = deltas(cfg.nu, H)
    x = y[:, None] + eps
    W = np.empty((y.size, K))
    n_logit = K if cfg.family is Family.LOGIT else -(-K // 2)
    for k in range(K):
        coef = s[k] * Z[k] * d
        if k < n_logit:
            W[:, k] = coef.sum() * logit_g(x[:, k])
        else:
            W[:, k] = sum(coef[t - 1] * log_g(x[:, k], t) for t in range(1, H + 1))
    return W


def simulate(cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    y = gen_latent(cfg)
    return y, gen_measurements(y, cfg)


METHODS = ("bmean", "pc_max", "mds", "rho_max", "rho_bar0")


@dataclass
class RepResult:
    cell: int
    rep: int
    values: dict
    k0: int | None
    seconds: float
    error: str | None = None


def run_replication(cfg: SimConfig, k0_grid: Sequence[int], m: int = core.DEFAULT_ORDER,
                    methods: Sequence[str] = METHODS) -> tuple[dict, int, float]:
    y, W = simulate(cfg)
    inp = core.FusionInput(W)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if len(k0_grid) == 1:
            k0 = k0_grid[0]
        else:
            k0, _ = core.select_k0(inp, k0_grid, m)
        fit = core.fit_bscaling(inp, k0, m)
    seconds = time.perf_counter() - t0
    cands = {"bmean": core.predict_bmean(fit, W)}
    if "pc_max" in methods:
        scores, _, _ = baselines.pca_scores(W)
        cands["pc_max"] = scores[:, baselines.pc_max_index(scores, y)]
    if "mds" in methods:
        cands["mds"] = baselines.mds_embed_1d(W)
    rep = baselines.corr_metrics(W, cands, y)
    out = dict(rep.per_method)
    out["rho_max"] = rep.rho_max
    out["rho_bar0"] = rep.rho_bar0
    return {k: v for k, v in out.items() if k in methods}, k0, seconds


def _cell_config(base: SimConfig, master_seed: int, cell: int, rep: int) -> SimConfig:
    child = np.random.SeedSequence(master_seed, spawn_key=(cell, rep))
    return replace(base, seed=int(child.generate_state(2, np.uint64)[0]))


def _run_task(args) -> RepResult:
    base, master_seed, cell, rep, k0_grid, m, methods = args
    cfg = _cell_config(base, master_seed, cell, rep)
    try:
        vals, k0, secs = run_replication(cfg, k0_grid, m, methods)
    except BScalingError as exc:
        return RepResult(cell, rep, {}, None, 0.0, f"{type(exc).__name__}: {exc}")
    return RepResult(cell, rep, vals, k0, secs)


@dataclass
class BenchReport:
    settings: list
    reps: int
    seed: int
    results: list = field(default_factory=list)

    def failures(self) -> list[RepResult]:
        return [r for r in self.results if r.error is not None]

    def values(self, cell: int, method: str) -> np.ndarray:
        return np.array([r.values[method] for r in self.results
                         if r.cell == cell and r.error is None and method in r.values])

    def summary(self) -> list[dict]:
        rows = []
        for c, cfg in enumerate(self.settings):
            ok = [r for r in self.results if r.cell == c and r.error is None]
            methods = [m for m in METHODS if ok and m in ok[0].values]
            for method in methods:
                v = self.values(c, method)
                q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
                rows.append(dict(
                    n=cfg.n, K=cfg.K, latent=cfg.latent.value, family=cfg.family.value,
                    noise_var=cfg.noise_variance, method=method, reps=len(v),
                    mean=float(v.mean()), sd=float(v.std(ddof=1)) if len(v) > 1 else 0.0,
                    q1=float(q1), median=float(med), q3=float(q3),
                    mean_fit_seconds=float(np.mean([r.seconds for r in ok])),
                ))
        return rows

    def tidy(self) -> list[dict]:
        rows = []
        for r in sorted(self.results, key=lambda r: (r.cell, r.rep)):
            if r.error is not None:
                continue
            cfg = self.settings[r.cell]
            for method in METHODS:
                if method in r.values:
                    rows.append(dict(n=cfg.n, K=cfg.K, latent=cfg.latent.value,
                                     family=cfg.family.value, noise_var=cfg.noise_variance,
                                     method=method, rep=r.rep, abs_corr=r.values[method]))
        return rows


def default_workers() -> int:
    env = os.environ.get("BSCALING_THREADS")
    return max(1, int(env)) if env else 1


def run_benchmark(settings: Sequence[SimConfig], reps: int, k0_grid: Sequence[int] = core.DEFAULT_K0_GRID,
                  *, seed: int = 0, m: int = core.DEFAULT_ORDER, workers: int | None = None,
                  methods: Sequence[str] = METHODS, max_failure_rate: float = 0.05) -> BenchReport:
    """Replicate every setting ``reps`` times; replication seeds derive from ``(seed, cell, rep)``."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    settings = list(settings)
    tasks = [(cfg, seed, c, r, tuple(k0_grid), m, tuple(methods))
             for c, cfg in enumerate(settings) for r in range(reps)]
    workers = default_workers() if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_run_task(t) for t in tasks]
    report = BenchReport(settings, reps, seed, results)
    n_fail = len(report.failures())
    if n_fail >= max_failure_rate * len(tasks) and n_fail > 0:
        raise BenchmarkFailure(f"{n_fail} of {len(tasks)} replications failed: {report.failures()[0].error}")
    return report


STANDARD_N = (500, 700, 1000, 2000, 3000)
STANDARD_K = (7, 10, 20, 30)


def standard_grid(latent=Latent.UNIFORM, family=Family.LOGIT, noise_variance: float = 0.1) -> list[SimConfig]:
    return [SimConfig(n=n, K=K, latent=latent, family=family, noise_variance=noise_variance)
            for n in STANDARD_N for K in STANDARD_K]


REFERENCE_N = 1_000_000
# Spawn-key slots used inside one seed family for the coverage study.
_REFERENCE, _REPLICATE = 1000, 2000


@dataclass
class CoverageReport:
    level: float
    n: int
    mu_reference: float
    covered: np.ndarray
    mu_hat: np.ndarray
    sigma_mu: np.ndarray
    width: np.ndarray

    @property
    def coverage(self) -> float:
        return float(self.covered.mean())

    @property
    def standardized(self) -> np.ndarray:
        return np.sqrt(self.n) * (self.mu_hat - self.mu_reference) / self.sigma_mu

    @property
    def skewness(self) -> float:
        from scipy.stats import skew
        return float(skew(self.standardized))

    @property
    def excess_kurtosis(self) -> float:
        from scipy.stats import kurtosis
        return float(kurtosis(self.standardized))

    @property
    def mean_width(self) -> float:
        return float(self.width.mean())


def _world_seed(cfg: SimConfig) -> int:
    return cfg.seed if cfg.world_seed is None else cfg.world_seed


def reference_fit(cfg: SimConfig, k0: int, m: int = core.DEFAULT_ORDER, n_ref: int = REFERENCE_N):
    """Large-sample stand-in for the population fit; its knots and rescaling are reused."""
    ref_cfg = replace(cfg, n=n_ref, seed=_cell_config(cfg, cfg.seed, _REFERENCE, 0).seed,
                      world_seed=_world_seed(cfg))
    _, W = simulate(ref_cfg)
    return core.fit_bscaling(core.FusionInput(W), k0, m), W


def _aligned(fit: core.FittedBScaling, ref: core.FittedBScaling) -> core.FittedBScaling:
    if fit.a_hat @ ref.a_hat >= 0:
        return fit
    return replace(fit, a_hat=-fit.a_hat, b_hat=-fit.b_hat, sign=-fit.sign)


def mc_coverage(cfg: SimConfig, w_new=None, reps: int = 300, level: float = 0.95, k0: int = 3,
                m: int = core.DEFAULT_ORDER, *, reference=None, n_ref: int = REFERENCE_N) -> CoverageReport:
    """Empirical coverage of the plug-in Wald interval for the B-mean at ``w_new``.

    Every replication fits on fresh data with the reference knots and
    rescaling held fixed, and the fitted sign is aligned with the reference.
    ``w_new`` defaults to the per-measurement medians of the reference sample.
    """
    from . import inference

    if reference is None:
        reference = reference_fit(cfg, k0, m, n_ref)
    ref, W_ref = reference
    if w_new is None:
        w_new = np.median(W_ref, axis=0)
    w_new = np.asarray(w_new, dtype=float)
    mu_ref = float(core.predict_bmean(ref, w_new[None, :])[0])
    covered, mu_hat, sig, width = [], [], [], []
    for r in range(reps):
        rep_cfg = replace(cfg, seed=_cell_config(cfg, cfg.seed, _REPLICATE, r).seed,
                          world_seed=_world_seed(cfg))
        _, W = simulate(rep_cfg)
        fit = core.fit_bscaling(core.FusionInput(W), k0, m, knots=ref.knots, rescale=ref.rescale)
        fit = _aligned(fit, ref)
        asy = inference.asymptotic_model(fit, W)
        ci = inference.sigma_mu_ci(fit, asy, w_new, level)
        covered.append(ci.lower <= mu_ref <= ci.upper)
        mu_hat.append(ci.mu_hat)
        sig.append(ci.sigma_mu)
        width.append(ci.width)
    return CoverageReport(level, cfg.n, mu_ref, np.array(covered), np.array(mu_hat),
                          np.array(sig), np.array(width))
