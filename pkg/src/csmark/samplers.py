"""Posterior samplers for the bin weights.

Two priors are supported:

* ``lngl`` -- logistic-Normal with graph-Laplacian precision.  The chain
  works on whitened coordinates ``z ~ N(0, I)`` with
  ``theta = softmax(U^{-1} z sqrt(tau))``; ``z`` is updated by a
  preconditioned Crank-Nicolson proposal and ``tau`` by a log-normal random
  walk.
* ``dirichlet`` -- symmetric Dirichlet(tau, ..., tau).  The chain imputes
  the bin of every latent event, draws ``theta`` from its conjugate
  Dirichlet posterior and updates ``tau`` by a log-normal random walk.

In both cases ``tau`` carries a prior (standard exponential by default).
"""
from __future__ import annotations

import functools
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from ._kernels import impute_csr
from .censoring import Observation, ShadingMatrix, build_shading, compile_infos
from .errors import ImputationError, InvalidArgumentError
from .grid import BinWeights, GridSpec
from .laplacian import GridLaplacian, grid_precision, softmax

logger = logging.getLogger(__name__)

LNGL_ORDER = ("tau", "z")
DIRICHLET_ORDER = ("impute", "theta", "tau")


@dataclass(frozen=True)
class TauPrior:
    """Gamma(shape, rate) prior on ``tau``; shape 1 is the exponential."""

    shape: float = 1.0
    rate: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise InvalidArgumentError("tau prior parameters must be positive")

    @classmethod
    def parse(cls, text: str) -> "TauPrior":
        """Parse ``exponential[:rate]`` or ``gamma:shape,rate``."""
        name, _, args = text.strip().partition(":")
        try:
            values = [float(v) for v in args.split(",")] if args else []
        except ValueError as exc:
            raise InvalidArgumentError(f"bad tau prior {text!r}") from exc
        name = name.lower()
        if name in ("exponential", "exp") and len(values) <= 1:
            return cls(1.0, values[0] if values else 1.0)
        if name == "gamma" and len(values) == 2:
            return cls(values[0], values[1])
        raise InvalidArgumentError(f"bad tau prior {text!r}")

    def __str__(self):
        if self.shape == 1.0:
            return f"exponential:{self.rate!r}"
        return f"gamma:{self.shape!r},{self.rate!r}"

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def var(self) -> float:
        return self.shape / self.rate**2

    def logpdf(self, tau: float) -> float:
        return (self.shape * np.log(self.rate) - gammaln(self.shape)
                + (self.shape - 1.0) * np.log(tau) - self.rate * tau)


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 20000
    burnin_fraction: float = 1.0 / 3.0
    rho: float = 0.95
    delta: float = 0.1
    tau_prior: TauPrior = field(default_factory=TauPrior)
    seed: int = 0
    thin: int = 1
    chain_id: int = 0
    keep_draws: bool = True
    keep_latent: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidArgumentError("iterations must be >= 1")
        if not 0 < self.burnin_fraction < 1:
            raise InvalidArgumentError("burnin_fraction must lie in (0, 1)")
        if not 0 <= self.rho < 1:
            raise InvalidArgumentError("rho must lie in [0, 1)")
        if not self.delta >= 0:
            raise InvalidArgumentError("delta must be nonnegative")
        if self.thin < 1:
            raise InvalidArgumentError("thin must be >= 1")
        if isinstance(self.tau_prior, str):
            object.__setattr__(self, "tau_prior", TauPrior.parse(self.tau_prior))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tau_prior"] = str(self.tau_prior)
        return d


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for stream ``stream`` of ``seed``."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(s) for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


@dataclass
class ChainOutput:
    theta_draws: Optional[np.ndarray]
    tau_trace: np.ndarray
    accept_z: float
    accept_tau: float
    posterior_mean: BinWeights
    zvec_mean_trace: Optional[np.ndarray] = None
    zvec_draws: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)


def posterior_mean(draws, burnin_fraction: float) -> BinWeights:
    """Componentwise mean of the draws left after discarding the burn-in."""
    draws = np.asarray(draws)
    if draws.ndim != 2:
        raise InvalidArgumentError("draws must be a 2-d array (draw, bin)")
    if not 0 <= burnin_fraction < 1:
        raise InvalidArgumentError("burnin_fraction must lie in [0, 1)")
    burn = int(np.floor(draws.shape[0] * burnin_fraction))
    kept = draws[burn:]
    if kept.shape[0] == 0:
        raise InvalidArgumentError("no draws left after burn-in")
    return BinWeights.normalized(kept.mean(axis=0, dtype=np.float64))


def _loglik(shading: ShadingMatrix, theta: np.ndarray) -> float:
    if shading.n == 0:
        return 0.0
    m = shading.matrix @ theta
    if np.any(m <= 0):
        return -np.inf
    return float(np.sum(np.log(m)))


@functools.lru_cache(maxsize=16)
def cached_precision(grid: GridSpec) -> GridLaplacian:
    return grid_precision(grid)


def _shading_for(grid: GridSpec, data) -> ShadingMatrix:
    if isinstance(data, ShadingMatrix):
        return compile_infos(data, grid.p)
    return build_shading(grid, list(data))


# ---------------------------------------------------------------- LNGL prior


@dataclass(frozen=True)
class LatentState:
    """Whitened coordinates and smoothing scale, with derived quantities cached."""

    zvec: np.ndarray
    tau: float
    white: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    loglik: float = 0.0

    @classmethod
    def create(cls, zvec, tau: float, lap: GridLaplacian, infos) -> "LatentState":
        zvec = np.asarray(zvec, dtype=float)
        if not tau > 0 or not np.all(np.isfinite(zvec)):
            raise InvalidArgumentError("latent state needs finite z and positive tau")
        shading = compile_infos(infos, lap.p)
        white = lap.whiten(zvec)
        theta = softmax(white * np.sqrt(tau))
        return cls(zvec, float(tau), white, theta, _loglik(shading, theta))


def pcn_step(state: LatentState, cfg: ChainConfig, infos, lap: GridLaplacian,
             rng: np.random.Generator, rho: Optional[float] = None):
    """One pCN update of ``z`` given ``tau``.

    The proposal preserves N(0, I), so the acceptance ratio is the
    likelihood ratio alone.  ``rho`` overrides ``cfg.rho``.
    """
    rho = cfg.rho if rho is None else rho
    shading = compile_infos(infos, lap.p)
    w = rng.standard_normal(lap.p)
    u = rng.random()
    z_new = rho * state.zvec + np.sqrt(1.0 - rho * rho) * w
    white = lap.whiten(z_new)
    theta = softmax(white * np.sqrt(state.tau))
    ll = _loglik(shading, theta)
    if np.log(u) < ll - state.loglik:
        return LatentState(z_new, state.tau, white, theta, ll), True
    return state, False


def tau_step_lngl(state: LatentState, cfg: ChainConfig, infos, lap: GridLaplacian,
                  rng: np.random.Generator, delta: Optional[float] = None):
    """Log-normal random-walk update of ``tau`` given ``z``."""
    delta = cfg.delta if delta is None else delta
    shading = compile_infos(infos, lap.p)
    eps = rng.standard_normal()
    u = rng.random()
    tau_new = state.tau * np.exp(delta * eps)
    if not (tau_new > 0 and np.isfinite(tau_new)):
        return state, False
    theta = softmax(state.white * np.sqrt(tau_new))
    ll = _loglik(shading, theta)
    prior = cfg.tau_prior
    log_ratio = (ll - state.loglik
                 + prior.logpdf(tau_new) - prior.logpdf(state.tau)
                 + np.log(tau_new) - np.log(state.tau))
    if np.log(u) < log_ratio:
        return LatentState(state.zvec, float(tau_new), state.white, theta, ll), True
    return state, False


class _Recorder:
    """Collects draws, the tau trace and the running post-burn-in mean."""

    def __init__(self, cfg: ChainConfig, p: int):
        self.cfg = cfg
        self.burn = int(np.floor(cfg.iterations * cfg.burnin_fraction))
        n_keep = cfg.iterations // cfg.thin
        self.draws = np.empty((n_keep, p), dtype=np.float32) if cfg.keep_draws else None
        self.tau = np.empty(cfg.iterations)
        self.total = np.zeros(p)
        self.n_mean = 0

    def record(self, i: int, theta: np.ndarray, tau: float):
        self.tau[i] = tau
        if self.draws is not None and (i + 1) % self.cfg.thin == 0:
            self.draws[(i + 1) // self.cfg.thin - 1] = theta
        if i >= self.burn:
            self.total += theta
            self.n_mean += 1

    def mean(self) -> BinWeights:
        return BinWeights.normalized(self.total / self.n_mean)


def run_lngl_chain(cfg: ChainConfig, grid: GridSpec, data, lap: Optional[GridLaplacian] = None,
                   init: Optional[LatentState] = None) -> ChainOutput:
    """Gibbs sampler alternating a ``tau`` update and a pCN ``z`` update.

    ``data`` is a sequence of :class:`Observation` (or a prebuilt
    :class:`ShadingMatrix`).  The chain starts from ``z`` drawn from its
    N(0, I) prior and ``tau = 1`` unless ``init`` is given.
    """
    start = time.perf_counter()
    shading = _shading_for(grid, data)
    lap = cached_precision(grid) if lap is None else lap
    rng = make_rng(cfg.seed, cfg.chain_id)
    z0 = rng.standard_normal(grid.p)
    state = init if init is not None else LatentState.create(z0, 1.0, lap, shading)
    rec = _Recorder(cfg, grid.p)
    zmean = np.empty(cfg.iterations)
    zdraws = np.empty((cfg.iterations // cfg.thin, grid.p)) if cfg.keep_latent else None
    n_acc_z = n_acc_tau = 0
    for i in range(cfg.iterations):
        state, acc = tau_step_lngl(state, cfg, shading, lap, rng)
        n_acc_tau += acc
        state, acc = pcn_step(state, cfg, shading, lap, rng)
        n_acc_z += acc
        rec.record(i, state.theta, state.tau)
        zmean[i] = state.zvec.mean()
        if zdraws is not None and (i + 1) % cfg.thin == 0:
            zdraws[(i + 1) // cfg.thin - 1] = state.zvec
    wall = time.perf_counter() - start
    out = ChainOutput(
        theta_draws=rec.draws,
        tau_trace=rec.tau,
        accept_z=n_acc_z / cfg.iterations,
        accept_tau=n_acc_tau / cfg.iterations,
        posterior_mean=rec.mean(),
        zvec_mean_trace=zmean,
        zvec_draws=zdraws,
        meta={"prior": "lngl", "update_order": list(LNGL_ORDER), "n": shading.n,
              "wall_time": wall, "config": cfg.to_dict()},
    )
    logger.info("lngl chain: %d iterations in %.2fs, acceptance z=%.3f tau=%.3f",
                cfg.iterations, wall, out.accept_z, out.accept_tau)
    return out


# ----------------------------------------------------------- Dirichlet prior


def _impute(theta: np.ndarray, shading: ShadingMatrix, rng: np.random.Generator) -> np.ndarray:
    """Sampled bin index for every observation."""
    a = shading.matrix
    u = rng.random(shading.n)
    if shading.n == 0:
        return np.zeros(0, dtype=np.int64)
    bins = impute_csr(a.data, a.indices, a.indptr, theta, u)
    if bins[0] < 0:
        raise ImputationError(f"observation {-bins[0] - 1} has zero probability under the current weights")
    return bins


def impute_bins(w, infos, rng: np.random.Generator, return_bins: bool = False):
    """Draw the latent bin of every observation and count them per bin.

    Each observation's bin is chosen with probability proportional to
    ``theta_l * a_il`` over its shaded bins.
    """
    theta = w.theta if isinstance(w, BinWeights) else np.asarray(w, dtype=float)
    shading = compile_infos(infos, theta.size)
    bins = _impute(theta, shading, rng)
    counts = np.bincount(bins, minlength=theta.size)
    return (counts, bins) if return_bins else counts


def _log_dirichlet(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Log of a Dirichlet(alpha) draw, accurate for tiny concentrations.

    For ``alpha < 1`` a Gamma(alpha) variate is drawn as
    ``Gamma(alpha + 1) * U**(1/alpha)`` and kept in log space.
    """
    small = alpha < 1.0
    g = rng.standard_gamma(np.where(small, alpha + 1.0, alpha))
    u = rng.random(alpha.size)
    with np.errstate(divide="ignore"):
        lg = np.log(g) + np.where(small, np.log(u) / alpha, 0.0)
    m = lg.max()
    return lg - (m + np.log(np.sum(np.exp(lg - m))))


def dirichlet_update(counts, tau: float, rng: np.random.Generator) -> BinWeights:
    """Draw ``theta ~ Dirichlet(tau + counts)``."""
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise InvalidArgumentError("counts must be nonnegative")
    return BinWeights.normalized(np.exp(_log_dirichlet(tau + counts.astype(float), rng)))


def dirichlet_logpdf_tau(tau: float, sum_log_theta: float, p: int) -> float:
    """Log Dirichlet(tau, ..., tau) density at ``theta``, given ``sum(log theta)``."""
    return gammaln(p * tau) - p * gammaln(tau) + (tau - 1.0) * sum_log_theta


def tau_step_dirichlet(w, tau: float, cfg: ChainConfig, rng: np.random.Generator,
                       delta: Optional[float] = None, log_theta: Optional[np.ndarray] = None):
    """Log-normal random-walk update of ``tau`` given ``theta``.

    Targets ``pi(tau) * Dirichlet(theta; tau, ..., tau)``.  Pass
    ``log_theta`` when available; otherwise ``theta`` is clamped at 1e-300
    before taking logs.
    """
    delta = cfg.delta if delta is None else delta
    if log_theta is None:
        theta = w.theta if isinstance(w, BinWeights) else np.asarray(w, dtype=float)
        log_theta = np.log(np.maximum(theta, 1e-300))
    p = log_theta.size
    s = float(np.sum(log_theta))
    eps = rng.standard_normal()
    u = rng.random()
    tau_new = tau * np.exp(delta * eps)
    if not (tau_new > 0 and np.isfinite(tau_new)):
        return tau, False
    prior = cfg.tau_prior
    log_ratio = (dirichlet_logpdf_tau(tau_new, s, p) - dirichlet_logpdf_tau(tau, s, p)
                 + prior.logpdf(tau_new) - prior.logpdf(tau)
                 + np.log(tau_new) - np.log(tau))
    if np.log(u) < log_ratio:
        return float(tau_new), True
    return tau, False


def run_dirichlet_chain(cfg: ChainConfig, grid: GridSpec, data,
                        init_tau: float = 1.0) -> ChainOutput:
    """Data-augmentation sampler: impute bins, redraw ``theta``, update ``tau``.

    Starts from uniform ``theta``.  ``accept_z`` is reported as NaN since
    there is no pCN step.
    """
    start = time.perf_counter()
    shading = _shading_for(grid, data)
    rng = make_rng(cfg.seed, cfg.chain_id)
    p = grid.p
    log_theta = np.full(p, -np.log(p))
    theta = np.exp(log_theta)
    tau = float(init_tau)
    rec = _Recorder(cfg, p)
    n_acc_tau = 0
    for i in range(cfg.iterations):
        counts = np.bincount(_impute(theta, shading, rng), minlength=p)
        log_theta = _log_dirichlet(tau + counts, rng)
        theta = np.exp(log_theta)
        tau, acc = tau_step_dirichlet(theta, tau, cfg, rng, log_theta=log_theta)
        n_acc_tau += acc
        rec.record(i, theta, tau)
    wall = time.perf_counter() - start
    out = ChainOutput(
        theta_draws=rec.draws,
        tau_trace=rec.tau,
        accept_z=float("nan"),
        accept_tau=n_acc_tau / cfg.iterations,
        posterior_mean=rec.mean(),
        meta={"prior": "dirichlet", "update_order": list(DIRICHLET_ORDER), "n": shading.n,
              "wall_time": wall, "config": cfg.to_dict()},
    )
    logger.info("dirichlet chain: %d iterations in %.2fs, acceptance tau=%.3f",
                cfg.iterations, wall, out.accept_tau)
    return out


def run_chain(prior: str, cfg: ChainConfig, grid: GridSpec, data) -> ChainOutput:
    if prior == "lngl":
        return run_lngl_chain(cfg, grid, data)
    if prior == "dirichlet":
        return run_dirichlet_chain(cfg, grid, data)
    raise InvalidArgumentError(f"unknown prior {prior!r}; expected 'lngl' or 'dirichlet'")


def batch_means_se(x: np.ndarray, n_batches: int = 50) -> float:
    """Monte-Carlo standard error of the mean of a correlated trace."""
    x = np.asarray(x, dtype=float)
    m = x.size // n_batches
    if m < 1:
        return float(np.std(x, ddof=1) / np.sqrt(max(x.size, 1)))
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))
