"""Pilot-run grid search for the proposal scales ``rho`` (pCN) and ``delta`` (tau).

The search runs on a separate random stream before the real chain, which
then uses the selected values unchanged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError
from .grid import GridSpec
from .samplers import (
    ChainConfig,
    LatentState,
    _impute,
    _log_dirichlet,
    _shading_for,
    cached_precision,
    make_rng,
    pcn_step,
    tau_step_dirichlet,
    tau_step_lngl,
)

logger = logging.getLogger(__name__)

RHO_GRID = (0.0,) + tuple(1.0 - 2.0**-k for k in range(1, 13))
DELTA_GRID = tuple(0.001 * 2.0**k for k in range(13))
TUNING_STREAM = 0x7E57
ACCEPT_BAND = (0.25, 0.5)


@dataclass(frozen=True)
class TuningResult:
    prior: str
    rho: float
    delta: float
    accept_z: float
    accept_tau: float
    pilot_iterations: int

    def in_band(self, band=ACCEPT_BAND) -> bool:
        lo, hi = band
        ok_tau = lo <= self.accept_tau <= hi
        if self.prior == "dirichlet":
            return ok_tau
        return ok_tau and lo <= self.accept_z <= hi

    def apply(self, cfg: ChainConfig) -> ChainConfig:
        return replace(cfg, rho=self.rho, delta=self.delta)


ADAPT_GAIN = 1.0
ADAPT_DECAY = 0.6


def _closest(rates, grid_values, target):
    i = int(np.argmin(np.abs(np.asarray(rates) - target)))
    return grid_values[i], rates[i]


def _gain(i: int) -> float:
    return ADAPT_GAIN / (1.0 + i / 100.0) ** ADAPT_DECAY


def tune(prior: str, grid: GridSpec, data, seed: int = 0, base: ChainConfig | None = None,
         warmup: int = 1000, scan: int = 200, adapt: int = 4000, confirm: int = 2000,
         rounds: int = 3, band=ACCEPT_BAND) -> TuningResult:
    """Choose ``(rho, delta)`` whose acceptance rates fall in ``band``.

    After ``warmup`` sweeps at the base settings, every candidate on the
    coarse ``rho`` and ``delta`` grids is tried for ``scan`` steps and the
    one closest to the middle of the band is kept.  A stochastic
    approximation phase of ``adapt`` sweeps then moves ``log(1 - rho)`` and
    ``log(delta)`` towards the band centre with decreasing gain, and the
    average over its second half is checked over ``confirm`` sweeps.  The
    acceptance of the pCN step depends strongly on the current ``tau``,
    which drifts slowly, so the adaptation and the check both need to span
    many sweeps.  This repeats up to ``rounds`` times.
    """
    if adapt < 2:
        raise InvalidArgumentError("adapt must be at least 2 sweeps")
    base = base or ChainConfig()
    shading = _shading_for(grid, data)
    rng = make_rng(seed, TUNING_STREAM)
    target = 0.5 * (band[0] + band[1])
    rho, delta = base.rho, base.delta
    used = 0

    if prior == "lngl":
        lap = cached_precision(grid)
        state = LatentState.create(rng.standard_normal(grid.p), 1.0, lap, shading)

        def sweep(r, d):
            nonlocal state
            state, a_t = tau_step_lngl(state, base, shading, lap, rng, delta=d)
            state, a_z = pcn_step(state, base, shading, lap, rng, rho=r)
            return a_z, a_t

        def rho_rate(r):
            nonlocal state
            acc = 0
            for _ in range(scan):
                state, a = pcn_step(state, base, shading, lap, rng, rho=r)
                acc += a
            return acc / scan

        def delta_rate(d):
            nonlocal state
            acc = 0
            for _ in range(scan):
                state, a = tau_step_lngl(state, base, shading, lap, rng, delta=d)
                acc += a
            return acc / scan

    elif prior == "dirichlet":
        p = grid.p
        log_theta = np.full(p, -np.log(p))
        theta = np.exp(log_theta)
        tau = 1.0

        def sweep(r, d):
            nonlocal theta, log_theta, tau
            counts = np.bincount(_impute(theta, shading, rng), minlength=p)
            log_theta = _log_dirichlet(tau + counts, rng)
            theta = np.exp(log_theta)
            tau, a = tau_step_dirichlet(theta, tau, base, rng, delta=d, log_theta=log_theta)
            return float("nan"), a

        def delta_rate(d):
            return float(np.mean([sweep(None, d)[1] for _ in range(scan)]))

    else:
        raise InvalidArgumentError(f"unknown prior {prior!r}; expected 'lngl' or 'dirichlet'")

    def sweeps(n, r, d):
        acc = np.array([sweep(r, d) for _ in range(n)], dtype=float).reshape(n, 2)
        return tuple(acc.mean(axis=0)) if n else (float("nan"), float("nan"))

    sweeps(warmup, rho, delta)
    used += warmup
    if prior == "lngl":
        rho, _ = _closest([rho_rate(r) for r in RHO_GRID], RHO_GRID, target)
        used += scan * len(RHO_GRID)
    delta, _ = _closest([delta_rate(d) for d in DELTA_GRID], DELTA_GRID, target)
    used += scan * len(DELTA_GRID)

    acc_z = acc_t = float("nan")
    for round_no in range(rounds):
        # Robbins-Monro on log(1 - rho) and log(delta), Polyak-averaged
        log_gap, log_delta = np.log1p(-rho), np.log(delta)
        sum_gap = sum_delta = 0.0
        half = adapt // 2
        for i in range(adapt):
            a_z, a_t = sweep(1.0 - np.exp(log_gap), np.exp(log_delta))
            g = _gain(i)
            if prior == "lngl":
                log_gap = min(0.0, log_gap + g * (a_z - target))
            log_delta += g * (a_t - target)
            if i >= half:
                sum_gap += log_gap
                sum_delta += log_delta
        used += adapt
        if prior == "lngl":
            rho = float(1.0 - np.exp(sum_gap / (adapt - half)))
        delta = float(np.exp(sum_delta / (adapt - half)))
        acc_z, acc_t = sweeps(confirm, rho, delta)
        used += confirm
        result = TuningResult(prior, rho, delta, acc_z, acc_t, used)
        logger.info("tuning round %d: rho=%.5f delta=%.4f acceptance z=%.3f tau=%.3f",
                    round_no, rho, delta, acc_z, acc_t)
        if result.in_band(band):
            break
    return TuningResult(prior, rho, delta, acc_z, acc_t, used)
