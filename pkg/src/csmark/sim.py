"""Synthetic current-status data with a continuous mark.

The event ``(X, Y)`` is ``(U, V)`` with probability ``mix_weight`` and
``(1 - U, V)`` otherwise, where ``(U, V)`` has density
``(3/8)(u^2 + v)`` on ``[0, 1] x [0, 2]``.  The inspection time is
``T = sqrt(Uniform(0, 1))`` (density ``2t`` on ``[0, 1]``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .censoring import Observation
from .errors import DomainError, InvalidArgumentError, NumericalError

M1, M2 = 1.0, 2.0
MIX_WEIGHT = 0.3


@dataclass(frozen=True)
class SimSpec:
    n: int
    seed: int = 0
    mix_weight: float = MIX_WEIGHT

    def __post_init__(self):
        if self.n < 0:
            raise InvalidArgumentError("n must be >= 0")
        if not 0 <= self.mix_weight <= 1:
            raise InvalidArgumentError("mix_weight must lie in [0, 1]")


def base_density(u, v):
    """``(3/8)(u^2 + v)``, without the support indicator."""
    return 0.375 * (np.asarray(u) ** 2 + np.asarray(v))


def f0_density(x, y, mix_weight: float = MIX_WEIGHT):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(x > M1) or np.any(y < 0) or np.any(y > M2):
        raise DomainError(f"point outside [0, {M1}] x [0, {M2}]")
    out = mix_weight * base_density(x, y) + (1 - mix_weight) * base_density(1 - x, y)
    return float(out) if out.ndim == 0 else out


def censoring_density(t):
    t = np.asarray(t, dtype=float)
    out = np.where((t >= 0) & (t <= 1), 2 * t, 0.0)
    return float(out) if out.ndim == 0 else out


def marginal_cdf(u):
    """CDF of ``U``: ``(u^3 + 3u) / 4`` on ``[0, 1]``."""
    u = np.asarray(u, dtype=float)
    return (u**3 + 3 * u) / 4


def conditional_cdf(v, u):
    """CDF of ``V`` given ``U = u``: ``(u^2 v + v^2 / 2) / (2u^2 + 2)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return (u**2 * v + v**2 / 2) / (2 * u**2 + 2)


def marginal_inverse(q, tol: float = 1e-12, max_iter: int = 100):
    """Solve ``u^3 + 3u = 4q`` on ``[0, 1]`` by safeguarded Newton iteration."""
    q = np.asarray(q, dtype=float)
    lo = np.zeros_like(q)
    hi = np.ones_like(q)
    u = q.copy()
    for _ in range(max_iter):
        r = marginal_cdf(u) - q
        lo = np.where(r < 0, u, lo)
        hi = np.where(r > 0, u, hi)
        step = r / (0.75 * (u**2 + 1))
        new = u - step
        outside = (new <= lo) | (new >= hi)
        new = np.where(outside, 0.5 * (lo + hi), new)
        done = np.all(np.abs(new - u) <= tol)
        u = new
        if done:
            break
    else:
        raise NumericalError("inverse marginal CDF did not converge")
    return u


def conditional_inverse(q, u):
    """Positive root of ``v^2 / 2 + u^2 v = q (2u^2 + 2)``."""
    q = np.asarray(q, dtype=float)
    u2 = np.asarray(u, dtype=float) ** 2
    c = q * (2 * u2 + 2)
    # rationalised form avoids cancellation when u is large relative to v;
    # the denominator vanishes only at q = u = 0, where the root is 0
    den = u2 + np.sqrt(u2**2 + 2 * c)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(den > 0, 2 * c / den, 0.0)
    return float(v) if v.ndim == 0 else v


def sample_events(rng: np.random.Generator, size: int, mix_weight: float = MIX_WEIGHT):
    """Draw ``size`` events by inverse-CDF sampling of ``(U, V)`` and the mixture flip."""
    q = rng.random((3, size))
    u = marginal_inverse(q[0])
    v = conditional_inverse(q[1], u)
    x = np.where(q[2] < mix_weight, u, 1.0 - u)
    return x, v


def sample_event(rng: np.random.Generator, mix_weight: float = MIX_WEIGHT):
    x, y = sample_events(rng, 1, mix_weight)
    return float(x[0]), float(y[0])


def f0_envelope(mix_weight: float = MIX_WEIGHT) -> float:
    """Supremum of the event density; it is convex in x and linear in y, so a corner attains it."""
    corners = [(0.0, 0.0), (0.0, M2), (M1, 0.0), (M1, M2)]
    return max(f0_density(x, y, mix_weight) for x, y in corners)


def sample_events_rejection(rng: np.random.Generator, size: int, mix_weight: float = MIX_WEIGHT):
    """Independent sampler: accept uniform proposals on the support under the envelope."""
    bound = f0_envelope(mix_weight)
    xs, ys = [], []
    got = 0
    while got < size:
        m = max(2 * (size - got), 1024)
        x = rng.random(m) * M1
        y = rng.random(m) * M2
        keep = rng.random(m) * bound < f0_density(x, y, mix_weight)
        xs.append(x[keep])
        ys.append(y[keep])
        got += int(keep.sum())
    return np.concatenate(xs)[:size], np.concatenate(ys)[:size]


def sample_censoring(rng: np.random.Generator, size=None):
    return np.sqrt(rng.random(size))


def simulate_latent(spec: SimSpec):
    """Latent events, inspection times and observed marks as arrays ``(x, y, t, z)``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed) & 0xFFFFFFFFFFFFFFFF, 0x51A]))
    x, y = sample_events(rng, spec.n, spec.mix_weight)
    t = sample_censoring(rng, spec.n)
    z = np.where(x <= t, y, 0.0)
    return x, y, t, z


def simulate_dataset(spec: SimSpec) -> list[Observation]:
    _, _, t, z = simulate_latent(spec)
    return [Observation(float(a), float(b)) for a, b in zip(t, z)]
