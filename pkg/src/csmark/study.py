"""Monte-Carlo study: simulate, fit, and score against the true bin masses.

Each replication draws one dataset, fits it under the requested prior and
binning, and reports the Wasserstein-1 distance between the posterior mean
and the bin-averaged true density.  Datasets depend only on ``(seed, n,
rep)``, so different priors and binnings see the same data within a
replication.
"""
from __future__ import annotations

import functools
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import CSMarkError, InvalidArgumentError
from .grid import BinWeights, GridSpec, make_grid, true_bin_masses
from .samplers import ChainConfig, run_chain
from .sim import M1, M2, SimSpec, f0_density, simulate_dataset
from .transport import wasserstein1
from .tuning import tune

logger = logging.getLogger(__name__)

PRIORS = ("lngl", "dirichlet")
CHAIN_STREAM = {"lngl": 0, "dirichlet": 1}
RESULT_FIELDS = ("rep", "n", "prior", "j_bins", "k_bins", "seed", "wasserstein",
                 "wasserstein_index", "accept_z", "accept_tau", "rho", "delta",
                 "status", "error")


def parse_bins(text: str) -> tuple[int, int]:
    """``"25/50"`` or ``"25x50"`` -> ``(25, 50)``."""
    for sep in ("/", "x", "X"):
        if sep in text:
            a, _, b = text.partition(sep)
            try:
                j, k = int(a), int(b)
            except ValueError:
                break
            if j < 1 or k < 1:
                break
            return j, k
    raise InvalidArgumentError(f"bad binning {text!r}; expected e.g. 25/50")


@functools.lru_cache(maxsize=32)
def truth_masses(grid: GridSpec) -> BinWeights:
    """Bin masses of the simulation density on ``grid``."""
    if (grid.m1, grid.m2) != (M1, M2):
        raise InvalidArgumentError("the simulation density lives on [0, 1] x [0, 2]")
    return true_bin_masses(grid, f0_density)


def dataset_seed(seed: int, n: int, rep: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(n), int(rep)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class Task:
    rep: int
    n: int
    prior: str
    j_bins: int
    k_bins: int
    seed: int
    base: ChainConfig
    tune: bool = True

    @property
    def key(self):
        return (self.n, self.j_bins, self.k_bins, self.prior, self.rep)


def fit_and_score(prior: str, grid: GridSpec, data, cfg: ChainConfig, tune_first: bool = True) -> dict:
    """Fit ``data`` and return distances to the truth plus chain diagnostics."""
    if tune_first:
        cfg = tune(prior, grid, data, seed=cfg.seed, base=cfg).apply(cfg)
    out = run_chain(prior, replace(cfg, keep_draws=False), grid, data)
    truth = truth_masses(grid)
    return {
        "wasserstein": wasserstein1(grid, out.posterior_mean, truth, units="physical"),
        "wasserstein_index": wasserstein1(grid, out.posterior_mean, truth, units="index"),
        "accept_z": out.accept_z,
        "accept_tau": out.accept_tau,
        "rho": cfg.rho,
        "delta": cfg.delta,
    }


def run_task(task: Task) -> dict:
    """One replication; failures are reported in the row instead of raised."""
    row = {f: None for f in RESULT_FIELDS}
    row.update(rep=task.rep, n=task.n, prior=task.prior, j_bins=task.j_bins,
               k_bins=task.k_bins, seed=task.seed, status="ok", error="")
    try:
        grid = make_grid(M1, M2, task.j_bins, task.k_bins)
        data = simulate_dataset(SimSpec(task.n, seed=task.seed))
        cfg = replace(task.base, seed=task.seed, chain_id=CHAIN_STREAM[task.prior])
        row.update(fit_and_score(task.prior, grid, data, cfg, task.tune))
    except CSMarkError as exc:
        row.update(status=exc.category, error=str(exc))
    return row


def make_tasks(n_list: Iterable[int], bins: Iterable[tuple[int, int]], priors: Iterable[str],
               reps: int, seed: int, base: ChainConfig, tune_first: bool = True) -> list[Task]:
    tasks = []
    for prior in priors:
        if prior not in PRIORS:
            raise InvalidArgumentError(f"unknown prior {prior!r}; expected one of {PRIORS}")
    for n in n_list:
        for rep in range(reps):
            s = dataset_seed(seed, n, rep)
            for j, k in bins:
                for prior in priors:
                    tasks.append(Task(rep, n, prior, j, k, s, base, tune_first))
    return tasks


def run_study(tasks: list[Task], workers: int = 1,
              sink: Optional[Callable[[dict], None]] = None) -> list[dict]:
    """Run all tasks, passing every finished row to ``sink`` from this process.

    Rows come back in task order regardless of completion order.
    """
    rows = []

    def collect(row):
        rows.append(row)
        if sink is not None:
            sink(row)
        logger.info("rep %d n=%d %s %d/%d: W1=%s (%s)", row["rep"], row["n"], row["prior"],
                    row["j_bins"], row["k_bins"], row["wasserstein"], row["status"])

    if workers <= 1:
        for task in tasks:
            collect(run_task(task))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_task, t) for t in tasks]
            for fut in as_completed(futures):
                collect(fut.result())
    order = {t.key: i for i, t in enumerate(tasks)}
    rows.sort(key=lambda r: order[(r["n"], r["j_bins"], r["k_bins"], r["prior"], r["rep"])])
    return rows


def summarize(rows: list[dict]) -> list[dict]:
    """Per-cell mean and standard error of the distances over successful rows."""
    cells: dict = {}
    for r in rows:
        key = (r["n"], r["j_bins"], r["k_bins"], r["prior"])
        cells.setdefault(key, {"ok": [], "idx": [], "failed": 0})
        if r["status"] == "ok":
            cells[key]["ok"].append(r["wasserstein"])
            cells[key]["idx"].append(r["wasserstein_index"])
        else:
            cells[key]["failed"] += 1
    out = []
    for (n, j, k, prior), c in cells.items():
        w = np.asarray(c["ok"], dtype=float)
        out.append({
            "n": n, "j_bins": j, "k_bins": k, "prior": prior,
            "reps": int(w.size), "failed": c["failed"],
            "mean_wasserstein": float(w.mean()) if w.size else float("nan"),
            "se_wasserstein": float(w.std(ddof=1) / np.sqrt(w.size)) if w.size > 1 else float("nan"),
            "mean_wasserstein_index": float(np.mean(c["idx"])) if w.size else float("nan"),
        })
    return out
