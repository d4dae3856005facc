"""Batch command-line front end.

Commands::

    csmark simulate  --n 200 --seed 1 --out data.csv [--truth latent.csv]
    csmark fit       --data data.csv --prior lngl --bins-x 25 --bins-y 50 --out-dir fit/
    csmark evaluate  --estimate fit/posterior_mean.csv [--truth-csv other.csv] --out report.json
    csmark mc        --n-list 200 --reps 20 --bins 5/10,25/50 --out-dir mc/
    csmark heatmap   --weights fit/posterior_mean.csv --out fit/mean.pgm
    csmark replay    fit/manifest.json [--out-root replayed/]

Options may also come from a plain ``key = value`` file given with
``--config``; flags on the command line take precedence over the file, and
the file over the built-in defaults.  Every command writes a JSON manifest
holding the resolved configuration, which ``replay`` re-runs exactly.

On failure the exit status is nonzero and stderr carries one JSON line
``{"error": <category>, "message": ...}``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .censoring import Observation, build_shading
from .errors import CSMarkError, DataValidationError, InvalidArgumentError, ParseError
from .grid import make_grid, true_bin_masses
from .samplers import ChainConfig, TauPrior, run_chain
from .sim import M1, M2, MIX_WEIGHT, SimSpec, f0_density, simulate_latent
from .study import PRIORS, RESULT_FIELDS, make_tasks, parse_bins, run_study, summarize
from .transport import wasserstein1
from .tuning import tune

logger = logging.getLogger("csmark")

EXIT_CODES = {"invalid-argument": 2, "parse": 3, "data-validation": 4, "domain": 4,
              "numerical": 5, "imputation": 5, "io": 6, "error": 1}

# options that name output locations, rewritten by ``replay --out-root``
OUTPUT_KEYS = ("out", "out_dir", "truth", "manifest")


# ---------------------------------------------------------------- config


def read_config(path) -> dict:
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"{path}: line {lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, argv):
    """Re-parse ``argv`` with config-file values installed as defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    values = read_config(args.config)
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, text in values.items():
        action = known.get(key)
        if action is None or key in ("help", "config"):
            raise InvalidArgumentError(f"{args.config}: unknown option {key!r} for {args.command}")
        if action.nargs == 0:
            defaults[key] = text.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(text)
            except (TypeError, ValueError) as exc:
                raise InvalidArgumentError(f"{args.config}: bad value for {key}: {text!r}") from exc
        else:
            defaults[key] = text
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# -------------------------------------------------------------- manifest


def _resolved(args) -> dict:
    skip = {"func", "config", "log_level"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _to_argv(command: str, config: dict, parser: argparse.ArgumentParser) -> list[str]:
    sub = _subparsers(parser)[command]
    argv = [command]
    for action in sub._actions:
        key = action.dest
        if key not in config or key in ("help", "command") or config[key] is None:
            continue
        value = config[key]
        if not action.option_strings:
            argv.append(str(value))
        elif action.nargs == 0:
            flag = action.option_strings[-1]
            if isinstance(action, argparse.BooleanOptionalAction):
                flag = action.option_strings[0] if value else action.option_strings[1]
                argv.append(flag)
            elif value:
                argv.append(flag)
        else:
            argv += [action.option_strings[-1], value if isinstance(value, str) else repr(value)]
    return argv


def write_manifest(path, args, artifacts: dict, wall: float, acceptance=None, extra=None):
    manifest = {
        "command": args.command,
        "config": _resolved(args),
        "seed": getattr(args, "seed", None),
        "artifacts": {k: str(v) for k, v in artifacts.items()},
        "wall_time": wall,
        "acceptance": acceptance or {},
        "argv": sys.argv[1:],
    }
    if extra:
        manifest.update(extra)
    io.write_json(path, manifest)
    return manifest


# -------------------------------------------------------------- commands


def cmd_simulate(args):
    start = time.perf_counter()
    x, y, t, z = simulate_latent(SimSpec(args.n, seed=args.seed, mix_weight=args.mix_weight))
    out = Path(args.out)
    io.write_observations(out, [Observation(float(a), float(b)) for a, b in zip(t, z)])
    artifacts = {"data": out}
    if args.truth:
        io.write_latent_truth(args.truth, x, y, t)
        artifacts["truth"] = Path(args.truth)
    manifest = args.manifest or out.with_suffix(".manifest.json")
    write_manifest(manifest, args, artifacts, time.perf_counter() - start)
    logger.info("wrote %d observations to %s", args.n, out)


def _chain_config(args) -> ChainConfig:
    return ChainConfig(iterations=args.iters, burnin_fraction=args.burnin_frac, rho=args.rho,
                       delta=args.delta, tau_prior=TauPrior.parse(args.tau_prior), seed=args.seed,
                       thin=args.thin, keep_draws=False)


def cmd_fit(args):
    start = time.perf_counter()
    data = io.read_observations(args.data)
    grid = make_grid(args.m1, args.m2, args.bins_x, args.bins_y)
    try:
        data = build_shading(grid, data)
    except DataValidationError as exc:
        raise DataValidationError(f"{args.data}: {exc} (rows count from 0 after the header)") from exc
    cfg = _chain_config(args)
    tuning = None
    if args.tune:
        result = tune(args.prior, grid, data, seed=args.seed, base=cfg)
        cfg = result.apply(cfg)
        tuning = {"rho": result.rho, "delta": result.delta, "accept_z": result.accept_z,
                  "accept_tau": result.accept_tau, "pilot_iterations": result.pilot_iterations}
    out = run_chain(args.prior, cfg, grid, data)
    out_dir = Path(args.out_dir)
    paths = {"posterior_mean": out_dir / "posterior_mean.csv",
             "tau_trace": out_dir / "tau_trace.csv",
             "meta": out_dir / "meta.json"}
    io.write_weights(paths["posterior_mean"], out.posterior_mean, grid)
    io.write_trace(paths["tau_trace"], out.tau_trace)
    acceptance = {"z": out.accept_z, "tau": out.accept_tau}
    meta = dict(out.meta)
    meta.update(acceptance=acceptance, seed=args.seed, tuning=tuning,
                grid={"m1": grid.m1, "m2": grid.m2, "j_bins": grid.j_bins, "k_bins": grid.k_bins},
                zvec_mean_last=(float(out.zvec_mean_trace[-1])
                                if out.zvec_mean_trace is not None else None))
    io.write_json(paths["meta"], meta)
    write_manifest(args.manifest or out_dir / "manifest.json", args, paths,
                   time.perf_counter() - start, acceptance)
    logger.info("fit %s on %d observations: acceptance z=%.3f tau=%.3f",
                args.prior, data.n, out.accept_z, out.accept_tau)


def cmd_evaluate(args):
    start = time.perf_counter()
    estimate, grid = io.read_weights(args.estimate, args.m1, args.m2)
    if args.truth_csv:
        truth, truth_grid = io.read_weights(args.truth_csv, args.m1, args.m2)
        if truth_grid != grid:
            raise InvalidArgumentError(
                f"grid mismatch: estimate is {grid.j_bins}x{grid.k_bins}, "
                f"truth is {truth_grid.j_bins}x{truth_grid.k_bins}")
        truth_source = str(args.truth_csv)
    else:
        if (grid.m1, grid.m2) != (M1, M2):
            raise InvalidArgumentError("the analytic truth lives on [0, 1] x [0, 2]")
        truth = true_bin_masses(grid, lambda x, y: f0_density(x, y, args.mix_weight))
        truth_source = f"analytic:mix_weight={args.mix_weight!r}"
    report = {
        "wasserstein_physical": wasserstein1(grid, estimate, truth, units="physical"),
        "wasserstein_index": wasserstein1(grid, estimate, truth, units="index"),
        "grid": {"m1": grid.m1, "m2": grid.m2, "j_bins": grid.j_bins, "k_bins": grid.k_bins},
        "inputs": {"estimate": str(args.estimate), "truth": truth_source},
    }
    io.write_json(args.out, report)
    write_manifest(args.manifest or Path(args.out).with_suffix(".manifest.json"), args,
                   {"report": args.out}, time.perf_counter() - start)
    logger.info("W1 = %.6g (physical), %.6g (index)",
                report["wasserstein_physical"], report["wasserstein_index"])


def _fmt_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cmd_mc(args):
    start = time.perf_counter()
    n_list = [int(v) for v in args.n_list.split(",") if v.strip()]
    bins = [parse_bins(b.strip()) for b in args.bins.split(",") if b.strip()]
    priors = [p.strip() for p in args.priors.split(",") if p.strip()]
    if args.reps < 1 or not n_list or not bins or not priors:
        raise InvalidArgumentError("need at least one replication, sample size, binning and prior")
    base = ChainConfig(iterations=args.iters, burnin_fraction=args.burnin_frac, rho=args.rho,
                       delta=args.delta, tau_prior=TauPrior.parse(args.tau_prior), keep_draws=False)
    tasks = make_tasks(n_list, bins, priors, args.reps, args.seed, base, args.tune)
    out_dir = Path(args.out_dir)
    results = out_dir / "results.csv"
    summary = out_dir / "summary.csv"

    # the single sink: only the parent process touches the results file
    with io._open_for_write(results) as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n")
        writer.writeheader()

        def sink(row):
            writer.writerow({k: _fmt_cell(row[k]) for k in RESULT_FIELDS})
            fh.flush()

        rows = run_study(tasks, workers=args.workers, sink=sink)

    # rewrite in task order so the file does not depend on scheduling
    with io._open_for_write(results) as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt_cell(row[k]) for k in RESULT_FIELDS})
    cells = summarize(rows)
    with io._open_for_write(summary) as fh:
        writer = csv.DictWriter(fh, fieldnames=list(cells[0]), lineterminator="\n")
        writer.writeheader()
        for c in cells:
            writer.writerow({k: _fmt_cell(v) for k, v in c.items()})
    failed = sum(r["status"] != "ok" for r in rows)
    ok = [r for r in rows if r["status"] == "ok"]
    acceptance = {"z_mean": float(np.nanmean([r["accept_z"] for r in ok])) if any(
        r["prior"] == "lngl" for r in ok) else None,
        "tau_mean": float(np.mean([r["accept_tau"] for r in ok])) if ok else None}
    write_manifest(args.manifest or out_dir / "manifest.json", args,
                   {"results": results, "summary": summary}, time.perf_counter() - start,
                   acceptance, {"failed_rows": failed})
    for c in cells:
        logger.info("n=%d %d/%d %s: mean W1 %.4f over %d reps", c["n"], c["j_bins"],
                    c["k_bins"], c["prior"], c["mean_wasserstein"], c["reps"])
    if failed:
        logger.warning("%d of %d rows failed; see the status column of %s", failed, len(rows), results)


def cmd_heatmap(args):
    start = time.perf_counter()
    table = io.read_weight_table(args.weights)
    image, vmax = io.heatmap_pixels(table, block=args.block)
    out = Path(args.out)
    io.write_pgm(out, image)
    sidecar = out.with_suffix(".json")
    io.write_json(sidecar, {"vmin": 0.0, "vmax": vmax, "block": args.block,
                            "j_bins": table.shape[1], "k_bins": table.shape[0],
                            "orientation": "columns: event time left to right; rows: mark bottom to top",
                            "source": str(args.weights)})
    write_manifest(args.manifest or out.with_suffix(".manifest.json"), args,
                   {"image": out, "scale": sidecar}, time.perf_counter() - start)


def cmd_replay(args):
    manifest = io.read_json(args.manifest_path)
    try:
        command, config = manifest["command"], dict(manifest["config"])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{args.manifest_path}: not a run manifest") from exc
    if command == "replay":
        raise InvalidArgumentError("cannot replay a replay manifest")
    if args.out_root:
        root = Path(args.out_root)
        for key in OUTPUT_KEYS:
            if config.get(key):
                config[key] = str(root / Path(config[key]).name)
    argv = _to_argv(command, config, build_parser())
    logger.info("replaying: %s", " ".join(argv))
    return main(argv)


# ---------------------------------------------------------------- parser


def _add_chain_options(p, defaults=ChainConfig()):
    p.add_argument("--iters", type=int, default=defaults.iterations, help="MCMC iterations")
    p.add_argument("--burnin-frac", type=float, default=defaults.burnin_fraction,
                   help="fraction of iterations discarded as burn-in")
    p.add_argument("--rho", type=float, default=defaults.rho, help="pCN correlation (lngl)")
    p.add_argument("--delta", type=float, default=defaults.delta, help="log-scale step for tau")
    p.add_argument("--tau-prior", default=str(defaults.tau_prior),
                   help="'exponential[:rate]' or 'gamma:shape,rate'")
    p.add_argument("--seed", type=int, default=0)


def _add_support_options(p):
    p.add_argument("--m1", type=float, default=M1, help="upper end of the event-time axis")
    p.add_argument("--m2", type=float, default=M2, help="upper end of the mark axis")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csmark", description=__doc__.split("\n\n")[0])
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", help="draw a synthetic dataset")
    p.add_argument("--n", type=int, default=200, help="number of observations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mix-weight", type=float, default=MIX_WEIGHT)
    p.add_argument("--out", default="data.csv", help="observation CSV (t,z)")
    p.add_argument("--truth", default=None, help="optional CSV of latent (x,y,t)")
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("fit", help="run one MCMC chain")
    p.add_argument("--data", required=True, help="observation CSV with header t,z")
    p.add_argument("--prior", choices=PRIORS, default="lngl")
    p.add_argument("--bins-x", type=int, default=25, help="bins along the event-time axis")
    p.add_argument("--bins-y", type=int, default=50, help="bins along the mark axis")
    _add_chain_options(p)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--tune", action=argparse.BooleanOptionalAction, default=False,
                   help="choose rho and delta by a pilot run first")
    _add_support_options(p)
    p.add_argument("--out-dir", default="fit")
    p.set_defaults(func=cmd_fit)

    p = subs.add_parser("evaluate", help="Wasserstein-1 distance of an estimate to the truth")
    p.add_argument("--estimate", required=True, help="bin-weight CSV")
    p.add_argument("--truth-csv", default=None,
                   help="bin-weight CSV of the truth (default: simulation density)")
    p.add_argument("--mix-weight", type=float, default=MIX_WEIGHT)
    _add_support_options(p)
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("mc", help="Monte-Carlo study over sample sizes, binnings and priors")
    p.add_argument("--n-list", default="200", help="comma-separated sample sizes")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--bins", default="25/50", help="comma-separated binnings such as 5/10,25/50")
    p.add_argument("--priors", default="lngl,dirichlet")
    _add_chain_options(p)
    p.add_argument("--tune", action=argparse.BooleanOptionalAction, default=True,
                   help="tune rho and delta per replication")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--out-dir", default="mc")
    p.set_defaults(func=cmd_mc)

    p = subs.add_parser("heatmap", help="greyscale PGM image of a bin-weight CSV")
    p.add_argument("--weights", required=True)
    p.add_argument("--block", type=int, default=8, help="pixels per bin side")
    p.add_argument("--out", default="heatmap.pgm")
    p.set_defaults(func=cmd_heatmap)

    p = subs.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest_path")
    p.add_argument("--out-root", default=None, help="write outputs under this directory instead")
    p.set_defaults(func=cmd_replay)

    for name, sub in subs.choices.items():
        if name != "replay":
            sub.add_argument("--config", default=None, help="key = value file of option defaults")
            sub.add_argument("--manifest", default=None, help="where to write the run manifest")
    return parser


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    raise RuntimeError("parser has no subcommands")


def _fail(category: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": category, "message": message}) + "\n")
    return EXIT_CODES.get(category, 1)


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "config", None):
            args = _apply_config(parser, _subparsers(parser)[args.command], argv)
        result = args.func(args)
    except CSMarkError as exc:
        return _fail(exc.category, str(exc))
    except OSError as exc:
        return _fail("io", str(exc))
    return result or 0


if __name__ == "__main__":
    sys.exit(main())
