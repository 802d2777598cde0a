"""Command-line front end: generate, train, evaluate, sweep, exact, diagnose.

One configuration file describes a study; the subcommands walk it
through the pipeline::

    ttlaw generate --config study.json          # datasets
    ttlaw train    --config study.json --data dataset_… .json
    ttlaw evaluate --config study.json --model model_… .json
    ttlaw sweep    --config study.json          # full (M, σ, restart) grid
    ttlaw exact    --system fput --d 8          # closed-form witnesses
    ttlaw diagnose --model model_… .json        # interface spectra

Exit codes: 0 on success (including the sweep cap), 2 on configuration
or input errors, 3 on a numerical abort during training.

Randomness is a pure function of the master seed: states come from the
sampling substream, noise from the noise substream, restart ``r``'s
cores from the init substream at index ``r``, and held-out evaluation
states from the eval substream.  Re-running any subcommand with the
same configuration therefore reproduces its artifacts, and the sweep
resumes by skipping cells already recorded under the same
configuration hash.
"""

import argparse
import concurrent.futures
import dataclasses
import json
import math
import os
import sys
import time

import numpy as np

from .als import TrainOptions, train
from .config import load_config
from .dictionaries import make_dictionary
from .errors import ConfigError, NumericalAbortError, TTLawError
from .ranks import (
    dipole_kmode_descriptor,
    exact_tt_kmode,
    exact_tt_local,
    fput_local_descriptor,
    interface_diagnostics,
    SEPARATION_RTOL,
)
from .rng import EVAL, INIT, substream
from .selection import local_selection_table, random_ensemble
from .serialize import (
    RESULT_COLUMNS,
    SCHEMA_VERSION,
    config_hash,
    dataset_to_csv,
    history_csv_text,
    load_dataset,
    load_model,
    read_results,
    save_dataset,
    save_ensemble_model,
    save_trains_model,
    system_from_dict,
    system_to_dict,
    write_history,
    write_results,
)
from .systems import (
    SamplerSpec,
    default_intervals,
    dipole_system,
    fput_system,
    residuum,
    sample_dataset,
    system_rhs,
)

_TWO_PI = 2.0 * math.pi


# -- shared plumbing --------------------------------------------------------------


def _require_config(args):
    if args.config is None:
        raise ConfigError("this command needs --config <path>")
    return load_config(args.config, seed=args.seed, out_dir=args.out_dir)


def _out_dir(cfg):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def _dataset_name(cfg_hash, M, sigma):
    return f"dataset_{cfg_hash[:12]}_M{M}_s{sigma:g}.json"


def _history_name(cfg_hash, M, sigma, restart):
    return f"history_{cfg_hash[:12]}_M{M}_s{sigma:g}_r{restart}.csv"


def _emit(report, path=None):
    text = json.dumps(report, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(text + "\n")
    print(text)


def _build_ensemble(cfg, domains, restart):
    dictionary = make_dictionary(
        cfg.dictionary_kind, max_degree=cfg.max_degree, domains=domains
    )
    table = local_selection_table(cfg.d, cfg.L)
    rng = substream(cfg.seed, INIT, restart)
    return random_ensemble(dictionary, table, cfg.lam, cfg.rho, rng)


def _check_domains(dictionary, spec):
    """Warn when evaluation states can leave the model's fitted domains."""
    for (lo, hi), (a, b) in zip(default_intervals(spec), dictionary.domains):
        if lo < a or hi > b:
            print(
                f"warning: evaluation interval ({lo}, {hi}) exceeds "
                f"model domain ({a}, {b})",
                file=sys.stderr,
            )
            return


# -- generate ---------------------------------------------------------------------


def cmd_generate(args):
    cfg = _require_config(args)
    out = _out_dir(cfg)
    if args.m is not None or args.sigma is not None:
        M = args.m if args.m is not None else cfg.m_grid[0]
        sigma = args.sigma if args.sigma is not None else cfg.sigma_grid[0]
        cells = [(M, sigma)]
    else:
        cells = [(M, sigma) for M in cfg.m_grid for sigma in cfg.sigma_grid]
    cfg_hash = cfg.hash()
    for M, sigma in cells:
        sampler = SamplerSpec(intervals=cfg.intervals, sigma=sigma, seed=cfg.seed)
        data = sample_dataset(cfg.system, sampler, M)
        path = os.path.join(out, _dataset_name(cfg_hash, M, sigma))
        save_dataset(path, cfg.system, sampler, data, provenance={"config": cfg_hash})
        if args.csv:
            with open(path[: -len(".json")] + ".csv", "w", encoding="ascii") as fh:
                dataset_to_csv(data, fh)
        print(path)
    return 0


# -- train ------------------------------------------------------------------------


def cmd_train(args):
    cfg = _require_config(args)
    out = _out_dir(cfg)
    spec, sampler, data = load_dataset(args.data)
    if data.d != cfg.d:
        raise ConfigError(
            f"dataset has d={data.d} modes, configuration says d={cfg.d}"
        )
    if system_to_dict(spec) != system_to_dict(cfg.system):
        print(
            "warning: dataset was generated from a different system "
            "description; its header takes precedence for evaluation",
            file=sys.stderr,
        )
    cfg_hash = cfg.hash()
    ens_init = _build_ensemble(cfg, data.domains, restart=0)
    started = time.perf_counter()
    ensemble, history = train(ens_init, data, cfg.options)
    seconds = time.perf_counter() - started
    meta = {
        "config": cfg_hash,
        "seed": cfg.seed,
        "system": system_to_dict(spec),
        "M": data.M,
        "sigma": sampler.sigma,
        "lam": cfg.lam,
        "rho": cfg.rho,
        "L": cfg.L,
        "restarts": cfg.restarts,
        "best_restart": history.best_restart,
        "final_loss": history.final_loss,
        "seconds": seconds,
    }
    model_path = args.model_out or os.path.join(out, f"model_{cfg_hash[:12]}.json")
    history_path = args.history_out or os.path.join(
        out, f"history_{cfg_hash[:12]}.csv"
    )
    save_ensemble_model(model_path, ensemble, meta)
    write_history(history_path, history, cfg_hash)
    _emit(
        {
            "model": model_path,
            "history": history_path,
            "final_loss": history.final_loss,
            "best_restart": history.best_restart,
            "sweeps": max(r.sweep for r in history.records),
            "seconds": seconds,
        }
    )
    return 0


# -- evaluate ---------------------------------------------------------------------


def _load_results(path, cfg_hash):
    """Rows of an existing results file, refusing a foreign config hash."""
    if not os.path.exists(path):
        return []
    existing_hash, rows = read_results(path)
    if existing_hash != cfg_hash:
        raise ConfigError(
            f"{path} belongs to configuration {existing_hash[:12]}…, "
            f"current configuration is {cfg_hash[:12]}…; "
            "use a fresh --out-dir"
        )
    return rows


def _merge_results(path, cfg_hash, new_rows):
    """Single-writer append: keep existing rows, add new, canonical order."""
    rows = _load_results(path, cfg_hash)
    rows.extend(new_rows)
    rows.sort(key=lambda r: (r["M"], r["sigma"], r["restart"]))
    write_results(path, cfg_hash, rows)
    return rows


def cmd_evaluate(args):
    cfg = _require_config(args)
    out = _out_dir(cfg)
    model = load_model(args.model)
    if "system" in model.meta:
        spec = system_from_dict(model.meta["system"])
    else:
        spec = cfg.system
    _check_domains(model.dictionary, spec)
    m_prime = args.m_prime or cfg.m_prime
    started = time.perf_counter()
    value = residuum(model.predict, system_rhs(spec), spec, m_prime, seed=cfg.seed)
    seconds = time.perf_counter() - started
    meta = model.meta
    row = {
        "system": spec.kind,
        "d": spec.d,
        "M": meta.get("M", 0),
        "sigma": meta.get("sigma", 0.0),
        "rho": meta.get("rho", cfg.rho),
        "L": meta.get("L", cfg.L),
        "restart": meta.get("best_restart", 0),
        "residuum": value,
        "seconds": seconds,
        "status": "ok",
    }
    results_path = args.results or os.path.join(out, "results.csv")
    _merge_results(results_path, cfg.hash(), [row])
    _emit(
        {
            "format": "ttlaw-report",
            "schema": SCHEMA_VERSION,
            "config": cfg.hash(),
            "model": args.model,
            "m_prime": m_prime,
            "seed": cfg.seed,
            "residuum": value,
            "seconds": seconds,
            "results": results_path,
        },
        args.report,
    )
    return 0


# -- sweep ------------------------------------------------------------------------


def _sweep_cell(cfg, M, sigma, restart):
    """Train one grid cell; returns ``(row, history)``.

    Deterministic given the configuration: datasets come from the
    sampling/noise substreams (shared across cells, so a larger M
    extends a smaller one), restart ``r`` draws its cores from the init
    substream at index ``r``, and evaluation uses the eval substream.
    """
    sampler = SamplerSpec(intervals=cfg.intervals, sigma=sigma, seed=cfg.seed)
    data = sample_dataset(cfg.system, sampler, M)
    ens_init = _build_ensemble(cfg, data.domains, restart)
    options = dataclasses.replace(cfg.options, restarts=1)
    row = {
        "system": cfg.system.kind,
        "d": cfg.d,
        "M": M,
        "sigma": sigma,
        "rho": cfg.rho,
        "L": cfg.L,
        "restart": restart,
        "residuum": float("nan"),
        "seconds": 0.0,
        "status": "ok",
    }
    started = time.perf_counter()
    history = None
    try:
        ensemble, history = train(ens_init, data, options)
        row["residuum"] = residuum(
            ensemble.predict, system_rhs(cfg.system), cfg.system, cfg.m_prime,
            seed=cfg.seed,
        )
    except NumericalAbortError as exc:
        row["status"] = f"abort:{exc.snapshot.get('sweep', '?')}"
    row["seconds"] = time.perf_counter() - started
    return row, history


def cmd_sweep(args):
    cfg = _require_config(args)
    out = _out_dir(cfg)
    cfg_hash = cfg.hash()
    results_path = os.path.join(out, "results.csv")
    rows = _load_results(results_path, cfg_hash)
    done = {
        (row["M"], row["sigma"], row["restart"])
        for row in rows
        if row["status"] == "ok"
    }
    cells = [
        (M, sigma, r)
        for M in cfg.m_grid
        for sigma in cfg.sigma_grid
        for r in range(cfg.restarts)
        if (M, sigma, r) not in done
    ]
    kept = [row for row in rows if row["status"] == "ok"]
    if len(kept) != len(rows):  # drop failed rows for the cells re-run below
        kept.sort(key=lambda r: (r["M"], r["sigma"], r["restart"]))
        write_results(results_path, cfg_hash, kept)
    workers = max(1, args.threads or 1)

    def finish(cell, row, history):
        M, sigma, restart = cell
        if history is not None:
            path = os.path.join(out, _history_name(cfg_hash, M, sigma, restart))
            with open(path, "w", encoding="ascii") as fh:
                fh.write(history_csv_text(history, cfg_hash))
        _merge_results(results_path, cfg_hash, [row])
        print(
            f"cell M={M} sigma={sigma:g} restart={restart}: "
            f"{row['status']} residuum={row['residuum']:.3e} "
            f"({row['seconds']:.1f}s)"
        )

    if workers == 1 or len(cells) <= 1:
        for cell in cells:
            row, history = _sweep_cell(cfg, *cell)
            finish(cell, row, history)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_sweep_cell, cfg, *cell): cell for cell in cells
            }
            for future in concurrent.futures.as_completed(futures):
                row, history = future.result()
                finish(futures[future], row, history)
    print(results_path)
    return 0


# -- exact ------------------------------------------------------------------------


def cmd_exact(args):
    d = args.d
    if args.system == "fput":
        spec = fput_system(d)
        dictionary = make_dictionary(
            "monomial", max_degree=args.max_degree, domains=((-1.0, 1.0),) * d
        )
        descriptor = fput_local_descriptor(spec)
        trains = [
            exact_tt_local(descriptor, dictionary, k) for k in range(1, d + 1)
        ]
    else:
        spec = dipole_system(d)
        dictionary = make_dictionary(
            "trigonometric", domains=((0.0, _TWO_PI),) * d
        )
        descriptor = dipole_kmode_descriptor(spec)
        trains = [
            exact_tt_kmode(descriptor, dictionary, k) for k in range(1, d + 1)
        ]
    profiles = [list(train.ranks) for train in trains]
    interior = [r for profile in profiles for r in profile[1:-1]]

    rng = substream(args.seed or 0, EVAL)
    lows = np.array([lo for lo, _ in dictionary.domains])
    spans = np.array([hi - lo for lo, hi in dictionary.domains])
    X = lows + spans * rng.random((200, d))
    truth = system_rhs(spec)(X)
    feats = dictionary.featurize_batch(X)
    worst = 0.0
    for k, train in enumerate(trains, start=1):
        err = train.evaluate_batch(feats) - truth[:, k - 1]
        denom = max(float(abs(truth[:, k - 1]).max()), 1e-300)
        worst = max(worst, float(abs(err).max()) / denom)

    identity = {"system": system_to_dict(spec), "dictionary": dictionary.descriptor()}
    report = {
        "format": "ttlaw-report",
        "schema": SCHEMA_VERSION,
        "config": config_hash(identity),
        "system": identity["system"],
        "dictionary": identity["dictionary"],
        "rank_profiles": profiles,
        "max_interior_rank": max(interior) if interior else 1,
        "verification": {"states": 200, "max_rel_error": worst},
    }
    if args.save_model:
        save_trains_model(
            args.save_model,
            dictionary,
            trains,
            meta={"config": report["config"], "system": report["system"]},
        )
        report["model"] = args.save_model
    _emit(report, args.report)
    return 0


# -- diagnose ---------------------------------------------------------------------


def cmd_diagnose(args):
    model = load_model(args.model)
    components = []
    for k, law in enumerate(model.component_laws(), start=1):
        entry = {"k": k}
        entry.update(interface_diagnostics(law, rel_tol=args.rel_tol))
        components.append(entry)
    _emit(
        {
            "format": "ttlaw-report",
            "schema": SCHEMA_VERSION,
            "config": model.meta.get("config", ""),
            "model": args.model,
            "components": components,
        },
        args.report,
    )
    return 0


# -- parser -----------------------------------------------------------------------


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment configuration (JSON or TOML)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out-dir", help="override the output directory")
    common.add_argument(
        "--threads",
        type=int,
        help="worker processes for sweep cells (default 1)",
    )

    parser = argparse.ArgumentParser(
        prog="ttlaw",
        description="Recover dynamical laws as block-sparse tensor trains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "generate", parents=[common], help="sample datasets over the (M, σ) grid"
    )
    p.add_argument("--m", type=int, help="generate a single dataset of M samples")
    p.add_argument("--sigma", type=float, help="noise level for --m")
    p.add_argument("--csv", action="store_true", help="also write a CSV export")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser(
        "train", parents=[common], help="fit the shared-core model to a dataset"
    )
    p.add_argument("--data", required=True, help="dataset file from generate")
    p.add_argument("--model-out", help="model path (default out-dir/model_<hash>.json)")
    p.add_argument("--history-out", help="history CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "evaluate", parents=[common], help="held-out residuum of a trained model"
    )
    p.add_argument("--model", required=True, help="model file from train or exact")
    p.add_argument("--m-prime", type=int, help="held-out sample count")
    p.add_argument("--results", help="results CSV to append to")
    p.add_argument("--report", help="write the JSON report here too")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "sweep", parents=[common], help="run the full (M, σ, restart) grid"
    )
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser(
        "exact", parents=[common], help="closed-form low-rank witness trains"
    )
    p.add_argument("--system", required=True, choices=("fput", "dipole"))
    p.add_argument("--d", type=int, required=True, help="number of modes")
    p.add_argument(
        "--max-degree",
        type=int,
        default=3,
        help="monomial degree for the spring chain (default 3)",
    )
    p.add_argument("--save-model", help="write the trains as an evaluable model")
    p.add_argument("--report", help="write the JSON report here too")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser(
        "diagnose", parents=[common], help="interface spectra of a model's laws"
    )
    p.add_argument("--model", required=True, help="model file")
    p.add_argument(
        "--rel-tol",
        type=float,
        default=SEPARATION_RTOL,
        help="relative singular-value cutoff",
    )
    p.add_argument("--report", help="write the JSON report here too")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericalAbortError as exc:
        print(f"error: numerical abort: {exc}", file=sys.stderr)
        return 3
    except TTLawError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
