"""Command line entry point: ``partialfl {run,sweep,lemmas,cost,partition-stats}``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import lemmas
from .config import ConfigError, ExperimentConfig, parse_value, two_point
from .data import cost_report
from .extraction import submodel_num_params
from .federation import load_data, make_partition, run_experiment, simulate_cost_trace
from .fileio import write_model
from .reporting import format_table, summary_row, write_jsonl

log = logging.getLogger("partialfl")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    for item in getattr(args, "set", None) or []:
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or not hasattr(cfg, key):
            raise ConfigError(key or item, "unknown key in --set")
        changes[key] = parse_value(key, val.strip(), getattr(cfg, key))
    if getattr(args, "seed", None):
        changes["seeds"] = tuple(args.seed)
    if getattr(args, "scheme", None) and "," not in args.scheme:
        changes["scheme"] = args.scheme
    if getattr(args, "eval_every", None):
        changes["eval_every"] = args.eval_every
    if getattr(args, "out", None):
        changes["out"] = args.out
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    return cfg.replace(**changes).validate()


def _run_one(cfg: ExperimentConfig, seed: int, out_dir, metrics_name=None):
    """Run a single seed and write its model snapshot (and metrics file if named).

    Named runs store the snapshot under the metrics file's stem so sweep runs do not collide.
    """
    res = run_experiment(cfg, seed, out_dir=None if metrics_name else out_dir)
    if metrics_name:
        out = Path(out_dir)
        write_jsonl(out / metrics_name, res.records)
        write_model(out / (Path(metrics_name).stem + ".fmd"), res.params)
    return res.records


def cmd_run(args) -> int:
    cfg = load_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    all_records, finals = [], []
    for seed in cfg.seeds:
        records = _run_one(cfg, seed, out)
        all_records.extend(records)
        if records:
            finals.append(records[-1])
            r = records[-1]
            print(f"seed {seed}: round {r.round} global {r.global_acc:.4f} local {r.local_acc_mean:.4f}")
        else:
            print(f"seed {seed}: no rounds run")
    summary = summary_row(finals, scheme=cfg.scheme)
    write_jsonl(out / "metrics.jsonl", [*all_records, summary])
    if finals:
        print(f"{cfg.scheme}: global {summary['global_acc_mean']:.4f} +/- {summary['global_acc_std']:.4f} over {len(finals)} seed(s)")
    if not args.no_plots and all_records:
        from . import plotting

        series = {f"seed {s}": [r for r in all_records if r.seed == s] for s in cfg.seeds}
        plotting.accuracy_curves(series, out / "accuracy.png")
    print(f"wrote {out / 'metrics.jsonl'}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    if (args.rho is None) == (args.gamma is None):
        raise ConfigError("sweep", "give exactly one of --rho or --gamma")
    schemes = args.scheme.split(",") if args.scheme else [cfg.scheme]
    for s in schemes:
        cfg.replace(scheme=s).validate()
    if args.rho is not None:
        param, values = "rho", args.rho
        variants = [cfg.replace(capacities=two_point(v), gamma=1) for v in values]
    else:
        param, values = "gamma", [int(g) for g in args.gamma]
        variants = [cfg.replace(gamma=g, capacities=tuple((b / g, p) for b, p in cfg.capacities)) for g in values]

    out = Path(cfg.out)
    jobs = []
    for value, variant in zip(values, variants):
        for scheme in schemes:
            v = variant.replace(scheme=scheme).validate()
            for seed in cfg.seeds:
                jobs.append((value, scheme, seed, v, f"{param}{value:g}_{scheme}_seed{seed}.jsonl"))

    def submit(pool):
        if pool is None:
            return [_run_one(v, seed, out, name) for _, _, seed, v, name in jobs]
        futures = [pool.submit(_run_one, v, seed, out, name) for _, _, seed, v, name in jobs]
        return [f.result() for f in futures]

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = submit(pool)
    else:
        results = submit(None)

    summaries, plot_data = [], {s: ([], []) for s in schemes}
    for value in values:
        for scheme in schemes:
            finals = [recs[-1] for (v, s, _, _, _), recs in zip(jobs, results) if v == value and s == scheme and recs]
            row = summary_row(finals, scheme=scheme, **{param: value})
            summaries.append(row)
            if finals:
                plot_data[scheme][0].append(row["global_acc_mean"])
                plot_data[scheme][1].append(row["global_acc_std"])
                print(f"{param}={value:g} {scheme}: {row['global_acc_mean']:.4f} +/- {row['global_acc_std']:.4f}")
    write_jsonl(out / f"sweep_{param}_summary.jsonl", summaries)
    if not args.no_plots and all(len(m) == len(values) for m, _ in plot_data.values()) and cfg.rounds > 0:
        from . import plotting

        plotting.sweep_plot(values, plot_data, out / f"sweep_{param}.png", param)
    print(f"wrote {len(jobs)} metrics files to {out}")
    return 0


def cmd_lemmas(args) -> int:
    rows = lemmas.lemma_table(args.max_i, args.m, trials=args.trials, seed=args.seed[0] if args.seed else 0, min_i=args.min_i)
    table = [
        (r.I, r.m, f"{r.closed_form:.4f}", f"{r.monte_carlo:.4f}", f"{r.std_error:.4f}", f"{r.z:.2f}",
         "ok" if r.agrees else "MISMATCH", r.rolling, f"{r.asymptotic:.2f}")
        for r in rows
    ]
    print(format_table(("I", "m", "quadrature", "monte_carlo", "std_err", "z", "check", "rolling_mI", "asymptotic"), table))
    bad = [r.I for r in rows if not r.agrees]
    print(f"{len(rows) - len(bad)}/{len(rows)} Monte Carlo means within 3 standard errors")
    if args.out:
        out = Path(args.out)
        write_jsonl(out / f"lemmas_m{args.m}.jsonl", [
            {"I": r.I, "m": r.m, "quadrature": r.closed_form, "monte_carlo": r.monte_carlo,
             "std_error": r.std_error, "rolling": r.rolling, "asymptotic": r.asymptotic, "agrees": r.agrees}
            for r in rows
        ])
        if not args.no_plots:
            from . import plotting

            plotting.lemma_plot(rows, out / f"lemmas_m{args.m}.png")
    return 0


def cmd_cost(args) -> int:
    cfg = load_config(args)
    rounds = args.rounds if args.rounds is not None else cfg.rounds
    if rounds < 1:
        raise ConfigError("rounds", "cost accounting needs at least one round")
    report = cost_report(simulate_cost_trace(cfg, rounds))
    spec = cfg.server_spec()
    expected = sum(p * submodel_num_params(spec, b) for b, p in cfg.capacities)
    d = report.as_dict()
    d["full_model_params"] = spec.num_params()
    d["expected_params"] = expected
    print(format_table(("metric", "value"), [(k, f"{v:.6g}" if isinstance(v, float) else v) for k, v in d.items()]))
    if args.out:
        write_jsonl(Path(args.out) / "cost.jsonl", [d])
    return 0


def cmd_partition_stats(args) -> int:
    cfg = load_config(args)
    seed = cfg.seeds[0]
    train, _ = load_data(cfg, seed)
    plan = make_partition(cfg, train, seed)
    sizes = plan.sizes()
    distinct = np.array([np.unique(train.labels[s]).size for s in plan.shards])
    dominant = np.array([np.bincount(train.labels[s]).max() / len(s) for s in plan.shards])
    holders = np.zeros(train.num_classes, dtype=int)
    for s in plan.shards:
        holders[np.unique(train.labels[s])] += 1
    rows = [
        ("clients", len(plan)),
        ("examples", int(sizes.sum())),
        ("shard size min/mean/max", f"{sizes.min()}/{sizes.mean():.1f}/{sizes.max()}"),
        ("labels per client min/max", f"{distinct.min()}/{distinct.max()}"),
        ("dominant label share median", f"{np.median(dominant):.3f}"),
        ("clients per label min/max", f"{holders.min()}/{holders.max()}"),
    ]
    print(format_table(("statistic", "value"), rows))
    if args.out:
        write_jsonl(Path(args.out) / "partition_stats.jsonl", [{
            "sizes": sizes.tolist(), "labels_per_client": distinct.tolist(),
            "dominant_share": dominant.tolist(), "clients_per_label": holders.tolist(),
        }])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="partialfl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, experiment=True):
        sp.add_argument("--seed", type=int, action="append", help="master seed (repeatable)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--no-plots", action="store_true", help="skip figure rendering")
        if experiment:
            sp.add_argument("--config", help="key = value config file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
            sp.add_argument("--scheme", help="rolling, random or static")
            sp.add_argument("--eval-every", type=int, dest="eval_every")
            sp.add_argument("--workers", type=int, help="threads for client steps within a round")

    sp = sub.add_parser("run", help="run one configuration over its seeds")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="sweep the capacity ratio rho or server scale gamma")
    common(sp)
    sp.add_argument("--rho", type=_float_list)
    sp.add_argument("--gamma", type=_int_list)
    sp.add_argument("--jobs", type=int, default=1, help="parallel runs")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("lemmas", help="closed-form vs Monte Carlo coupon-collector round counts")
    common(sp, experiment=False)
    sp.add_argument("--max-i", type=int, default=10, dest="max_i")
    sp.add_argument("--min-i", type=int, default=1, dest="min_i")
    sp.add_argument("--m", type=int, default=1)
    sp.add_argument("--trials", type=int, default=20000)
    sp.set_defaults(func=cmd_lemmas)

    sp = sub.add_parser("cost", help="communication and computation cost report")
    common(sp)
    sp.add_argument("--rounds", type=int)
    sp.set_defaults(func=cmd_cost)

    sp = sub.add_parser("partition-stats", help="summarise the client data partition")
    common(sp)
    sp.set_defaults(func=cmd_partition_stats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: invalid config field {err}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
