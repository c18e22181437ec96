"""Command-line front end: gen-data, run, estimate, compare, commute."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig
from .estimator import (EstimatedCurve, EstimationError, MeasurementStore, MissingMeasurementError,
                        estimate_pipeline, round_percent)
from .estimator.table2 import build_store
from .evalbench import (TradeoffCurve, commutativity_report, curve_distance, gen_task,
                        read_curve_csv, write_curve_csv, write_report_csv)
from .evalbench.tasks import KINDS, Dataset
from .lab import Lab
from .pipeline import PipelineError, PipelineParseError, Registry, parse, validate
from .pipeline.execute import REGISTRY_ENV

log = logging.getLogger("effops")

EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4
TABLE2_STORE = "table2"
ESTIMATE_COLUMNS = ("task", "seed", "target", "threshold", "est_time", "est_accuracy",
                    "est_saving_pct", "measured_time", "measured_accuracy", "measured_saving_pct",
                    "provenance")


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "task", None):
        cfg = cfg.with_task_kind(args.task)
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=str(args.out))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seeds=tuple(args.seed))
    return cfg


def _registry(cfg: RunConfig) -> Registry:
    return Registry.from_env(Path(cfg.out_dir) / "registry")


def _echo_config(cfg: RunConfig, out: Path) -> None:
    cfg.write(out / "effective_config.json")


def write_split(ds: Dataset, path: Path) -> None:
    with path.open("w") as f:
        f.write("label\tlength\ttokens\n")
        for tok, n, y in zip(ds.tokens, ds.lengths, ds.labels):
            f.write(f"{int(y)}\t{int(n)}\t{' '.join(str(int(t)) for t in tok[:n])}\n")


def cmd_gen_data(args) -> int:
    if not args.task and not args.config:
        raise CliError("gen-data needs --task (or a --config naming the task)", EXIT_USAGE)
    cfg = _load_config(args)
    if args.task_seed is not None:
        cfg = replace(cfg, task=replace(cfg.task, seed=args.task_seed))
    out = Path(args.out_data)
    files = [out / f"{name}.tsv" for name in ("train", "dev", "test")]
    if any(f.exists() for f in files) and not args.force:
        raise CliError(f"{out} already holds data; pass --force to overwrite", EXIT_USAGE)
    out.mkdir(parents=True, exist_ok=True)
    splits = gen_task(cfg.task)
    for f, ds in zip(files, (splits.train, splits.dev, splits.test)):
        write_split(ds, f)
    (out / "task.json").write_text(json.dumps(cfg.task.to_dict(), indent=1))
    print(f"wrote {len(splits.train)}/{len(splits.dev)}/{len(splits.test)} examples to {out}")
    return EXIT_OK


def _store_path(cfg: RunConfig, args) -> Path:
    return Path(args.store) if getattr(args, "store", None) else Path(cfg.out_dir) / "measurements.json"


def cmd_run(args) -> int:
    cfg = _load_config(args)
    spec = _parse_checked(args.pipeline)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)
    lab = Lab(cfg, _registry(cfg))
    store_path = _store_path(cfg, args)
    store = MeasurementStore.load(store_path)
    for seed in cfg.seeds:
        m = lab.record(store, spec.to_string(), seed)
        name = spec.to_string()
        if isinstance(m, TradeoffCurve):
            path = out / lab.task_id / str(seed) / f"{name}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            write_curve_csv(m, path)
            print(f"{name} seed {seed}: curve with {len(m)} points -> {path}")
        else:
            print(f"{name} seed {seed}: accuracy {m.accuracy * 100:.2f} mean MACs {m.time_cost:.0f}")
    store.save(store_path)
    log.info("registry hits %d, trained %d", lab.registry.hits, lab.registry.misses)
    return EXIT_OK


def _parse_checked(s: str):
    try:
        spec = parse(s)
    except PipelineParseError as e:
        raise CliError(str(e), EXIT_USAGE) from e
    problems = validate(spec)
    if problems:
        raise CliError(f"invalid pipeline {s}: " + "; ".join(problems), EXIT_USAGE)
    return spec


def _group1_base(store: MeasurementStore, task: str, seed: int, target: str):
    g1 = "".join(o for o in target if o in "DPE") or "O"
    return store.get(task, seed, g1)


def estimate_rows(store: MeasurementStore, target: str, tasks, seeds=None) -> list[dict]:
    spec = _parse_checked(target)
    name = spec.to_string()
    rows = []
    for task in tasks:
        for seed in (seeds or store.seeds(task)):
            est = estimate_pipeline(store, spec, task, seed)
            measured = store.get(task, seed, name)
            base = _group1_base(store, task, seed, name)
            prov = "; ".join(est.provenance)
            if isinstance(est, EstimatedCurve):
                by_thr = {p.threshold: p for p in measured.points} if isinstance(measured, TradeoffCurve) else {}
                for p in est.points:
                    m = by_thr.get(p.threshold)
                    rows.append({"task": task, "seed": seed, "target": name, "threshold": p.threshold,
                                 "est_time": p.time_cost, "est_accuracy": p.accuracy,
                                 "est_saving_pct": "", "measured_time": m.time_cost if m else "",
                                 "measured_accuracy": m.accuracy if m else "",
                                 "measured_saving_pct": "", "provenance": prov})
                if isinstance(measured, TradeoffCurve):
                    d = curve_distance(est.curve, measured)
                    print(f"{task} seed {seed} {name}: curve distance estimated vs measured = {d:.2f} points")
            else:
                p = est.point
                has_base = base is not None and not isinstance(base, TradeoffCurve)
                est_sav = round_percent(1 - p.time_cost / base.time_cost) if has_base else ""
                meas_sav = ""
                if has_base and measured is not None and not isinstance(measured, TradeoffCurve):
                    meas_sav = round_percent(1 - measured.time_cost / base.time_cost)
                rows.append({"task": task, "seed": seed, "target": name, "threshold": "",
                             "est_time": p.time_cost, "est_accuracy": p.accuracy,
                             "est_saving_pct": -est_sav if est_sav != "" else "",
                             "measured_time": measured.time_cost if measured is not None and not isinstance(measured, TradeoffCurve) else "",
                             "measured_accuracy": measured.accuracy if measured is not None and not isinstance(measured, TradeoffCurve) else "",
                             "measured_saving_pct": -meas_sav if meas_sav != "" else "",
                             "provenance": prov})
    return rows


def cmd_estimate(args) -> int:
    if args.store == TABLE2_STORE:
        store = build_store()
        out_dir = Path(args.out or ".")
    else:
        cfg = _load_config(args)
        out_dir = Path(cfg.out_dir)
        path = _store_path(cfg, args)
        if not path.exists():
            raise CliError(f"no measurement store at {path}", EXIT_MISSING)
        store = MeasurementStore.load(path)
    tasks = [args.task_id] if args.task_id else store.tasks()
    seeds = args.seed if args.seed else None
    rows = []
    for target in args.targets:
        rows += estimate_rows(store, target, tasks, seeds)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = Path(args.report) if args.report else out_dir / f"estimate_{'_'.join(args.targets)}.csv"
    with report.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=ESTIMATE_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        if r["est_saving_pct"] != "":
            print(f"{r['task']:>6} {r['target']:>5}: est {r['est_saving_pct']}%  measured {r['measured_saving_pct']}%")
    print(f"report -> {report}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = read_curve_csv(args.curve_a), read_curve_csv(args.curve_b)
    try:
        d = curve_distance(a, b)
    except ValueError as e:
        raise CliError(str(e), EXIT_MISSING) from e
    print(f"{d:.6f}")
    return EXIT_OK


def cmd_commute(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)
    lab = Lab(cfg, _registry(cfg))
    reports = []
    for ops in args.operator_sets:
        def curve_for(order, seed):
            c = lab.curve(order, seed)
            p = out / lab.task_id / str(seed) / f"{order}.csv"
            p.parent.mkdir(parents=True, exist_ok=True)
            write_curve_csv(c, p)
            return c
        try:
            r = commutativity_report(ops, list(cfg.seeds), curve_for, lab.task_id)
        except ValueError as e:
            raise CliError(str(e), EXIT_USAGE) from e
        reports.append(r)
        for s in (r.same, r.diff):
            print(f"{r.operator_set:>6} {s.group:>15}: {s.mean:.2f} +- {s.sd:.2f} (n={s.n_pairs})")
        if not r.overlap_1sd:
            print(f"warning: 1-SD intervals do not overlap for {r.operator_set}", file=sys.stderr)
    path = write_report_csv(reports, Path(args.report) if args.report else out / "commute.csv")
    print(f"report -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="effops", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=True):
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--task", choices=KINDS, help="synthetic task kind")
        sp.add_argument("--out", help="output directory (overrides config out_dir)")
        if seeds:
            sp.add_argument("--seed", type=int, action="append", help="seed (repeatable)")

    g = sub.add_parser("gen-data", help="write synthetic dataset splits")
    common(g, seeds=False)
    g.add_argument("--seed", dest="task_seed", type=int, help="task seed")
    g.add_argument("--data-out", dest="out_data", default="data", help="directory for the TSV splits")
    g.add_argument("--force", action="store_true", help="overwrite existing splits")
    g.set_defaults(fn=cmd_gen_data)

    r = sub.add_parser("run", help="train/cache a pipeline and record its measurement")
    r.add_argument("pipeline")
    common(r)
    r.add_argument("--store", help="measurement store JSON")
    r.set_defaults(fn=cmd_run)

    e = sub.add_parser("estimate", help="estimate pipelines from single-operator measurements")
    e.add_argument("targets", nargs="+")
    common(e)
    e.add_argument("--store", help=f"measurement store JSON, or '{TABLE2_STORE}' for the shipped fixture")
    e.add_argument("--task-id", help="restrict to one task id in the store")
    e.add_argument("--report", help="CSV path for the estimation report")
    e.set_defaults(fn=cmd_estimate)

    c = sub.add_parser("compare", help="distance between two curve CSVs")
    c.add_argument("curve_a")
    c.add_argument("curve_b")
    c.set_defaults(fn=cmd_compare)

    m = sub.add_parser("commute", help="same- vs different-order curve distances")
    m.add_argument("operator_sets", nargs="+", help="e.g. DE PE")
    common(m)
    m.add_argument("--report", help="CSV path for the report")
    m.set_defaults(fn=cmd_commute)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except MissingMeasurementError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (EstimationError, PipelineError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, ArithmeticError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return rc


if __name__ == "__main__":
    sys.exit(main())
