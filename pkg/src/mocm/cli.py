"""Command line front end: gen, train, predict, evaluate, bench.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as dsmod
from .config import ConfigError, RunConfig, load_toml
from .engine import OptimizerConfig, optimize
from .evaluation import (
    cross_validate,
    one_vs_all_predict,
    one_vs_all_train,
    trace_rows,
)
from .model import ModelFormatError, load_models, save_models

logger = logging.getLogger("mocm")


class UsageError(Exception):
    pass


# flag name -> RunConfig field
RUN_FLAGS = {
    "pop": "population_size",
    "max_it": "max_iterations",
    "max_same": "max_same",
    "seed": "seed",
    "kappa": "kappa",
    "i2_sentinel": "no_predecessor_i2",
    "swap_indicators": "swap_indicator_args",
    "mapping": "mapping",
    "gamma": "gamma",
    "svd_dim": "svd_dim",
    "alpha": "alpha",
    "lambda_orth": "lambda_orth",
    "warm_start": "warm_start",
    "repair": "repair",
    "freeze_rotation": "freeze_rotation",
    "threads": "threads",
    "data": "data",
    "out": "out",
    "verbosity": "verbosity",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (flags > --config file > defaults)")
    g.add_argument("--config", help="TOML file with RunConfig keys")
    g.add_argument("--pop", type=int, help="population size O (default 50)")
    g.add_argument("--max-it", type=int, help="MaxIt (default 1000)")
    g.add_argument("--max-same", type=int, help="MaxSame (default 5)")
    g.add_argument("--seed", type=int)
    g.add_argument("--kappa", type=float)
    g.add_argument("--i2-sentinel", type=float, help="I2 value for a front's first member")
    g.add_argument("--swap-indicators", action="store_true", default=None,
                   help="use (p, q) instead of (q, p) in the I1/I2 indicator arguments")
    g.add_argument("--mapping", choices=["linear", "gaussian", "svd"])
    g.add_argument("--gamma", type=float, help="Gaussian width (default 1/V_org)")
    g.add_argument("--svd-dim", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--lambda-orth", type=float)
    g.add_argument("--warm-start", action="store_true", default=None)
    g.add_argument("--repair", choices=["soft", "hard"])
    g.add_argument("--freeze-rotation", action="store_true", default=None,
                   help="unaligned baseline: beta = least squares, R = I, only W searched")
    g.add_argument("--threads", type=int)
    g.add_argument("--verbosity", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def resolve_config(args, base: dict | None = None) -> RunConfig:
    values = dict(base or {})
    if getattr(args, "config", None):
        values.update(load_toml(args.config))
    for flag, name in RUN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    return RunConfig.from_dict(values).validate()


def _setup_logging(cfg: RunConfig) -> None:
    logging.basicConfig(level=getattr(logging, cfg.verbosity), format="%(levelname)s %(name)s: %(message)s")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen(args) -> int:
    try:
        ds, _ = dsmod.generate_synthetic(
            args.subjects, args.trs, args.voxels, args.categories, args.noise,
            rotation=args.rotation, seed=args.seed, TR=args.tr, runs=args.runs,
        )
    except dsmod.DatasetError as exc:
        raise UsageError(str(exc)) from exc
    dsmod.save(ds, args.out, fmt=args.format)
    print(f"wrote {args.out}: S={ds.S} T={ds.T} V_org={ds.V_org} C={ds.C} TR={ds.TR} seed={args.seed}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    _setup_logging(cfg)
    if not cfg.data or not cfg.out:
        raise UsageError("train needs --data and --out")
    data = dsmod.load(cfg.data)
    held = set(args.test_subject or [])
    unknown = held - set(data.ids)
    if unknown:
        raise UsageError(f"unknown subject ids: {sorted(unknown)}")
    train_ids = [i for i in data.ids if i not in held]
    models, traces = one_vs_all_train(data, train_ids, cfg)
    out = Path(cfg.out)
    names = save_models(models, out)
    (out / "traces").mkdir(exist_ok=True)
    for m, tr in zip(models, traces):
        tr.to_jsonl(out / "traces" / f"trace_cat{m.category}.jsonl")
    _write_json(out / "run.json", {"command": "train", "config": cfg.to_dict(), "seed": cfg.seed,
                                   "train_ids": train_ids, "models": names,
                                   "iterations": [t.iterations_run for t in traces],
                                   "termination": [t.termination.value for t in traces]})
    print(f"trained {len(models)} model(s) on {len(train_ids)} subjects -> {out}")
    return 0


def _check_compat(models, data) -> None:
    m = models[0]
    T, V_org = m.shared_space.shape[0], None
    if m.mapping.anchors is not None:
        V_org = m.mapping.anchors.shape[1]
    elif m.mapping.basis is not None:
        V_org = m.mapping.basis.shape[0]
    elif m.mapping.kind.value == "linear":
        V_org = m.mapping.output_dim
    if T != data.T or (V_org is not None and V_org != data.V_org):
        raise ValueError(f"model expects T={T}, V_org={V_org}; data has T={data.T}, V_org={data.V_org}")


def cmd_predict(args) -> int:
    models = load_models(args.model)
    base = dict(models[0].config.get("run", {}))
    base.pop("data", None)
    base.pop("out", None)
    cfg = resolve_config(args, base)
    _setup_logging(cfg)
    if not cfg.data or not cfg.out:
        raise UsageError("predict needs --data and --out")
    data = dsmod.load(cfg.data)
    _check_compat(models, data)
    subjects = args.subjects or data.ids
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cats = [m.category for m in models]
    summary = []
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", "t", "label", "predicted"] + [f"score_cat{c}" for c in cats])
        for sid in subjects:
            pred = one_vs_all_predict(models, data.scan(sid), data.TR, data.C, cfg)
            for t in range(data.T):
                w.writerow([sid, t, int(pred.labels[t]), int(pred.predicted[t])]
                           + [repr(float(v)) for v in pred.scores[:, t]])
            m = pred.mask
            summary.append({"subject": sid, "accuracy": float(np.mean(pred.predicted[m] == pred.labels[m]))})
    _write_json(out.with_suffix(out.suffix + ".meta.json"),
                {"command": "predict", "config": cfg.to_dict(), "seed": cfg.seed, "model": str(args.model),
                 "subjects": summary})
    for s in summary:
        print(f"{s['subject']}: accuracy {s['accuracy']:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    seed_given = args.seed is not None or (args.config and "seed" in load_toml(args.config))
    cfg = resolve_config(args)
    if not seed_given:
        cfg.seed = int(np.random.SeedSequence().entropy % 2**64)
        print(f"seed: {cfg.seed}")
    _setup_logging(cfg)
    if not cfg.data or not cfg.out:
        raise UsageError("evaluate needs --data and --out")
    data = dsmod.load(cfg.data)
    report = cross_validate(data, cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report.to_dict())
    label = args.label or f"MOCM ({cfg.mapping})"
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "accuracy", "auc"])
        w.writerow([label, f"{100 * report.accuracy_mean:.2f}±{100 * report.accuracy_std:.2f}",
                    f"{100 * report.auc_mean:.2f}±{100 * report.auc_std:.2f}"])
    if args.emit_plots:
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        for k, traces in enumerate(report.traces):
            for m_idx, tr in enumerate(traces):
                name = f"fold_{k}.csv" if len(traces) == 1 else f"fold_{k}_model{m_idx}.csv"
                with open(plots / name, "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["iter", "theta1", "theta2", "theta3", "theta4"])
                    w.writerows(trace_rows(tr))
    print(f"{data.S} folds: accuracy {report.accuracy_mean:.4f} ± {report.accuracy_std:.4f}, "
          f"AUC {report.auc_mean:.4f} ± {report.auc_std:.4f} -> {out / 'report.json'}")
    return 0


BENCH_PROBLEMS = {
    # name: (dimension, objective, distance to the Pareto set)
    "convex1d": (
        1,
        lambda x: np.array([(x[0] - 1.0) ** 2, (x[0] + 1.0) ** 2]),
        lambda x: max(0.0, abs(x[0]) - 1.0),
    ),
    "convex2d": (
        2,
        lambda x: np.array([np.sum((x - 1.0) ** 2), np.sum((x + 1.0) ** 2)]),
        # Pareto set is the segment between (-1, -1) and (1, 1)
        lambda x: float(np.linalg.norm(x - np.clip(np.mean(x), -1.0, 1.0))),
    ),
}
BENCH_BOUND = 5.0


def run_bench(opt: OptimizerConfig, threads: int = 1) -> dict:
    results = {}
    for name, (dim, fn, dist) in BENCH_PROBLEMS.items():
        res = optimize(fn, lambda rng, d=dim: rng.uniform(-BENCH_BOUND, BENCH_BOUND, d), opt, threads=threads)
        front = [c for c in res.population if c.front == 0]
        objs = np.array([c.objectives for c in front])
        dists = np.array([dist(c.params) for c in front])
        results[name] = {
            "front_size": len(front),
            "spread": (objs.max(axis=0) - objs.min(axis=0)).tolist(),
            "distance_mean": float(dists.mean()),
            "distance_max": float(dists.max()),
            "front_params": [c.params.tolist() for c in front],
            "best": res.best.objectives.tolist(),
            "iterations": res.trace.iterations_run,
            "termination": res.trace.termination.value,
        }
    return results


def cmd_bench(args) -> int:
    cfg = resolve_config(args, {"max_iterations": 200})
    _setup_logging(cfg)
    report = {"config": cfg.to_dict(), "seed": cfg.seed, "problems": run_bench(cfg.optimizer(), cfg.threads)}
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if cfg.out:
        Path(cfg.out).write_text(text)
    for name, r in report["problems"].items():
        print(f"{name}: front {r['front_size']}, distance mean {r['distance_mean']:.3g} "
              f"max {r['distance_max']:.3g}, {r['iterations']} iterations ({r['termination']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mocm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic multi-subject dataset")
    g.add_argument("--subjects", type=int, default=4)
    g.add_argument("--trs", type=int, default=48)
    g.add_argument("--voxels", type=int, default=8)
    g.add_argument("--categories", type=int, default=2)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--rotation", choices=["orthogonal", "identity"], default="orthogonal")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tr", type=float, default=2.0)
    g.add_argument("--runs", type=int, default=2, help="blocks per category")
    g.add_argument("--format", choices=["MOCMMAT1", "csv"], default="MOCMMAT1")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train one-vs-all models")
    _add_run_flags(t)
    t.add_argument("--data")
    t.add_argument("--out")
    t.add_argument("--test-subject", action="append", help="hold out this subject id (repeatable)")
    t.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="fit test parameters and write per-TR predictions")
    _add_run_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data")
    p.add_argument("--out", help="predictions CSV path")
    p.add_argument("--subjects", nargs="+")
    p.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="leave-one-subject-out cross-validation")
    _add_run_flags(e)
    e.add_argument("--data")
    e.add_argument("--out")
    e.add_argument("--emit-plots", action="store_true")
    e.add_argument("--label", help="row name in report.csv")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="optimizer benchmark on analytic bi-objective problems")
    _add_run_flags(b)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ModelFormatError, dsmod.DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
