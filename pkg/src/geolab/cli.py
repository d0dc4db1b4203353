"""Command-line harness.

Subcommands: gen-rigid, gen-stereo, train, eval, sweep, freeze-study,
cross-domain, ablation, baseline, report. Exit codes: 0 success, 2 config
error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys


def _build_parser():
    ap = argparse.ArgumentParser(prog="geolab",
                                 description="geometric-estimation experiment harness")
    ap.add_argument("--threads", type=int, default=1,
                    help="BLAS/numba thread cap (default 1, deterministic)")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=["csv", "jsonl"], default="csv")

    for name in ("gen-rigid", "gen-stereo", "train", "sweep", "freeze-study",
                 "cross-domain", "ablation"):
        common(sub.add_parser(name))
    p = sub.add_parser("eval")
    common(p)
    p.add_argument("checkpoint", help="EGWT checkpoint to evaluate")
    p = sub.add_parser("baseline")
    common(p, needs_config=False)
    p.add_argument("corrs", help="correspondence text file")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--tau", type=float, default=0.01)
    p = sub.add_parser("report")
    common(p, needs_config=False)
    p.add_argument("input", help="existing report file")
    p.add_argument("--input-format", choices=["csv", "jsonl"], default="csv")
    return ap


def _load_config(args):
    from .errors import ConfigError
    from .experiments import parse_config

    try:
        text = open(args.config).read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
    cfg = parse_config(text)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    return cfg


def _emit(args, report, name):
    from .experiments import write_report

    os.makedirs(args.out, exist_ok=True)
    ext = "csv" if args.format == "csv" else "jsonl"
    path = os.path.join(args.out, f"{name}.{ext}")
    write_report(path, report, args.format)
    print(path)


def _run(args):
    # heavy imports happen here, after thread caps are in place
    import numpy as np

    from .experiments import (
        RunReport,
        ablation_grid,
        build_dataset,
        config_hash,
        cross_domain,
        evaluate,
        freeze_study,
        run_baseline,
        sweep,
        train,
        write_report,
    )

    cmd = args.command
    if cmd == "gen-rigid" or cmd == "gen-stereo":
        from .data import write_correspondences, write_labels

        cfg = _load_config(args)
        ds = build_dataset(cfg, cfg.n_pairs, cfg.seed, domain=0)
        os.makedirs(args.out, exist_ok=True)
        np.savez(os.path.join(args.out, "images.npz"),
                 imgs_a=ds.imgs_a, imgs_b=ds.imgs_b)
        task = "rigid" if cmd == "gen-rigid" else "fmatrix"
        if cfg.task != task:
            from .errors import ConfigError

            raise ConfigError(f"{cmd} needs `task: {task}` in the config")
        write_labels(os.path.join(args.out, "labels.txt"), task,
                     list(enumerate(ds.labels)))
        if task == "fmatrix":
            for i, corrs in enumerate(ds.corrs):
                write_correspondences(os.path.join(args.out, f"corrs_{i:05d}.txt"),
                                      corrs)
        print(args.out)
    elif cmd == "train":
        cfg = _load_config(args)
        _, report = train(cfg, out_dir=args.out)
        _emit(args, report, "train")
    elif cmd == "eval":
        from .models import load_model

        cfg = _load_config(args)
        model = load_model(args.checkpoint)
        ds = build_dataset(cfg, cfg.val_pairs, cfg.seed, domain=1)
        metrics = evaluate(model, ds, cfg)
        report = RunReport([metrics], metrics, config_hash(cfg), 0.0)
        _emit(args, report, "eval")
    elif cmd == "sweep":
        _emit(args, sweep(_load_config(args)), "sweep")
    elif cmd == "freeze-study":
        _emit(args, freeze_study(_load_config(args)), "freeze_study")
    elif cmd == "cross-domain":
        _emit(args, cross_domain(_load_config(args)), "cross_domain")
    elif cmd == "ablation":
        _emit(args, ablation_grid(_load_config(args)), "ablation")
    elif cmd == "baseline":
        from .data import read_correspondences

        corrs = read_correspondences(args.corrs)
        row = run_baseline(corrs, iterations=args.iterations, tau=args.tau,
                           seed=args.seed or 0)
        report = RunReport([row], row, "-", 0.0)
        _emit(args, report, "baseline")
    elif cmd == "report":
        from .experiments import read_report

        rows, chash = read_report(args.input, args.input_format)
        report = RunReport(rows, {}, chash or "-", 0.0)
        _emit(args, report, "report")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMBA_NUM_THREADS"):
        os.environ.setdefault(var, str(args.threads))

    from .errors import (
        ConfigError,
        ConsensusFailure,
        DataError,
        DegenerateConfiguration,
        DegenerateVariance,
        FormatError,
        ZeroMatrix,
    )
    from numpy.linalg import LinAlgError

    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (ZeroMatrix, DegenerateVariance, ConsensusFailure,
            DegenerateConfiguration, FloatingPointError, LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
