"""Command-line interface: synth, release, validate, run."""

import argparse
import json
import sys

from .harness import ExperimentConfig, run_experiment, synth_census, synth_taxi
from .hierarchy import DomainPolicy, validate_pgsr
from .io import dump_hierarchy, load_hierarchy
from .mechanisms import MECHANISMS
from .noise import NoiseSpec


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pgsr",
        description="Consistent differentially private release of hierarchical group-size counts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic exact hierarchy")
    p.add_argument("--kind", choices=("census", "taxi"), required=True)
    p.add_argument("--leaves", type=int, default=12)
    p.add_argument("--individuals", type=int, default=25000, help="census kind only")
    p.add_argument("--groups", type=int, default=4000, help="taxi kind only")
    p.add_argument("--n-sizes", type=int, default=40)
    p.add_argument("--outliers", type=int, default=10, help="census kind only")
    p.add_argument("--mu", type=float, default=1.5, help="taxi kind only")
    p.add_argument("--sigma", type=float, default=1.0, help="taxi kind only")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)

    p = sub.add_parser("release", help="release a hierarchy under one mechanism")
    p.add_argument("--input", required=True, help="exact hierarchy JSON")
    p.add_argument("--mechanism", choices=sorted(MECHANISMS), required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--delta", type=int, default=None, help="override the window half-width")
    p.add_argument("--full-windows", action="store_true", help="use [0, G] windows everywhere")

    p = sub.add_parser("validate", help="check release conditions on a hierarchy JSON")
    p.add_argument("--input", required=True)

    p = sub.add_parser("run", help="run an experiment grid from a config JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    return parser


def _cmd_synth(args) -> int:
    if args.kind == "census":
        h = synth_census(
            leaves=args.leaves,
            individuals=args.individuals,
            n_sizes=args.n_sizes,
            outliers=args.outliers,
            seed=args.seed,
        )
    else:
        h = synth_taxi(
            leaves=args.leaves,
            groups=args.groups,
            n_sizes=args.n_sizes,
            mu=args.mu,
            sigma=args.sigma,
            seed=args.seed,
        )
    dump_hierarchy(h, args.output)
    print(
        f"wrote {args.output}: {len(h.tree)} regions, {h.n_sizes} sizes, "
        f"{h.total_groups} groups"
    )
    return 0


def _cmd_release(args) -> int:
    h = load_hierarchy(args.input, role="exact")
    if args.full_windows:
        windows = DomainPolicy.full()
    elif args.delta is not None:
        windows = DomainPolicy.around(args.delta)
    else:
        windows = None
    spec = NoiseSpec(epsilon=args.epsilon, levels=h.tree.levels, seed=args.seed)
    result = MECHANISMS[args.mechanism](h, spec, windows=windows)
    dump_hierarchy(
        result.released,
        args.output,
        extra={
            "mechanism": args.mechanism,
            "epsilon": args.epsilon,
            "seed": args.seed,
            "objective": result.objective,
        },
    )
    print(
        f"wrote {args.output}: objective={result.objective}, "
        f"post_process={result.timings['post_process_s']:.3f}s"
    )
    return 0


def _cmd_validate(args) -> int:
    h = load_hierarchy(args.input, role="post-processed", check=False)
    report = validate_pgsr(h)
    print(f"consistency violations: {report.consistency_violations}")
    print(f"validity:               {'ok' if report.validity_ok else 'FAIL'}")
    print(f"faithfulness:           {'ok' if report.faithfulness_ok else 'FAIL'}")
    return 0 if report.ok else 1


def _cmd_run(args) -> int:
    with open(args.config, encoding="utf-8") as f:
        cfg = ExperimentConfig.from_dict(json.load(f))
    if args.no_figures:
        cfg.figures = False
    run_experiment(cfg)
    print(f"wrote {cfg.output}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "synth": _cmd_synth,
        "release": _cmd_release,
        "validate": _cmd_validate,
        "run": _cmd_run,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
