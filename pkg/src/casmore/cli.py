"""Command-line entry point: ``casmore --function rosenbrock --dim 15 --seeds 0-19 --out runs/rb``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import benchmarks
from .harness import ExperimentConfig, run_experiment


def parse_seeds(text: str) -> list[int]:
    """``"0-4,7,9"`` -> ``[0, 1, 2, 3, 4, 7, 9]``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        if sep and lo:
            a, b = int(lo), int(hi)
            if b < a:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            seeds.extend(range(a, b + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def parse_assignment(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="casmore", description="Run MORE-family optimizers on benchmark functions.")
    p.add_argument("--config", type=Path, help="JSON file with experiment fields; flags override it")
    names = benchmarks.available()
    p.add_argument("--function", choices=sorted(set(names) | {n.replace("_", "-") for n in names}))
    p.add_argument("--dim", type=int)
    p.add_argument("--algo", choices=["cas-more", "ca-more", "more", "cas_more", "ca_more"])
    p.add_argument("--seeds", type=parse_seeds, help="e.g. 0-19 or 1,4,9")
    p.add_argument("--budget", type=int, help="sample evaluations per seed")
    p.add_argument("--target", type=float, help="stop once f(mean) <= target")
    p.add_argument("--no-target", action="store_true", help="run until the budget is spent")
    p.add_argument("--noise-std", type=float)
    p.add_argument("--no-restarts", action="store_true")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument(
        "--set",
        dest="overrides",
        type=parse_assignment,
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="optimizer setting, e.g. eps_mu=0.3 or normalization.mode=robust",
    )
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config is not None:
        data = json.loads(args.config.read_text())
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
    flag_map = {
        "function": args.function,
        "dim": args.dim,
        "algorithm": args.algo,
        "seeds": args.seeds,
        "budget": args.budget,
        "noise_std": args.noise_std,
        "out_dir": str(args.out) if args.out is not None else None,
    }
    for key, value in flag_map.items():
        if value is not None:
            data[key] = value
    if args.target is not None:
        data["target"] = args.target
    if args.no_target:
        data["target"] = None
    if args.no_restarts:
        data["restarts"] = False
    if args.overrides:
        overrides = dict(data.get("overrides", {}))
        overrides.update(dict(args.overrides))
        data["overrides"] = overrides
    return ExperimentConfig.from_dict(data)


def main(argv: list[str] | None = None) -> int:
    """Run the experiment; the exit code is 0 iff every seed completed without error."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
    except (ValueError, TypeError, KeyError, OSError) as exc:
        parser.error(str(exc))
    try:
        result = run_experiment(cfg, jobs=args.jobs)
    except PermissionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for r in result.runs:
        if r.error:
            line = f"seed {r.seed}: ERROR {r.error}"
        else:
            hit = f"target at {r.evals_to_target} evals" if r.success else r.reason
            line = f"seed {r.seed}: {hit}; f(mean)={r.final_f_mean:.3e} restarts={r.restarts}"
        print(line)
    agg = result.summary["aggregate"]
    print(
        f"{cfg.algorithm} on {cfg.function}-{cfg.dim}: success {agg['success_fraction']}"
        f" median evals to target {agg['median_evals_to_target']}"
    )
    if cfg.out_dir:
        print(f"outputs written to {cfg.out_dir}")
    return 0 if result.all_completed else 1


if __name__ == "__main__":
    sys.exit(main())
