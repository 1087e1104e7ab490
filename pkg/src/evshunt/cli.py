"""Command-line entry point: ``evshunt shunt | train | validate``.

Exit codes: 0 success, 2 usage error (argparse), 3 invalid configuration,
4 training diverged.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .experiments import run_shunting, run_training, write_shunting, write_training
from .marl.train import TrainingDiverged
from .scenario import ScenarioErrors, load_scenario, validate_config

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DIVERGED = 4
OUT_ENV = "EVSHUNT_OUT"

log = logging.getLogger("evshunt")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _default_out(sub: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "out")) / sub


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evshunt", description="Dual-station EV charging simulator and MARL trainer.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sh = sub.add_parser("shunt", help="count where arriving EVs park over many simulated days")
    sh.add_argument("--scenario", required=True, help="preset name (s1, s2, s3) or path to a scenario JSON")
    sh.add_argument("--runs", type=int, default=1000)
    sh.add_argument("--pricing", type=_on_off, default=True, metavar="on|off")
    sh.add_argument("--seed", type=int, default=None, help="defaults to the scenario seed")
    sh.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV}/shunt or ./out/shunt)")

    tr = sub.add_parser("train", help="train per-pile agents and write rewards, checkpoint and traces")
    tr.add_argument("--scenario", required=True)
    tr.add_argument("--algo", choices=("vdn", "qmix"), default="vdn")
    tr.add_argument("--pricing", type=_on_off, default=True, metavar="on|off")
    tr.add_argument("--seed", type=int, default=None, help="defaults to the scenario seed")
    tr.add_argument("--episodes", type=int, default=None, help="override the scenario's episode count")
    tr.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV}/train or ./out/train)")

    va = sub.add_parser("validate", help="check a scenario file and list every problem found")
    va.add_argument("--config", required=True)
    return parser


def _shunt(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.runs <= 0:
        print("error: --runs must be positive", file=sys.stderr)
        return EXIT_CONFIG
    report = run_shunting(scenario, args.runs, args.pricing, args.seed)
    out = args.out or _default_out("shunt")
    write_shunting(report, out)
    s = report.summary()
    print(f"{s['scenario']} pricing={s['pricing']} runs={s['runs']} modal={s['modal_pairs'][:2]} "
          f"mean|n0-n1|={s['mean_abs_diff']:.3f} -> {out}")
    return EXIT_OK


def _train(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.episodes is not None:
        if args.episodes <= 0:
            print("error: --episodes must be positive", file=sys.stderr)
            return EXIT_CONFIG
        scenario = scenario.with_training(episodes=args.episodes)
    seed = scenario.seed if args.seed is None else args.seed
    every = max(1, scenario.training.episodes // 20)

    def progress(m: int, total: float, eps: float) -> None:
        if m % every == 0:
            log.info("episode %d reward %.3f epsilon %.3f", m, total, eps)

    try:
        result = run_training(scenario, args.algo, args.pricing, seed, progress)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = args.out or _default_out("train")
    write_training(result, scenario, args.pricing, seed, out)
    rep = result.report
    print(f"{scenario.name} {args.algo} pricing={'on' if args.pricing else 'off'} seed={seed} "
          f"convergence_episode={rep.episode} average_reward={rep.average_reward:.3f} -> {out}")
    return EXIT_OK


def _validate(args) -> int:
    result = validate_config(args.config)
    if isinstance(result, list):
        for line in result:
            print(line)
        print(f"{len(result)} problem(s) found", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {result.name} ({result.ev_count} EVs, {result.stations[0].n_piles}+{result.stations[1].n_piles} piles)")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"shunt": _shunt, "train": _train, "validate": _validate}[args.command]
    try:
        return handler(args)
    except ScenarioErrors as exc:
        for line in exc.errors:
            print(line, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
