"""Experiment runners behind the CLI: the shunting study and a training run.

Every function here is deterministic given its scenario and seed, and every
file it writes is a pure function of those inputs (no timestamps, fixed float
formatting), so repeated runs produce byte-identical output.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .env import ChargingEnv, rows_to_csv
from .marl.learner import ActionGrid, ModelSpec, one_hot
from .marl.networks import Params
from .marl.train import TrainResult, episode_seeds, greedy_values, train
from .scenario import Scenario, scenario_to_dict

CHECKPOINT_FORMAT = "evshunt-checkpoint"
CHECKPOINT_VERSION = 1


# -- shunting study ----------------------------------------------------------

@dataclass(frozen=True)
class ShuntingRun:
    run: int
    n0: int
    n1: int
    rejected: int


@dataclass
class ShuntingReport:
    scenario: str
    pricing_enabled: bool
    runs: list[ShuntingRun]

    @property
    def histogram(self) -> Counter:
        return Counter((r.n0, r.n1) for r in self.runs)

    def modal_pairs(self, k: int = 2) -> list[tuple[int, int]]:
        # most_common breaks count ties by first appearance; sort for a stable answer
        ranked = sorted(self.histogram.items(), key=lambda item: (-item[1], item[0]))
        return [pair for pair, _ in ranked[:k]]

    @property
    def mean_abs_diff(self) -> float:
        return float(np.mean([abs(r.n0 - r.n1) for r in self.runs]))

    def runs_csv(self) -> str:
        return rows_to_csv([asdict(r) for r in self.runs], ("run", "n0", "n1", "rejected"))

    def histogram_csv(self) -> str:
        rows = [{"n0": a, "n1": b, "count": c} for (a, b), c in sorted(self.histogram.items())]
        return rows_to_csv(rows, ("n0", "n1", "count"))

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "pricing": "on" if self.pricing_enabled else "off",
            "runs": len(self.runs),
            "modal_pairs": [list(p) for p in self.modal_pairs(3)],
            "mean_abs_diff": self.mean_abs_diff,
            "rejected_total": sum(r.rejected for r in self.runs),
        }

    @classmethod
    def from_csv(cls, text: str, scenario: str = "", pricing_enabled: bool = True) -> "ShuntingReport":
        lines = text.strip().splitlines()
        if not lines or lines[0] != "run,n0,n1,rejected":
            raise ValueError("not a shunting runs file")
        runs = [ShuntingRun(*map(int, line.split(","))) for line in lines[1:]]
        return cls(scenario, pricing_enabled, runs)


def run_shunting(scenario: Scenario, runs: int, pricing_enabled: bool, seed: int | None = None) -> ShuntingReport:
    """Simulate ``runs`` independent days with idle piles and count where EVs park.

    Run ``r`` uses the same population and choice draws with pricing on or off,
    so the two settings differ only through the posted prices.
    """
    seed = scenario.seed if seed is None else seed
    env = ChargingEnv(scenario.world(pricing_enabled))
    idle = np.zeros(env.n_agents)
    out = []
    for r in range(runs):
        pop_seed, choice_seed = episode_seeds(seed, r)
        env.reset(pop_seed, choice_seed)
        done = False
        while not done:
            _, _, done = env.step(idle)
        out.append(ShuntingRun(r, env.arrived[0], env.arrived[1], len(env.rejected)))
    return ShuntingReport(scenario.name, pricing_enabled, out)


def write_shunting(report: ShuntingReport, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "shunting_runs.csv": report.runs_csv(),
        "shunting_histogram.csv": report.histogram_csv(),
        "shunting_summary.json": _dump_json(report.summary()),
    }
    return _write_all(out_dir, files)


# -- training ----------------------------------------------------------------

def run_training(scenario: Scenario, algorithm: str, pricing_enabled: bool, seed: int,
                 progress: Callable[[int, float, float], None] | None = None) -> TrainResult:
    return train(scenario.world(pricing_enabled), algorithm, seed, scenario.training, progress=progress)


def greedy_episode(result: TrainResult, seed: int, episode: int) -> ChargingEnv:
    """Replay one day with the learned greedy policy; returns the finished env."""
    env, spec = result.env, result.spec
    pop_seed, choice_seed = episode_seeds(seed, episode)
    state = env.reset(pop_seed, choice_seed)
    hidden = np.zeros((spec.n_agents, spec.hidden)) if spec.recurrent else None
    prev = np.zeros((spec.n_agents, spec.n_levels))
    done = False
    while not done:
        obs = state.observations()
        inputs = np.concatenate([obs, prev], axis=1) if spec.recurrent else obs
        Q, hidden = greedy_values(result.params, spec, inputs, hidden)
        a_idx = np.argmax(Q, axis=1)
        prev = one_hot(a_idx, spec.n_levels)
        state, _, done = env.step(result.grid.values(a_idx))
    return env


def rewards_csv(result: TrainResult) -> str:
    rows = [{"episode": m + 1, "total_reward": r, "epsilon": e}
            for m, (r, e) in enumerate(zip(result.episode_rewards, result.epsilons))]
    return rows_to_csv(rows, ("episode", "total_reward", "epsilon"))


def write_training(result: TrainResult, scenario: Scenario, pricing_enabled: bool, seed: int,
                   out_dir: Path) -> list[Path]:
    """Write rewards, convergence summary, checkpoint and a greedy-day trace and ledger."""
    env = greedy_episode(result, seed, len(result.episode_rewards))
    rep = result.report
    summary = {
        "scenario": scenario.name,
        "algorithm": result.spec.algorithm,
        "pricing": "on" if pricing_enabled else "off",
        "seed": seed,
        "episodes": len(result.episode_rewards),
        "convergence_episode": rep.episode,
        "average_reward": rep.average_reward,
        "final_mean_reward": rep.final_mean,
        "updates": result.updates,
        "greedy_day_reward": float(sum(row["reward"] for row in env.trace)),
    }
    files = {
        "rewards.csv": rewards_csv(result),
        "convergence.json": _dump_json(summary),
        "checkpoint.json": checkpoint_json(result.params, result.spec, result.grid),
        "trace.csv": env.trace_csv(),
        "ledger.csv": env.ledger.to_csv(),
        "scenario.json": _dump_json(scenario_to_dict(scenario)),
    }
    return _write_all(out_dir, files)


# -- checkpoints ---------------------------------------------------------------

def checkpoint_json(params: Params, spec: ModelSpec, grid: ActionGrid) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": {**asdict(spec), "agent_net": list(spec.agent_net)},
        "levels": list(grid.levels),
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in sorted(params.items())},
    }
    return _dump_json(doc)


def load_checkpoint(text: str) -> tuple[Params, ModelSpec, ActionGrid]:
    doc = json.loads(text)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError("unsupported checkpoint format or version")
    spec_doc = dict(doc["spec"])
    spec_doc["agent_net"] = tuple(spec_doc["agent_net"])
    spec = ModelSpec(**spec_doc)
    params = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in doc["params"].items()}
    return params, spec, ActionGrid(tuple(doc["levels"]))


# -- helpers -------------------------------------------------------------------

def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_all(out_dir: Path, files: dict[str, str]) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in files.items():
        path = out_dir / name
        path.write_text(text)
        paths.append(path)
    return paths
