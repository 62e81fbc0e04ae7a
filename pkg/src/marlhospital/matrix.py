"""Experiment matrix: run config cells across seeds and aggregate into one table.

A matrix spec is JSON::

    {"base": {...ExperimentConfig fields...},
     "seeds": [0, 1],
     "cells": [{"composition": "uniform", "goal": "cpr", "energy": false,
                "algorithm": "vdn", "fairness": "fairskill", "alpha": 0.7,
                "lambda": 1.0, "total_steps": 50000}],
     "workers": 1}

Cell keys other than the seven design axes are optional budgets. Instead of
``cells`` a spec may name a preset grid: ``"grid": "alpha"`` or ``"grid": "lambda"``.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError
from .harness import run_training

log = logging.getLogger(__name__)

ABLATION_ALPHAS = (0.0, 0.5, 0.7, 1.0)
LAMBDA_GRID = (0.0, 1.0, 4.0)
AGGREGATE_AGENTS = 3


@dataclass(frozen=True)
class Cell:
    composition: str = "uniform"
    goal: str = "cpr"
    energy: bool = False
    algorithm: str = "vdn"
    fairness: str = "fairskill"
    alpha: float = 0.7
    lam: float = 1.0
    total_steps: Optional[int] = None
    eval_interval: Optional[int] = None
    eval_episodes: Optional[int] = None

    @property
    def cell_id(self) -> str:
        return (
            f"{self.composition}-{self.goal}-{'E' if self.energy else 'noE'}-{self.algorithm}"
            f"-{self.fairness}-a{self.alpha:g}-l{self.lam:g}"
        )

    @classmethod
    def from_dict(cls, d: dict) -> "Cell":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown matrix cell keys {sorted(unknown)}")
        return cls(**d)


def ablation_cells(base: Optional[Cell] = None) -> list[Cell]:
    """The α sweep at λ=1 under the combined workload/skill penalty."""
    base = base or Cell()
    return [
        Cell(**{**asdict(base), "fairness": "fairskill", "alpha": a, "lam": 1.0})
        for a in ABLATION_ALPHAS
    ]


def lambda_cells(base: Optional[Cell] = None) -> list[Cell]:
    base = base or Cell()
    return [Cell(**{**asdict(base), "lam": lam}) for lam in LAMBDA_GRID]


PRESETS = {"alpha": ablation_cells, "lambda": lambda_cells}


def cell_config(base: dict, cell: Cell) -> ExperimentConfig:
    data = copy.deepcopy(base)
    data["name"] = cell.cell_id
    data.setdefault("agents", {})["composition"] = cell.composition
    data["agents"].pop("profiles", None)
    data.setdefault("goal", {})["name"] = cell.goal
    data["goal"].pop("steps", None)
    data.setdefault("energy", {})["enabled"] = cell.energy
    data.setdefault("learner", {})["algorithm"] = cell.algorithm
    data["fairness"] = {"mode": cell.fairness, "alpha": cell.alpha, "lambda": cell.lam}
    sched = data.setdefault("schedule", {})
    for key in ("total_steps", "eval_interval", "eval_episodes"):
        if getattr(cell, key) is not None:
            sched[key] = getattr(cell, key)
    return ExperimentConfig.model_validate(data)


def load_matrix(path: Path | str) -> tuple[dict, list[Cell], list[int], int]:
    spec = json.loads(Path(path).read_text())
    base = spec.get("base", {})
    if "grid" in spec:
        if spec["grid"] not in PRESETS:
            raise ConfigError(f"unknown grid preset {spec['grid']!r}")
        template = Cell.from_dict(spec.get("cell", {}))
        cells = PRESETS[spec["grid"]](template)
    else:
        cells = [Cell.from_dict(c) for c in spec.get("cells", [])]
    seeds = spec.get("seeds") or base.get("schedule", {}).get("seeds", [0])
    return base, cells, list(seeds), int(spec.get("workers", 1))


def aggregate_header() -> list[str]:
    return (
        ["cell", "composition", "goal", "energy", "algorithm", "fairness", "alpha", "lambda",
         "seeds", "Success", "Success_std", "Gini"]
        + [f"A{i}" for i in range(AGGREGATE_AGENTS)]
        + ["Range", "status"]
    )


def _final_row(run_dir: Path) -> dict[str, str]:
    with open(run_dir / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    return rows[-1]


def _run_cell(base: dict, cell: Cell, seeds: Sequence[int], out_dir: Path) -> dict[str, Any]:
    """Runs every seed of one cell; any exception marks the cell failed."""
    row: dict[str, Any] = {
        "cell": cell.cell_id,
        "composition": cell.composition,
        "goal": cell.goal,
        "energy": "on" if cell.energy else "off",
        "algorithm": cell.algorithm,
        "fairness": cell.fairness,
        "alpha": cell.alpha,
        "lambda": cell.lam,
        "seeds": len(seeds),
    }
    try:
        cfg = cell_config(base, cell)
        finals = [
            _final_row(run_training(cfg, s, out_dir / cell.cell_id, run_id=f"seed{s}"))
            for s in seeds
        ]
    except Exception as exc:  # isolate per-cell failures
        log.error("cell %s failed: %s", cell.cell_id, exc)
        (out_dir / f"{cell.cell_id}.error.txt").write_text(traceback.format_exc())
        row["status"] = f"failed: {type(exc).__name__}"
        return row
    success = np.array([float(f["eval_success"]) for f in finals])
    row["Success"] = float(success.mean())
    row["Success_std"] = float(success.std())
    row["Gini"] = float(np.mean([float(f["l1"]) for f in finals]))
    for i in range(AGGREGATE_AGENTS):
        key = f"a{i}_pct"
        row[f"A{i}"] = float(np.mean([float(f[key]) for f in finals])) if key in finals[0] else ""
    row["Range"] = float(np.mean([float(f["range"]) for f in finals]))
    row["status"] = "ok"
    return row


def experiment_matrix(
    base: dict,
    cells: Sequence[Cell],
    seeds: Sequence[int],
    out_dir: Path | str,
    workers: int = 1,
) -> Path:
    """Run all cells x seeds and write ``aggregate.csv`` ordered by cell position."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_run_cell, base, c, seeds, out_dir) for c in cells]
            rows = [f.result() for f in futures]
    else:
        rows = [_run_cell(base, c, seeds, out_dir) for c in cells]
    path = out_dir / "aggregate.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, aggregate_header(), restval="", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path
