import csv

import pytest

from marlhospital.errors import ConfigError
from marlhospital.matrix import (
    ABLATION_ALPHAS,
    Cell,
    ablation_cells,
    aggregate_header,
    cell_config,
    experiment_matrix,
    lambda_cells,
    load_matrix,
)

TINY = {
    "learner": {"hyper": {"learning_starts": 20}},
    "schedule": {"total_steps": 60, "eval_interval": 60, "eval_episodes": 2, "record_episodes": 0},
}


def read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_alpha_grid():
    cells = ablation_cells()
    assert [c.alpha for c in cells] == list(ABLATION_ALPHAS) == [0.0, 0.5, 0.7, 1.0]
    assert all(c.lam == 1.0 and c.fairness == "fairskill" for c in cells)
    assert len({c.cell_id for c in cells}) == 4


def test_lambda_grid():
    assert [c.lam for c in lambda_cells()] == [0.0, 1.0, 4.0]


def test_cell_config_applies_fields():
    cell = Cell(composition="specialized", goal="rescue_breaths", energy=True,
                algorithm="qmix", alpha=0.5, lam=4.0, total_steps=123)
    cfg = cell_config(TINY, cell)
    assert cfg.agents.composition == "specialized" and cfg.goal.name == "rescue_breaths"
    assert cfg.energy.enabled and cfg.learner.algorithm == "qmix"
    assert cfg.fairness.alpha == 0.5 and cfg.fairness.lam == 4.0
    assert cfg.schedule.total_steps == 123


def test_unknown_cell_key():
    with pytest.raises(ConfigError):
        Cell.from_dict({"colour": "red"})
    assert Cell.from_dict({"lambda": 4}).lam == 4


def test_load_matrix_grid(tmp_path):
    spec = tmp_path / "m.json"
    spec.write_text('{"grid": "alpha", "seeds": [0, 1], "cell": {"goal": "rescue_breaths"}}')
    base, cells, seeds, workers = load_matrix(spec)
    assert len(cells) == 4 and seeds == [0, 1] and workers == 1
    assert all(c.goal == "rescue_breaths" for c in cells)
    spec.write_text('{"grid": "beta"}')
    with pytest.raises(ConfigError):
        load_matrix(spec)


def test_empty_matrix(tmp_path):
    path = experiment_matrix(TINY, [], [0], tmp_path)
    assert path.read_text().strip() == ",".join(aggregate_header())


def test_failure_isolated(tmp_path):
    cells = [Cell(fairness="fen", lam=0.5), Cell(composition="forced_cooperation", goal="nope")]
    rows = read(experiment_matrix(TINY, cells, [0], tmp_path))
    assert [r["status"] for r in rows][0] == "ok"
    assert rows[1]["status"].startswith("failed")
    assert (tmp_path / f"{cells[1].cell_id}.error.txt").exists()
    assert float(rows[0]["Success"]) >= 0.0
    assert list(rows[0]) == aggregate_header()


def test_grid_runs_every_cell(tmp_path):
    cells = lambda_cells(Cell(algorithm="iql"))
    rows = read(experiment_matrix(TINY, cells, [0, 1], tmp_path))
    assert [r["cell"] for r in rows] == [c.cell_id for c in cells]
    assert all(r["status"] == "ok" and r["seeds"] == "2" for r in rows)
    for c in cells:
        assert (tmp_path / c.cell_id / "seed0" / "metrics.csv").exists()
        assert (tmp_path / c.cell_id / "seed1" / "metrics.csv").exists()
