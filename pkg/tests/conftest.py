import numpy as np
import pytest

from marlhospital.actions import Action, ActionKind
from marlhospital.config import ExperimentConfig, build_env
from marlhospital.core import Layout, World, initial_state
from marlhospital.skills import EnergyParams, team_from_composition


def make_world(composition="uniform", energy=None, n_compressions=2, **layout_kw):
    layout = Layout(**layout_kw)
    skills = tuple(team_from_composition(composition, layout.n_agents))
    return World(layout, skills, energy, n_compressions)


@pytest.fixture
def world():
    return make_world()


@pytest.fixture
def energy_world():
    return make_world(energy=EnergyParams())


@pytest.fixture
def state(world):
    return initial_state(world)


def move(st):
    return Action(ActionKind.MOVE, st)


A = {k: Action(k) for k in ActionKind if k is not ActionKind.MOVE}


def random_rollout(env, rng, episodes):
    """Yield (prev_state, result, next_state) over random legal play."""
    for _ in range(episodes):
        env.reset()
        while True:
            masks = env.masks()
            acts = [rng.choice(np.flatnonzero(m)) for m in masks]
            prev = env.state
            res = env.step(acts)
            yield prev, res, env.state
            if res.done:
                break


def small_config(**overrides) -> ExperimentConfig:
    data = {
        "name": "t",
        "learner": {"algorithm": "iql", "hyper": {"learning_starts": 50}},
        "schedule": {"total_steps": 200, "eval_interval": 100, "eval_episodes": 3,
                     "record_episodes": 2},
    }
    for key, value in overrides.items():
        data[key] = {**data.get(key, {}), **value} if isinstance(value, dict) else value
    return ExperimentConfig.model_validate(data)


@pytest.fixture
def cfg_factory():
    return small_config


@pytest.fixture
def env():
    return build_env(ExperimentConfig(), seed=0)


# -- acceptance summary ---------------------------------------------------------

_CRITERIA: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, name): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    key, name = str(marker.args[0]), marker.args[1]
    entry = _CRITERIA.setdefault(key, [name, "PASS"])
    if report.failed:
        entry[1] = "FAIL"
    elif report.skipped and entry[1] == "PASS":
        entry[1] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key, (name, status) in _CRITERIA.items():
        terminalreporter.write_line(f"criterion {key} {name}: {status}")
