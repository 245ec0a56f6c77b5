"""Named models used by the reproduction harness and the CLI."""
from __future__ import annotations

import numpy as np

from .env import EnvironmentModel
from .errors import ModelError


def uniform_generator(K: int, q: float = 1.0) -> np.ndarray:
    """Every environment jumps to every other one at rate q."""
    return q * (np.ones((K, K)) - K * np.eye(K))


def two_env_generator(q1: float, q2: float) -> np.ndarray:
    """q1 = rate of leaving environment 0, q2 = rate of leaving environment 1."""
    return np.array([[-q1, q1], [q2, -q2]], dtype=float)


def two_species(s1: float, s2: float, q1: float = 0.5, q2: float = 0.5) -> EnvironmentModel:
    return EnvironmentModel([[s1], [s2]], two_env_generator(q1, q2))


PRESETS = {
    "pair-persistent": lambda: two_species(1.0, -0.4),
    "pair-extinct": lambda: two_species(1.0, -0.3),
    "pair-neutral": lambda: two_species(0.4, -0.4),
    "pair-density-slow": lambda: two_species(0.27, -0.2, 0.04, 0.04),
    "pair-density-fast": lambda: two_species(0.27, -0.2, 2.0, 2.0),
    "triple-dominated": lambda: EnvironmentModel([[0.4, -0.1], [-0.3, -0.2]], uniform_generator(2)),
    "triple-neutral-invades": lambda: EnvironmentModel([[1 / 3, -1 / 3], [-3 / 8, 1 / 4]], uniform_generator(2)),
    "triple-cyclic": lambda: EnvironmentModel([[1.0, 0.5], [-0.25, -0.5], [-1 / 3, 1 / 3]], uniform_generator(3)),
    "triple-never-best": lambda: EnvironmentModel([[0.1, -0.3], [-0.33, 0.1], [0.27, 0.25]], uniform_generator(3)),
}


def preset(name: str) -> EnvironmentModel:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ModelError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
