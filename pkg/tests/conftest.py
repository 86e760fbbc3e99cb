import numpy as np
import pytest

from orthantwalk import JumpMeasure


@pytest.fixture(scope="session")
def e1():
    """Drifted 2D axis walk, mean (0.1, 0.1), no zero-mean coordinate."""
    return JumpMeasure({(1, 0): 0.3, (-1, 0): 0.2, (0, 1): 0.3, (0, -1): 0.2})


@pytest.fixture(scope="session")
def e2():
    """Axis walk with mean (0.1, 0): the second coordinate is zero-mean."""
    return JumpMeasure({(1, 0): 0.3, (-1, 0): 0.2, (0, 1): 0.25, (0, -1): 0.25})


@pytest.fixture(scope="session")
def symmetric2d():
    return JumpMeasure({(1, 0): 0.25, (-1, 0): 0.25, (0, 1): 0.25, (0, -1): 0.25})


@pytest.fixture(scope="session")
def half1d():
    return JumpMeasure({(1,): 0.5, (-1,): 0.5})


@pytest.fixture(scope="session")
def lazy1d():
    return JumpMeasure({(1,): 0.25, (-1,): 0.25, (0,): 0.5})


@pytest.fixture(scope="session")
def overshoot1d():
    """Zero-mean 1D law with down-jumps of size two (real overshoots)."""
    return JumpMeasure({(-2,): 0.25, (0,): 0.25, (1,): 0.5})


def random_drifted_measure(dim, rng, extra_atoms=True):
    """Random axis-step measure with a strictly positive drift on every axis."""
    atoms = {}
    for i in range(dim):
        up = tuple(1 if j == i else 0 for j in range(dim))
        down = tuple(-1 if j == i else 0 for j in range(dim))
        pu = rng.uniform(0.15, 0.3)
        pd = rng.uniform(0.05, pu - 0.05)
        atoms[up] = pu
        atoms[down] = pd
    if extra_atoms and rng.random() < 0.5:
        z = tuple(int(c) for c in rng.integers(-2, 3, size=dim))
        if any(z) and z not in atoms:
            atoms[z] = 0.05
    total = sum(atoms.values())
    atoms = {z: p / total for z, p in atoms.items()}
    m = JumpMeasure(atoms, dim=dim)
    if np.any(m.mean <= 1e-6):
        # retry with a fresh draw; positive drift needed on each axis
        return random_drifted_measure(dim, rng, extra_atoms=extra_atoms)
    return m
