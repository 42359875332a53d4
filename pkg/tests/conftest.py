import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flexbal.core import BalanceProblem


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_problem(
    rng,
    n: int = 10,
    d: int = 4,
    k: float = 1.5,
    conc_radius: float = 0.2,
    linear: bool = True,
    constant_column: bool = True,
) -> BalanceProblem:
    """Small random problem; ``linear`` makes the outcomes exactly
    reproducible by an l1-bounded coefficient vector."""
    if constant_column:
        X = np.column_stack([np.ones(n), rng.uniform(-1, 1, size=(n, d - 1))])
        target = np.concatenate([[1.0], rng.uniform(-0.3, 0.3, d - 1)])
    else:
        X = rng.uniform(-1, 1, size=(n, d))
        target = rng.uniform(-0.5, 0.5, d)
        if np.abs(target).max() < 0.1:
            target[0] = 0.5
    if linear:
        v = np.zeros(d)
        support = rng.choice(d, size=min(3, d), replace=False)
        raw = rng.normal(size=support.size)
        v[support] = raw * (0.8 * k) / np.abs(raw).sum()
        Y = X @ v
    else:
        Y = rng.normal(size=n)
    return BalanceProblem(
        X=X, Y=Y, target=target, conc_radius=conc_radius, k=k, alpha=0.05
    )
