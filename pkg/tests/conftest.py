import math

import numpy as np
import pytest

from icsrisk import model
from icsrisk.model import AttackGraph, AttackScenario, DegradationModel, PlantModel

# calibrated values for the three-state study plant (seed 1, 50 replications)
STUDY_LAMBDA = 400.0
STUDY_DELTA = 1.0


def study(T=30, K=2, level="moderate", seed=6, kind="high", **kw) -> AttackScenario:
    return model.numerical_study(kind, seed, T, K, lam=STUDY_LAMBDA, delta=STUDY_DELTA,
                                 level=level, **kw)


def chain(T=3, K=1, times=(1.0, 1.0, 1.0), a=0.5, b=0.5, delta=math.inf, w=1.0,
          A=0.5, kappa=0.5, lam=10.0) -> AttackScenario:
    """0 -> 1 -> 2 -> {s, c}: four cyber nodes, scalar plant."""
    arcs = [("0", "1", times[0]), ("1", "2", times[1]), ("2", "s", times[2]), ("2", "c", times[2])]
    g = AttackGraph.build(["0", "1", "2", "s", "c"], arcs, ["0"], ["s"], ["c"])
    p = PlantModel.build([[A]], [[1.0]], [[1.0]], 0.1, 0.05)
    d = DegradationModel.build(kappa, [0.8], 0.3, lam)
    return AttackScenario(g, p, d, T, K, delta=np.array([delta]), a_lo=np.array([-a]),
                          a_hi=np.array([a]), b_lo=np.array([-b]), b_hi=np.array([b]), w_cyber=w)


@pytest.fixture
def tiny():
    return chain()


@pytest.fixture
def study_scenario():
    return study()
