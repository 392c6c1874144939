import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gsnmf.model import GroupAssignment, Hyperparameters, build_group_hyperprior, sample_model


@pytest.fixture(scope="session")
def planted_dataset():
    """Synthetic data with three planted groups of two features each.

    The generator's prior contrast (a_small=1 vs a_large=64) makes block-g
    coefficients large only for group-g samples, so the labels are
    recoverable from the coefficients.
    """
    C, per_group, V, T = 3, 2, 40, 90
    I = C * per_group
    A_l, B_l = build_group_hyperprior(C, per_group, a_small=1.0, a_large=64.0, b=1.0)
    hyper = Hyperparameters(
        A_t=np.full((V, I), 0.6),
        B_t=np.full((V, I), 20.0),
        A_lambda=A_l,
        B_lambda=B_l,
        U=np.ones((T, C)),
    )
    labels = np.arange(T) % C
    X, truth = sample_model(hyper, GroupAssignment(C, labels), seed=11)
    return {"X": X, "labels": labels, "hyper": hyper, "truth": truth,
            "C": C, "per_group": per_group}
