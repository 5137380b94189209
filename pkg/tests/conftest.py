import numpy as np
import pytest

from hornnet import datakit, parse_rules

CT_RULES_TEXT = """\
Final_score :- CT_concepts, CT_skills.
CT_concepts :- Conditional, Loop.
CT_skills :- Debug, Simulation, Function.
"""

GAME_FEATURES = tuple(datakit.FEATURE_STATS)


@pytest.fixture
def ct_rules_text():
    return CT_RULES_TEXT


@pytest.fixture
def ct_rules():
    return parse_rules(CT_RULES_TEXT)


@pytest.fixture
def game_features():
    return GAME_FEATURES


@pytest.fixture
def toy_dataset():
    """Small two-class dataset with an obvious separating feature."""
    rng = np.random.default_rng(42)
    n = 60
    labels = np.array(["High"] * 40 + ["Low"] * 20, dtype=object)
    signal = np.where(labels == "High", 0.8, 0.2) + rng.normal(0, 0.05, n)
    noise = rng.uniform(0, 1, (n, 2))
    rows = np.column_stack([signal, noise])
    return datakit.Dataset(("signal", "n1", "n2"), rows, labels)
