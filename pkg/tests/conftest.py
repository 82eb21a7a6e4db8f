from __future__ import annotations

import pytest

from joinfree.engine import ViewEngine, load
from joinfree.jointree import make_tree
from joinfree.workloads import FIG1C_LAYOUT, fig1_query, fig6_events


@pytest.fixture
def line4():
    return fig1_query()


@pytest.fixture
def line4_tree(line4):
    return make_tree(line4, FIG1C_LAYOUT)


@pytest.fixture
def loaded(line4, line4_tree):
    """Engine over the four-relation line holding the running-example contents."""
    eng = ViewEngine(line4, line4_tree)
    load(eng, fig6_events())
    return eng
