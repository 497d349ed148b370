import numpy as np
import pytest

from catsim.bn import BnNetwork, BnNode, BnStructure, TableCPD
from catsim.core import ResponseDataset
from catsim.dataio import question_labels, student_labels


def make_dataset(answers) -> ResponseDataset:
    answers = np.asarray(answers, dtype=bool)
    n, p = answers.shape
    return ResponseDataset(question_labels(p), student_labels(n), answers)


def copy_network(p: int) -> BnNetwork:
    """One Boolean skill; every question deterministically copies it."""
    pool = question_labels(p)
    nodes = (BnNode("S", "skill", 2), *(BnNode(q, "question") for q in pool))
    structure = BnStructure(nodes, tuple(("S", q) for q in pool))
    cpds = {"S": TableCPD([0.5, 0.5])}
    cpds.update({q: TableCPD([[1.0, 0.0], [0.0, 1.0]]) for q in pool})
    return BnNetwork(structure, cpds)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
