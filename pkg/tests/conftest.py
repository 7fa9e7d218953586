import numpy as np
import pytest

from logitprob.model import ClassDensity, CalibrationModel, LogitRecord

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def make_density(i, edges, mass, mean=0.0, variance=1.0):
    return ClassDensity(i, np.array(edges, float), np.array(mass, float), mean, variance, 10)


@pytest.fixture
def three_class_model():
    """Hand-built model: lookups at logits (0.5, 1.5, 9.0) give (0.6, 0.2, 0.0)."""
    densities = (
        make_density(0, [0, 1, 2], [0.6, 0.4]),
        make_density(1, [0, 1, 2], [0.8, 0.2]),
        make_density(2, [0, 1, 2], [0.5, 0.5]),
    )
    return CalibrationModel(("a", "b", "c"), densities, 0.01, 2)


def rec(logits, label=None, objectness=None, sid="r"):
    return LogitRecord(sid, np.array(logits, float), label, objectness)
