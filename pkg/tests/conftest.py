import numpy as np
import pytest

from rdmc.targets import (CountingTarget, GaussianMixtureSpec, make_cauchy, make_circle_gmm,
                          make_gmm, make_ill_conditioned_gaussian, make_neals_funnel,
                          make_sublinear_tail, standard_normal)


@pytest.fixture
def normal2():
    return standard_normal(2)


@pytest.fixture
def counting_normal2():
    return CountingTarget(standard_normal(2))


@pytest.fixture
def bimodal_1d():
    return make_gmm(GaussianMixtureSpec([[0.0], [4.0]]))


def all_targets():
    return [
        ("gmm", make_gmm(GaussianMixtureSpec([[0.0, 0.0], [4.0, 0.0]], [0.0, np.log(3.0)]))),
        ("circle_gmm", make_circle_gmm(6, 1.0, 3)),
        ("ill_gaussian", make_ill_conditioned_gaussian([20.0, 20.0], [400.0, 1.0])),
        ("sublinear", make_sublinear_tail(0.25, 3)),
        ("cauchy", make_cauchy(2)),
        ("funnel", make_neals_funnel(3)),
    ]


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def record(line):
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
