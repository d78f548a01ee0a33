"""Acceptance gate: one test per criterion, run in order with a shared context.

Each result line is printed as the criterion finishes and repeated in the
terminal summary, so ``pytest -v`` output carries the full pass/fail table.
"""

import pytest

from hybrid_cycles.acceptance import CRITERIA, Context, run_criterion

RESULTS = []


@pytest.fixture(scope="module")
def ctx():
    # the event-residual property (criterion 10) pools impacts from every run
    return Context(seed=0)


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, ctx):
    res = run_criterion(number, ctx)
    RESULTS.append(res)
    print(f"\n{res.line()} ({res.seconds:.1f}s)")
    for line in res.checks:
        print("    " + line)
    assert res.passed, "\n".join([res.line()] + res.checks)
