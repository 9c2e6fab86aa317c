"""Acceptance criteria A1-A10; each test prints its PASS/FAIL line."""

import pytest

from graphheat import acceptance

# runtime budgets in seconds
BUDGET = {"A1": 1, "A2": 30, "A5": 60, "A6": 120}


@pytest.fixture(scope="module")
def star_setup():
    return acceptance.star_setup()


@pytest.mark.parametrize("fn", acceptance.ALL, ids=[f"A{i}" for i in range(1, 11)])
def test_criterion(fn, star_setup, capsys):
    if fn in (acceptance.a6_local_steering, acceptance.a8_semiglobal):
        crit = fn(star_setup)
    else:
        crit = fn()
    with capsys.disabled():
        print("\n" + crit.line())
    assert crit.passed, crit.detail
    if crit.name in BUDGET:
        assert crit.seconds < BUDGET[crit.name]
