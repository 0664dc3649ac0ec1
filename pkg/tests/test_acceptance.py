"""Acceptance run: one pass/fail line per criterion at the pinned trial count.

Run with ``pytest -s tests/test_acceptance.py`` (lines are printed even
without ``-s``) or ``python -m reconform check``.
"""

import pytest

from reconform import acceptance


@pytest.mark.parametrize("name", list(acceptance.CRITERIA))
def test_criterion(name, capsys):
    result = acceptance.run_criteria([name], trials=acceptance.DEFAULT_TRIALS,
                                     seed=acceptance.DEFAULT_SEED, echo=None)[0]
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()


def test_band_widening():
    assert acceptance.band(0.9, 0.05, acceptance.DEFAULT_TRIALS) == pytest.approx(0.05)
    assert acceptance.band(0.9, 0.05, 50) > 0.05
    assert acceptance.slack(0.9, acceptance.DEFAULT_TRIALS) == pytest.approx(0.0)


def test_unknown_criterion():
    with pytest.raises(KeyError):
        acceptance.run_criteria(["missing"], trials=1, seed=0, echo=None)
