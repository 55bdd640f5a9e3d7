"""The eleven acceptance criteria at their stated sample sizes and tolerances.

Set ``LJREACT_ACCEPTANCE_SCALE`` to ``quick`` or ``smoke`` for a shorter run
with the same tolerances and smaller samples (runtime limits are only
enforced at ``full``).  Each test prints one PASS/FAIL line.
"""

import os

import pytest

from ljreact.verification import CRITERIA

SCALE = os.environ.get("LJREACT_ACCEPTANCE_SCALE", "full")

NUMBERED = list(enumerate(CRITERIA, start=1))


@pytest.mark.slow
@pytest.mark.parametrize("number, name", NUMBERED, ids=[n for _, n in NUMBERED])
def test_acceptance(number, name, tmp_path_factory, capsys):
    fn = CRITERIA[name]
    if name == "determinism":
        check = fn(SCALE, workdir=tmp_path_factory.mktemp("determinism"))
    else:
        check = fn(SCALE)
    runtime = f" [{check.runtime_s:.1f}s]" if check.runtime_s is not None else ""
    with capsys.disabled():
        print(f"\n[criterion {number:2d}] {check.line()}{runtime}")
    assert check.passed, check.line()
