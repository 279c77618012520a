"""The ten acceptance criteria at their stated tolerances, one line each."""
import pytest

from knoids import verify


@pytest.mark.slow
@pytest.mark.parametrize("criterion", verify.ACCEPTANCE, ids=lambda f: f.__name__)
def test_criterion(criterion, capsys, tmp_path):
    chk = criterion(tmp_path) if criterion is verify.c10_determinism else criterion()
    with capsys.disabled():
        print(f"\n{chk.line()}  ({chk.seconds:.1f}s)")
        if chk.detail:
            print(chk.detail)
    assert chk.passed, chk.line()
