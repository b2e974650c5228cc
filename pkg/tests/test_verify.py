import pytest

from stefanbench.verify import MODULES, run_suite


def test_full_suite_passes():
    results = run_suite(seed=0)
    failed = [name for name, passed, _ in results if not passed]
    assert not failed, f"failed properties: {failed}"
    assert len(results) >= 12


@pytest.mark.parametrize("module", MODULES)
def test_module_selection(module):
    results = run_suite(module, seed=1)
    assert results
    assert all(passed for _, passed, _ in results)


def test_unknown_module_rejected():
    with pytest.raises(ValueError):
        run_suite("bogus")
