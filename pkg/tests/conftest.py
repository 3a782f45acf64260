import pytest

ACCEPTANCE: dict[int, tuple[bool | None, str]] = {}


@pytest.fixture
def record():
    def _record(criterion: int, passed: bool | None, detail: str):
        # None marks a skipped criterion
        ACCEPTANCE[criterion] = (None if passed is None else bool(passed), detail)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'SKIP' if ok is None else 'PASS' if ok else 'FAIL'}  {detail}")


def pytest_collection_modifyitems(items):
    for item in items:
        if getattr(getattr(item, "obj", None), "is_hypothesis_test", False):
            item.add_marker(pytest.mark.property)
