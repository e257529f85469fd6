import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=2000, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


_verdicts = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line; lines are echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_verdicts, [])

    def record(number: int, ok: bool, detail: str, extra: tuple[str, ...] = ()) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append((number, line, extra))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_verdicts, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line, extra in sorted(lines):
        terminalreporter.write_line(line)
        for row in extra:
            terminalreporter.write_line("    " + row)
