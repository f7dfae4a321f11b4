import pytest

_LOG = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Per-criterion list of (clause, ok, detail) filled by the acceptance tests."""
    return request.config.stash.setdefault(_LOG, {})


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_LOG, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        clauses = log[n]
        ok = all(c[1] for c in clauses)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAILED'} ({info})" for name, good, info in clauses)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
