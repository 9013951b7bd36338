import pytest

_RESULTS = pytest.StashKey[dict]()


class AcceptanceReport:
    """Collects one verdict line per acceptance criterion."""

    def __init__(self, store: dict, number: int):
        self.store = store
        self.number = number
        store[number] = (False, "did not complete")

    def __call__(self, ok: bool, detail: str) -> None:
        self.store[self.number] = (bool(ok), detail)
        print(f"criterion {self.number}: {'PASS' if ok else 'FAIL'} | {detail}")


@pytest.fixture
def criterion(request):
    store = request.config.stash.setdefault(_RESULTS, {})
    number = request.node.get_closest_marker("criterion").args[0]
    return AcceptanceReport(store, number)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_RESULTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        ok, detail = store[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
