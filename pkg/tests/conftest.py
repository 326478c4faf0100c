import pytest

from futarray.executor import EvalContext, Scheduler


@pytest.fixture(scope="session")
def pools():
    """Lazily created schedulers keyed by worker count, shared by the session."""
    made: dict[int, Scheduler] = {}

    def get(workers: int) -> Scheduler:
        if workers not in made:
            made[workers] = Scheduler(workers)
        return made[workers]

    yield get
    for sched in made.values():
        sched.close()


@pytest.fixture
def dataflow(pools):
    def make(workers: int = 4, **kw) -> EvalContext:
        return EvalContext(scheduler=pools(workers), **kw)
    return make


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = item.get_closest_marker("criterion")
    if crit is None or (rep.when != "call" and not rep.skipped and rep.passed):
        return
    verdict = "SKIP" if rep.skipped else "PASS" if rep.passed else "FAIL"
    note = ""
    if rep.skipped and isinstance(rep.longrepr, tuple):
        note = rep.longrepr[2].removeprefix("Skipped: ")
    elif rep.failed:
        note = str(rep.longrepr).strip().splitlines()[-1][:160]
    item.config.stash.setdefault(_RESULTS, {})[crit.args[0]] = (verdict, crit.args[1], note)


_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        verdict, title, note = results[n]
        line = f"{verdict} [{n}] {title}"
        terminalreporter.write_line(f"{line} ({note})" if note else line)
