from pathlib import Path

import pytest

from phylosmc import phylo

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def tree10():
    return phylo.read_newick(DATA / "crbd10.nwk")


@pytest.fixture(scope="session")
def tree20():
    return phylo.read_newick(DATA / "crbd20.nwk")


# -- acceptance report -------------------------------------------------------

_criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
        _criteria.append((mark.args[0], status, doc))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, doc in sorted(_criteria):
        terminalreporter.write_line(f"{status} criterion {num:>2}: {doc}")


@pytest.fixture(scope="session")
def tree10_path():
    return DATA / "crbd10.nwk"
