from __future__ import annotations

from importlib import resources

import pytest

from fogrecover import (
    MaliciousList,
    TxnId,
    assess_primary,
    assess_secondary,
    parse_schedule,
    recover_primary,
    recover_secondary,
)

DATA = resources.files("fogrecover") / "data"


def schedule_text(name: str) -> str:
    return (DATA / f"{name}.sched").read_text()


def row_tuple(row):
    """Compact comparable form of an audit row."""
    return (
        f"T{row.txn.number}",
        [tuple(p) for p in row.data_written],
        [(str(r), v) for r, v in row.valid_read],
        [str(r) for r in row.invalid_read],
        list(row.fog_ids),
    )


@pytest.fixture
def fog1_log():
    return parse_schedule(schedule_text("fog1"), "fog1")


@pytest.fixture
def fogx_log():
    return parse_schedule(schedule_text("fogx"), "fogx")


@pytest.fixture
def fog1_assessment(fog1_log):
    return assess_primary(fog1_log, MaliciousList("fog1", (TxnId("fog1", 1),)))


@pytest.fixture
def fogx_assessment(fogx_log, fog1_assessment):
    return assess_secondary(fogx_log, fog1_assessment.outgoing["fogx"])


@pytest.fixture
def fog1_recovery(fog1_assessment):
    return recover_primary(fog1_assessment.da_table, fog1_assessment.damaged)


@pytest.fixture
def fogx_recovery(fogx_assessment, fog1_recovery):
    return recover_secondary(
        fogx_assessment.da_table, fogx_assessment.damaged, fog1_recovery.outgoing["fogx"]
    )


# -- acceptance summary ----------------------------------------------------

_criteria: dict[str, str] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark and mark.args:
            _criteria.setdefault(mark.args[0], "NOT RUN")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for name, value in report.user_properties:
        if name == "criterion":
            if report.passed:
                _criteria[value] = "PASS" if _criteria.get(value) != "FAIL" else "FAIL"
            else:
                _criteria[value] = "FAIL"


@pytest.fixture(autouse=True)
def _tag_criterion(request):
    mark = request.node.get_closest_marker("acceptance")
    if mark and mark.args:
        request.node.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict in _criteria.items():
        terminalreporter.write_line(f"{verdict:<8} {name}")
