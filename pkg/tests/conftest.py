import pytest

_acceptance = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _acceptance.append((name, report.outcome, getattr(report, "duration", 0.0)))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, outcome, dur in _acceptance:
        mark = "PASS" if outcome == "passed" else "FAIL"
        tr.write_line(f"{mark}  {name}  ({dur:.2f}s)")


@pytest.fixture
def toy_network():
    """Six connected individuals (ids 0..5) plus two unconnected (6, 7).

    p2p: 0->1, 1->2, 3->0 ; group {2, 4, 5}
    """
    from rumornet.netgen import Network

    return Network(n_total=8, connected=[0, 1, 2, 3, 4, 5],
                   p2p_src=[0, 1, 3], p2p_dst=[1, 2, 0], groups=[[2, 4, 5]])
