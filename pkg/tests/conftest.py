"""Collects per-criterion outcomes of the acceptance suite and prints one line each."""
from collections import defaultdict

_OUTCOMES = defaultdict(list)


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    xfail = item.get_closest_marker("xfail")
    strict = xfail is not None and xfail.kwargs.get("strict", False)
    if call.excinfo is None:
        if strict:
            _OUTCOMES[mark.args[0]].append(("fail", item.name, "expected failure passed"))
        else:
            _OUTCOMES[mark.args[0]].append(("pass", item.name, ""))
    else:
        if strict:
            _OUTCOMES[mark.args[0]].append(("known", item.name, xfail.kwargs.get("reason", "")))
        else:
            _OUTCOMES[mark.args[0]].append(("fail", item.name, str(call.excinfo.value).splitlines()[0][:120]))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    from test_acceptance import CRITERIA

    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(CRITERIA):
        res = _OUTCOMES.get(k, [])
        if not res:
            tr.write_line(f"criterion {k:2d} NOT RUN  {CRITERIA[k]}")
            continue
        n_pass = sum(r[0] == "pass" for r in res)
        status = "PASS" if n_pass == len(res) else "FAIL"
        tr.write_line(f"criterion {k:2d} {status:7s} {CRITERIA[k]} ({n_pass}/{len(res)} checks pass)")
        for kind, name, why in res:
            if kind == "known":
                tr.write_line(f"    known failure {name}: {why}")
            elif kind == "fail":
                tr.write_line(f"    FAILED {name}: {why}")
