import re

import pytest

from stmsim import CORPUS, load

CORPUS_SCENARIOS = ["span1", "span2", "span3", "span4", "ui_beginner", "ui_expert_partial", "ui_expert_full"]


@pytest.fixture
def corpus():
    return lambda name, **overrides: load(CORPUS / f"{name}.stm", overrides or None)


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if rep.when == "call" and "criterion" in props:
                rows.append((props["criterion"], outcome.upper(), props.get("detail", "")))
    if rows:
        terminalreporter.section("acceptance criteria")
        for crit, outcome, detail in sorted(rows, key=lambda r: (int(re.match(r"\d+", r[0]).group()), r[0])):
            terminalreporter.write_line(f"[{'PASS' if outcome == 'PASSED' else 'FAIL'}] criterion {crit} {detail}")
