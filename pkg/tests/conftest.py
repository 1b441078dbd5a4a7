import os

import pytest
from hypothesis import HealthCheck, settings

from acquire_rgg.engine import check_weight_caps, replay

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# running tally of cap audits, reported in the terminal summary
AUDITS = {"protocols": 0, "events": 0, "violations": 0}
# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = []


def audit(graph, protocol, exact_distances=False):
    """Replay with provenance and insist on zero cap violations."""
    state = replay(graph, protocol, track_provenance=True)
    rep = check_weight_caps(state, exact_distances=exact_distances)
    AUDITS["protocols"] += 1
    AUDITS["events"] += rep.events_checked
    AUDITS["violations"] += len(rep.violations)
    assert rep.ok, rep.violations[:5]
    return state


@pytest.fixture
def audited():
    return audit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
    if AUDITS["protocols"]:
        terminalreporter.write_line(
            f"weight-cap audits: {AUDITS['protocols']} protocols, "
            f"{AUDITS['events']} moves, {AUDITS['violations']} violations"
        )
