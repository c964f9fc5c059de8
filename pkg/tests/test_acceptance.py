"""Acceptance gate: every criterion runs headless through the CLI's verify
subcommand (no server, no console) and must pass at its stated tolerance.

The suite is executed once per test session; the per-criterion tests read
the generated report so each criterion gets its own pass/fail line here too.
"""

import json

import pytest

from cogwlan.cli import run_cli

CRITERIA = [
    ("1", "gradient-correctness"),
    ("2", "activation-conformance"),
    ("3", "published-hyperparameters-xor"),
    ("4", "operation-algorithm-conformance"),
    ("5", "detection-at-scale"),
    ("6", "learning-trend"),
    ("7", "error-sweep-harnesses"),
    ("8", "evaluation-latency-budget"),
    ("9", "event-sourcing-and-atomicity"),
]


@pytest.fixture(scope="module")
def acceptance(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    exit_code = run_cli(["verify", "--output-dir", str(out)])
    report = json.loads((out / "acceptance_report.json").read_text())
    return exit_code, {r["criterion"]: r for r in report}


@pytest.mark.parametrize("criterion,name", CRITERIA)
def test_criterion(acceptance, criterion, name):
    _, by_id = acceptance
    result = by_id[criterion]
    assert result["name"] == name
    assert result["passed"], f"[{criterion}] {name}: {result['details']}"
    if result["budget_s"] is not None:
        assert result["elapsed_s"] <= result["budget_s"], (
            f"[{criterion}] {name} took {result['elapsed_s']:.1f}s "
            f"(budget {result['budget_s']:.0f}s)"
        )


def test_verify_exit_code_reflects_overall_result(acceptance):
    exit_code, by_id = acceptance
    all_passed = all(r["passed"] for r in by_id.values())
    assert exit_code == (0 if all_passed else 1)
    assert len(by_id) == len(CRITERIA)
