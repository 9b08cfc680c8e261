"""Shared fixtures: paths, config factories, trace builders."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from ltrans.model import Candidate, EvalOutcome, PipelineConfig, RunTrace, best_candidate_index

FIXTURES = Path(__file__).parent / "fixtures"

# criterion number -> (name, "PASS" | "FAIL"), filled by test_acceptance
ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        name, status = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"criterion {num} ({name}): {status}")


def make_outcome(valid=True, compiled=True, total=0, passed=0, diags=None) -> EvalOutcome:
    return EvalOutcome(
        structurally_valid=valid,
        compiled=compiled,
        tests_total=total,
        tests_passed=passed,
        diagnostics=diags or [],
    )


def make_trace(sample_id: str, outcomes, reason: str) -> RunTrace:
    """Build a trace from a list of (valid, compiled, total, passed) tuples."""
    candidates = [
        Candidate(
            iteration=i,
            source_agent="initial" if i == 0 else "refinement",
            java_code=f"class C{i} {{}}",
            outcome=make_outcome(*flags),
        )
        for i, flags in enumerate(outcomes)
    ]
    trace = RunTrace(
        sample_id=sample_id,
        candidates=candidates,
        shortlist=[],
        termination_reason=reason,
        best_index=best_candidate_index(candidates),
    )
    trace.validate()
    return trace


def stub_config(**overrides) -> PipelineConfig:
    """Config whose commands use the fixture stub compiler/test runner."""
    bin_dir = FIXTURES / "bin"
    base = dict(
        compile_command=f"python3 {bin_dir}/stub_compile.py {{workdir}}",
        test_command=f"python3 {bin_dir}/stub_test.py {{workdir}} {{summary}}",
        architecture_description_path=str(FIXTURES / "e2e" / "arch.md"),
        k_exemplars=2,
        max_iterations=2,
    )
    base.update(overrides)
    return PipelineConfig(**base)


@pytest.fixture
def e2e_config_path(tmp_path) -> Path:
    """The stub config written out as a JSON file for CLI runs."""
    path = tmp_path / "config.json"
    path.write_text(json.dumps(stub_config().to_dict()), encoding="utf-8")
    return path
