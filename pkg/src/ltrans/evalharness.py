"""Offline-testable evaluation harness.

Candidates are judged on a monotone chain: structural validity (our own
declaration-level grammar, no compiler involved), compilation (a shell
command template run in a private sandbox directory) and behavioral
tests (another template that must leave a JSON summary behind). Reports
aggregate per-sample traces into the three headline percentages.
"""

from __future__ import annotations

import json
import os
import re
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from . import javasrc
from .model import Diagnostic, EvalOutcome, PipelineConfig, RunTrace, SampleUnit

SANDBOX_DIR_ENV = "LT_SANDBOX_DIR"
TIMEOUT_EXIT_CODE = 124
SUMMARY_FILENAME = "test-summary.json"

# javac-style: path:line: error: message (column segment optional)
DEFAULT_DIAG_PATTERN = (
    r"^(?P<file>[^\s:][^:]*):(?P<line>\d+):(?:(?P<column>\d+):)?"
    r" (?P<severity>error|warning): (?P<message>.*)$"
)


class HarnessError(Exception):
    pass


class CommandNotFound(HarnessError):
    pass


class WorkdirCreationFailure(HarnessError):
    pass


@dataclass
class SandboxResult:
    """Outcome of one sandboxed shell command."""

    exit_code: int
    stdout: str
    stderr: str
    duration: float
    timed_out: bool = False

    def __post_init__(self) -> None:
        if self.timed_out and self.exit_code != TIMEOUT_EXIT_CODE:
            raise ValueError(f"timed-out results must use exit code {TIMEOUT_EXIT_CODE}")


def make_workdir() -> Path:
    """A fresh private directory, rooted at $LT_SANDBOX_DIR when set."""
    root = os.environ.get(SANDBOX_DIR_ENV) or None
    try:
        if root is not None:
            Path(root).mkdir(parents=True, exist_ok=True)
        return Path(tempfile.mkdtemp(prefix="ltrans-", dir=root))
    except OSError as exc:
        raise WorkdirCreationFailure(f"cannot create sandbox workdir: {exc}") from exc


def _as_text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bytes):
        return value.decode("utf-8", "replace")
    return value


def run_sandboxed(command: str, timeout: float) -> SandboxResult:
    """Run one shell command with a hard wall-clock limit.

    A timeout maps to exit code 124 with whatever output was captured.
    Exit 127 (shell could not find the command) is a harness error, not
    a candidate failure.
    """
    start = time.monotonic()
    try:
        proc = subprocess.run(
            command, shell=True, capture_output=True, text=True, timeout=timeout
        )
        result = SandboxResult(
            exit_code=proc.returncode,
            stdout=proc.stdout,
            stderr=proc.stderr,
            duration=time.monotonic() - start,
        )
    except subprocess.TimeoutExpired as exc:
        result = SandboxResult(
            exit_code=TIMEOUT_EXIT_CODE,
            stdout=_as_text(exc.stdout),
            stderr=_as_text(exc.stderr),
            duration=time.monotonic() - start,
            timed_out=True,
        )
    if result.exit_code == 127 and not result.timed_out:
        raise CommandNotFound(
            f"command exited 127 (not found): {command!r}: {result.stderr.strip()[:200]}"
        )
    return result


def check_structural_validity(java_code: str) -> tuple[bool, list[Diagnostic]]:
    """Grammar-only validity check; never shells out."""
    try:
        javasrc.parse_compilation_unit(java_code)
    except javasrc.JavaSyntaxError as exc:
        diag = Diagnostic(
            severity="error",
            message=exc.message,
            raw=f"structural: {exc}",
            line=exc.line,
        )
        return False, [diag]
    return True, []


def parse_compiler_output(text: str, pattern: Optional[str] = None) -> list[Diagnostic]:
    """Structured diagnostics from compiler output.

    Lines matching the (configurable) pattern become structured
    diagnostics; when nothing matches at all, every non-blank line is
    kept verbatim so no feedback is ever dropped.
    """
    regex = re.compile(pattern or DEFAULT_DIAG_PATTERN)
    structured: list[Diagnostic] = []
    leftovers: list[str] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        match = regex.match(line)
        if match is None:
            leftovers.append(line)
            continue
        groups = match.groupdict()
        structured.append(
            Diagnostic(
                severity=groups.get("severity") or "error",
                message=groups.get("message") or line,
                raw=line,
                file=groups.get("file"),
                line=int(groups["line"]) if groups.get("line") else None,
                column=int(groups["column"]) if groups.get("column") else None,
            )
        )
    if structured:
        return structured
    return [Diagnostic(severity="error", message=line, raw=line) for line in leftovers]


def candidate_filename(java_code: str) -> str:
    """File name the candidate is written under: first public type wins."""
    try:
        unit = javasrc.parse_compilation_unit(java_code)
    except javasrc.JavaSyntaxError:
        return "Candidate.java"
    public = [t for t in unit.types if "public" in t.modifiers]
    decl = public[0] if public else unit.types[0]
    return f"{decl.name}.java"


def _fill(template: str, workdir: Path, summary: Optional[Path] = None) -> str:
    # str.replace, not str.format: shell templates may legitimately
    # contain other brace constructs such as ${VAR} or awk blocks.
    command = template.replace("{workdir}", str(workdir))
    if summary is not None:
        command = command.replace("{summary}", str(summary))
    return command


def compile_candidate(
    java_code: str,
    config: PipelineConfig,
    workdir: Optional[Path] = None,
    diag_pattern: Optional[str] = None,
) -> tuple[bool, list[Diagnostic], SandboxResult]:
    """Write the candidate into a sandbox and run the compile template."""
    if workdir is None:
        workdir = make_workdir()
    path = workdir / candidate_filename(java_code)
    path.write_text(java_code, encoding="utf-8")
    result = run_sandboxed(_fill(config.compile_command, workdir), config.sandbox_timeout)
    compiled = result.exit_code == 0 and not result.timed_out
    diagnostics: list[Diagnostic] = []
    if not compiled:
        diagnostics = parse_compiler_output(result.stderr, diag_pattern)
        if result.timed_out:
            diagnostics.append(
                Diagnostic(
                    severity="error",
                    message=f"compile timed out after {config.sandbox_timeout}s",
                    raw="timeout: compile command",
                )
            )
        elif not diagnostics:
            fallback = (result.stderr or result.stdout).strip()[:500]
            diagnostics.append(
                Diagnostic(
                    severity="error",
                    message=f"compiler exited with status {result.exit_code}",
                    raw=fallback or f"exit status {result.exit_code}",
                )
            )
    return compiled, diagnostics, result


def run_tests(
    workdir: Path,
    config: PipelineConfig,
    sample: Optional[SampleUnit] = None,
) -> tuple[int, int, list[Diagnostic]]:
    """Run the test template and read back the summary JSON.

    The command must write ``{summary}`` as a JSON object with keys
    total, passed and failures. A missing or malformed summary counts
    as zero tests run plus a harness diagnostic; it never crashes the
    pipeline. Returns (tests_total, tests_passed, diagnostics).
    """
    template = config.test_command
    if sample is not None and sample.test_command:
        template = sample.test_command
    summary_path = workdir / SUMMARY_FILENAME
    result = run_sandboxed(_fill(template, workdir, summary_path), config.sandbox_timeout)

    def broken(reason: str) -> tuple[int, int, list[Diagnostic]]:
        detail = f"test summary unusable: {reason}"
        if result.timed_out:
            detail += f" (test command timed out after {config.sandbox_timeout}s)"
        return 0, 0, [Diagnostic(severity="error", message=detail, raw=detail)]

    try:
        data = json.loads(summary_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        return broken(f"{SUMMARY_FILENAME} not written")
    except (OSError, ValueError) as exc:
        return broken(str(exc))
    if not isinstance(data, dict):
        return broken("summary must be a JSON object")
    try:
        total = int(data["total"])
        passed = int(data["passed"])
        failures = data.get("failures", [])
        if total < 0 or passed < 0 or passed > total or not isinstance(failures, list):
            raise ValueError("inconsistent counts")
        diagnostics = [
            Diagnostic(
                severity="error",
                message=f"test {f['name']} failed: {f.get('detail', '')}".rstrip(": "),
                raw=f"test {f['name']} failed: {f.get('detail', '')}",
            )
            for f in failures
        ]
    except (KeyError, TypeError, ValueError) as exc:
        return broken(str(exc))
    return total, passed, diagnostics


def evaluate_candidate(
    sample: Optional[SampleUnit],
    java_code: str,
    config: PipelineConfig,
) -> EvalOutcome:
    """Full chain for one candidate: validity, compile, tests."""
    valid, diagnostics = check_structural_validity(java_code)
    if not valid:
        return EvalOutcome(
            structurally_valid=False,
            compiled=False,
            tests_total=0,
            tests_passed=0,
            diagnostics=diagnostics,
        )
    workdir = make_workdir()
    compiled, compile_diags, _ = compile_candidate(java_code, config, workdir)
    if not compiled:
        return EvalOutcome(
            structurally_valid=True,
            compiled=False,
            tests_total=0,
            tests_passed=0,
            diagnostics=compile_diags,
        )
    total, passed, test_diags = run_tests(workdir, config, sample)
    return EvalOutcome(
        structurally_valid=True,
        compiled=True,
        tests_total=total,
        tests_passed=passed,
        diagnostics=test_diags,
    )


def make_evaluator(config: PipelineConfig) -> Callable[[Optional[SampleUnit], str], EvalOutcome]:
    """Evaluator callable in the shape the pipeline expects."""

    def evaluate(sample: Optional[SampleUnit], java_code: str) -> EvalOutcome:
        return evaluate_candidate(sample, java_code, config)

    return evaluate


def _pct(count: int, total: int) -> float:
    return round(100.0 * count / total, 1)


@dataclass
class PerSampleRow:
    sample_id: str
    structurally_valid: bool
    compiled: bool
    tests_total: int
    tests_passed: int
    termination_reason: str
    iterations: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "structurally_valid": self.structurally_valid,
            "compiled": self.compiled,
            "tests_total": self.tests_total,
            "tests_passed": self.tests_passed,
            "termination_reason": self.termination_reason,
            "iterations": self.iterations,
        }


@dataclass
class EvalReport:
    """Aggregate metrics over a batch of traces.

    Percentages use the best candidate of each trace and are rounded to
    one decimal. ``tpr_fraction_pct`` is the transparency companion to
    the headline test pass rate: the share of individual test cases
    passed across the batch.
    """

    n_samples: int
    sv_pct: float
    cr_pct: float
    tpr_pct: float
    tpr_fraction_pct: float
    per_sample: list[PerSampleRow] = field(default_factory=list)
    retrieval: dict[str, float] | None = None

    def __post_init__(self) -> None:
        for name in ("sv_pct", "cr_pct", "tpr_pct", "tpr_fraction_pct"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"{name} out of range: {value}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "n_samples": self.n_samples,
            "sv_pct": self.sv_pct,
            "cr_pct": self.cr_pct,
            "tpr_pct": self.tpr_pct,
            "tpr_fraction_pct": self.tpr_fraction_pct,
            "per_sample": [row.to_dict() for row in self.per_sample],
        }
        if self.retrieval is not None:
            out["retrieval"] = self.retrieval
        return out


def compute_report(
    traces: list[RunTrace],
    n_samples: Optional[int] = None,
    retrieval: dict[str, float] | None = None,
) -> EvalReport:
    """Aggregate best-candidate outcomes; absent traces count as total failures."""
    if n_samples is None:
        n_samples = len(traces)
    if n_samples < len(traces):
        raise ValueError("n_samples smaller than the number of traces")
    if n_samples < 1:
        raise ValueError("cannot report on an empty batch")
    sv = cr = tpr = 0
    case_total = case_passed = 0
    rows: list[PerSampleRow] = []
    for trace in traces:
        outcome = trace.best.outcome
        sv += 1 if outcome.structurally_valid else 0
        cr += 1 if outcome.compiled else 0
        tpr += 1 if outcome.all_tests_passed else 0
        case_total += outcome.tests_total
        case_passed += outcome.tests_passed
        rows.append(
            PerSampleRow(
                sample_id=trace.sample_id,
                structurally_valid=outcome.structurally_valid,
                compiled=outcome.compiled,
                tests_total=outcome.tests_total,
                tests_passed=outcome.tests_passed,
                termination_reason=trace.termination_reason,
                iterations=trace.candidates[-1].iteration,
            )
        )
    rows.sort(key=lambda row: row.sample_id)
    return EvalReport(
        n_samples=n_samples,
        sv_pct=_pct(sv, n_samples),
        cr_pct=_pct(cr, n_samples),
        tpr_pct=_pct(tpr, n_samples),
        tpr_fraction_pct=_pct(case_passed, case_total) if case_total else 0.0,
        per_sample=rows,
        retrieval=retrieval,
    )


def report_json(report: EvalReport) -> str:
    """Canonical JSON rendering shared by every command that emits a report."""
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def summary_line(report: EvalReport) -> str:
    return f"SV {report.sv_pct:.1f} CR {report.cr_pct:.1f} TPR {report.tpr_pct:.1f}"


def render_report_md(report: EvalReport) -> str:
    """Markdown report with the headline metric table plus per-sample rows."""
    lines = [
        "# Translation evaluation report",
        "",
        f"Samples: {report.n_samples}",
        "",
        "| Structural Validity (%) | Compilation Rate (%) | Test Pass Rate (%) |",
        "| --- | --- | --- |",
        f"| {report.sv_pct:.1f} | {report.cr_pct:.1f} | {report.tpr_pct:.1f} |",
        "",
        f"Share of individual test cases passed: {report.tpr_fraction_pct:.1f}%",
        "",
    ]
    if report.retrieval:
        pairs = " ".join(f"{k} {v:.3f}" for k, v in sorted(report.retrieval.items()))
        lines += [f"Retrieval: {pairs}", ""]
    lines += [
        "| Sample | Valid | Compiled | Tests | Termination | Iterations |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    for row in report.per_sample:
        lines.append(
            f"| {row.sample_id} | {'yes' if row.structurally_valid else 'no'} "
            f"| {'yes' if row.compiled else 'no'} "
            f"| {row.tests_passed}/{row.tests_total} "
            f"| {row.termination_reason} | {row.iterations} |"
        )
    return "\n".join(lines) + "\n"
