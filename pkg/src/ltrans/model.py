"""Shared domain types and their JSONL/JSON persistence.

Corpora are JSON Lines (one record per line, UTF-8); run traces are one
JSON document per sample. All source texts are stored verbatim so that
compiler line numbers stay meaningful.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

SEVERITIES = ("error", "warning")
SOURCE_AGENTS = ("initial", "refinement")
TERMINATION_REASONS = ("success", "no_progress", "iteration_cap", "provider_error")


class CorpusError(Exception):
    """Base class for corpus/trace persistence failures."""


class MissingFile(CorpusError):
    def __init__(self, path: str | Path):
        super().__init__(f"file not found: {path}")
        self.path = str(path)


class MalformedLine(CorpusError):
    def __init__(self, path: str | Path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


class DuplicateId(CorpusError):
    def __init__(self, dup_id: str):
        super().__init__(f"duplicate id: {dup_id!r}")
        self.dup_id = dup_id


class IoFailure(CorpusError):
    pass


class InvalidTrace(CorpusError):
    pass


class ConfigError(CorpusError):
    pass


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


@dataclass
class SampleUnit:
    """One legacy PL/SQL unit to translate."""

    id: str
    plsql_source: str
    test_command: str | None = None
    metadata: dict[str, str] | None = None

    def __post_init__(self) -> None:
        _require(bool(self.id), "sample id must be non-empty")
        _require(bool(self.plsql_source), "plsql_source must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"id": self.id, "plsql_source": self.plsql_source}
        if self.test_command is not None:
            out["test_command"] = self.test_command
        if self.metadata is not None:
            out["metadata"] = self.metadata
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SampleUnit":
        return cls(
            id=data["id"],
            plsql_source=data["plsql_source"],
            test_command=data.get("test_command"),
            metadata=data.get("metadata"),
        )


@dataclass
class ReferencePair:
    """One aligned PL/SQL source / Java target exemplar."""

    id: str
    plsql_source: str
    java_target: str
    embedding: list[float] | None = None

    def __post_init__(self) -> None:
        _require(bool(self.id), "reference id must be non-empty")
        _require(bool(self.plsql_source), "plsql_source must be non-empty")
        _require(bool(self.java_target), "java_target must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "plsql_source": self.plsql_source,
            "java_target": self.java_target,
        }
        if self.embedding is not None:
            out["embedding"] = self.embedding
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ReferencePair":
        embedding = data.get("embedding")
        if embedding is not None:
            embedding = [float(v) for v in embedding]
        return cls(
            id=data["id"],
            plsql_source=data["plsql_source"],
            java_target=data["java_target"],
            embedding=embedding,
        )


@dataclass
class Diagnostic:
    """One structured compiler/test error message.

    Structured fields are best-effort parses of ``raw``; ``raw`` keeps the
    verbatim tool output line.
    """

    severity: str
    message: str
    raw: str
    file: str | None = None
    line: int | None = None
    column: int | None = None

    def __post_init__(self) -> None:
        _require(bool(self.raw), "raw must be non-empty")
        _require(self.severity in SEVERITIES, f"severity must be one of {SEVERITIES}")
        if self.line is not None:
            _require(self.line >= 1, "line is 1-based")
        if self.column is not None:
            _require(self.column >= 1, "column is 1-based")

    def to_dict(self) -> dict[str, Any]:
        return {
            "severity": self.severity,
            "message": self.message,
            "raw": self.raw,
            "file": self.file,
            "line": self.line,
            "column": self.column,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Diagnostic":
        return cls(
            severity=data["severity"],
            message=data["message"],
            raw=data["raw"],
            file=data.get("file"),
            line=data.get("line"),
            column=data.get("column"),
        )


@dataclass
class EvalOutcome:
    """Result of evaluating one Java candidate.

    Always satisfies the monotone chain: not structurally valid implies not
    compiled, and not compiled implies zero passed tests.
    """

    structurally_valid: bool
    compiled: bool
    tests_total: int
    tests_passed: int
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def __post_init__(self) -> None:
        _require(self.tests_total >= 0, "tests_total must be non-negative")
        _require(self.tests_passed >= 0, "tests_passed must be non-negative")
        _require(self.tests_passed <= self.tests_total, "tests_passed exceeds tests_total")
        if not self.compiled:
            _require(self.tests_passed == 0, "uncompiled outcome cannot pass tests")
        if not self.structurally_valid:
            _require(not self.compiled, "structurally invalid outcome cannot compile")

    @property
    def all_tests_passed(self) -> bool:
        return self.compiled and self.tests_total > 0 and self.tests_passed == self.tests_total

    def to_dict(self) -> dict[str, Any]:
        return {
            "structurally_valid": self.structurally_valid,
            "compiled": self.compiled,
            "tests_total": self.tests_total,
            "tests_passed": self.tests_passed,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvalOutcome":
        return cls(
            structurally_valid=data["structurally_valid"],
            compiled=data["compiled"],
            tests_total=data["tests_total"],
            tests_passed=data["tests_passed"],
            diagnostics=[Diagnostic.from_dict(d) for d in data.get("diagnostics", [])],
        )


@dataclass
class Candidate:
    """One generated Java candidate with its evaluation."""

    iteration: int
    source_agent: str
    java_code: str
    outcome: EvalOutcome

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "source_agent": self.source_agent,
            "java_code": self.java_code,
            "outcome": self.outcome.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Candidate":
        return cls(
            iteration=data["iteration"],
            source_agent=data["source_agent"],
            java_code=data["java_code"],
            outcome=EvalOutcome.from_dict(data["outcome"]),
        )


def candidate_key(candidate: Candidate) -> tuple[int, int]:
    """Lexicographic quality key: compiled first, then passed-test count."""
    return (1 if candidate.outcome.compiled else 0, candidate.outcome.tests_passed)


def best_candidate_index(candidates: list[Candidate]) -> int:
    """Index of the best candidate; ties break toward the lowest iteration."""
    best = 0
    for i in range(1, len(candidates)):
        if candidate_key(candidates[i]) > candidate_key(candidates[best]):
            best = i
    return best


@dataclass
class RunTrace:
    """Complete per-sample pipeline history."""

    sample_id: str
    candidates: list[Candidate]
    shortlist: list[str]
    termination_reason: str
    best_index: int

    def validate(self) -> None:
        if not self.candidates:
            raise InvalidTrace("trace must contain at least one candidate")
        first = self.candidates[0]
        if first.iteration != 0 or first.source_agent != "initial":
            raise InvalidTrace("candidate 0 must be the initial translation")
        for i, cand in enumerate(self.candidates):
            if cand.iteration != i:
                raise InvalidTrace("iterations must be consecutive starting at 0")
            if cand.source_agent not in SOURCE_AGENTS:
                raise InvalidTrace(f"unknown source_agent {cand.source_agent!r}")
            if i > 0 and cand.source_agent != "refinement":
                raise InvalidTrace("iterations past 0 must come from the refinement agent")
        if self.termination_reason not in TERMINATION_REASONS:
            raise InvalidTrace(f"unknown termination_reason {self.termination_reason!r}")
        if not 0 <= self.best_index < len(self.candidates):
            raise InvalidTrace("best_index out of range")
        if self.best_index != best_candidate_index(self.candidates):
            raise InvalidTrace("best_index does not select the best candidate")

    @property
    def best(self) -> Candidate:
        return self.candidates[self.best_index]

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "candidates": [c.to_dict() for c in self.candidates],
            "shortlist": list(self.shortlist),
            "termination_reason": self.termination_reason,
            "best_index": self.best_index,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunTrace":
        return cls(
            sample_id=data["sample_id"],
            candidates=[Candidate.from_dict(c) for c in data["candidates"]],
            shortlist=list(data["shortlist"]),
            termination_reason=data["termination_reason"],
            best_index=data["best_index"],
        )


@dataclass
class PipelineConfig:
    """Pipeline-wide settings loaded from a single JSON document.

    ``compile_command`` and ``test_command`` are shell templates;
    ``{workdir}`` is substituted in both, ``{summary}`` (the path of the
    test summary JSON) additionally in ``test_command``.
    """

    compile_command: str
    test_command: str
    provider_endpoint: str = ""
    chat_model_id: str = ""
    embed_model_id: str = ""
    k_exemplars: int = 3
    max_iterations: int = 5
    architecture_description_path: str = ""
    request_timeout: float = 60.0
    sandbox_timeout: float = 60.0
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.k_exemplars < 1:
            raise ConfigError("k_exemplars must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if "{workdir}" not in self.compile_command:
            raise ConfigError("compile_command must contain the {workdir} placeholder")
        if "{workdir}" not in self.test_command:
            raise ConfigError("test_command must contain the {workdir} placeholder")
        if "{summary}" not in self.test_command:
            raise ConfigError("test_command must contain the {summary} placeholder")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        missing = [name for name in ("compile_command", "test_command") if name not in data]
        if missing:
            raise ConfigError(f"missing required config fields: {missing}")
        return cls(**data)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return PipelineConfig.from_dict(data)


_CORPUS_KINDS = ("samples", "references", "api_entries")


def _record_parser(kind: str):
    if kind == "samples":
        return SampleUnit.from_dict
    if kind == "references":
        return ReferencePair.from_dict
    if kind == "api_entries":
        from .apikb import ApiEntry  # deferred: apikb builds on this module's loader

        return ApiEntry.from_dict
    raise ValueError(f"unknown corpus kind {kind!r}; expected one of {_CORPUS_KINDS}")


def load_jsonl_corpus(path: str | Path, kind: str) -> list[Any]:
    """Load one JSONL corpus file, rejecting malformed lines and duplicate ids.

    Records are returned in file order. For references the embedding
    dimension must be consistent across the whole file.
    """
    parse = _record_parser(kind)
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)

    records: list[Any] = []
    seen_ids: set[str] = set()
    embed_dim: int | None = None
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                record = parse(data)
            except DuplicateId:
                raise
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedLine(path, line_no, str(exc)) from exc
            if record.id in seen_ids:
                raise DuplicateId(record.id)
            seen_ids.add(record.id)
            if kind == "references" and record.embedding is not None:
                if embed_dim is None:
                    embed_dim = len(record.embedding)
                elif len(record.embedding) != embed_dim:
                    raise MalformedLine(
                        path, line_no,
                        f"embedding dimension {len(record.embedding)} != corpus dimension {embed_dim}",
                    )
            records.append(record)
    return records


def write_jsonl_corpus(records: list[Any], path: str | Path) -> Path:
    """Write records (anything with ``to_dict``) as one JSON object per line."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def write_run_trace(trace: RunTrace, out_dir: str | Path) -> Path:
    """Persist one trace as ``<sample_id>.trace.json``; invalid traces are rejected."""
    trace.validate()
    out_dir = Path(out_dir)
    path = out_dir / f"{trace.sample_id}.trace.json"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(trace.to_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def load_run_trace(path: str | Path) -> RunTrace:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    try:
        trace = RunTrace.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedLine(path, 1, str(exc)) from exc
    trace.validate()
    return trace
