"""API knowledge base: extraction from Java sources, descriptions, digests.

Entries are the public methods of public types found under a source
root. Interface members count as public even without the keyword, and
a method nested inside inner types only qualifies when every enclosing
type is public too. Entry ids follow ``DeclaringType#method/arity`` and
are stable across runs because files are visited in sorted path order
and methods in declaration order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from . import javasrc
from .provider import ChatRequest


class KnowledgeBaseError(Exception):
    pass


class MissingRoot(KnowledgeBaseError):
    pass


class EmptyKnowledgeBase(KnowledgeBaseError):
    pass


@dataclass
class ApiEntry:
    """One public method of a shared Java API."""

    id: str
    declaring_type: str
    method_name: str
    parameters: list[tuple[str, str]]  # (name, type text) pairs
    return_type: str
    body: str
    file_path: str  # relative to the extraction root, posix separators
    start_line: int
    description: str = ""

    def __post_init__(self):
        if not self.id:
            raise ValueError("entry id must be non-empty")
        self.parameters = [(str(n), str(t)) for n, t in self.parameters]

    def signature(self) -> str:
        params = ", ".join(ptype for _, ptype in self.parameters)
        return f"{self.declaring_type}.{self.method_name}({params}) -> {self.return_type}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "declaring_type": self.declaring_type,
            "method_name": self.method_name,
            "parameters": [[n, t] for n, t in self.parameters],
            "return_type": self.return_type,
            "body": self.body,
            "file_path": self.file_path,
            "start_line": self.start_line,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ApiEntry":
        return cls(
            id=data["id"],
            declaring_type=data["declaring_type"],
            method_name=data["method_name"],
            parameters=[(p[0], p[1]) for p in data["parameters"]],
            return_type=data["return_type"],
            body=data["body"],
            file_path=data["file_path"],
            start_line=int(data["start_line"]),
            description=data.get("description", ""),
        )


@dataclass
class ExtractionResult:
    entries: list[ApiEntry]
    warnings: list[str] = field(default_factory=list)


def make_entry_id(declaring_type: str, method_name: str, arity: int) -> str:
    return f"{declaring_type}#{method_name}/{arity}"


def _is_public(member_modifiers: list[str], in_interface: bool) -> bool:
    if "public" in member_modifiers:
        return True
    # Interface members default to public unless explicitly private.
    if in_interface and "private" not in member_modifiers:
        return True
    return False


def _collect_type(
    decl: javasrc.TypeDecl,
    qualifier: str,
    rel_path: str,
    entries: list[ApiEntry],
    enclosing_public: bool,
    enclosing_interface: bool,
) -> None:
    type_public = _is_public(decl.modifiers, enclosing_interface)
    local_name = f"{qualifier}.{decl.name}" if qualifier else decl.name
    visible = enclosing_public and type_public
    if visible:
        for method in decl.methods:
            if not _is_public(method.modifiers, decl.interface_like):
                continue
            entries.append(
                ApiEntry(
                    id=make_entry_id(local_name, method.name, len(method.parameters)),
                    declaring_type=local_name,
                    method_name=method.name,
                    parameters=list(method.parameters),
                    return_type=method.return_type,
                    body=method.body,
                    file_path=rel_path,
                    start_line=method.line,
                    description="",
                )
            )
    for nested in decl.nested:
        _collect_type(nested, local_name, rel_path, entries, visible, decl.interface_like)


def extract_api_entries(source_root: str | Path) -> ExtractionResult:
    """Extract public-method entries from every .java file under a root.

    Files that fail to parse are skipped and reported in the warning
    list rather than aborting the whole extraction. Entries come back
    sorted by (file path, start line).
    """
    root = Path(source_root)
    if not root.is_dir():
        raise MissingRoot(f"source root {root} is not a directory")
    entries: list[ApiEntry] = []
    warnings: list[str] = []
    files = sorted(root.rglob("*.java"), key=lambda p: p.relative_to(root).as_posix())
    for path in files:
        rel = path.relative_to(root).as_posix()
        try:
            unit = javasrc.parse_compilation_unit(path.read_text(encoding="utf-8"))
        except (javasrc.JavaSyntaxError, UnicodeDecodeError) as exc:
            warnings.append(f"{rel}: {exc}")
            continue
        file_entries: list[ApiEntry] = []
        for decl in unit.types:
            _collect_type(decl, "", rel, file_entries, True, False)
        file_entries.sort(key=lambda e: e.start_line)
        entries.extend(file_entries)
    return ExtractionResult(entries=entries, warnings=warnings)


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def _clip_sentences(text: str, limit: int = 2) -> str:
    flat = " ".join(text.split())
    parts = _SENTENCE_SPLIT.split(flat)
    return " ".join(parts[:limit]).strip()


def _offline_description(entry: ApiEntry) -> str:
    return (
        f"Method {entry.method_name} of {entry.declaring_type} "
        f"returning {entry.return_type}."
    )


_DESCRIBE_SYSTEM = (
    "You document Java library methods. Reply with at most two plain "
    "sentences describing observable behavior."
)


def generate_descriptions(
    entries: list[ApiEntry],
    chat=None,
    temperature: float = 0.0,
    timeout: float = 60.0,
) -> list[ApiEntry]:
    """Fill in empty descriptions, in place, and return the same list.

    Without a chat provider a deterministic template is used. Entries
    that already carry a description are left untouched. A provider
    error aborts the pass; entries described before the failure keep
    their new text.
    """
    for entry in entries:
        if entry.description:
            continue
        if chat is None:
            entry.description = _offline_description(entry)
            continue
        user_text = (
            f"Describe what this Java method does.\n"
            f"Signature: {entry.signature()}\n"
            f"Body:\n{entry.body}\n"
        )
        request = ChatRequest(
            system_text=_DESCRIBE_SYSTEM,
            user_text=user_text,
            temperature=temperature,
            timeout=timeout,
        )
        response = chat.chat(request, role="describe")
        entry.description = _clip_sentences(response.text)
    return entries


def render_kb_digest(entries: list[ApiEntry], max_lines: Optional[int] = None) -> str:
    """One line per entry: ``id | signature | description``.

    When max_lines is given and the digest would exceed it, the first
    max_lines - 1 entries are kept and the final line is a marker
    stating how many entries were dropped.
    """
    if not entries:
        raise EmptyKnowledgeBase("cannot render a digest for an empty knowledge base")
    if max_lines is not None and max_lines < 1:
        raise ValueError("max_lines must be positive")
    lines = [f"{e.id} | {e.signature()} | {e.description}" for e in entries]
    if max_lines is not None and len(lines) > max_lines:
        dropped = len(lines) - (max_lines - 1)
        lines = lines[: max_lines - 1] + [f"[truncated {dropped} entries]"]
    return "\n".join(lines)
