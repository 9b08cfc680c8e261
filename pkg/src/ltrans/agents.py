"""Translation agents and the per-sample refinement pipeline.

Three chat stages share one provider: an initial translation grounded
in retrieved exemplars, a one-shot API grounding step that shortlists
knowledge-base entries, and a refinement step driven by compiler and
test feedback. ``run_pipeline`` wires them to an evaluator callable and
produces a complete RunTrace no matter how the run ends.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .apikb import ApiEntry, render_kb_digest
from .evalharness import HarnessError
from .model import (
    Candidate,
    Diagnostic,
    EvalOutcome,
    PipelineConfig,
    ReferencePair,
    RunTrace,
    SampleUnit,
    best_candidate_index,
    candidate_key,
)
from .provider import ChatRequest, ProviderError
from .retriever import RetrievedExemplar, retrieve_top_k


class AgentError(Exception):
    pass


class EmptyArchitectureDescription(AgentError):
    pass


class EmptyTranslation(AgentError):
    pass


@dataclass
class PromptBundle:
    """A fully assembled prompt plus byte offsets of its three parts."""

    system_text: str
    user_text: str
    part_markers: tuple[int, int, int]

    def __post_init__(self):
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        size = len(self.user_text.encode("utf-8"))
        a, b, c = self.part_markers
        if not (0 <= a < b < c < size):
            raise ValueError(f"part markers {self.part_markers} must be strictly increasing within the prompt")


@dataclass
class Shortlist:
    """Grounding outcome: accepted entry ids plus bookkeeping."""

    entry_ids: list[str]
    rejected_ids: list[str] = field(default_factory=list)
    fallback_used: bool = False


SYSTEM_TRANSLATE = (
    "You are a senior engineer migrating a legacy PL/SQL codebase to Java. "
    "Follow the target architecture exactly and use only the shared APIs you are shown."
)

SYSTEM_GROUND = (
    "You map compiler feedback to the shared Java APIs that could resolve it. "
    "You answer with machine-readable JSON only."
)

DIAGNOSTIC_COUNT_CAP = 50
DIAGNOSTIC_CHAR_CAP = 500
FALLBACK_SHORTLIST_SIZE = 10

_NO_EXAMPLES = "(no examples available)"
_NO_API_CONTEXT = "(no API context available)"


def _ask(chat, system_text: str, user_text: str, role: str, config: PipelineConfig | None, log):
    request = ChatRequest(
        system_text=system_text,
        user_text=user_text,
        temperature=config.temperature if config else 0.0,
        timeout=config.request_timeout if config else 60.0,
    )
    record = {
        "stage": role,
        "system_text": system_text,
        "user_text": user_text,
        "response_text": None,
    }
    if log is not None:
        log.append(record)
    response = chat.chat(request, role=role)
    record["response_text"] = response.text
    return response


def assemble_initial_prompt(
    arch_description: str,
    exemplars: list[RetrievedExemplar],
    sample: SampleUnit,
) -> PromptBundle:
    """Three-part prompt: architecture, ranked exemplars, unit to translate."""
    if not arch_description.strip():
        raise EmptyArchitectureDescription("architecture description must be non-empty")
    example_blocks = []
    for ex in sorted(exemplars, key=lambda e: e.rank):
        example_blocks.append(
            f"### Example {ex.rank}: PL/SQL\n"
            f"```sql\n{ex.pair.plsql_source}\n```\n\n"
            f"### Example {ex.rank}: Java\n"
            f"```java\n{ex.pair.java_target}\n```"
        )
    examples_part = "## Translation examples\n\n" + (
        "\n\n".join(example_blocks) if example_blocks else _NO_EXAMPLES
    )
    task_part = (
        "## Unit to translate\n\n"
        "Translate the following PL/SQL unit into Java that fits the target "
        "architecture. Reply with exactly one fenced ```java code block "
        "containing a complete compilation unit.\n\n"
        f"```sql\n{sample.plsql_source}\n```"
    )
    parts = [arch_description, examples_part, task_part]
    markers = []
    offset = 0
    for i, part in enumerate(parts):
        markers.append(offset)
        offset += len(part.encode("utf-8"))
        if i < len(parts) - 1:
            offset += len(b"\n\n")
    return PromptBundle(
        system_text=SYSTEM_TRANSLATE,
        user_text="\n\n".join(parts),
        part_markers=(markers[0], markers[1], markers[2]),
    )


_FENCE_RE = re.compile(r"```([A-Za-z0-9_+-]*)[ \t]*\r?\n(.*?)```", re.DOTALL)


def extract_code_block(response_text: str) -> str:
    """Pull the translated unit out of a completion.

    The last fenced block wins, preferring blocks tagged ``java``. A
    completion without fences is taken verbatim. An empty result is an
    error, never an empty candidate.
    """
    blocks = [(m.group(1).lower(), m.group(2)) for m in _FENCE_RE.finditer(response_text)]
    if blocks:
        tagged = [body for tag, body in blocks if tag == "java"]
        code = tagged[-1] if tagged else blocks[-1][1]
    else:
        code = response_text
    code = code.strip()
    if not code:
        raise EmptyTranslation("completion contained no code")
    return code


def render_diagnostics(
    diagnostics: list[Diagnostic],
    max_count: int = DIAGNOSTIC_COUNT_CAP,
    max_chars: int = DIAGNOSTIC_CHAR_CAP,
) -> str:
    """Feedback text for prompts: capped line count, capped line length."""
    lines = [(d.raw or d.message)[:max_chars] for d in diagnostics[:max_count]]
    hidden = len(diagnostics) - max_count
    if hidden > 0:
        lines.append(f"[{hidden} more diagnostics omitted]")
    return "\n".join(lines)


def translate_initial(
    sample: SampleUnit,
    refs: list[ReferencePair],
    arch_description: str,
    config: PipelineConfig,
    chat,
    embedder,
    log=None,
) -> str:
    """Retrieve exemplars, prompt once, return the candidate Java text."""
    exemplars = retrieve_top_k(sample, refs, config.k_exemplars, embedder) if refs else []
    bundle = assemble_initial_prompt(arch_description, exemplars, sample)
    response = _ask(chat, bundle.system_text, bundle.user_text, "initial", config, log)
    return extract_code_block(response.text)


def _parse_id_array(text: str):
    """JSON array of strings, or None. Tolerates prose around the array."""
    candidates = [text.strip()]
    match = re.search(r"\[[^\[\]]*\]", text, re.DOTALL)
    if match:
        candidates.append(match.group(0))
    for blob in candidates:
        try:
            data = json.loads(blob)
        except ValueError:
            continue
        if isinstance(data, list) and all(isinstance(item, str) for item in data):
            return data
    return None


_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _tokens(text: str) -> set[str]:
    return {t.lower() for t in _TOKEN_RE.findall(text)}


def token_overlap_shortlist(
    kb: list[ApiEntry],
    code: str,
    diagnostics: list[Diagnostic],
    limit: int = FALLBACK_SHORTLIST_SIZE,
) -> list[str]:
    """Deterministic grounding fallback: rank entries by shared identifier tokens."""
    query = _tokens(code)
    for d in diagnostics:
        query |= _tokens(d.message)
    scored = []
    for entry in kb:
        overlap = len(query & _tokens(f"{entry.id} {entry.signature()} {entry.description}"))
        if overlap > 0:
            scored.append((overlap, entry.id))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [entry_id for _, entry_id in scored[:limit]]


def ground_apis(
    kb: list[ApiEntry],
    code: str,
    diagnostics: list[Diagnostic],
    chat,
    config: PipelineConfig | None = None,
    log=None,
) -> Shortlist:
    """Ask the model which knowledge-base entries matter for this failure.

    The reply must be a JSON array of entry ids. One stricter re-ask is
    allowed; after that the token-overlap fallback takes over. Unknown
    ids are kept out of the shortlist but preserved for inspection.
    """
    digest = render_kb_digest(kb)
    feedback = render_diagnostics(diagnostics) if diagnostics else "(none)"
    user_text = (
        "## Available shared APIs\n\n"
        f"{digest}\n\n"
        "## Candidate Java\n\n"
        f"```java\n{code}\n```\n\n"
        "## Errors\n\n"
        f"{feedback}\n\n"
        "## Instruction\n\n"
        "Reply with a JSON array of the entry ids (strings, taken verbatim "
        "from the list above) most likely needed to fix the errors. Reply "
        "with the JSON array only."
    )
    response = _ask(chat, SYSTEM_GROUND, user_text, "grounding", config, log)
    parsed = _parse_id_array(response.text)
    if parsed is None:
        retry_text = (
            "Your previous reply could not be parsed. Reply with ONLY a JSON "
            'array of entry id strings, for example ["Type#method/1"], and '
            "nothing else.\n\n" + user_text
        )
        response = _ask(chat, SYSTEM_GROUND, retry_text, "grounding", config, log)
        parsed = _parse_id_array(response.text)
    if parsed is None:
        return Shortlist(
            entry_ids=token_overlap_shortlist(kb, code, diagnostics),
            rejected_ids=[],
            fallback_used=True,
        )
    known = {entry.id for entry in kb}
    unique = list(dict.fromkeys(parsed))
    return Shortlist(
        entry_ids=[i for i in unique if i in known],
        rejected_ids=[i for i in unique if i not in known],
        fallback_used=False,
    )


def refine_once(
    current_code: str,
    shortlist_entries: list[ApiEntry],
    diagnostics: list[Diagnostic],
    chat,
    config: PipelineConfig | None = None,
    log=None,
) -> str:
    """One feedback-driven revision of the candidate unit."""
    if shortlist_entries:
        api_blocks = []
        for entry in shortlist_entries:
            api_blocks.append(
                f"### {entry.id}\n"
                f"Signature: {entry.signature()}\n"
                f"Description: {entry.description}\n"
                f"Body:\n```java\n{entry.body}\n```"
            )
        api_part = "\n\n".join(api_blocks)
    else:
        api_part = _NO_API_CONTEXT
    feedback = render_diagnostics(diagnostics) if diagnostics else "(no diagnostics)"
    user_text = (
        "## Relevant shared APIs\n\n"
        f"{api_part}\n\n"
        "## Current Java\n\n"
        f"```java\n{current_code}\n```\n\n"
        "## Feedback\n\n"
        f"{feedback}\n\n"
        "## Instruction\n\n"
        "Revise the Java so it compiles and passes the tests. Reply with "
        "exactly one fenced ```java code block containing the complete "
        "revised compilation unit."
    )
    response = _ask(chat, SYSTEM_TRANSLATE, user_text, "refinement", config, log)
    return extract_code_block(response.text)


def _full_success(outcome: EvalOutcome) -> bool:
    return outcome.compiled and outcome.tests_passed == outcome.tests_total


def run_pipeline(
    sample: SampleUnit,
    refs: list[ReferencePair],
    kb: list[ApiEntry],
    config: PipelineConfig,
    chat,
    embedder,
    evaluator,
    arch_description: str,
    prompt_log: list | None = None,
) -> RunTrace:
    """Translate one sample end to end and return its trace.

    Control flow: evaluate the initial candidate; on failure ground the
    APIs exactly once, then refine until full success, a compiled
    candidate that fails to improve on the best (compiled, tests_passed)
    key seen so far, or the iteration cap. Provider and sandbox errors
    terminate the run but still yield a well-formed trace.
    """
    log = prompt_log if prompt_log is not None else []
    candidates: list[Candidate] = []
    shortlist = Shortlist(entry_ids=[])
    reason = None
    try:
        code = translate_initial(sample, refs, arch_description, config, chat, embedder, log)
        outcome = evaluator(sample, code)
        candidates.append(Candidate(iteration=0, source_agent="initial", java_code=code, outcome=outcome))
        if _full_success(outcome):
            reason = "success"
        else:
            if kb:
                shortlist = ground_apis(kb, code, outcome.diagnostics, chat, config, log)
            by_id = {entry.id: entry for entry in kb}
            picked = [by_id[eid] for eid in shortlist.entry_ids]
            current_code = code
            current_diags = outcome.diagnostics
            best = candidate_key(candidates[0])
            iteration = 0
            while reason is None:
                iteration += 1
                code = refine_once(current_code, picked, current_diags, chat, config, log)
                outcome = evaluator(sample, code)
                candidates.append(
                    Candidate(iteration=iteration, source_agent="refinement", java_code=code, outcome=outcome)
                )
                key = candidate_key(candidates[-1])
                if _full_success(outcome):
                    reason = "success"
                elif outcome.compiled and key <= best:
                    reason = "no_progress"
                elif iteration >= config.max_iterations:
                    reason = "iteration_cap"
                else:
                    best = max(best, key)
                    current_code = code
                    current_diags = outcome.diagnostics
    except (ProviderError, EmptyTranslation, HarnessError) as exc:
        reason = "provider_error"
        if not candidates:
            # Keep the trace well-formed even when nothing was produced.
            failure = EvalOutcome(
                structurally_valid=False,
                compiled=False,
                tests_passed=0,
                tests_total=0,
                diagnostics=[
                    Diagnostic(severity="error", message=f"pipeline aborted: {exc}", raw=str(exc))
                ],
            )
            candidates.append(
                Candidate(iteration=0, source_agent="initial", java_code="", outcome=failure)
            )
    trace = RunTrace(
        sample_id=sample.id,
        candidates=candidates,
        shortlist=list(shortlist.entry_ids),
        termination_reason=reason,
        best_index=best_candidate_index(candidates),
    )
    trace.validate()
    return trace
