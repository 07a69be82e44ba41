"""Core domain types: dialogue sessions, predicate-argument triples, rewrite examples.

All types are immutable after construction and safe to share across workers.
The line-delimited record format used by every CLI command lives here too.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional

PAD_TOKEN = "[PAD]"
EOS_TOKEN = "[EOS]"
BOS_TOKEN = "[BOS]"
UNK_TOKEN = "[UNK]"

RESERVED_TOKENS = (PAD_TOKEN, EOS_TOKEN, BOS_TOKEN, UNK_TOKEN)


class RewriterError(Exception):
    """Operational failure with a machine-readable code (bad input, bad config)."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class Speaker(Enum):
    A = "A"
    B = "B"


class SemanticRole(Enum):
    ARG0 = "ARG0"
    ARG1 = "ARG1"
    ARG2 = "ARG2"
    ARG3 = "ARG3"
    ARG4 = "ARG4"
    AM_TMP = "AM-TMP"
    AM_LOC = "AM-LOC"
    AM_PRP = "AM-PRP"
    AM_NEG = "AM-NEG"


@dataclass(frozen=True)
class Utterance:
    tokens: tuple[str, ...]
    speaker: Speaker
    turn_index: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))


@dataclass(frozen=True)
class DialogueSession:
    """Ordered utterances; the last one is the rewrite target."""

    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def target(self) -> Utterance:
        return self.utterances[-1]

    @property
    def target_speaker(self) -> Speaker:
        return self.utterances[-1].speaker


@dataclass(frozen=True, order=True)
class Span:
    """Token-offset span into one utterance of a session; end is exclusive."""

    turn_index: int
    start: int
    end: int

    def slice(self, session: DialogueSession) -> tuple[str, ...]:
        return session.utterances[self.turn_index].tokens[self.start : self.end]


@dataclass(frozen=True)
class PATriple:
    predicate: Span
    role: SemanticRole
    argument: Span


@dataclass(frozen=True)
class RewriteExample:
    session: DialogueSession
    triples: tuple[PATriple, ...] = ()
    reference: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "triples", tuple(self.triples))
        if self.reference is not None:
            object.__setattr__(self, "reference", tuple(self.reference))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    triple_index: Optional[int] = None


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> tuple[str, ...]:
        return tuple(v.code for v in self.violations)


def _check_span(span: Span, session: DialogueSession, what: str, idx: int) -> list[Violation]:
    out = []
    if not 0 <= span.turn_index < len(session):
        out.append(
            Violation(
                "SPAN_OUT_OF_RANGE",
                f"triple {idx}: {what} turn {span.turn_index} outside session of {len(session)} turns",
                idx,
            )
        )
        return out
    n = len(session.utterances[span.turn_index].tokens)
    if not (0 <= span.start < span.end <= n):
        out.append(
            Violation(
                "SPAN_OUT_OF_RANGE",
                f"triple {idx}: {what} span [{span.start},{span.end}) outside utterance of {n} tokens",
                idx,
            )
        )
    return out


def validate_example(example: RewriteExample, require_reference: bool = True) -> ValidationResult:
    """Check every invariant; violations are data, never exceptions.

    ``require_reference=False`` relaxes the non-empty reference rule for
    inference-time inputs.
    """
    violations: list[Violation] = []
    session = example.session
    if len(session) < 1:
        violations.append(Violation("EMPTY_SESSION", "session has no utterances"))
        return ValidationResult(tuple(violations))
    seen_turns = set()
    for pos, utt in enumerate(session.utterances):
        if not utt.tokens:
            violations.append(Violation("EMPTY_UTTERANCE", f"utterance {pos} has no tokens"))
        for tok in utt.tokens:
            if tok in (PAD_TOKEN, EOS_TOKEN, BOS_TOKEN):
                violations.append(
                    Violation("RESERVED_TOKEN", f"utterance {pos} contains reserved token {tok}")
                )
                break
        if utt.turn_index != pos:
            violations.append(
                Violation(
                    "TURN_INDEX_ORDER",
                    f"utterance at position {pos} carries turn_index {utt.turn_index}",
                )
            )
        if utt.turn_index in seen_turns:
            violations.append(
                Violation("DUPLICATE_TURN_INDEX", f"turn_index {utt.turn_index} repeated")
            )
        seen_turns.add(utt.turn_index)
    for idx, triple in enumerate(example.triples):
        violations.extend(_check_span(triple.predicate, session, "predicate", idx))
        violations.extend(_check_span(triple.argument, session, "argument", idx))
        if triple.argument.turn_index > triple.predicate.turn_index:
            violations.append(
                Violation(
                    "FUTURE_ARGUMENT",
                    f"triple {idx}: argument turn {triple.argument.turn_index} after "
                    f"predicate turn {triple.predicate.turn_index}",
                    idx,
                )
            )
    if require_reference:
        if example.reference is None:
            violations.append(Violation("MISSING_REFERENCE", "example carries no reference"))
        elif not example.reference:
            violations.append(Violation("EMPTY_REFERENCE", "reference token list is empty"))
    else:
        if example.reference is not None and not example.reference:
            violations.append(Violation("EMPTY_REFERENCE", "reference token list is empty"))
    for tok in example.reference or ():
        if tok in (PAD_TOKEN, EOS_TOKEN, BOS_TOKEN):
            violations.append(Violation("RESERVED_TOKEN", f"reference contains {tok}"))
            break
    return ValidationResult(tuple(violations))


# ---------------------------------------------------------------------------
# Line-delimited record format (one JSON object per line):
#   {"utterances": [{"speaker": "A", "tokens": [...]}, ...],
#    "triples": [{"predicate": {"turn": t, "start": s, "end": e},
#                 "role": "ARG0",
#                 "argument": {"turn": t, "start": s, "end": e}}, ...],
#    "reference": [...]}
# "triples" and "reference" may be absent.  Rewrite outputs add "hypothesis".
# ---------------------------------------------------------------------------


def _span_to_obj(span: Span) -> dict:
    return {"turn": span.turn_index, "start": span.start, "end": span.end}


def _span_from_obj(obj: dict) -> Span:
    return Span(turn_index=int(obj["turn"]), start=int(obj["start"]), end=int(obj["end"]))


def example_to_record(example: RewriteExample, hypothesis: Optional[Iterable[str]] = None) -> dict:
    record: dict = {
        "utterances": [
            {"speaker": u.speaker.value, "tokens": list(u.tokens)} for u in example.session.utterances
        ]
    }
    if example.triples:
        record["triples"] = [
            {
                "predicate": _span_to_obj(t.predicate),
                "role": t.role.value,
                "argument": _span_to_obj(t.argument),
            }
            for t in example.triples
        ]
    if example.reference is not None:
        record["reference"] = list(example.reference)
    if hypothesis is not None:
        record["hypothesis"] = list(hypothesis)
    return record


def example_from_record(record: dict) -> RewriteExample:
    try:
        utterances = tuple(
            Utterance(tokens=tuple(u["tokens"]), speaker=Speaker(u["speaker"]), turn_index=i)
            for i, u in enumerate(record["utterances"])
        )
        triples = tuple(
            PATriple(
                predicate=_span_from_obj(t["predicate"]),
                role=SemanticRole(t["role"]),
                argument=_span_from_obj(t["argument"]),
            )
            for t in record.get("triples", [])
        )
        reference = record.get("reference")
    except (KeyError, ValueError, TypeError) as exc:
        raise RewriterError("BAD_RECORD", f"undecodable record: {exc}") from exc
    return RewriteExample(
        session=DialogueSession(utterances),
        triples=triples,
        reference=tuple(reference) if reference is not None else None,
    )


def read_records(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise RewriterError("BAD_RECORD", f"{path}:{lineno}: {exc}") from exc
    return records


def read_examples(path: str) -> list[RewriteExample]:
    return [example_from_record(r) for r in read_records(path)]


def write_records(path: str, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def write_examples(path: str, examples: Iterable[RewriteExample]) -> None:
    write_records(path, (example_to_record(e) for e in examples))


def iter_examples(records: Iterable[dict]) -> Iterator[RewriteExample]:
    for record in records:
        yield example_from_record(record)
