"""Sequence builder: turns (triples, context, rewrite) into one packed
self-attention input with segment ids, per-region position ids, and region tags.

Layout is [linearized triples][context utterances + EOS each][BOS rewrite EOS].
Triple boundaries carry no separator token; region tags hold the structure and
the attention mask enforces it.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Optional, Sequence

from .core import (
    BOS_TOKEN,
    EOS_TOKEN,
    PAD_TOKEN,
    UNK_TOKEN,
    DialogueSession,
    PATriple,
    RewriteExample,
    RewriterError,
    SemanticRole,
    Speaker,
)

# Role markers sit between predicate and argument tokens so each triple is
# self-delimiting.  They are permanent vocabulary entries right after the
# four structural tokens.
ROLE_TOKENS = {role: f"<{role.value}>" for role in SemanticRole}

PAD_ID, EOS_ID, BOS_ID, UNK_ID = 0, 1, 2, 3


class SegmentType(IntEnum):
    E_A = 0  # rewrite + context turns by the rewriting speaker
    E_B = 1  # context turns by the other speaker
    E_SRL = 2  # linearized triple tokens


class RegionKind(Enum):
    TRIPLE = "triple"
    CONTEXT = "context"
    REWRITE = "rewrite"


@dataclass(frozen=True)
class RegionTag:
    kind: RegionKind
    index: int  # triple ordinal / utterance turn / 0 for the rewrite


class Vocabulary:
    """Token/id bijection with fixed structural ids and role markers first."""

    def __init__(self, tokens: Iterable[str]):
        self._tokens: list[str] = [PAD_TOKEN, EOS_TOKEN, BOS_TOKEN, UNK_TOKEN]
        self._tokens.extend(ROLE_TOKENS[role] for role in SemanticRole)
        seen = set(self._tokens)
        for tok in tokens:
            if tok not in seen:
                seen.add(tok)
                self._tokens.append(tok)
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        return self._tokens[token_id]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self._ids.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._tokens[i] for i in ids]

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self._tokens:
                fh.write(tok + "\n")

    @staticmethod
    def load(path: str) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        expected = [PAD_TOKEN, EOS_TOKEN, BOS_TOKEN, UNK_TOKEN]
        if tokens[: len(expected)] != expected:
            raise RewriterError("VOCAB_OVERFLOW", f"{path} lacks the reserved token prefix")
        return Vocabulary(tokens[len(expected) + len(ROLE_TOKENS) :])


def build_vocabulary(examples: Iterable[RewriteExample]) -> Vocabulary:
    """Corpus vocabulary with a deterministic (sorted) token order."""
    tokens = set()
    for example in examples:
        for utt in example.session.utterances:
            tokens.update(utt.tokens)
        tokens.update(example.reference or ())
    return Vocabulary(sorted(tokens))


@dataclass(frozen=True)
class PackedSequence:
    token_ids: tuple[int, ...]
    segment_ids: tuple[SegmentType, ...]
    position_ids: tuple[int, ...]
    region_tags: tuple[RegionTag, ...]
    len_z: int
    len_c: int
    len_r: int

    def __post_init__(self):
        n = len(self.token_ids)
        if not (len(self.segment_ids) == len(self.position_ids) == len(self.region_tags) == n):
            raise RewriterError("SHAPE_MISMATCH", "packed parallel lists differ in length")
        if self.len_z + self.len_c + self.len_r != n:
            raise RewriterError("SHAPE_MISMATCH", "region lengths do not add up")

    def __len__(self) -> int:
        return len(self.token_ids)


def linearize_triples(
    triples: Sequence[PATriple], session: DialogueSession, rng_seed: int
) -> list[tuple[str, int]]:
    """Render triples as predicate ++ role marker ++ argument token runs.

    Triple order is a seeded uniform permutation; each token is tagged with the
    ordinal of its triple in the emitted sequence.
    """
    order = list(range(len(triples)))
    random.Random(rng_seed).shuffle(order)
    out: list[tuple[str, int]] = []
    for emitted_idx, source_idx in enumerate(order):
        triple = triples[source_idx]
        tokens = (
            list(triple.predicate.slice(session))
            + [ROLE_TOKENS[triple.role]]
            + list(triple.argument.slice(session))
        )
        out.extend((tok, emitted_idx) for tok in tokens)
    return out


def assign_segments(region_tags: Sequence[RegionTag], session: DialogueSession) -> list[SegmentType]:
    """Segment per token: E_SRL over triples, E_A/E_B over context by speaker
    parity with the rewriting speaker, E_A over the whole rewrite region."""
    target_speaker = session.target_speaker
    segments = []
    for tag in region_tags:
        if tag.kind is RegionKind.TRIPLE:
            segments.append(SegmentType.E_SRL)
        elif tag.kind is RegionKind.CONTEXT:
            speaker = session.utterances[tag.index].speaker
            segments.append(SegmentType.E_A if speaker is target_speaker else SegmentType.E_B)
        else:
            segments.append(SegmentType.E_A)
    return segments


def assign_positions(region_tags: Sequence[RegionTag]) -> list[int]:
    """Positions restart at 0 inside every triple, every context utterance
    (its EOS included), and at the rewrite BOS."""
    positions = []
    prev: Optional[RegionTag] = None
    counter = 0
    for tag in region_tags:
        if tag != prev:
            counter = 0
            prev = tag
        positions.append(counter)
        counter += 1
    return positions


def pack(
    example: RewriteExample,
    triples: Sequence[PATriple],
    vocab: Vocabulary,
    seed: int,
    include_reference: bool = True,
    max_length: Optional[int] = None,
) -> PackedSequence:
    """Build the full training/decoding instance.

    Deterministic given (example, triples, vocab, seed).  Inputs longer than
    ``max_length`` are rejected, not clipped.
    """
    if EOS_TOKEN not in vocab or BOS_TOKEN not in vocab:
        raise RewriterError("VOCAB_OVERFLOW", "vocabulary lacks reserved tokens")
    session = example.session
    tokens: list[str] = []
    tags: list[RegionTag] = []

    for tok, triple_idx in linearize_triples(triples, session, seed):
        tokens.append(tok)
        tags.append(RegionTag(RegionKind.TRIPLE, triple_idx))
    len_z = len(tokens)

    for utt in session.utterances:
        for tok in utt.tokens:
            tokens.append(tok)
            tags.append(RegionTag(RegionKind.CONTEXT, utt.turn_index))
        tokens.append(EOS_TOKEN)
        tags.append(RegionTag(RegionKind.CONTEXT, utt.turn_index))
    len_c = len(tokens) - len_z

    len_r = 0
    if include_reference:
        if example.reference is None:
            raise RewriterError("NO_REFERENCE", "cannot pack a reference-less example for training")
        rewrite = [BOS_TOKEN, *example.reference, EOS_TOKEN]
        tokens.extend(rewrite)
        tags.extend(RegionTag(RegionKind.REWRITE, 0) for _ in rewrite)
        len_r = len(rewrite)

    if max_length is not None and len(tokens) > max_length:
        raise RewriterError(
            "TOO_LONG", f"packed length {len(tokens)} exceeds configured maximum {max_length}"
        )
    return PackedSequence(
        token_ids=tuple(vocab.encode(tokens)),
        segment_ids=tuple(assign_segments(tags, session)),
        position_ids=tuple(assign_positions(tags)),
        region_tags=tuple(tags),
        len_z=len_z,
        len_c=len_c,
        len_r=len_r,
    )


def append_rewrite_token(packed: PackedSequence, token_id: int) -> PackedSequence:
    """Extend the rewrite region by one emitted token (incremental decoding)."""
    tag = RegionTag(RegionKind.REWRITE, 0)
    return PackedSequence(
        token_ids=packed.token_ids + (token_id,),
        segment_ids=packed.segment_ids + (SegmentType.E_A,),
        position_ids=packed.position_ids + (packed.len_r,),
        region_tags=packed.region_tags + (tag,),
        len_z=packed.len_z,
        len_c=packed.len_c,
        len_r=packed.len_r + 1,
    )


def start_decode(packed_zc: PackedSequence) -> PackedSequence:
    """Seed the rewrite region of a context-only pack with BOS."""
    if packed_zc.len_r != 0:
        raise RewriterError("SHAPE_MISMATCH", "decode prefix already has a rewrite region")
    return append_rewrite_token(packed_zc, BOS_ID)
