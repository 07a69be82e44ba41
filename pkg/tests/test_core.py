"""Domain types, validation, and the line-delimited record format."""

import pytest
from hypothesis import given, strategies as st

from srl_rewriter.core import (
    BOS_TOKEN,
    EOS_TOKEN,
    PAD_TOKEN,
    DialogueSession,
    PATriple,
    RewriteExample,
    RewriterError,
    SemanticRole,
    Span,
    Speaker,
    Utterance,
    example_from_record,
    example_to_record,
    read_examples,
    validate_example,
    write_examples,
)


def make_session(*token_lists, speakers=None):
    speakers = speakers or [Speaker.A if i % 2 == 0 else Speaker.B for i in range(len(token_lists))]
    return DialogueSession(
        tuple(
            Utterance(tokens=tuple(toks), speaker=spk, turn_index=i)
            for i, (toks, spk) in enumerate(zip(token_lists, speakers))
        )
    )


@pytest.fixture
def session():
    return make_session(["你", "好"], ["吃", "饭", "吗"], ["不", "吃"])


def test_target_is_last_utterance(session):
    assert session.target.tokens == ("不", "吃")
    assert session.target_speaker is Speaker.A
    assert len(session) == 3


def test_span_slice(session):
    assert Span(1, 0, 2).slice(session) == ("吃", "饭")


def test_span_ordering_is_positional():
    assert Span(0, 1, 2) < Span(1, 0, 1) < Span(1, 2, 3)


def test_validate_clean_example(session):
    ex = RewriteExample(
        session=session,
        triples=(PATriple(Span(2, 0, 2), SemanticRole.ARG0, Span(1, 0, 1)),),
        reference=("我", "不", "吃", "饭"),
    )
    assert validate_example(ex).ok


def test_validate_flags_each_violation(session):
    ex = RewriteExample(
        session=session,
        triples=(
            PATriple(Span(1, 0, 1), SemanticRole.ARG0, Span(2, 0, 1)),  # future argument
            PATriple(Span(5, 0, 1), SemanticRole.ARG1, Span(0, 0, 9)),  # both spans bad
        ),
        reference=None,
    )
    codes = validate_example(ex).codes()
    assert "FUTURE_ARGUMENT" in codes
    assert codes.count("SPAN_OUT_OF_RANGE") == 2
    assert "MISSING_REFERENCE" in codes


def test_validate_reference_optional_for_inference(session):
    ex = RewriteExample(session=session, reference=None)
    assert not validate_example(ex).ok
    assert validate_example(ex, require_reference=False).ok


def test_validate_rejects_structural_tokens(session):
    for bad in (PAD_TOKEN, EOS_TOKEN, BOS_TOKEN):
        ex = RewriteExample(
            session=make_session(["好", bad]), reference=("好",)
        )
        assert "RESERVED_TOKEN" in validate_example(ex).codes()


def test_validate_empty_session_and_utterance():
    empty = RewriteExample(session=DialogueSession(()), reference=("x",))
    assert validate_example(empty).codes() == ("EMPTY_SESSION",)
    blank = RewriteExample(session=make_session([]), reference=("x",))
    assert "EMPTY_UTTERANCE" in validate_example(blank).codes()


def test_validate_turn_index_rules():
    utts = (
        Utterance(("a",), Speaker.A, 0),
        Utterance(("b",), Speaker.B, 0),
    )
    ex = RewriteExample(session=DialogueSession(utts), reference=("a",))
    codes = validate_example(ex).codes()
    assert "TURN_INDEX_ORDER" in codes
    assert "DUPLICATE_TURN_INDEX" in codes


def test_record_round_trip(session):
    ex = RewriteExample(
        session=session,
        triples=(PATriple(Span(2, 0, 2), SemanticRole.AM_NEG, Span(2, 0, 1)),),
        reference=("我", "不", "吃"),
    )
    assert example_from_record(example_to_record(ex)) == ex


def test_record_hypothesis_field(session):
    ex = RewriteExample(session=session, reference=("吃",))
    record = example_to_record(ex, hypothesis=["不", "吃"])
    assert record["hypothesis"] == ["不", "吃"]
    # hypothesis is output-only metadata and does not round-trip into the type
    assert example_from_record(record) == ex


def test_bad_record_raises_coded_error():
    with pytest.raises(RewriterError) as err:
        example_from_record({"utterances": [{"speaker": "Q", "tokens": ["x"]}]})
    assert err.value.code == "BAD_RECORD"


def test_file_round_trip(tmp_path, session):
    ex = RewriteExample(session=session, reference=("吃", "饭"))
    path = str(tmp_path / "corpus.jsonl")
    write_examples(path, [ex, ex])
    assert read_examples(path) == [ex, ex]


token_strategy = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Lo")), min_size=1, max_size=4
)


@given(
    st.lists(
        st.lists(token_strategy, min_size=1, max_size=5), min_size=1, max_size=4
    ),
    st.lists(token_strategy, min_size=1, max_size=6),
)
def test_record_round_trip_property(token_lists, reference):
    ex = RewriteExample(session=make_session(*token_lists), reference=tuple(reference))
    assert example_from_record(example_to_record(ex)) == ex
