import warnings

import pytest

from zeroref.conllu import Document, Sentence, Token, parse_conllu
from zeroref.segments import Segment, build_segments, window_positions
from zeroref.tokenizers import HashTokenizer, tokenizer_from_config


def make_doc(word_counts_per_sentence, subwords_per_word=1):
    """Each word is `subwords_per_word` characters; with piece_len=1 the
    tokenizer yields exactly that many subwords per word."""
    doc = Document(doc_id="seg")
    for si, count in enumerate(word_counts_per_sentence):
        tokens = [
            Token(id=str(i + 1), form="a" * subwords_per_word, head="0",
                  deprel="root")
            for i in range(count)
        ]
        doc.sentences.append(Sentence(comments=[f"# sent_id = s{si}"],
                                      tokens=tokens))
    return doc


TOK = HashTokenizer(vocab_size=64, piece_len=1)


def test_tokenizer_roundtrip_determinism():
    a = TOK.encode_words(["mira", "relo"])
    b = TOK.encode_words(["mira", "relo"])
    assert a == b
    assert a[1] == [True, False, False, False, True, False, False, False]
    rebuilt = tokenizer_from_config(TOK.config())
    assert rebuilt.encode_words(["mira"]) == TOK.encode_words(["mira"])


def test_single_short_sentence():
    doc = make_doc([10])
    seg, = build_segments(doc, TOK, max_len=512)
    assert len(seg) == 10
    assert seg.current_range == (0, 9)


def test_left_context_fills_remaining_budget():
    # Three sentences of 200 subwords; predicting the third: no lookahead
    # available, 312 trailing subwords of sentences 1-2 fill the budget.
    doc = make_doc([50, 50, 50], subwords_per_word=4)
    segs = build_segments(doc, TOK, max_len=512)
    third = segs[2]
    assert len(third) == 512
    assert third.current_range == (312, 511)


def test_allocation_order_current_lookahead_left():
    # A(100) B(100) C(100), max 512, predicting B: B + 50 lookahead + 100 left.
    doc = make_doc([25, 25, 25], subwords_per_word=4)
    segs = build_segments(doc, TOK, max_len=512)
    middle = segs[1]
    assert len(middle) == 250
    assert middle.current_range == (100, 199)


def test_lookahead_cap_is_respected():
    doc = make_doc([10, 300], subwords_per_word=1)
    seg = build_segments(doc, TOK, max_len=512)[0]
    after_current = len(seg) - (seg.current_range[1] + 1)
    assert after_current == 50


def test_lookahead_zero():
    doc = make_doc([10, 300])
    seg = build_segments(doc, TOK, max_len=512, lookahead=0)[0]
    assert len(seg) == 10


def test_empty_document():
    assert build_segments(Document(doc_id="e"), TOK, max_len=512) == []


def test_overlong_sentence_truncated_with_warning():
    doc = make_doc([600])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        seg, = build_segments(doc, TOK, max_len=512)
    assert len(seg) == 512
    assert any("truncated" in str(w.message) for w in caught)


def test_window_positions_roundtrip_on_fixture():
    from pathlib import Path
    content = (Path(__file__).parent / "data" / "nested_crossing.conllu").read_text()
    for doc in parse_conllu(content):
        for seg in build_segments(doc, HashTokenizer(128, 3), max_len=64):
            mapping = window_positions(seg)
            inverse = seg.position_to_subword()
            assert len(mapping) == len(inverse)  # injective
            for sub, pos in mapping.items():
                assert inverse[pos] == sub
            # every current-sentence token appears exactly once
            current = seg.current_word_positions()
            assert len(current) == len(set(current))
            offsets = doc.token_offsets()
            expected = list(range(
                offsets[seg.sentence_index],
                offsets[seg.sentence_index]
                + len(doc.sentences[seg.sentence_index].tokens),
            ))
            assert current == expected


def test_train_window_is_suffix_of_inference_window():
    doc = make_doc([80, 80, 80, 80], subwords_per_word=4)
    small = build_segments(doc, TOK, max_len=512)
    large = build_segments(doc, TOK, max_len=2560)
    for s, l in zip(small, large):
        assert len(s) <= 512 and len(l) <= 2560
        assert l.subword_ids[-len(s):] == s.subword_ids
        # same sentence, same right edge: current ranges align at the end
        s_tail = len(s) - s.current_range[1]
        l_tail = len(l) - l.current_range[1]
        assert s_tail == l_tail


def test_short_document_windows_identical():
    doc = make_doc([30, 30])
    small = build_segments(doc, TOK, max_len=512)
    large = build_segments(doc, TOK, max_len=2560)
    for s, l in zip(small, large):
        assert s.subword_ids == l.subword_ids
        assert s.current_range == l.current_range


def test_zero_subword_token_rejected():
    class BrokenTokenizer(HashTokenizer):
        def word_pieces(self, word):
            return []

    doc = make_doc([3])
    with pytest.raises(ValueError, match="no subwords"):
        build_segments(doc, BrokenTokenizer(64, 1), max_len=32)
