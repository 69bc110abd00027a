import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zeroref import _spankernel_py, spantags
from zeroref.spantags import (
    SpanTag,
    decode_tags,
    encode_spans,
    label_vocabulary,
    tag_from_id,
    tag_from_label,
    tag_to_id,
    tag_to_label,
)


def crossing_free(spans) -> bool:
    """Independent stack-compatibility oracle: no two multi-word spans
    may cross."""
    multi = [s for s in spans if s[0] < s[1]]
    for a in multi:
        for b in multi:
            if a[0] < b[0] <= a[1] < b[1]:
                return False
    return True


def random_span_set(rng: random.Random, n: int, max_spans: int = 8,
                    compatible: bool = True) -> set:
    spans = set()
    for _ in range(rng.randint(0, max_spans)):
        s = rng.randint(1, n)
        e = min(n, s + rng.randint(0, n // 2))
        candidate = spans | {(s, e)}
        if compatible and not crossing_free(candidate):
            continue
        spans.add((s, e))
    return spans


def test_empty_spans():
    tags, report = encode_spans(3, set())
    assert tags == [SpanTag()] * 3
    assert report.clean
    assert decode_tags(tags) == set()


def test_nested_example():
    tags, report = encode_spans(3, {(1, 3), (2, 2)})
    assert report.clean
    assert tags[0].pushes == 1
    assert tags[1].closes == 1
    assert tags[2].pops == 1
    assert decode_tags(tags) == {(1, 3), (2, 2)}


def test_crossing_drops_later_start():
    tags, report = encode_spans(4, {(1, 3), (2, 4)})
    assert report.dropped == [(2, 4)]
    assert decode_tags(tags) == {(1, 3)}


def test_all_two_span_sets_on_n4():
    """Brute force over every 2-span subset of n=4: encode loses exactly
    the stack-incompatible ones."""
    spans4 = [(s, e) for s in range(1, 5) for e in range(s, 5)]
    for i, a in enumerate(spans4):
        for b in spans4[i + 1:]:
            spans = {a, b}
            tags, report = encode_spans(4, spans)
            decoded = decode_tags(tags)
            if crossing_free(spans):
                assert decoded == spans and report.clean
            else:
                assert len(report.dropped) == 1
                assert decoded == spans - set(report.dropped)


def test_unmatched_push_repaired_at_end():
    tags = [SpanTag()] * 5
    tags[1] = SpanTag(pushes=1)
    assert decode_tags(tags) == {(2, 5)}


def test_unmatched_pop_ignored():
    tags = [SpanTag(pops=1), SpanTag(closes=1), SpanTag()]
    assert decode_tags(tags) == {(2, 2)}


@pytest.mark.parametrize("seed", range(50))
def test_random_roundtrip(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 40)
    spans = random_span_set(rng, n)
    tags, report = encode_spans(n, spans)
    assert report.clean
    assert decode_tags(tags) == spans


@pytest.mark.parametrize("seed", range(50))
def test_random_incompatible_best_effort(seed):
    rng = random.Random(500 + seed)
    n = rng.randint(2, 40)
    spans = random_span_set(rng, n, compatible=False)
    tags, report = encode_spans(n, spans)
    assert decode_tags(tags) == spans - set(report.dropped)
    assert crossing_free(spans - set(report.dropped))


@given(
    st.lists(
        st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 4)),
        max_size=30,
    )
)
def test_decode_total(raw):
    tags = [SpanTag(*t) for t in raw]
    decoded = decode_tags(tags)
    n = len(tags)
    assert all(1 <= s <= e <= n for s, e in decoded)


@settings(max_examples=200)
@given(st.data())
def test_hypothesis_roundtrip(data):
    n = data.draw(st.integers(1, 30))
    starts = data.draw(st.lists(st.integers(1, n), max_size=8))
    spans = set()
    for s in starts:
        e = data.draw(st.integers(s, n))
        if crossing_free(spans | {(s, e)}):
            spans.add((s, e))
    tags, report = encode_spans(n, spans)
    assert report.clean
    assert decode_tags(tags) == spans


def test_out_of_range_span():
    with pytest.raises(ValueError):
        encode_spans(3, {(0, 2)})
    with pytest.raises(ValueError):
        encode_spans(3, {(2, 4)})


def test_cap_clamps_and_reports():
    spans = {(1, i) for i in range(2, 9)}  # 7 spans opening at word 1
    tags, report = encode_spans(10, spans, cap=4)
    assert tags[0].pushes == 4
    assert report.clamped > 0


def test_label_vocabulary_bijection():
    labels = label_vocabulary()
    assert len(labels) == 125 and len(set(labels)) == 125
    assert labels[0] == "O"
    for i, label in enumerate(labels):
        tag = tag_from_id(i)
        assert tag_to_id(tag) == i
        assert tag_to_label(tag) == label
        assert tag_from_label(label) == tag


def test_kernels_agree():
    if not spantags.COMPILED:
        pytest.skip("compiled kernel unavailable")
    from zeroref import _spankernel
    rng = random.Random(7)
    for _ in range(200):
        n = rng.randint(1, 30)
        spans = sorted(random_span_set(rng, n, compatible=False))
        starts = [s for s, _ in spans]
        ends = [e for _, e in spans]
        assert _spankernel.encode_counts(n, starts, ends) == \
            _spankernel_py.encode_counts(n, starts, ends)
        pops = [rng.randint(0, 2) for _ in range(n + 1)]
        closes = [rng.randint(0, 2) for _ in range(n + 1)]
        pushes = [rng.randint(0, 2) for _ in range(n + 1)]
        assert _spankernel.decode_pairs(pops, closes, pushes) == \
            _spankernel_py.decode_pairs(pops, closes, pushes)
