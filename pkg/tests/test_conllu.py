import random
from pathlib import Path

import pytest

from zeroref.conllu import (
    ConlluParseError,
    ConlluSerializeError,
    Document,
    Entity,
    Mention,
    parse_conllu,
    serialize_conllu,
    serialize_document,
    strip_empty_nodes,
    insert_empty_nodes,
)
from helpers import entity_signature, random_document

DATA = Path(__file__).parent / "data"

SINGLE = """# newdoc id = d1
1\tJohn\tJohn\tPROPN\t_\t_\t2\tnsubj\t_\tEntity=(e1)
2\tsleeps\tsleep\tVERB\t_\t_\t0\troot\t_\t_

"""

EMPTY_MENTION = """# newdoc id = d2
1\tsaid\tsay\tVERB\t_\t_\t0\troot\t_\t_
2\tthat\tthat\tSCONJ\t_\t_\t3\tmark\t_\t_
2.1\the\t_\tPRON\t_\t_\t3\tnsubj\t_\tEntity=(e2)
3\tcomes\tcome\tVERB\t_\t_\t1\tccomp\t_\t_

"""


def test_single_token_mention():
    doc, = parse_conllu(SINGLE)
    assert len(doc.entities) == 1
    m = doc.entities[0].mentions[0]
    assert (m.start, m.end, m.head) == (0, 0, 0)


def test_empty_node_singleton():
    doc, = parse_conllu(EMPTY_MENTION)
    tok = doc.sentences[0].tokens[2]
    assert tok.id == "2.1" and tok.is_empty
    m = doc.entities[0].mentions[0]
    assert m.start == m.end == m.head == 2


def test_nested_same_token_brackets():
    # (e1(e2 on token i, e2) on token i, e1) on a later token.
    text = (
        "1\ta\t_\t_\t_\t_\t2\tdet\t_\tEntity=(e1(e2)\n"
        "2\tb\t_\t_\t_\t_\t0\troot\t_\tEntity=e1)\n\n"
    )
    doc, = parse_conllu(text)
    spans = sorted(
        (m.start, m.end) for e in doc.entities for m in e.mentions
    )
    assert spans == [(0, 0), (0, 1)]


def test_crossing_bracket_placement():
    # e1 over tokens 1-3, e2 over 2-4: brackets land on 1, 2, 3, 4.
    doc = Document(doc_id="x")
    doc.sentences.append(
        parse_conllu(
            "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n"
            "2\tb\t_\t_\t_\t_\t1\tdep\t_\t_\n"
            "3\tc\t_\t_\t_\t_\t1\tdep\t_\t_\n"
            "4\td\t_\t_\t_\t_\t1\tdep\t_\t_\n\n"
        )[0].sentences[0]
    )
    doc.entities = [
        Entity("e1", [Mention(0, 2, 0, "e1")]),
        Entity("e2", [Mention(1, 3, 1, "e2")]),
    ]
    lines = serialize_document(doc).splitlines()
    assert lines[0].endswith("Entity=(e1")
    assert lines[1].endswith("Entity=(e2")
    assert lines[2].endswith("Entity=e1)")
    assert lines[3].endswith("Entity=e2)")
    again, = parse_conllu(serialize_document(doc))
    assert entity_signature(again) == entity_signature(doc)


@pytest.mark.parametrize("name", ["nested_crossing.conllu", "enodes.conllu"])
def test_fixture_byte_roundtrip(name):
    content = (DATA / name).read_text()
    assert serialize_conllu(parse_conllu(content)) == content


def test_fixture_head_index_payload():
    docs = parse_conllu((DATA / "nested_crossing.conllu").read_text())
    king = docs[0].entities[0].mentions[0]
    assert (king.start, king.end, king.head) == (0, 4, 2)
    assert king.open_payload == "e1-person-3-x"


@pytest.mark.parametrize("seed", range(60))
def test_random_roundtrip(seed):
    rng = random.Random(seed)
    doc = random_document(rng, doc_id=f"r{seed}")
    text = serialize_document(doc)
    parsed, = parse_conllu(text)
    assert entity_signature(parsed) == entity_signature(doc)
    assert serialize_document(parsed) == text


@pytest.mark.parametrize("seed", range(40))
def test_bracket_balance(seed):
    rng = random.Random(1000 + seed)
    doc = random_document(rng, doc_id=f"b{seed}")
    per_entity: dict[str, int] = {}
    for line in serialize_document(doc).splitlines():
        if "\tEntity=" not in line and "|Entity=" not in line:
            continue
        misc = line.split("\t")[9]
        value = next(
            item[len("Entity="):]
            for item in misc.split("|") if item.startswith("Entity=")
        )
        i = 0
        while i < len(value):
            if value[i] == "(":
                j = i + 1
                while j < len(value) and value[j] not in "()":
                    j += 1
                eid = value[i + 1:j].split("-")[0]
                per_entity[eid] = per_entity.get(eid, 0) + 1
                if j < len(value) and value[j] == ")":
                    per_entity[eid] -= 1
                    j += 1
                i = j
            else:
                j = value.index(")", i)
                eid = value[i:j]
                per_entity[eid] = per_entity.get(eid, 0) - 1
                assert per_entity[eid] >= 0, "close before open"
                i = j + 1
    assert all(v == 0 for v in per_entity.values())


def test_strip_no_empty_nodes_identity():
    doc, = parse_conllu(SINGLE)
    result = strip_empty_nodes(doc)
    assert result.targets == []
    assert serialize_document(result.document) == serialize_document(doc)


def test_strip_single_target():
    doc, = parse_conllu(EMPTY_MENTION)
    result = strip_empty_nodes(doc)
    t, = result.targets
    assert (t.anchor, t.slot, t.head, t.deprel) == (2, 0, "3", "nsubj")
    assert result.document.entities == []  # the only mention was the node


def test_strip_two_nodes_same_anchor():
    text = (
        "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n"
        "1.1\tx\t_\t_\t_\t_\t1\tnsubj\t_\t_\n"
        "1.2\ty\t_\t_\t_\t_\t1\tobj\t_\t_\n\n"
    )
    doc, = parse_conllu(text)
    result = strip_empty_nodes(doc)
    assert [(t.anchor, t.slot) for t in result.targets] == [(1, 0), (1, 1)]


@pytest.mark.parametrize("seed", range(60))
def test_strip_insert_reconstructs(seed):
    rng = random.Random(2000 + seed)
    doc = random_document(rng, doc_id=f"s{seed}")
    result = strip_empty_nodes(doc)
    assert not any(t.is_empty for t in result.document.tokens())
    back = insert_empty_nodes(result.document, result.targets, result.patches)
    assert serialize_document(back) == serialize_document(doc)


def test_cross_sentence_mention_accepted():
    text = (
        "1\ta\t_\t_\t_\t_\t0\troot\t_\tEntity=(e1\n\n"
        "1\tb\t_\t_\t_\t_\t0\troot\t_\tEntity=e1)\n\n"
    )
    doc, = parse_conllu(text)
    m = doc.entities[0].mentions[0]
    assert (m.start, m.end) == (0, 1)


def test_parse_error_id_sequence():
    with pytest.raises(ConlluParseError, match="line 2"):
        parse_conllu(
            "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n"
            "3\tb\t_\t_\t_\t_\t1\tdep\t_\t_\n\n"
        )


def test_parse_error_unbalanced_names_entity():
    with pytest.raises(ConlluParseError, match="e9"):
        parse_conllu("1\ta\t_\t_\t_\t_\t0\troot\t_\tEntity=(e9\n\n")


def test_parse_error_dangling_head_index():
    with pytest.raises(ConlluParseError, match="head index"):
        parse_conllu("1\ta\t_\t_\t_\t_\t0\troot\t_\tEntity=(e1-t-4)\n\n")


def test_parse_error_column_count():
    with pytest.raises(ConlluParseError, match="10"):
        parse_conllu("1\ta\t_\t_\t_\t_\t0\troot\t_\n\n")


def test_serialize_error_empty_entity():
    doc, = parse_conllu(SINGLE)
    doc.entities.append(Entity("dead", []))
    with pytest.raises(ConlluSerializeError, match="dead"):
        serialize_document(doc)


def test_document_without_entities_has_no_entity_attr():
    doc, = parse_conllu(SINGLE)
    doc.entities = []
    assert "Entity=" not in serialize_document(doc)


def test_misc_items_preserved_around_entity():
    text = (
        "1\ta\t_\t_\t_\t_\t0\troot\t_\t"
        "SpaceAfter=No|Entity=(e1)|Foo=bar\n\n"
    )
    doc, = parse_conllu(text)
    assert serialize_conllu([doc]) == text
