import random

import pytest

from zeroref.conllu import parse_conllu, serialize_document
from zeroref.enode_scoring import (
    METRIC_ORDER,
    format_enode_table,
    score_empty_nodes,
)
from helpers import random_document


def make_pair(gold_lines, pred_lines):
    gold, = parse_conllu(gold_lines)
    pred, = parse_conllu(pred_lines)
    return gold, pred


BASE = (
    "1\tRel\t_\t_\t_\t_\t2\tnsubj\t_\t_\n"
    "2\tdela\t_\t_\t_\t_\t0\troot\t_\t_\n"
    "{nodes}"
    "3\tnodu\t_\t_\t_\t_\t2\tobj\t_\t_\n\n"
)


def test_identity_scores_100():
    text = BASE.format(nodes="2.1\tpro\t_\tPRON\t_\t_\t2\tnsubj\t_\t_\n")
    gold, = parse_conllu(text)
    stats = score_empty_nodes(gold, gold)
    for metric, value in stats.table().items():
        if value is not None:
            assert value == pytest.approx(100.0), metric


def test_wrong_deprel_fixture():
    gold, pred = make_pair(
        BASE.format(nodes="2.1\t_\t_\t_\t_\t_\t2\tnsubj\t_\t_\n"),
        BASE.format(nodes="2.1\t_\t_\t_\t_\t_\t2\tobj\t_\t_\n"),
    )
    table = score_empty_nodes(gold, pred).table()
    assert table["ARC"] == pytest.approx(100.0)
    assert table["DEP"] == pytest.approx(0.0)
    assert table["WO"] == pytest.approx(100.0)
    assert table["DEP_WO"] == pytest.approx(0.0)
    assert table["ALL"] == pytest.approx(0.0)


def test_one_of_two_recall_fixture():
    gold, pred = make_pair(
        BASE.format(nodes=(
            "2.1\t_\t_\t_\t_\t_\t2\tnsubj\t_\t_\n"
            "2.2\t_\t_\t_\t_\t_\t1\tobj\t_\t_\n"
        )),
        BASE.format(nodes="2.1\t_\t_\t_\t_\t_\t2\tnsubj\t_\t_\n"),
    )
    table = score_empty_nodes(gold, pred).table()
    assert table["ARC"] == pytest.approx(200 / 3, abs=0.01)


def test_word_order_mismatch():
    gold, pred = make_pair(
        BASE.format(nodes="2.1\t_\t_\t_\t_\t_\t2\tnsubj\t_\t_\n"),
        # Same head, inserted one word earlier.
        "1\tRel\t_\t_\t_\t_\t2\tnsubj\t_\t_\n"
        "1.1\t_\t_\t_\t_\t_\t2\tnsubj\t_\t_\n"
        "2\tdela\t_\t_\t_\t_\t0\troot\t_\t_\n"
        "3\tnodu\t_\t_\t_\t_\t2\tobj\t_\t_\n\n",
    )
    table = score_empty_nodes(gold, pred).table()
    assert table["ARC"] == pytest.approx(100.0)
    assert table["WO"] == pytest.approx(0.0)
    assert table["DEP"] == pytest.approx(100.0)
    assert table["DEP_WO"] == pytest.approx(0.0)


def test_absent_columns_are_none():
    text = BASE.format(nodes="2.1\t_\t_\t_\t_\t_\t2\tnsubj\t_\t_\n")
    gold, = parse_conllu(text)
    table = score_empty_nodes(gold, gold).table()
    for column in ("FORM", "LEMMA", "UPOS", "XPOS", "FEATS"):
        assert table[column] is None


def test_present_column_scored():
    gold, pred = make_pair(
        BASE.format(nodes="2.1\tpro\t_\tPRON\t_\t_\t2\tnsubj\t_\t_\n"),
        BASE.format(nodes="2.1\tpru\t_\tPRON\t_\t_\t2\tnsubj\t_\t_\n"),
    )
    table = score_empty_nodes(gold, pred).table()
    assert table["FORM"] == pytest.approx(0.0)
    assert table["UPOS"] == pytest.approx(100.0)
    assert table["ALL"] == pytest.approx(0.0)
    assert table["LEMMA"] is None


def test_surface_mismatch_errors():
    gold, pred = make_pair(
        BASE.format(nodes=""),
        BASE.format(nodes="").replace("nodu", "другое"),
    )
    with pytest.raises(ValueError, match="surface"):
        score_empty_nodes(gold, pred)


def _perturb(rng, doc):
    """Random prediction: drop, re-head, or relabel some gold nodes."""
    pred, = parse_conllu(serialize_document(doc))
    for sent in pred.sentences:
        kept = []
        empties = [t for t in sent.tokens if t.is_empty]
        surface = [t for t in sent.tokens if not t.is_empty]
        n = len(surface)
        for tok in sent.tokens:
            if not tok.is_empty:
                kept.append(tok)
                continue
            roll = rng.random()
            if roll < 0.25:
                continue  # miss
            if roll < 0.5 and n:
                tok.head = str(rng.randint(1, n))
            if rng.random() < 0.4:
                tok.deprel = rng.choice(["nsubj", "obj", "orphan"])
            if rng.random() < 0.4 and tok.form != "_":
                tok.form = tok.form + "x"
            kept.append(tok)
        sent.tokens = kept
    pred.entities = []
    doc.entities = []
    return pred


@pytest.mark.parametrize("seed", range(100))
def test_all_is_lower_bound(seed):
    rng = random.Random(3000 + seed)
    gold = random_document(rng, doc_id=f"p{seed}")
    gold.entities = []
    pred = _perturb(rng, gold)
    table = score_empty_nodes(gold, pred).table()
    others = [v for m, v in table.items() if m != "ALL" and v is not None]
    if table["ALL"] is not None and others:
        assert table["ALL"] <= min(others) + 1e-9


def test_table_formatting():
    text = BASE.format(nodes="2.1\t_\t_\t_\t_\t_\t2\tnsubj\t_\t_\n")
    gold, = parse_conllu(text)
    stats = score_empty_nodes(gold, gold)
    out = format_enode_table({"xa_synth": stats})
    lines = out.strip().split("\n")
    assert lines[0].split("\t") == ["treebank", *METRIC_ORDER]
    cells = lines[1].split("\t")
    assert cells[0] == "xa_synth"
    assert cells[1] == "100.00" and "---" in cells
