import random

import pytest

from zeroref.conllu import Document, Entity, Mention, Sentence, Token
from zeroref.coref_scoring import (
    align_mentions,
    report_table,
    score,
    score_documents,
)
from oracles import brute_b3, brute_ceafe, brute_muc


def doc_with(doc_id, n_tokens, clusters):
    """clusters: list of list of (start, end) or (start, end, head)."""
    doc = Document(doc_id=doc_id)
    doc.sentences.append(Sentence(
        comments=[f"# newdoc id = {doc_id}"],
        tokens=[Token(id=str(i + 1), form=f"w{i + 1}", head="0", deprel="root")
                for i in range(n_tokens)],
    ))
    for k, cluster in enumerate(clusters):
        mentions = []
        for span in cluster:
            s, e = span[0], span[1]
            head = span[2] if len(span) > 2 else s
            mentions.append(Mention(start=s, end=e, head=head, entity_id=f"e{k + 1}"))
        mentions.sort(key=Mention.sort_key)
        doc.entities.append(Entity(id=f"e{k + 1}", mentions=mentions))
    return doc


def random_cluster_doc(rng, doc_id):
    """Random unique single-token mentions, randomly clustered."""
    n = rng.randint(1, 6)
    positions = rng.sample(range(10), n)
    clusters = []
    for pos in positions:
        if clusters and rng.random() < 0.5:
            rng.choice(clusters).append((pos, pos))
        else:
            clusters.append([(pos, pos)])
    return doc_with(doc_id, 10, clusters)


# --- alignment --------------------------------------------------------------


def test_align_identity():
    doc = doc_with("d", 6, [[(0, 2), (4, 4)]])
    mentions = doc.all_mentions()
    matching = align_mentions(mentions, mentions, "exact")
    assert matching == {0: 0, 1: 1}


def test_align_head_mode():
    gold = [Mention(start=0, end=4, head=2, entity_id="g")]
    pred = [Mention(start=2, end=2, head=2, entity_id="p")]
    assert align_mentions(gold, pred, "head") == {0: 0}
    assert align_mentions(gold, pred, "exact") == {}


def test_align_two_golds_one_pred():
    gold = [Mention(start=0, end=4, head=2, entity_id="a"),
            Mention(start=2, end=3, head=2, entity_id="b")]
    pred = [Mention(start=2, end=2, head=2, entity_id="p")]
    matching = align_mentions(gold, pred, "head")
    assert len(matching) == 1


def test_align_partial_mode():
    gold = [Mention(start=1, end=5, head=3, entity_id="g")]
    inside = [Mention(start=2, end=4, head=3, entity_id="p")]
    outside = [Mention(start=2, end=6, head=3, entity_id="p")]
    missing_head = [Mention(start=1, end=2, head=1, entity_id="p")]
    assert align_mentions(gold, inside, "partial") == {0: 0}
    assert align_mentions(gold, outside, "partial") == {}
    assert align_mentions(gold, missing_head, "partial") == {}


def test_align_max_cardinality_reroutes_exact_seed():
    # g1 is exact-equal to p1, but max cardinality needs g1-p2, g2-p1.
    gold = [Mention(start=0, end=1, head=0, entity_id="g1"),
            Mention(start=0, end=3, head=0, entity_id="g2")]
    pred = [Mention(start=0, end=1, head=0, entity_id="p1"),
            Mention(start=0, end=2, head=0, entity_id="p2")]
    matching = align_mentions(gold, pred, "head")
    assert len(matching) == 2


# --- worked fixture ----------------------------------------------------------


def test_two_singletons_fixture():
    """Gold {m1, m2}; prediction splits it into two singletons."""
    gold = doc_with("d", 4, [[(0, 0), (2, 2)]])
    pred = doc_with("d", 4, [[(0, 0)], [(2, 2)]])
    report = score_documents(gold, pred, mode="exact", with_singletons=True)
    assert report.muc.f1 == 0.0
    assert report.b_cubed.precision == pytest.approx(100.0)
    assert report.b_cubed.recall == pytest.approx(50.0)
    assert report.b_cubed.f1 == pytest.approx(200 / 3, abs=0.01)
    # Entity CEAF under the standard formulas: the single best-aligned
    # pair scores phi4 = 2/3, giving P = 1/3, R = 2/3, F1 = 4/9.
    assert report.ceaf_e.f1 == pytest.approx(400 / 9, abs=0.01)
    oracle = brute_ceafe([{1, 2}], [{1}, {2}])
    assert report.ceaf_e.f1 == pytest.approx(oracle[2], abs=1e-9)


def test_two_singletons_without_singletons():
    gold = doc_with("d", 4, [[(0, 0), (2, 2)]])
    pred = doc_with("d", 4, [[(0, 0)], [(2, 2)]])
    report = score_documents(gold, pred, mode="exact", with_singletons=False)
    assert report.muc.f1 == 0.0
    assert report.b_cubed.f1 == 0.0
    assert report.ceaf_e.f1 == 0.0
    assert report.conll == 0.0


# --- identities and invariances ----------------------------------------------


@pytest.mark.parametrize("mode", ["exact", "head", "partial"])
@pytest.mark.parametrize("with_singletons", [True, False])
def test_perfect_prediction_scores_100(mode, with_singletons):
    doc = doc_with("d", 8, [[(0, 1), (3, 3), (5, 7)], [(2, 2), (4, 4)]])
    report = score_documents(doc, doc, mode, with_singletons)
    assert report.muc.f1 == pytest.approx(100.0)
    assert report.b_cubed.f1 == pytest.approx(100.0)
    assert report.ceaf_e.f1 == pytest.approx(100.0)
    assert report.conll == pytest.approx(100.0)


def test_entity_permutation_invariance():
    gold = doc_with("d", 8, [[(0, 0), (2, 2)], [(4, 4), (6, 6)]])
    pred1 = doc_with("d", 8, [[(0, 0), (2, 2)], [(4, 4)], [(6, 6)]])
    pred2 = doc_with("d", 8, [[(6, 6)], [(0, 0), (2, 2)], [(4, 4)]])
    r1 = score_documents(gold, pred1, "exact", True)
    r2 = score_documents(gold, pred2, "exact", True)
    assert r1.as_dict() == r2.as_dict()


def test_added_correct_mention_never_lowers_b3_recall():
    gold = doc_with("d", 8, [[(0, 0), (2, 2), (4, 4)]])
    partial = doc_with("d", 8, [[(0, 0), (2, 2)]])
    better = doc_with("d", 8, [[(0, 0), (2, 2), (4, 4)]])
    r_partial = score_documents(gold, partial, "exact", True)
    r_better = score_documents(gold, better, "exact", True)
    assert r_better.b_cubed.recall >= r_partial.b_cubed.recall


def test_document_id_mismatch_errors():
    a = doc_with("a", 4, [[(0, 0), (1, 1)]])
    b = doc_with("b", 4, [[(0, 0), (1, 1)]])
    with pytest.raises(ValueError, match="mismatch"):
        score([a], [b])


# --- brute-force equivalence --------------------------------------------------


@pytest.mark.parametrize("seed", range(200))
def test_metrics_match_brute_force(seed):
    rng = random.Random(seed)
    gold = random_cluster_doc(rng, "d")
    pred = random_cluster_doc(rng, "d")
    report = score_documents(gold, pred, mode="exact", with_singletons=True)

    def keyed(doc):
        return [
            {(m.start, m.end) for m in e.mentions} for e in doc.entities
        ]

    gold_sets, pred_sets = keyed(gold), keyed(pred)
    for prf, brute in ((report.muc, brute_muc), (report.b_cubed, brute_b3),
                       (report.ceaf_e, brute_ceafe)):
        p, r, f1 = brute(gold_sets, pred_sets)
        assert prf.precision == pytest.approx(p, abs=1e-9)
        assert prf.recall == pytest.approx(r, abs=1e-9)
        assert prf.f1 == pytest.approx(f1, abs=1e-9)


# --- reporting -----------------------------------------------------------------


def test_report_table_average_and_rounding():
    doc = doc_with("d", 4, [[(0, 0), (2, 2)]])
    full = score_documents(doc, doc, "exact", True)
    reports = {"aa": full, "bb": full}
    table = report_table(reports)
    header, row = table.strip().split("\n")
    assert header.split("\t") == ["Avg", "aa", "bb"]
    assert row.split("\t") == ["100.0", "100.0", "100.0"]


def test_report_table_one_decimal():
    gold = doc_with("d", 4, [[(0, 0), (2, 2)]])
    pred = doc_with("d", 4, [[(0, 0)], [(2, 2)]])
    report = score_documents(gold, pred, "exact", True)
    table = report_table({"xx": report})
    value = table.strip().split("\n")[1].split("\t")[1]
    assert len(value.split(".")[1]) == 1
