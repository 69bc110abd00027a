"""Intrinsic empty-node metrics.

Gold and predicted nodes are matched per sentence among nodes sharing a
dependency head: first pairs with identical insertion points, then the
rest in stable word-order order.  Each metric is an F1 where a matched
pair counts as correct if the head and the metric's column(s) agree;
ALL requires every available prediction to agree.  A morphology column
never attested in the gold nodes is reported as absent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .conllu import Document
from .empty_node_model import MORPH_COLUMNS

METRIC_ORDER = ("ARC", "DEP", "WO", "DEP_WO",
                "FORM", "LEMMA", "UPOS", "XPOS", "FEATS", "ALL")


@dataclass
class EnodeStats:
    n_gold: int = 0
    n_pred: int = 0
    correct: dict[str, int] = field(
        default_factory=lambda: {m: 0 for m in METRIC_ORDER}
    )
    present: dict[str, bool] = field(
        default_factory=lambda: {c.upper(): False for c in MORPH_COLUMNS}
    )

    def add(self, other: "EnodeStats") -> None:
        self.n_gold += other.n_gold
        self.n_pred += other.n_pred
        for m in METRIC_ORDER:
            self.correct[m] += other.correct[m]
        for c in self.present:
            self.present[c] = self.present[c] or other.present[c]

    def f1(self, metric: str) -> Optional[float]:
        if metric in self.present and not self.present[metric]:
            return None
        if self.n_gold == 0 and self.n_pred == 0:
            return 100.0
        return 200.0 * self.correct[metric] / (self.n_gold + self.n_pred)

    def table(self) -> dict[str, Optional[float]]:
        return {m: self.f1(m) for m in METRIC_ORDER}


def _sentence_nodes(doc: Document):
    for sent in doc.sentences:
        yield [t for t in sent.tokens if t.is_empty], sent


def column_presence(gold_docs) -> dict[str, bool]:
    """A column counts as present when any gold empty node attests it."""
    present = {c.upper(): False for c in MORPH_COLUMNS}
    for doc in gold_docs:
        for nodes, _ in _sentence_nodes(doc):
            for tok in nodes:
                for col in MORPH_COLUMNS:
                    if getattr(tok, col) != "_":
                        present[col.upper()] = True
    return present


def score_empty_nodes(gold: Document, pred: Document,
                      present: Optional[dict[str, bool]] = None) -> EnodeStats:
    gold_surface = [[t.form for t in s.tokens if not t.is_empty]
                    for s in gold.sentences]
    pred_surface = [[t.form for t in s.tokens if not t.is_empty]
                    for s in pred.sentences]
    if gold_surface != pred_surface:
        raise ValueError(
            f"surface tokens differ between gold and prediction for "
            f"document {gold.doc_id!r}"
        )
    stats = EnodeStats()
    stats.present = dict(present) if present else column_presence([gold])
    pred_nodes_by_sentence = [nodes for nodes, _ in _sentence_nodes(pred)]
    for si, (gold_nodes, _) in enumerate(_sentence_nodes(gold)):
        pred_nodes = pred_nodes_by_sentence[si]
        stats.n_gold += len(gold_nodes)
        stats.n_pred += len(pred_nodes)
        by_head_gold: dict[str, list] = {}
        by_head_pred: dict[str, list] = {}
        for tok in gold_nodes:
            by_head_gold.setdefault(tok.head, []).append(tok)
        for tok in pred_nodes:
            by_head_pred.setdefault(tok.head, []).append(tok)
        for head, g_list in by_head_gold.items():
            p_list = list(by_head_pred.get(head, []))
            pairs = []
            g_rest = []
            for g in g_list:
                hit = next((p for p in p_list if p.anchor == g.anchor), None)
                if hit is not None:
                    p_list.remove(hit)
                    pairs.append((g, hit))
                else:
                    g_rest.append(g)
            g_rest.sort(key=lambda t: (t.anchor, t.sub_index))
            p_list.sort(key=lambda t: (t.anchor, t.sub_index))
            pairs.extend(zip(g_rest, p_list))
            for g, p in pairs:
                dep = g.deprel == p.deprel
                wo = g.anchor == p.anchor
                cols_ok = True
                stats.correct["ARC"] += 1
                stats.correct["DEP"] += dep
                stats.correct["WO"] += wo
                stats.correct["DEP_WO"] += dep and wo
                for col in MORPH_COLUMNS:
                    if not stats.present[col.upper()]:
                        continue
                    same = getattr(g, col) == getattr(p, col)
                    stats.correct[col.upper()] += same
                    cols_ok = cols_ok and same
                stats.correct["ALL"] += dep and wo and cols_ok
    return stats


def score_empty_node_documents(gold_docs, pred_docs) -> EnodeStats:
    if len(gold_docs) != len(pred_docs):
        raise ValueError("document count mismatch")
    present = column_presence(gold_docs)
    total = EnodeStats()
    for g, p in zip(gold_docs, pred_docs):
        total.add(score_empty_nodes(g, p, present))
    return total


def format_enode_table(rows: dict[str, EnodeStats]) -> str:
    """One row per treebank, Table-style column order, TSV."""
    lines = ["\t".join(["treebank", *METRIC_ORDER])]
    for name in sorted(rows):
        table = rows[name].table()
        cells = [name]
        for metric in METRIC_ORDER:
            value = table[metric]
            cells.append("---" if value is None else f"{value:.2f}")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
