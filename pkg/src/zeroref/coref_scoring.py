"""Coreference evaluation: MUC, B-cubed, entity CEAF, and their mean.

Predicted mentions are first aligned one-to-one to gold mentions under
the chosen regime (exact span, equal head, or partial: the predicted
span contains the gold head and lies inside the gold span).  Aligned
pairs share an identity; the three standard metrics then run over the
re-keyed clusters.  Singletons can be removed from both sides first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .conllu import Document, Mention

ALIGN_MODES = ("exact", "head", "partial")


def _compatible(gold: Mention, pred: Mention, mode: str) -> bool:
    if mode == "exact":
        return gold.start == pred.start and gold.end == pred.end
    if mode == "head":
        return gold.head == pred.head
    if mode == "partial":
        return (pred.start <= gold.head <= pred.end
                and gold.start <= pred.start and pred.end <= gold.end)
    raise ValueError(f"unknown alignment mode {mode!r}")


def align_mentions(gold: list[Mention], pred: list[Mention],
                   mode: str) -> dict[int, int]:
    """Maximum-cardinality one-to-one matching, as pred index -> gold
    index.  Identical spans are seeded first; remaining pairs are
    matched by augmenting paths scanning leftmost-first."""
    gold_order = sorted(range(len(gold)), key=lambda i: gold[i].sort_key())
    pred_order = sorted(range(len(pred)), key=lambda i: pred[i].sort_key())
    match_gold: dict[int, int] = {}
    match_pred: dict[int, int] = {}
    for g in gold_order:
        for p in pred_order:
            if p in match_pred:
                continue
            if (gold[g].start, gold[g].end) == (pred[p].start, pred[p].end) \
                    and _compatible(gold[g], pred[p], mode):
                match_gold[g] = p
                match_pred[p] = g
                break
    adjacency = {
        g: [p for p in pred_order if _compatible(gold[g], pred[p], mode)]
        for g in gold_order
    }

    def augment(g: int, seen: set[int]) -> bool:
        for p in adjacency[g]:
            if p in seen:
                continue
            seen.add(p)
            if p not in match_pred or augment(match_pred[p], seen):
                match_gold[g] = p
                match_pred[p] = g
                return True
        return False

    for g in gold_order:
        if g not in match_gold:
            augment(g, set())
    return match_pred


# ---------------------------------------------------------------------------
# Metric sufficient statistics over re-keyed clusters


@dataclass
class PRF:
    p_num: float = 0.0
    p_den: float = 0.0
    r_num: float = 0.0
    r_den: float = 0.0

    def add(self, other: "PRF") -> None:
        self.p_num += other.p_num
        self.p_den += other.p_den
        self.r_num += other.r_num
        self.r_den += other.r_den

    @property
    def precision(self) -> float:
        return 100.0 * self.p_num / self.p_den if self.p_den else 0.0

    @property
    def recall(self) -> float:
        return 100.0 * self.r_num / self.r_den if self.r_den else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def muc_stats(gold: list[set], pred: list[set]) -> PRF:
    def vilain(first: list[set], second: list[set]) -> tuple[float, float]:
        owner = {}
        for i, cluster in enumerate(second):
            for m in cluster:
                owner[m] = i
        num = den = 0
        for cluster in first:
            partitions = {owner.get(m, ("twinless", m)) for m in cluster}
            num += len(cluster) - len(partitions)
            den += len(cluster) - 1
        return num, den

    r_num, r_den = vilain(gold, pred)
    p_num, p_den = vilain(pred, gold)
    return PRF(p_num, p_den, r_num, r_den)


def b_cubed_stats(gold: list[set], pred: list[set]) -> PRF:
    def one_side(first: list[set], second: list[set]) -> tuple[float, float]:
        owner = {}
        for cluster in second:
            for m in cluster:
                owner[m] = cluster
        num = 0.0
        count = 0
        for cluster in first:
            for m in cluster:
                other = owner.get(m, set())
                num += len(cluster & other) / len(cluster)
                count += 1
        return num, count

    r_num, r_den = one_side(gold, pred)
    p_num, p_den = one_side(pred, gold)
    return PRF(p_num, p_den, r_num, r_den)


def ceaf_e_stats(gold: list[set], pred: list[set]) -> PRF:
    if not gold or not pred:
        return PRF(0.0, float(len(pred)), 0.0, float(len(gold)))
    phi = np.zeros((len(gold), len(pred)))
    for i, g in enumerate(gold):
        for j, p in enumerate(pred):
            phi[i, j] = 2.0 * len(g & p) / (len(g) + len(p))
    rows, cols = linear_sum_assignment(-phi)
    similarity = float(phi[rows, cols].sum())
    return PRF(similarity, float(len(pred)), similarity, float(len(gold)))


@dataclass
class ScoreReport:
    muc: PRF = field(default_factory=PRF)
    b_cubed: PRF = field(default_factory=PRF)
    ceaf_e: PRF = field(default_factory=PRF)

    def add(self, other: "ScoreReport") -> None:
        self.muc.add(other.muc)
        self.b_cubed.add(other.b_cubed)
        self.ceaf_e.add(other.ceaf_e)

    @property
    def conll(self) -> float:
        return (self.muc.f1 + self.b_cubed.f1 + self.ceaf_e.f1) / 3.0

    def as_dict(self) -> dict:
        out = {}
        for name, prf in (("muc", self.muc), ("b_cubed", self.b_cubed),
                          ("ceaf_e", self.ceaf_e)):
            out[name] = {"p": prf.precision, "r": prf.recall, "f1": prf.f1}
        out["conll"] = self.conll
        return out


def document_clusters(doc: Document, with_singletons: bool) -> list[list[Mention]]:
    clusters = [list(e.mentions) for e in doc.entities]
    if not with_singletons:
        clusters = [c for c in clusters if len(c) > 1]
    return clusters


def score_documents(gold_doc: Document, pred_doc: Document, mode: str = "head",
                    with_singletons: bool = True) -> ScoreReport:
    gold_clusters = document_clusters(gold_doc, with_singletons)
    pred_clusters = document_clusters(pred_doc, with_singletons)
    gold_mentions = [m for c in gold_clusters for m in c]
    pred_mentions = [m for c in pred_clusters for m in c]
    matching = align_mentions(gold_mentions, pred_mentions, mode)

    gold_keys: dict[int, tuple] = {i: ("g", i) for i in range(len(gold_mentions))}
    pred_keys = {
        p: gold_keys[g] if (g := matching.get(p)) is not None else ("p", p)
        for p in range(len(pred_mentions))
    }
    gold_sets = []
    offset = 0
    for cluster in gold_clusters:
        gold_sets.append({gold_keys[offset + k] for k in range(len(cluster))})
        offset += len(cluster)
    pred_sets = []
    offset = 0
    for cluster in pred_clusters:
        pred_sets.append({pred_keys[offset + k] for k in range(len(cluster))})
        offset += len(cluster)

    return ScoreReport(
        muc=muc_stats(gold_sets, pred_sets),
        b_cubed=b_cubed_stats(gold_sets, pred_sets),
        ceaf_e=ceaf_e_stats(gold_sets, pred_sets),
    )


def score(gold_docs: list[Document], pred_docs: list[Document],
          mode: str = "head", with_singletons: bool = True) -> ScoreReport:
    """Aggregate over documents matched by doc id (or order)."""
    if len(gold_docs) != len(pred_docs):
        raise ValueError("document count mismatch between gold and prediction")
    total = ScoreReport()
    for g, p in zip(gold_docs, pred_docs):
        if g.doc_id != p.doc_id:
            raise ValueError(f"document id mismatch: {g.doc_id!r} vs {p.doc_id!r}")
        total.add(score_documents(g, p, mode, with_singletons))
    return total


def report_table(reports: dict[str, ScoreReport],
                 value: str = "conll") -> str:
    """Datasets as columns plus an unweighted Avg, one decimal, TSV."""
    names = list(reports)
    scores = []
    for name in names:
        report = reports[name]
        scores.append(report.conll if value == "conll"
                      else getattr(report, value).f1)
    avg = sum(scores) / len(scores) if scores else 0.0
    header = "\t".join(["Avg", *names])
    row = "\t".join(f"{s:.1f}" for s in [avg, *scores])
    return header + "\n" + row + "\n"
