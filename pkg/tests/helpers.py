"""Shared builders for randomized tests."""

from __future__ import annotations

import random

from zeroref.conllu import Document, Entity, Mention, Sentence, Token, default_head

WORDS = ["mira", "relo", "savi", "tane", "vugo", "zamu", "pelo", "kuna"]
DEPRELS = ["nsubj", "obj", "obl", "advmod", "nmod"]


def random_document(rng: random.Random, doc_id: str = "rand",
                    max_sentences: int = 4, empty_nodes: bool = True,
                    crossing: bool = True) -> Document:
    doc = Document(doc_id=doc_id)
    for si in range(rng.randint(1, max_sentences)):
        n = rng.randint(1, 8)
        comments = [f"# sent_id = {doc_id}-s{si + 1}"]
        if si == 0:
            comments.insert(0, f"# newdoc id = {doc_id}")
        tokens = []
        for i in range(1, n + 1):
            head = rng.choice([0] + [j for j in range(1, n + 1) if j != i])
            tokens.append(Token(
                id=str(i), form=rng.choice(WORDS), lemma="_",
                upos=rng.choice(["NOUN", "VERB", "PRON"]), xpos="_", feats="_",
                head=str(head), deprel=rng.choice(DEPRELS),
            ))
        sent = Sentence(comments=comments, tokens=tokens)
        if empty_nodes:
            with_empties = []
            for i in range(0, n + 1):
                if i > 0:
                    with_empties.append(tokens[i - 1])
                for j in range(1, rng.choice([1, 1, 1, 2, 3])):
                    with_empties.append(Token(
                        id=f"{i}.{j}", form=rng.choice(["_", "pro"]),
                        lemma="_", upos="PRON", xpos="_",
                        feats=rng.choice(["_", "Person=3"]),
                        head=str(rng.randint(1, n)),
                        deprel=rng.choice(DEPRELS),
                    ))
            sent.tokens = with_empties
        doc.sentences.append(sent)

    tokens = doc.tokens()
    keys = []
    id_to_pos = {}
    sentences_of = []
    for si, sent in enumerate(doc.sentences):
        for tok in sent.tokens:
            id_to_pos[(si, tok.id)] = len(sentences_of)
            sentences_of.append(si)
    offsets = doc.token_offsets()

    used = set()
    all_kept: list[Mention] = []
    for e_index in range(rng.randint(0, 4)):
        eid = f"e{e_index + 1}"
        mentions = []
        for _ in range(rng.randint(1, 3)):
            si = rng.randrange(len(doc.sentences))
            sent_len = len(doc.sentences[si].tokens)
            start_local = rng.randrange(sent_len)
            end_local = min(sent_len - 1, start_local + rng.randint(0, 3))
            start = offsets[si] + start_local
            end = offsets[si] + end_local
            if (start, end) in used:
                continue
            span = list(range(start, end + 1))
            fallback = default_head(span, tokens, id_to_pos, sentences_of)
            if rng.random() < 0.5:
                head = fallback
                payload = eid
            else:
                head = rng.choice(span)
                payload = f"{eid}-t-{span.index(head) + 1}"
            m = Mention(start=start, end=end, head=head,
                        entity_id=eid, open_payload=payload)
            # Same-entity crossing is inexpressible in bracket syntax;
            # cross-entity crossing is allowed unless crossing=False.
            blockers = mentions if crossing else all_kept
            if any(
                a.start < m.start <= a.end < m.end
                or m.start < a.start <= m.end < a.end
                for a in blockers
            ):
                continue
            used.add((start, end))
            all_kept.append(m)
            mentions.append(m)
        if mentions:
            mentions.sort(key=Mention.sort_key)
            doc.entities.append(Entity(id=eid, mentions=mentions))
    doc.entities.sort(key=lambda e: e.mentions[0].sort_key())
    doc.validate()
    return doc


def entity_signature(doc: Document) -> list[tuple]:
    return [
        (e.id, tuple((m.start, m.end, m.head) for m in e.mentions))
        for e in doc.entities
    ]
