"""Synthetic pro-drop corpora for hermetic tests and toy experiments.

Three fake languages with disjoint vocabularies share one grammar:
documents chain a person entity through sentences whose subject is a
name, a pronoun derived from the name, or dropped.  A dropped subject
becomes an empty node (deprel nsubj) placed right before its verb, and
the verb carries a clitic derived from the name, so every coreference
decision is decidable from the surface.  Occasionally both the subject
and the object are dropped, putting two empty nodes on one head word.
Object phrases are two-word mentions (determiner + noun) that corefer
when the noun repeats; some objects embed a person name, yielding nested
mentions.

Which morphology columns the empty nodes carry differs per language
(xa: form+lemma+upos, xb: upos, xc: none) so column-presence handling
is exercised.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .conllu import Document, Entity, Mention, Sentence, Token, serialize_conllu


@dataclass
class Language:
    code: str
    names: list[str]
    verbs: list[str]
    nouns: list[str]
    determiner: str
    linker: str
    adverbs: list[str]
    enode_columns: tuple[str, ...]


def _words(syllables, pattern, count, suffix=""):
    out = []
    for i in range(count):
        a = syllables[i % len(syllables)]
        b = syllables[(i * 3 + 1) % len(syllables)]
        out.append(pattern.format(a=a, b=b) + suffix)
    return out


def _language(code: str, syllables: list[str],
              enode_columns: tuple[str, ...]) -> Language:
    return Language(
        code=code,
        names=[w.capitalize() for w in _words(syllables, "{a}{b}", 6)],
        verbs=_words(syllables, "{b}{a}", 4, suffix="t"),
        nouns=_words(syllables, "{a}{a}", 4, suffix="o"),
        determiner=syllables[0] + "l",
        linker=syllables[1] + "x",
        adverbs=_words(syllables, "{b}{b}", 2, suffix="u"),
        enode_columns=enode_columns,
    )


LANGUAGES = {
    "xa_synth": _language("xa", ["mi", "re", "sa", "vu", "zo"],
                          ("form", "lemma", "upos")),
    "xb_synth": _language("xb", ["ku", "ne", "pi", "ro", "ga"], ("upos",)),
    "xc_synth": _language("xc", ["da", "lo", "wi", "ce", "ba"], ()),
}


def _pronoun(name: str) -> str:
    return "p" + name[:2].lower()


def _marker(name: str) -> str:
    return name[:2].lower()


class _DocBuilder:
    def __init__(self, lang: Language, doc_id: str):
        self.lang = lang
        self.doc = Document(doc_id=doc_id, dataset_id="", language=lang.code)
        self.position = 0
        self.mention_spans: dict[str, list[tuple[int, int, int]]] = {}

    def add_sentence(self, tokens: list[Token],
                     mentions: list[tuple[int, int, int, str]],
                     text: str) -> None:
        si = len(self.doc.sentences)
        comments = []
        if si == 0:
            comments.append(f"# newdoc id = {self.doc.doc_id}")
        comments.append(f"# sent_id = {self.doc.doc_id}-s{si + 1}")
        comments.append(f"# text = {text}")
        self.doc.sentences.append(Sentence(comments=comments, tokens=tokens))
        for start, end, head, key in mentions:
            self.mention_spans.setdefault(key, []).append(
                (self.position + start, self.position + end, self.position + head)
            )
        self.position += len(tokens)

    def finish(self) -> Document:
        order = sorted(self.mention_spans,
                       key=lambda key: min(self.mention_spans[key]))
        for i, key in enumerate(order):
            eid = f"e{i + 1}"
            mentions = [
                Mention(start=s, end=e, head=h, entity_id=eid)
                for s, e, h in self.mention_spans[key]
            ]
            mentions.sort(key=Mention.sort_key)
            self.doc.entities.append(Entity(id=eid, mentions=mentions))
        self.doc.entities.sort(key=lambda e: e.mentions[0].sort_key())
        self.doc.validate()
        return self.doc


def _empty_node(lang: Language, anchor: int, sub: int, head: int,
                deprel: str, pronoun: str) -> Token:
    columns = {"form": "_", "lemma": "_", "upos": "_"}
    if "form" in lang.enode_columns:
        columns["form"] = pronoun
    if "lemma" in lang.enode_columns:
        columns["lemma"] = pronoun
    if "upos" in lang.enode_columns:
        columns["upos"] = "PRON"
    return Token(id=f"{anchor}.{sub}", form=columns["form"],
                 lemma=columns["lemma"], upos=columns["upos"], xpos="_",
                 feats="_", head=str(head), deprel=deprel)


def generate_document(lang: Language, doc_id: str, rng: random.Random) -> Document:
    builder = _DocBuilder(lang, doc_id)
    person = rng.choice(lang.names)
    n_sentences = rng.randint(3, 6)
    for si in range(n_sentences):
        tokens: list[Token] = []
        mentions: list[tuple[int, int, int, str]] = []
        words: list[str] = []

        def push(form, upos, head, deprel, lemma=None):
            tokens.append(Token(
                id=str(len([t for t in tokens if not t.is_empty]) + 1),
                form=form, lemma=lemma or form.lower(), upos=upos, xpos="_",
                feats="_", head=str(head), deprel=deprel,
            ))
            words.append(form)
            return len(tokens) - 1

        surface = 0
        has_adverb = rng.random() < 0.4
        if has_adverb:
            surface += 1
        subject_kind = "name" if si == 0 else rng.choice(
            ["name", "pronoun", "drop", "drop"]
        )
        double_drop = subject_kind == "drop" and rng.random() < 0.3
        subj_word = 1 if subject_kind != "drop" else 0
        verb_index = surface + subj_word + 1  # 1-based surface index

        verb = rng.choice(lang.verbs)
        noun = rng.choice(lang.nouns)
        obj_entity = f"obj:{noun}"
        nested = not double_drop and rng.random() < 0.3
        other = rng.choice([n for n in lang.names if n != person])

        if has_adverb:
            push(rng.choice(lang.adverbs), "ADV", verb_index, "advmod")
        if subject_kind == "name":
            idx = push(person, "PROPN", verb_index, "nsubj", lemma=person)
            mentions.append((idx, idx, idx, f"per:{person}"))
        elif subject_kind == "pronoun":
            idx = push(_pronoun(person), "PRON", verb_index, "nsubj")
            mentions.append((idx, idx, idx, f"per:{person}"))

        verb_form = verb
        if subject_kind == "drop":
            verb_form = f"{verb}-{_marker(person)}"
            if double_drop:
                verb_form += f"-{_marker(noun.capitalize())}"
        verb_token = push(verb_form, "VERB", 0, "root", lemma=verb)
        if subject_kind == "drop":
            node = _empty_node(lang, anchor=verb_index - 1, sub=1,
                               head=verb_index, deprel="nsubj",
                               pronoun=_pronoun(person))
            tokens.insert(verb_token, node)
            mentions = [
                (s + (s >= verb_token), e + (e >= verb_token),
                 h + (h >= verb_token), key)
                for s, e, h, key in mentions
            ]
            mentions.append((verb_token, verb_token, verb_token, f"per:{person}"))
            verb_token += 1

        if double_drop:
            node = _empty_node(lang, anchor=verb_index, sub=1,
                               head=verb_index, deprel="obj",
                               pronoun=_pronoun(noun.capitalize()))
            tokens.append(node)
            idx = len(tokens) - 1
            mentions.append((idx, idx, idx, obj_entity))
        else:
            det = push(lang.determiner, "DET", verb_index + 2, "det")
            noun_idx = push(noun, "NOUN", verb_index, "obj")
            end = noun_idx
            if nested:
                push(lang.linker, "ADP", verb_index + 4, "case")
                name_idx = push(other, "PROPN", verb_index + 2, "nmod",
                                lemma=other)
                mentions.append((name_idx, name_idx, name_idx, f"per:{other}"))
                end = name_idx
            mentions.append((det, end, noun_idx, obj_entity))

        builder.add_sentence(tokens, mentions, " ".join(words))
    return builder.finish()


def generate_corpus(dataset_id: str, n_docs: int, seed: int) -> list[Document]:
    lang = LANGUAGES[dataset_id]
    rng = random.Random(seed)
    docs = []
    for k in range(n_docs):
        doc = generate_document(lang, f"{dataset_id}-{k + 1:03d}", rng)
        doc.dataset_id = dataset_id
        docs.append(doc)
    return docs


def write_corpus(data_root, n_train: int = 24, n_dev: int = 8,
                 seed: int = 1) -> list[Path]:
    """Write train/dev splits for all synthetic datasets under
    ``data_root/<dataset>/{train,dev}.conllu``."""
    written = []
    root = Path(data_root)
    for i, dataset_id in enumerate(sorted(LANGUAGES)):
        folder = root / dataset_id
        folder.mkdir(parents=True, exist_ok=True)
        train = generate_corpus(dataset_id, n_train, seed + 100 * i)
        dev = generate_corpus(dataset_id, n_dev, seed + 100 * i + 7)
        for split, docs in (("train", train), ("dev", dev)):
            path = folder / f"{split}.conllu"
            path.write_text(serialize_conllu(docs))
            written.append(path)
    return written
