"""Turning a detected adversarial example into a non-adversarial variant.

Three stages: candidate generation from a synonym lexicon, corpus
co-occurrence (PMI) and static word vectors; model-feedback selection of the
replacement that moves the classifier most while staying similar and frequent;
and spelling repair of homoglyph typos against the training vocabulary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ResourcesMissing
from .model import Classifier, forward
from .vocab import PRONOUNS, TokenSequence, Vocabulary, split_words

# Canonical human-intervention strings; these are external contract and must
# stay byte-identical.
MSG_NO_REPLACEMENT = (
    "DETECTED AS ADVERSARIAL EXAMPLE, But NO REPLACEMENT DONE, Requires Human Intervention"
)
MSG_CONVERTED = "Converted to non-ADVERSARIAL EXAMPLE"
MSG_MORE_ADVERSARIAL = "GOT MORE ADVERSARIAL after substitutions Requires Human Intervention"
MSG_CLEAN = "Detected as non Adversarial"
MSG_STILL_ADVERSARIAL = "STILL ADVERSARIAL EXAMPLE After n tries, Requires Human Intervention"
CANONICAL_MESSAGES = (
    MSG_NO_REPLACEMENT,
    MSG_CONVERTED,
    MSG_MORE_ADVERSARIAL,
    MSG_CLEAN,
    MSG_STILL_ADVERSARIAL,
)

# Shared homoglyph table; attacks swap letters for symbols, repair normalizes
# symbols back to letters.
HOMOGLYPHS = {"0": "o", "1": "l", "3": "e", "4": "a", "5": "s", "7": "t", "@": "a", "$": "s"}
HOMOGLYPHS_REVERSE: dict[str, list[str]] = {}
for sym, letter in HOMOGLYPHS.items():
    HOMOGLYPHS_REVERSE.setdefault(letter, []).append(sym)

MAX_PER_SOURCE = 15
CONTEXT_WINDOW = 2
DEFAULT_MT_THRESHOLD = 0.1
DEFAULT_TRIES = 3
DEFAULT_EDIT_DISTANCE = 2


@dataclass
class SubstitutionCandidate:
    token: str
    simi_score: float  # in [0, 1]
    source: str  # synonym | contextual | semantic
    freq_score: float  # relative corpus frequency / max relative frequency

    def to_dict(self) -> dict:
        return {"token": self.token, "simi_score": self.simi_score,
                "source": self.source, "freq_score": self.freq_score}


class TransformResources:
    """Synonym lexicon, static word vectors and corpus co-occurrence stats."""

    def __init__(
        self,
        vocab: Vocabulary,
        synonym_path: str | None = None,
        vectors_path: str | None = None,
        corpus_texts: list[str] | None = None,
    ):
        self.vocab = vocab
        self.synonyms: dict[str, list[str]] = {}
        self.vectors: dict[str, np.ndarray] = {}
        self._cooc: dict[tuple[str, str], int] = {}
        self._cooc_total = 0
        self._unigram: dict[str, int] = {}
        self._loaded = False
        if synonym_path:
            self.load_synonyms(synonym_path)
        if vectors_path:
            self.load_vectors(vectors_path)
        if corpus_texts:
            self.build_cooccurrence(corpus_texts)

    def load_synonyms(self, path: str) -> None:
        """Lexicon format: one `word: syn1, syn2, ...` entry per line."""
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                word, _, rest = line.partition(":")
                syns = [s.strip().lower() for s in rest.split(",") if s.strip()]
                if syns:
                    self.synonyms[word.strip().lower()] = syns
        self._loaded = True

    def load_vectors(self, path: str) -> None:
        """One `token v1 v2 ...` line per word, whitespace separated."""
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.split()
                if len(parts) < 2:
                    continue
                self.vectors[parts[0].lower()] = np.array([float(x) for x in parts[1:]])
        self._loaded = True

    def build_cooccurrence(self, texts: list[str], window: int = CONTEXT_WINDOW) -> None:
        for text in texts:
            words = split_words(text)
            for i, w in enumerate(words):
                self._unigram[w] = self._unigram.get(w, 0) + 1
                for j in range(max(0, i - window), min(len(words), i + window + 1)):
                    if j == i:
                        continue
                    self._cooc[(w, words[j])] = self._cooc.get((w, words[j]), 0) + 1
                    self._cooc_total += 1
        self._loaded = True

    @property
    def loaded(self) -> bool:
        return self._loaded

    def cosine(self, a: str, b: str) -> float | None:
        va, vb = self.vectors.get(a), self.vectors.get(b)
        if va is None or vb is None:
            return None
        na, nb = np.linalg.norm(va), np.linalg.norm(vb)
        if na == 0 or nb == 0:
            return None
        return float(va @ vb / (na * nb))

    def pmi(self, word: str, context: str) -> float:
        pair = self._cooc.get((word, context), 0)
        if pair == 0 or self._cooc_total == 0:
            return -math.inf
        uni_total = sum(self._unigram.values())
        p_pair = pair / self._cooc_total
        p_w = self._unigram.get(word, 0) / uni_total
        p_c = self._unigram.get(context, 0) / uni_total
        return math.log(p_pair / (p_w * p_c))

    def contextual_candidates(self, position: int, seq: TokenSequence) -> list[tuple[str, float]]:
        """Vocabulary tokens ranked by summed PMI with the +-2-word context."""
        if not self._cooc:
            return []
        words = seq.words
        idx = position - 1  # word index, CLS removed
        context = [words[j] for j in range(max(0, idx - CONTEXT_WINDOW),
                                           min(len(words), idx + CONTEXT_WINDOW + 1)) if j != idx]
        if not context:
            return []
        scored = []
        for cand in self._unigram:
            total = 0.0
            hit = False
            for ctx in context:
                p = self.pmi(cand, ctx)
                if p != -math.inf:
                    total += p
                    hit = True
            if hit:
                scored.append((cand, total))
        scored.sort(key=lambda t: (-t[1], t[0]))
        return scored[:MAX_PER_SOURCE]

    def semantic_neighbors(self, word: str) -> list[tuple[str, float]]:
        """Cosine nearest neighbors of `word` in the static vector table."""
        base = self.vectors.get(word)
        if base is None:
            return []
        nb = np.linalg.norm(base)
        if nb == 0:
            return []
        scored = []
        for other, vec in self.vectors.items():
            if other == word:
                continue
            nv = np.linalg.norm(vec)
            if nv == 0:
                continue
            scored.append((other, float(base @ vec / (nb * nv))))
        scored.sort(key=lambda t: (-t[1], t[0]))
        return scored[:MAX_PER_SOURCE]


def _single_word(token: str) -> bool:
    return len(split_words(token)) == 1


def generate_candidates(
    word: str,
    position: int,
    seq: TokenSequence,
    resources: TransformResources,
) -> list[SubstitutionCandidate]:
    """Up to 15 substitution options from each of the three sources.

    Duplicates across sources are merged keeping the maximum similarity and
    the first-listed source (synonym, then contextual, then semantic).
    """
    if not resources.loaded:
        raise ResourcesMissing("no synonym lexicon, vectors or corpus statistics loaded")
    word = word.lower()
    vocab = resources.vocab
    max_rel = vocab.max_relative_frequency()

    def freq_score(token: str) -> float:
        if max_rel == 0:
            return 0.0
        return vocab.relative_frequency(token) / max_rel

    merged: dict[str, SubstitutionCandidate] = {}

    def add(token: str, simi: float, source: str) -> None:
        token = token.lower()
        if token == word or not _single_word(token):
            return
        simi = min(max(simi, 0.0), 1.0)
        existing = merged.get(token)
        if existing is None:
            merged[token] = SubstitutionCandidate(token, simi, source, freq_score(token))
        elif simi > existing.simi_score:
            existing.simi_score = simi

    for syn in resources.synonyms.get(word, [])[:MAX_PER_SOURCE]:
        cos = resources.cosine(word, syn)
        add(syn, abs(cos) if cos is not None else 1.0, "synonym")

    contextual = resources.contextual_candidates(position, seq)
    k = len(contextual)
    for rank, (cand, _score) in enumerate(contextual):
        cos = resources.cosine(word, cand)
        simi = abs(cos) if cos is not None else (k - rank) / k
        add(cand, simi, "contextual")

    for cand, cos in resources.semantic_neighbors(word):
        add(cand, abs(cos), "semantic")

    return list(merged.values())


@dataclass
class TransformOutcome:
    tf_text: str
    human: bool
    human_msg: str
    adv_flag: bool
    replacements: dict[int, SubstitutionCandidate] = field(default_factory=dict)
    tries_used: int = 0
    final_adv_pcs: float = 0.0


def mt_select(
    seq: TokenSequence,
    p_cand: list,
    candidates: dict[int, list[SubstitutionCandidate]],
    org_pcs: np.ndarray,
    org_label: int,
    adv_org: float,
    model: Classifier,
    detect_text: Callable[[str], tuple[bool, float]],
    threshold: float = DEFAULT_MT_THRESHOLD,
    tries: int = DEFAULT_TRIES,
) -> TransformOutcome:
    """Model-feedback replacement selection over the identified positions.

    For each position, every substitution is scored as
    `|pcs'[org_label] - org_pcs[org_label]| + simi_score + freq_score` and the
    argmax is applied when it moves the confidence by more than `threshold` or
    changes the label. After each applied replacement the detector is asked
    again: clean + label change ends with the converted message, a detector
    score above the original ends with the more-adversarial message. A
    position whose whole candidate list is unusable ends with the
    no-replacement message; surviving all tries ends still-adversarial.
    Applied edits persist across tries.
    """
    working = seq
    replacements: dict[int, SubstitutionCandidate] = {}
    last_adv_pcs = adv_org

    def finish(msg: str, human: bool, adv_flag: bool, tries_used: int) -> TransformOutcome:
        return TransformOutcome(
            tf_text=working.detokenize(), human=human, human_msg=msg, adv_flag=adv_flag,
            replacements=dict(replacements), tries_used=tries_used, final_adv_pcs=last_adv_pcs,
        )

    if not p_cand:
        return finish(MSG_NO_REPLACEMENT, human=True, adv_flag=True, tries_used=0)

    for attempt in range(1, tries + 1):
        for pc in p_cand:
            options = candidates.get(pc.position, [])
            best = None
            # argmax over opt_score; earlier list position wins ties
            for cand in options:
                trial = working.replaced(pc.position, cand.token,
                                         model.vocab.id_of(cand.token))
                pred = forward(model, trial)
                r_score = abs(float(pred.pcs[org_label]) - float(org_pcs[org_label]))
                opt_score = r_score + cand.simi_score + cand.freq_score
                if best is None or opt_score > best[0]:
                    best = (opt_score, cand, trial, pred, r_score)
            applied = False
            if best is not None:
                _, cand, trial, pred, r_score = best
                if r_score > threshold or pred.label != org_label:
                    working = trial
                    replacements[pc.position] = cand
                    applied = True
                    is_adv, adv_pcs = detect_text(working.detokenize())
                    last_adv_pcs = adv_pcs
                    if not is_adv and pred.label != org_label:
                        return finish(MSG_CONVERTED, human=False, adv_flag=False,
                                      tries_used=attempt)
                    if adv_pcs > adv_org:
                        return finish(MSG_MORE_ADVERSARIAL, human=True, adv_flag=True,
                                      tries_used=attempt)
            if not applied:
                return finish(MSG_NO_REPLACEMENT, human=True, adv_flag=True,
                              tries_used=attempt)
    return finish(MSG_STILL_ADVERSARIAL, human=True, adv_flag=True, tries_used=tries)


# ------------------------------------------------------------------ spelling


def normalize_homoglyphs(word: str) -> str:
    return "".join(HOMOGLYPHS.get(ch, ch) for ch in word)


def edit_distance(a: str, b: str, cap: int | None = None) -> int:
    """Levenshtein distance with an optional early-exit cap."""
    if a == b:
        return 0
    if cap is not None and abs(len(a) - len(b)) > cap:
        return cap + 1
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        best_row = i
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
            best_row = min(best_row, cur[-1])
        if cap is not None and best_row > cap:
            return cap + 1
        prev = cur
    return prev[-1]


def _match_case(replacement: str, original: str) -> str:
    if original.isupper() and len(original) > 1:
        return replacement.upper()
    if original[:1].isupper():
        return replacement.capitalize()
    return replacement


def _repair_word(word: str, vocab: Vocabulary, max_distance: int) -> str:
    lower = word.lower()
    # the pronoun test is on the word itself, not on vocabulary membership
    if lower in PRONOUNS or lower in vocab.token_to_id:
        return word
    normalized = normalize_homoglyphs(lower)
    if normalized in vocab.token_to_id:
        return _match_case(normalized, word)
    best: list[tuple[int, int, str]] = []  # (distance, -count, token)
    for token in vocab.token_to_id:
        if token in ("[PAD]", "[UNK]", "[CLS]", "[MASK]"):
            continue
        dist = edit_distance(normalized, token, cap=max_distance)
        if dist <= max_distance:
            best.append((dist, -vocab.corpus_count.get(token, 0), token))
    if not best:
        return word
    best.sort()
    if len(best) > 1 and best[0][:2] == best[1][:2]:
        return word  # ambiguous: two matches tie on distance and frequency
    return _match_case(best[0][2], word)


def spelling_transform(text: str, vocab: Vocabulary, max_distance: int = DEFAULT_EDIT_DISTANCE) -> str:
    """Repair out-of-vocabulary words via homoglyph normalization then a
    unique nearest dictionary match within the edit-distance budget.

    Words that are pronouns or already in the training vocabulary pass
    through; ambiguous repairs (tied distance and frequency) are left alone.
    Idempotent: repaired words are in-vocabulary, so a second pass is a no-op.
    """
    out = []
    for word in text.split():
        out.append(_repair_word(word, vocab, max_distance))
    return " ".join(out)
