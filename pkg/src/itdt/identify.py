"""Locating the likely perturbed words inside a detected adversarial example.

Three complementary rules vote: attention scores above the example's third
quartile (stopwords excluded), confidence drops beyond a threshold when a word
is masked on the surrogate model, and corpus frequency under a threshold for
words that are neither pronouns nor nouns. Candidates are merged by position
and ordered attention-first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import quartiles
from .model import Classifier, forward, mask_at
from .relevance import RelevanceMaps
from .vocab import TokenSequence, Vocabulary


@dataclass
class IdentificationConfig:
    sc_thres: float = 0.3
    fq_thres: float = 0.001

    def validate(self) -> None:
        if not (0.0 < self.sc_thres < 1.0):
            raise ValueError("sc_thres must be in (0, 1)")
        if not (0.0 < self.fq_thres < 1.0):
            raise ValueError("fq_thres must be in (0, 1)")


@dataclass
class PerturbCandidate:
    word: str
    position: int  # index into the token sequence (CLS at 0 excluded)
    attention_score: float = 0.0
    mask_drop: float = 0.0
    corpus_freq: float = 0.0
    sources: set[str] = field(default_factory=set)

    def to_dict(self) -> dict:
        return {
            "word": self.word, "position": self.position,
            "attention_score": self.attention_score, "mask_drop": self.mask_drop,
            "corpus_freq": self.corpus_freq, "sources": sorted(self.sources),
        }


def epi(rel: RelevanceMaps, seq: TokenSequence, vocab: Vocabulary) -> list[PerturbCandidate]:
    """Words whose attention relevance strictly exceeds the example's q3.

    Stopwords are excluded; output is sorted by attention descending, ties by
    position. The threshold is per-example, so rescaling all scores by a
    positive constant leaves the set unchanged.
    """
    scores = np.asarray(rel.a_map[1:], dtype=np.float64)
    _, q3 = quartiles(scores)
    out = []
    for idx, (score, word) in enumerate(zip(scores, seq.words)):
        if score > q3 and not vocab.is_stopword(word):
            out.append(PerturbCandidate(word=word, position=idx + 1,
                                        attention_score=float(score), sources={"EPI"}))
    out.sort(key=lambda c: (-c.attention_score, c.position))
    return out


def mask_drops(model: Classifier, seq: TokenSequence, y_pred: int) -> list[float]:
    """Confidence drop on the predicted label when each word is masked."""
    base = float(forward(model, seq).pcs[y_pred])
    drops = []
    for pos in range(1, len(seq)):
        masked_pcs = forward(model, mask_at(seq, pos)).pcs
        drops.append(base - float(masked_pcs[y_pred]))
    return drops


def mpi(model: Classifier, seq: TokenSequence, y_pred: int,
        sc_thres: float = 0.3, drops: list[float] | None = None) -> list[PerturbCandidate]:
    """Words whose masking drops the surrogate confidence by more than sc_thres.

    The inequality is strict; a drop of exactly sc_thres or a confidence gain
    keeps the word out. The model and the sequence are never mutated.
    """
    if drops is None:
        drops = mask_drops(model, seq, y_pred)
    out = []
    for idx, drop in enumerate(drops):
        if drop > sc_thres:
            out.append(PerturbCandidate(word=seq.words[idx], position=idx + 1,
                                        mask_drop=drop, sources={"MPI"}))
    return out


def fpi(seq: TokenSequence, vocab: Vocabulary,
        fq_thres: float = 0.001) -> list[PerturbCandidate]:
    """Words rarer than fq_thres that are neither pronouns nor nouns.

    Unseen words have frequency zero and are flagged automatically unless the
    pronoun/noun flags veto them.
    """
    out = []
    for idx, word in enumerate(seq.words):
        freq = vocab.relative_frequency(word)
        if freq < fq_thres and not vocab.is_pronoun(word) and not vocab.is_noun(word):
            out.append(PerturbCandidate(word=word, position=idx + 1,
                                        corpus_freq=freq, sources={"FPI"}))
    return out


def identify(
    seq: TokenSequence,
    model: Classifier,
    rel: RelevanceMaps,
    config: IdentificationConfig | None = None,
) -> list[PerturbCandidate]:
    """Union of the three rules, deduplicated by position.

    Order: attention-flagged words by attention descending, then mask-only
    words by drop descending, then frequency-only words by frequency
    ascending; position index breaks all ties. Every candidate carries its
    attention score, mask drop and corpus frequency for the threat logs.
    """
    config = config or IdentificationConfig()
    config.validate()
    vocab = model.vocab
    scores = np.asarray(rel.a_map[1:], dtype=np.float64)
    drops = mask_drops(model, seq, rel.y_pred)
    epi_list = epi(rel, seq, vocab)
    mpi_list = mpi(model, seq, rel.y_pred, sc_thres=config.sc_thres, drops=drops)
    fpi_list = fpi(seq, vocab, fq_thres=config.fq_thres)

    merged: dict[int, PerturbCandidate] = {}
    for cand in epi_list + mpi_list + fpi_list:
        slot = merged.get(cand.position)
        if slot is None:
            idx = cand.position - 1
            cand.attention_score = float(scores[idx])
            cand.mask_drop = float(drops[idx])
            cand.corpus_freq = vocab.relative_frequency(cand.word)
            merged[cand.position] = cand
        else:
            slot.sources |= cand.sources

    epi_positions = [c.position for c in epi_list]
    mpi_only = sorted((c for c in merged.values()
                       if "EPI" not in c.sources and "MPI" in c.sources),
                      key=lambda c: (-c.mask_drop, c.position))
    fpi_only = sorted((c for c in merged.values() if c.sources == {"FPI"}),
                      key=lambda c: (c.corpus_freq, c.position))
    ordered = [merged[p] for p in epi_positions] + mpi_only + fpi_only
    return ordered


@dataclass
class IdentificationScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    undefined_recall: bool = False

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else 0.0

    @property
    def fnr(self) -> float:
        return self.fn / (self.fn + self.tp) if self.fn + self.tp else 0.0


def eval_identification(predicted: list[int], truth: list[int], n_words: int) -> IdentificationScore:
    """Position-level confusion over an example's words (CLS excluded)."""
    pred = set(predicted)
    true = set(truth)
    score = IdentificationScore(
        tp=len(pred & true),
        fp=len(pred - true),
        fn=len(true - pred),
        undefined_recall=not true,
    )
    score.tn = n_words - score.tp - score.fp - score.fn
    return score


def aggregate_scores(scores: list[IdentificationScore]) -> IdentificationScore:
    """Micro aggregation: confusion cells summed across examples."""
    total = IdentificationScore()
    for s in scores:
        total.tp += s.tp
        total.fp += s.fp
        total.fn += s.fn
        total.tn += s.tn
        total.undefined_recall |= s.undefined_recall
    return total
