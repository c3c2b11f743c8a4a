"""Attack harness: labeled adversarial examples with known perturbed positions.

Greedy importance-ordered search over character edits (swap, homoglyph,
deletion, insertion), word substitutions drawn from the transform stage's
candidate generator, or the union of both pools. Every emitted record carries
the ground-truth perturbed positions so identification and transformation can
be scored.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .model import Classifier, forward, mask_at
from .transform import HOMOGLYPHS, HOMOGLYPHS_REVERSE, TransformResources, generate_candidates
from .vocab import TokenSequence, tokenize

CHAR_OPS = ("swap", "homoglyph", "delete", "insert")


@dataclass
class AdversarialRecord:
    example_id: str
    orig_text: str
    orig_label: int
    adv_text: str
    adv_label: int
    attack_name: str  # charlevel | wordlevel | multilevel
    perturbed_positions: list[int] = field(default_factory=list)  # word indices, CLS-exclusive
    queries_used: int = 0
    attack_variant: str = ""  # harness detail, e.g. "insertion_only" for the holdout

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "AdversarialRecord":
        return cls(**json.loads(line))


@dataclass
class AttackFailure:
    example_id: str
    attack_name: str
    queries_used: int
    reason: str = "no label flip within budget"


def word_importance(model: Classifier, seq: TokenSequence) -> list[tuple[int, float]]:
    """Positions ranked by the confidence drop when masked, descending.

    Ties resolve to the lower position index, so a constant model yields
    position order.
    """
    pred = forward(model, seq)
    base = float(pred.pcs[pred.label])
    ranked = []
    for pos in range(1, len(seq)):
        drop = base - float(forward(model, mask_at(seq, pos)).pcs[pred.label])
        ranked.append((pos, drop))
    ranked.sort(key=lambda t: (-t[1], t[0]))
    return ranked


def char_variants(word: str, ops=CHAR_OPS) -> list[str]:
    """Deterministic character-edit pool for one word."""
    variants: list[str] = []
    seen = {word}

    def add(w: str) -> None:
        if w and w not in seen:
            seen.add(w)
            variants.append(w)

    if "swap" in ops:
        for i in range(len(word) - 1):
            add(word[:i] + word[i + 1] + word[i] + word[i + 2:])
    if "homoglyph" in ops:
        for i, ch in enumerate(word):
            if ch in HOMOGLYPHS_REVERSE:
                for sym in HOMOGLYPHS_REVERSE[ch]:
                    add(word[:i] + sym + word[i + 1:])
            if ch in HOMOGLYPHS:
                add(word[:i] + HOMOGLYPHS[ch] + word[i + 1:])
    if "delete" in ops and len(word) >= 2:
        for i in range(len(word)):
            add(word[:i] + word[i + 1:])
    if "insert" in ops:
        for i in range(len(word)):
            add(word[: i + 1] + word[i] + word[i + 1:])
    return variants


def _greedy_attack(
    model: Classifier,
    seq: TokenSequence,
    budget: int,
    attack_name: str,
    variant_pool,
    attack_variant: str = "",
) -> AdversarialRecord | AttackFailure:
    """Shared greedy loop: per important word, apply the single edit that
    drops the original-label confidence the most; stop on flip or budget."""
    queries = 0

    def query(s: TokenSequence):
        nonlocal queries
        queries += 1
        return forward(model, s)

    base_pred = forward(model, seq)
    orig_label = base_pred.label
    working = seq
    current = float(base_pred.pcs[orig_label])
    perturbed: list[int] = []

    ranking = word_importance(model, seq)
    queries += len(ranking)

    for pos, _drop in ranking:
        if len(perturbed) >= budget:
            break
        variants = variant_pool(working.tokens[pos], pos, working)
        if not variants:
            continue
        best = None
        for cand in variants:
            trial = working.replaced(pos, cand, model.vocab.id_of(cand))
            pred = query(trial)
            score = current - float(pred.pcs[orig_label])
            if best is None or score > best[0]:
                best = (score, trial, pred)
        _, trial, pred = best
        working = trial
        perturbed.append(pos - 1)
        current = float(pred.pcs[orig_label])
        if pred.label != orig_label:
            return AdversarialRecord(
                example_id=seq.example_id,
                orig_text=seq.detokenize(),
                orig_label=orig_label,
                adv_text=working.detokenize(),
                adv_label=pred.label,
                attack_name=attack_name,
                perturbed_positions=sorted(perturbed),
                queries_used=queries,
                attack_variant=attack_variant,
            )
    return AttackFailure(seq.example_id, attack_name, queries)


def char_attack(
    model: Classifier,
    seq: TokenSequence,
    budget: int,
    ops=CHAR_OPS,
    attack_variant: str = "",
) -> AdversarialRecord | AttackFailure:
    """Character-level greedy attack over the edit pool `ops`."""
    name = "charlevel"
    return _greedy_attack(
        model, seq, budget, name,
        lambda word, pos, s: char_variants(word, ops=ops),
        attack_variant=attack_variant,
    )


def insertion_only_attack(model: Classifier, seq: TokenSequence, budget: int):
    """Holdout variant kept out of detector training (zero-day stand-in)."""
    return char_attack(model, seq, budget, ops=("insert",), attack_variant="insertion_only")


def word_attack(
    model: Classifier,
    seq: TokenSequence,
    budget: int,
    resources: TransformResources,
) -> AdversarialRecord | AttackFailure:
    """Word-level greedy attack using the defense's own candidate generator."""

    def pool(word, pos, s):
        return [c.token for c in generate_candidates(word, pos, s, resources)]

    return _greedy_attack(model, seq, budget, "wordlevel", pool)


def multilevel_attack(
    model: Classifier,
    seq: TokenSequence,
    budget: int,
    resources: TransformResources,
) -> AdversarialRecord | AttackFailure:
    """Union of the char edit pool and the word substitution pool per position."""

    def pool(word, pos, s):
        subs = [c.token for c in generate_candidates(word, pos, s, resources)]
        chars = char_variants(word)
        seen = set()
        out = []
        for cand in subs + chars:
            if cand not in seen:
                seen.add(cand)
                out.append(cand)
        return out

    return _greedy_attack(model, seq, budget, "multilevel", pool)


ATTACKS = {
    "charlevel": lambda model, seq, budget, resources: char_attack(model, seq, budget),
    "wordlevel": word_attack,
    "multilevel": multilevel_attack,
}


def run_attack(
    attack_name: str,
    model: Classifier,
    dataset: list[tuple[str, str, int]],
    budget: int,
    resources: TransformResources | None = None,
    limit: int | None = None,
) -> tuple[list[AdversarialRecord], list[AttackFailure]]:
    """Attack every correctly classified example in a dataset."""
    fn = ATTACKS[attack_name]
    records, failures = [], []
    for ex_id, text, label in dataset:
        if limit is not None and len(records) >= limit:
            break
        seq = tokenize(text, model.vocab, example_id=ex_id)
        if forward(model, seq).label != label:
            continue
        result = fn(model, seq, budget, resources)
        if isinstance(result, AdversarialRecord):
            records.append(result)
        else:
            failures.append(result)
    return records, failures


def save_records(records: list[AdversarialRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def load_records(path: str) -> list[AdversarialRecord]:
    with open(path, encoding="utf-8") as fh:
        return [AdversarialRecord.from_json(line) for line in fh if line.strip()]
