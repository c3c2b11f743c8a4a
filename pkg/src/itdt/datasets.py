"""Synthetic desk-scale corpus plus resource files for the demo pipeline.

The generator plants three word tiers. Strong keywords appear only inside
their own class. Mild words skew roughly 3:1 toward one class, so some
documents carry weak counter-evidence. Rare words occur a handful of times as
the only class evidence in their documents, which forces the trained model to
learn them while keeping their corpus frequency under the identification
threshold. The vector file places each rare word close to a strong keyword of
the *other* class, mimicking the embedding-space confusion real substitution
attacks exploit: the attacker finds the confusable neighbor, and the defense
can walk the same edge back.
"""

from __future__ import annotations

import json
import os

import numpy as np

STRONG = {
    0: ["excellent", "great", "wonderful", "superb", "delightful", "fantastic"],
    1: ["terrible", "awful", "horrible", "dreadful", "disgusting", "miserable"],
}
MILD = {
    0: ["tasty", "pleasant", "friendly", "cozy"],
    1: ["bland", "noisy", "greasy", "crowded"],
}
# rare word -> the opposite-class keyword it shadows in vector space
CONFUSABLE = {
    "atrocious": ("excellent", 1),
    "abysmal": ("great", 1),
    "woeful": ("wonderful", 1),
    "topnotch": ("terrible", 0),
    "firstrate": ("awful", 0),
    "stellar": ("horrible", 0),
}
BENIGN_SYNONYMS = {
    "excellent": ["first-class", "superb", "great"],
    "great": ["excellent", "wonderful"],
    "wonderful": ["delightful", "great"],
    "superb": ["excellent", "fantastic"],
    "delightful": ["wonderful", "pleasant"],
    "fantastic": ["superb", "great"],
    "terrible": ["awful", "dreadful"],
    "awful": ["terrible", "horrible"],
    "horrible": ["dreadful", "awful"],
    "dreadful": ["terrible", "miserable"],
    "disgusting": ["horrible", "awful"],
    "miserable": ["dreadful", "terrible"],
}
FILLERS = ["the", "food", "was", "very", "and", "we", "it", "place", "staff",
           "really", "for", "with", "this", "that", "had", "service", "our",
           "visit", "table", "evening", "quite", "again"]


def _make_doc(rng, label: int, mild_prob: float, cross_prob: float) -> str:
    words = list(rng.choice(FILLERS, size=rng.integers(6, 12)))
    words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(STRONG[label])))
    if rng.random() < mild_prob:
        side = 1 - label if rng.random() < cross_prob else label
        words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(MILD[side])))
    return " ".join(words)


def generate_corpus(
    n_train: int = 2000,
    n_test: int = 500,
    seed: int = 0,
    rare_occurrences: int = 6,
    mild_prob: float = 0.6,
    cross_prob: float = 0.25,
):
    """Returns (train, test) lists of (id, text, label)."""
    rng = np.random.default_rng(seed)
    train = [(f"tr-{i}", _make_doc(rng, i % 2, mild_prob, cross_prob), i % 2)
             for i in range(n_train)]
    # rare confusable words only occur in training docs, as sole class evidence
    idx = 0
    for word, (_shadowed, label) in CONFUSABLE.items():
        for _ in range(rare_occurrences):
            fill = " ".join(rng.choice(FILLERS, size=int(rng.integers(6, 10))))
            train.append((f"tr-rare-{idx}", f"{fill} {word}", label))
            idx += 1
    test = [(f"te-{i}", _make_doc(rng, i % 2, mild_prob, cross_prob), i % 2)
            for i in range(n_test)]
    return train, test


def write_synonym_lexicon(path: str) -> None:
    """Benign synonym entries plus the symmetric confusable pairs."""
    lines = {}
    for word, syns in BENIGN_SYNONYMS.items():
        lines[word] = list(syns)
    for rare, (shadowed, _label) in CONFUSABLE.items():
        lines.setdefault(rare, []).append(shadowed)
        lines.setdefault(shadowed, []).append(rare)
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(lines):
            fh.write(f"{word}: {', '.join(dict.fromkeys(lines[word]))}\n")


def write_vector_file(path: str, seed: int = 0, dim: int = 8) -> None:
    """Small planted vector space: class clusters plus confusable shadows."""
    rng = np.random.default_rng(seed)
    vectors: dict[str, np.ndarray] = {}
    pos_axis = np.zeros(dim)
    pos_axis[0] = 1.0
    neg_axis = -pos_axis
    for i, word in enumerate(STRONG[0]):
        vectors[word] = pos_axis + 0.15 * rng.normal(size=dim)
    for i, word in enumerate(STRONG[1]):
        vectors[word] = neg_axis + 0.15 * rng.normal(size=dim)
    for word, syns in BENIGN_SYNONYMS.items():
        for syn in syns:
            if syn not in vectors:
                vectors[syn] = vectors[word] + 0.1 * rng.normal(size=dim)
    for rare, (shadowed, _label) in CONFUSABLE.items():
        vectors[rare] = vectors[shadowed] + 0.1 * rng.normal(size=dim)
    for word in MILD[0]:
        vectors[word] = 0.4 * pos_axis + 0.2 * rng.normal(size=dim)
    for word in MILD[1]:
        vectors[word] = 0.4 * neg_axis + 0.2 * rng.normal(size=dim)
    with open(path, "w", encoding="utf-8") as fh:
        for word, vec in sorted(vectors.items()):
            fh.write(word + " " + " ".join(f"{x:.6f}" for x in vec) + "\n")


def save_jsonl(dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex_id, text, label in dataset:
            fh.write(json.dumps({"id": ex_id, "text": text, "label": label}) + "\n")


def load_jsonl(path: str):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            out.append((str(row["id"]), str(row["text"]), int(row["label"])))
    return out


def write_all(directory: str, n_train: int = 2000, n_test: int = 500, seed: int = 0) -> dict:
    """Generate the full demo bundle; returns the file paths."""
    os.makedirs(directory, exist_ok=True)
    train, test = generate_corpus(n_train=n_train, n_test=n_test, seed=seed)
    paths = {
        "train": os.path.join(directory, "train.jsonl"),
        "test": os.path.join(directory, "test.jsonl"),
        "synonyms": os.path.join(directory, "synonyms.txt"),
        "vectors": os.path.join(directory, "vectors.txt"),
    }
    save_jsonl(train, paths["train"])
    save_jsonl(test, paths["test"])
    write_synonym_lexicon(paths["synonyms"])
    write_vector_file(paths["vectors"], seed=seed)
    return paths
