"""Shared fixtures: small corpora and trained toy models.

The corpus recipe plants three word tiers so the attack/defense loop has
realistic structure: strong keywords appear only in their own class, mild
words lean 80/20 toward one class (docs carrying a mild word of the opposite
class are the ones character erasure can flip), and rare words occur once or
twice in one class (word substitutions toward them flip the model, and their
tiny corpus frequency makes them identifiable).
"""

from __future__ import annotations

import numpy as np
import pytest

from itdt import model as tm

STRONG = {0: ["excellent", "great", "wonderful", "superb"],
          1: ["terrible", "awful", "horrible", "dreadful"]}
MILD = {0: ["tasty", "pleasant"], 1: ["bland", "noisy"]}
RARE = {0: ["topnotch", "firstclass"], 1: ["atrocious", "abysmal"]}
FILLERS = ["the", "food", "was", "very", "and", "we", "it", "place", "staff",
           "really", "for", "with", "this", "that", "had"]


def build_separable_corpus(n_docs: int = 240, seed: int = 0, mild_prob: float = 0.6,
                           cross_prob: float = 0.25, rare_occurrences: int = 2):
    """Two-class keyword corpus; see module docstring for the tier layout."""
    rng = np.random.default_rng(seed)
    dataset = []
    for i in range(n_docs):
        label = i % 2
        words = list(rng.choice(FILLERS, size=rng.integers(5, 10)))
        words.insert(rng.integers(0, len(words) + 1), str(rng.choice(STRONG[label])))
        if rng.random() < mild_prob:
            side = 1 - label if rng.random() < cross_prob else label
            words.insert(rng.integers(0, len(words) + 1), str(rng.choice(MILD[side])))
        dataset.append((f"doc-{i}", " ".join(words), label))
    # rare words: a couple of occurrences, each the only class evidence in its
    # doc so the trained model must learn the association
    idx = 0
    for label in (0, 1):
        for word in RARE[label]:
            for _ in range(rare_occurrences):
                fill = " ".join(rng.choice(FILLERS, size=6))
                dataset.append((f"rare-{idx}", f"{fill} {word}", label))
                idx += 1
    words = {"pos": STRONG[0], "neg": STRONG[1], "mild_pos": MILD[0],
             "mild_neg": MILD[1], "rare_pos": RARE[0], "rare_neg": RARE[1],
             "fillers": FILLERS}
    return dataset, words


@pytest.fixture(scope="session")
def separable_corpus():
    return build_separable_corpus()


@pytest.fixture(scope="session")
def keyword_model(separable_corpus):
    """Small classifier trained to saturation on the separable corpus."""
    dataset, words = separable_corpus
    cfg = tm.ModelConfig(layers=2, heads=2, dim=16, ff_dim=32, epochs=10, seed=1,
                         learning_rate=5e-3, mask_prob=0.1)
    model = tm.train_classifier(dataset, cfg)
    return model, words


@pytest.fixture(scope="session")
def desk_kit(keyword_model, separable_corpus, tmp_path_factory):
    """Trained model + resources + detector, enough to build pipelines."""
    from itdt import attacks as atk
    from itdt import datasets as ds
    from itdt.detector import train_detector_from_vectors
    from itdt.features import extract_features
    from itdt.transform import TransformResources
    from itdt.vocab import tokenize

    model, words = keyword_model
    train_set, _ = separable_corpus
    root = tmp_path_factory.mktemp("desk-kit")
    syn_path = str(root / "synonyms.txt")
    vec_path = str(root / "vectors.txt")
    ds.write_synonym_lexicon(syn_path)
    ds.write_vector_file(vec_path)
    resources = TransformResources(
        model.vocab, synonym_path=syn_path, vectors_path=vec_path,
        corpus_texts=[t for _, t, _ in train_set],
    )

    test_docs = build_separable_corpus(n_docs=80, seed=7)[0][:80]
    adv_records = []
    for name in ("charlevel", "wordlevel", "multilevel"):
        recs, _ = atk.run_attack(name, model, test_docs, budget=3,
                                 resources=resources, limit=15)
        adv_records.extend(recs)

    fvs = []
    for ex_id, text, _label in test_docs:
        seq = tokenize(text, model.vocab, example_id=ex_id)
        fvs.append(extract_features(seq, model, label=0, attack_tag="clean"))
    for rec in adv_records:
        seq = tokenize(rec.adv_text, model.vocab, example_id=rec.example_id)
        fvs.append(extract_features(seq, model, label=1, attack_tag=rec.attack_name))
    detector, report = train_detector_from_vectors(fvs)
    return {
        "model": model,
        "words": words,
        "resources": resources,
        "detector": detector,
        "detector_report": report,
        "adv_records": adv_records,
        "test_docs": test_docs,
        "corpus": train_set,
    }
