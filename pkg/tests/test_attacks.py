"""Attack harness tests: importance ranking, greedy edits, record invariants."""

from __future__ import annotations

import numpy as np
import pytest

from itdt import attacks as atk
from itdt import model as tm
from itdt.transform import TransformResources
from itdt.vocab import Vocabulary, tokenize


@pytest.fixture(scope="module")
def attack_model(keyword_model):
    model, words = keyword_model
    return tm.surrogate(model), words


def test_word_importance_keyword_first(attack_model):
    model, words = attack_model
    # masking the lone negative keyword collapses the prediction to the
    # filler prior, so it must rank first
    seq = tokenize("the food was terrible and really great", model.vocab)
    ranking = atk.word_importance(model, seq)
    top_word = seq.tokens[ranking[0][0]]
    assert top_word in set(words["neg"])


def test_word_importance_tie_break_is_position_order(attack_model):
    model, _ = attack_model
    seq = tokenize("the the the", model.vocab)
    ranking = atk.word_importance(model, seq)
    drops = [d for _, d in ranking]
    if len(set(np.round(drops, 12))) == 1:
        assert [p for p, _ in ranking] == [1, 2, 3]


def test_word_importance_constant_model_position_order():
    vocab = Vocabulary.build(["one two three four"])
    cfg = tm.ModelConfig(layers=1, heads=1, dim=8, ff_dim=16, seed=0)
    model = tm.init_classifier(cfg, vocab)
    model.params["wout"][:] = 0.0
    model.params["bout"][:] = 0.0
    seq = tokenize("one two three four", vocab)
    ranking = atk.word_importance(model, seq)
    assert [p for p, _ in ranking] == [1, 2, 3, 4]
    assert all(d == 0.0 for _, d in ranking)


def test_char_variants_cover_the_four_ops():
    variants = atk.char_variants("cast")
    assert "acst" in variants          # adjacent swap
    assert "c4st" in variants or "c@st" in variants  # homoglyph
    assert "cst" in variants           # deletion
    assert "ccast" in variants         # insertion
    assert "cast" not in variants


def test_char_variants_never_delete_single_char_word():
    variants = atk.char_variants("a", ops=("delete",))
    assert variants == []


def test_char_attack_flips_keyword_model(attack_model):
    model, words = attack_model
    seq = tokenize("the food was terrible and really noisy", model.vocab, example_id="c1")
    result = atk.char_attack(model, seq, budget=3)
    assert isinstance(result, atk.AdversarialRecord)
    pred_orig = tm.forward(model, tokenize(result.orig_text, model.vocab))
    pred_adv = tm.forward(model, tokenize(result.adv_text, model.vocab))
    assert pred_orig.label == result.orig_label
    assert pred_adv.label != result.orig_label
    assert result.perturbed_positions
    orig_words = result.orig_text.split()
    adv_words = result.adv_text.split()
    assert len(orig_words) == len(adv_words)
    for pos in result.perturbed_positions:
        assert orig_words[pos] != adv_words[pos]


def test_char_attack_budget_zero_fails(attack_model):
    model, _ = attack_model
    seq = tokenize("the food was excellent", model.vocab)
    result = atk.char_attack(model, seq, budget=0)
    assert isinstance(result, atk.AttackFailure)


def test_char_attack_constant_model_fails():
    vocab = Vocabulary.build(["one two three"])
    cfg = tm.ModelConfig(layers=1, heads=1, dim=8, ff_dim=16, seed=0)
    model = tm.init_classifier(cfg, vocab)
    model.params["wout"][:] = 0.0
    model.params["bout"][:] = 0.0
    seq = tokenize("one two three", vocab)
    result = atk.char_attack(model, seq, budget=10)
    assert isinstance(result, atk.AttackFailure)
    assert result.queries_used > 0


def test_greedy_minimality_last_edit_mattered(attack_model):
    model, _ = attack_model
    seq = tokenize("the food was terrible and really noisy", model.vocab)
    result = atk.char_attack(model, seq, budget=3)
    assert isinstance(result, atk.AdversarialRecord)
    # reverting the flip edit restores the original label: greedy only stops
    # at the step where the flip happened
    orig_words = result.orig_text.split()
    adv_words = result.adv_text.split()
    flip_pos = result.perturbed_positions[-1]
    reverted = list(adv_words)
    reverted[flip_pos] = orig_words[flip_pos]
    # the last applied edit is the flip edit only when a single word changed;
    # with several edits, revert all but the earliest edits instead
    if len(result.perturbed_positions) == 1:
        pred = tm.forward(model, tokenize(" ".join(reverted), model.vocab))
        assert pred.label == result.orig_label


def test_word_attack_with_planted_synonym(tmp_path, attack_model):
    model, words = attack_model
    syn = tmp_path / "syn.txt"
    # planted synonym pair: the lexicon maps the positive keyword to a rare
    # word the model associates with the other class, so one substitution flips
    syn.write_text("excellent: atrocious\ngreat: abysmal\n")
    res = TransformResources(model.vocab, synonym_path=str(syn))
    seq = tokenize("the food was excellent", model.vocab, example_id="w1")
    result = atk.word_attack(model, seq, budget=2, resources=res)
    assert isinstance(result, atk.AdversarialRecord)
    assert result.attack_name == "wordlevel"
    assert "atrocious" in result.adv_text.split() or "abysmal" in result.adv_text.split()


def test_word_attack_without_candidates_fails(tmp_path, attack_model):
    model, _ = attack_model
    syn = tmp_path / "syn.txt"
    syn.write_text("unrelated: word\n")
    res = TransformResources(model.vocab, synonym_path=str(syn))
    seq = tokenize("the food was excellent", model.vocab)
    result = atk.word_attack(model, seq, budget=2, resources=res)
    assert isinstance(result, atk.AttackFailure)


def test_word_attack_budget_saturation_reports_queries(tmp_path, attack_model):
    model, _ = attack_model
    syn = tmp_path / "syn.txt"
    syn.write_text("was: is\n")  # harmless filler substitution, no flip
    res = TransformResources(model.vocab, synonym_path=str(syn))
    seq = tokenize("the food was excellent", model.vocab)
    result = atk.word_attack(model, seq, budget=1, resources=res)
    assert isinstance(result, atk.AttackFailure)
    assert result.queries_used > 0


def test_multilevel_attack_pool_is_union(tmp_path, attack_model):
    model, _ = attack_model
    syn = tmp_path / "syn.txt"
    syn.write_text("terrible: topnotch\n")
    res = TransformResources(model.vocab, synonym_path=str(syn))
    seq = tokenize("the food was terrible and really noisy", model.vocab, example_id="m1")
    result = atk.multilevel_attack(model, seq, budget=3, resources=res)
    assert isinstance(result, atk.AdversarialRecord)
    assert result.attack_name == "multilevel"


def test_insertion_only_attack_variant_tag(attack_model):
    model, _ = attack_model
    seq = tokenize("the food was terrible and really noisy", model.vocab, example_id="i1")
    result = atk.insertion_only_attack(model, seq, budget=3)
    if isinstance(result, atk.AdversarialRecord):
        assert result.attack_variant == "insertion_only"
        assert result.attack_name == "charlevel"
        # insertions only: every perturbed word is one char longer per edit
        for pos in result.perturbed_positions:
            assert len(result.adv_text.split()[pos]) > len(result.orig_text.split()[pos])


def test_records_round_trip(tmp_path, attack_model):
    model, _ = attack_model
    seq = tokenize("the food was terrible and really noisy", model.vocab, example_id="r1")
    result = atk.char_attack(model, seq, budget=3)
    assert isinstance(result, atk.AdversarialRecord)
    path = tmp_path / "adv.jsonl"
    atk.save_records([result], str(path))
    loaded = atk.load_records(str(path))
    assert loaded == [result]


def test_run_attack_filters_misclassified(attack_model):
    model, _ = attack_model
    dataset = [
        ("ok", "the food was terrible and really noisy", 1),
        ("mislabeled", "the food was terrible and really noisy", 0),
    ]
    records, failures = atk.run_attack("charlevel", model, dataset, budget=3)
    ids = {r.example_id for r in records} | {f.example_id for f in failures}
    assert "mislabeled" not in ids
