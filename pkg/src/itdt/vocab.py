"""Word-level vocabulary with corpus frequencies and lexical flags.

The vocabulary is built from the training corpus and is the single source of
word frequency used by the frequency-based identification rule, the attention
outlier rule (stopword clause) and the candidate scoring in the transform
stage.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import EmptyInput

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
MASK_TOKEN = "[MASK]"
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, MASK_TOKEN)

# Words split on anything that is not alphanumeric, a homoglyph symbol, or a
# word-internal hyphen/apostrophe ("first-class" stays one token).
_WORD_RE = re.compile(r"[a-z0-9@$]+(?:[-'][a-z0-9@$]+)*")

STOPWORDS = frozenset(
    """a an and are as at be but by for from had has have if in into is it its of on or
    so such that the their then there these this to was were will with""".split()
)

PRONOUNS = frozenset(
    """i me my mine myself we us our ours ourselves you your yours yourself he him his
    himself she her hers herself it itself they them theirs themselves who whom whose
    this that these those""".split()
)

# Closed list of frequent nouns plus derivational suffixes; a real POS tagger
# is out of scope, so the tagger is deliberately conservative.
_COMMON_NOUNS = frozenset(
    """food service place staff room time day people price menu table order dinner
    lunch night meal drink experience location atmosphere music city street house
    movie film story actor plot scene book author world life way thing man woman
    year week area water coffee breakfast hotel waiter manager review kitchen""".split()
)
_NOUN_SUFFIXES = ("tion", "sion", "ment", "ness", "ance", "ence", "ship", "hood", "ity")


def is_noun_like(word: str) -> bool:
    """Lexicon plus suffix heuristic used when assigning noun flags."""
    return word in _COMMON_NOUNS or (len(word) > 5 and word.endswith(_NOUN_SUFFIXES))


def split_words(text: str) -> list[str]:
    """Lowercase and split a raw string into word tokens."""
    return _WORD_RE.findall(text.lower())


@dataclass
class TokenSequence:
    """A tokenized example: word tokens with CLS prepended at position 0."""

    example_id: str
    raw_text: str
    tokens: list[str]
    ids: list[int]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def words(self) -> list[str]:
        """Word tokens with the CLS slot excluded."""
        return self.tokens[1:]

    def detokenize(self) -> str:
        return " ".join(self.words)

    def replaced(self, position: int, word: str, word_id: int) -> "TokenSequence":
        """Copy with one word slot substituted (position counts CLS)."""
        tokens = list(self.tokens)
        ids = list(self.ids)
        tokens[position] = word
        ids[position] = word_id
        return TokenSequence(self.example_id, self.raw_text, tokens, ids)


@dataclass
class Vocabulary:
    """Token table with inverse maps, corpus counts and per-token flags."""

    token_to_id: dict[str, int] = field(default_factory=dict)
    id_to_token: list[str] = field(default_factory=list)
    corpus_count: dict[str, int] = field(default_factory=dict)
    total_token_count: int = 0
    stopword_flags: dict[str, bool] = field(default_factory=dict)
    pronoun_flags: dict[str, bool] = field(default_factory=dict)
    noun_flags: dict[str, bool] = field(default_factory=dict)

    pad_id: int = 0
    unk_id: int = 1
    cls_id: int = 2
    mask_id: int = 3

    @classmethod
    def build(cls, texts: list[str]) -> "Vocabulary":
        """Count word tokens over a corpus and assign ids (reserved ids first)."""
        vocab = cls()
        for tok in RESERVED_TOKENS:
            vocab._add_token(tok, reserved=True)
        counts: dict[str, int] = {}
        for text in texts:
            for word in split_words(text):
                counts[word] = counts.get(word, 0) + 1
        for word in sorted(counts):
            vocab._add_token(word)
            vocab.corpus_count[word] = counts[word]
        vocab.total_token_count = sum(counts.values())
        return vocab

    def _add_token(self, token: str, reserved: bool = False) -> int:
        idx = len(self.id_to_token)
        self.token_to_id[token] = idx
        self.id_to_token.append(token)
        self.corpus_count[token] = 0
        self.stopword_flags[token] = (not reserved) and token in STOPWORDS
        self.pronoun_flags[token] = (not reserved) and token in PRONOUNS
        self.noun_flags[token] = (not reserved) and is_noun_like(token)
        return idx

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, word: str) -> bool:
        return word in self.token_to_id

    def id_of(self, word: str) -> int:
        return self.token_to_id.get(word, self.unk_id)

    def relative_frequency(self, word: str) -> float:
        """Corpus frequency in [0, 1]; unknown words have frequency 0."""
        if self.total_token_count == 0:
            return 0.0
        return self.corpus_count.get(word, 0) / self.total_token_count

    def max_relative_frequency(self) -> float:
        if self.total_token_count == 0:
            return 0.0
        return max(self.corpus_count.values()) / self.total_token_count

    def is_stopword(self, word: str) -> bool:
        return self.stopword_flags.get(word, False)

    def is_pronoun(self, word: str) -> bool:
        return self.pronoun_flags.get(word, False)

    def is_noun(self, word: str) -> bool:
        return self.noun_flags.get(word, False)

    def to_dict(self) -> dict:
        n = len(self.id_to_token)
        return {
            "tokens": list(self.id_to_token),
            "counts": [self.corpus_count[self.id_to_token[i]] for i in range(n)],
            "stopword": [int(self.stopword_flags[t]) for t in self.id_to_token],
            "pronoun": [int(self.pronoun_flags[t]) for t in self.id_to_token],
            "noun": [int(self.noun_flags[t]) for t in self.id_to_token],
            "total_token_count": self.total_token_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        vocab = cls()
        for i, tok in enumerate(data["tokens"]):
            vocab.token_to_id[tok] = i
            vocab.id_to_token.append(tok)
            vocab.corpus_count[tok] = int(data["counts"][i])
            vocab.stopword_flags[tok] = bool(data["stopword"][i])
            vocab.pronoun_flags[tok] = bool(data["pronoun"][i])
            vocab.noun_flags[tok] = bool(data["noun"][i])
        vocab.total_token_count = int(data["total_token_count"])
        return vocab


def tokenize(text: str, vocab: Vocabulary, example_id: str = "") -> TokenSequence:
    """Lowercase, split into word tokens, map OOV to UNK and prepend CLS.

    Raises EmptyInput for strings that are empty after whitespace
    normalization or contain no word characters.
    """
    if not text or not text.strip():
        raise EmptyInput("text is empty after whitespace normalization")
    words = split_words(text)
    if not words:
        raise EmptyInput(f"no word tokens in {text!r}")
    tokens = [CLS_TOKEN] + words
    ids = [vocab.cls_id] + [vocab.id_of(w) for w in words]
    return TokenSequence(example_id=example_id, raw_text=text, tokens=tokens, ids=ids)
