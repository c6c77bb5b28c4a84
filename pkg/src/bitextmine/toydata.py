"""Synthetic bilingual corpus generator for demos and the acceptance
suite: two artificial "languages" related by a deterministic word-level
cipher, so retrieval quality is measurable without real data.

Source words are CVCV syllables over one letter set, target words over a
disjoint set; each source word maps to exactly one target word. Pairs
are word-for-word translations. Sentences are deduplicated on their word
multiset so that mean-pooled embeddings stay distinguishable, and the
test split is disjoint from training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Sentence, SentencePair

SRC_LANG = "aa"
TGT_LANG = "bb"

_SRC_CONSONANTS = "bdfgk"
_SRC_VOWELS = "aei"
_TGT_CONSONANTS = "mnprs"
_TGT_VOWELS = "ouy"


@dataclass
class ToyCorpus:
    train_pairs: list[SentencePair]
    test_pairs: list[SentencePair]
    mono_sentences: list[Sentence]  # both sides of the training pairs
    cipher: dict[str, str]


def _word_inventory(consonants: str, vowels: str) -> list[str]:
    return [
        c1 + v1 + c2 + v2
        for c1 in consonants
        for v1 in vowels
        for c2 in consonants
        for v2 in vowels
    ]


def make_toy_corpus(
    n_train: int = 5000,
    n_test: int = 1000,
    seed: int = 0,
    lexicon_size: int = 60,
    min_words: int = 3,
    max_words: int = 8,
    mispair_fraction: float = 0.0,
) -> ToyCorpus:
    """Build aligned train/test pairs under a fixed word-level cipher.

    ``mispair_fraction`` > 0 randomly rotates that fraction of the
    *training* targets among themselves, simulating noisy alignment;
    the test split always stays clean.
    """
    rng = np.random.default_rng(seed)
    src_all = _word_inventory(_SRC_CONSONANTS, _SRC_VOWELS)
    tgt_all = _word_inventory(_TGT_CONSONANTS, _TGT_VOWELS)
    if lexicon_size > len(src_all):
        raise ValueError(f"lexicon_size must be <= {len(src_all)}")
    src_words = [src_all[i] for i in rng.permutation(len(src_all))[:lexicon_size]]
    tgt_words = [tgt_all[i] for i in rng.permutation(len(tgt_all))[:lexicon_size]]
    cipher = dict(zip(src_words, tgt_words))

    seen: set[tuple[str, ...]] = set()
    sentences: list[list[str]] = []
    while len(sentences) < n_train + n_test:
        n = int(rng.integers(min_words, max_words + 1))
        words = [src_words[i] for i in rng.integers(0, lexicon_size, size=n)]
        key = tuple(sorted(words))
        if key in seen:
            continue
        seen.add(key)
        sentences.append(words)

    def pair(i: int, words: list[str], split: str) -> SentencePair:
        src_text = " ".join(words)
        tgt_text = " ".join(cipher[w] for w in words)
        return SentencePair(
            src=Sentence(id=f"{split}-{i}-s", lang=SRC_LANG, text=src_text),
            tgt=Sentence(id=f"{split}-{i}-t", lang=TGT_LANG, text=tgt_text),
        )

    train = [pair(i, words, "train") for i, words in enumerate(sentences[:n_train])]
    test = [pair(i, words, "test") for i, words in enumerate(sentences[n_train:])]

    if mispair_fraction > 0.0:
        k = int(round(mispair_fraction * len(train)))
        if k >= 2:
            chosen = rng.permutation(len(train))[:k]
            # cyclic shift among the chosen slots guarantees a wrong target
            shifted = [train[i].tgt for i in np.roll(chosen, 1)]
            for slot, tgt in zip(chosen, shifted):
                train[slot] = SentencePair(src=train[slot].src, tgt=tgt)

    mono = [p.src for p in train] + [p.tgt for p in train]
    return ToyCorpus(train_pairs=train, test_pairs=test, mono_sentences=mono, cipher=cipher)
