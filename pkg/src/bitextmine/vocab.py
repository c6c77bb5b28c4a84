"""Subword vocabulary with language-smoothed induction and greedy
longest-match tokenization.

Induction is merge-based: per-language token counts are reweighted by
(p_l**alpha)/p_l (alpha = smoothing exponent, upweighting low-resource
languages), then the most frequent adjacent piece pair is merged until
the target size is reached. The tokenizer side is greedy
longest-match-first within whitespace-split words, with ``##`` marking
word-internal continuation pieces.

Vocab file format: one piece per line, line number = id, first five
lines are the special tokens.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Sentence
from .errors import DataError

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)

CONTINUATION_MARKER = "##"


@dataclass
class Vocab:
    """Immutable-by-convention piece inventory with dense ids."""

    pieces: list[str]
    continuation_marker: str = CONTINUATION_MARKER
    piece_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if tuple(self.pieces[:5]) != SPECIAL_TOKENS:
            raise ValueError("first five pieces must be the special tokens")
        self.piece_to_id = {p: i for i, p in enumerate(self.pieces)}
        if len(self.piece_to_id) != len(self.pieces):
            raise ValueError("duplicate pieces in vocabulary")

    def __len__(self) -> int:
        return len(self.pieces)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.pieces) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            pieces = [line.rstrip("\n") for line in fh]
        while pieces and pieces[-1] == "":
            pieces.pop()
        try:
            return cls(pieces=pieces)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class TokenSequence:
    """Token ids for one sentence after encoding preparation."""

    ids: tuple[int, ...]
    lang: str = ""
    surface_len: int = 0


def _word_symbols(word: str) -> tuple[str, ...]:
    """Split a word into its initial character and ## continuations."""
    return (word[0],) + tuple(CONTINUATION_MARKER + c for c in word[1:])


def language_weights(
    token_counts: Mapping[str, int], smoothing_exponent: float
) -> dict[str, float]:
    """Per-language reweighting factors (p_l**alpha)/p_l.

    With alpha < 1 this upweights low-resource languages; alpha = 1 is
    the identity.
    """
    if not (0.0 < smoothing_exponent <= 1.0):
        raise ValueError(f"smoothing exponent must be in (0, 1], got {smoothing_exponent}")
    total = sum(token_counts.values())
    if total == 0:
        raise ValueError("no tokens in corpus")
    weights = {}
    for lang, count in token_counts.items():
        if count == 0:
            weights[lang] = 0.0
            continue
        p = count / total
        weights[lang] = p**smoothing_exponent / p
    return weights


def build_vocab(
    corpora: Mapping[str, Sequence[Sentence]],
    target_size: int,
    smoothing_exponent: float = 0.3,
    character_coverage: float = 1.0,
) -> Vocab:
    """Induce a subword vocabulary of exactly ``target_size`` pieces (or
    fewer if merges are exhausted first).

    Word counts are whitespace-based and case-preserving. Merge ties
    break on the lexicographically smallest symbol pair, so the build is
    deterministic for a given input.
    """
    if not (0.0 < character_coverage <= 1.0):
        raise ValueError(f"character_coverage must be in (0, 1], got {character_coverage}")

    word_counts: dict[str, dict[str, int]] = {}
    token_totals: dict[str, int] = {}
    for lang, sentences in corpora.items():
        counts: dict[str, int] = {}
        n = 0
        for sent in sentences:
            for word in sent.text.split():
                counts[word] = counts.get(word, 0) + 1
                n += 1
        word_counts[lang] = counts
        token_totals[lang] = n

    weights = language_weights(token_totals, smoothing_exponent)

    # Smoothed frequency per distinct word, merged across languages.
    weighted: dict[str, float] = {}
    for lang, counts in word_counts.items():
        w = weights[lang]
        for word, c in counts.items():
            weighted[word] = weighted.get(word, 0.0) + c * w

    # Character coverage: keep the most frequent characters covering the
    # requested fraction of character occurrences.
    char_occ: dict[str, float] = {}
    for word, f in weighted.items():
        for ch in word:
            char_occ[ch] = char_occ.get(ch, 0.0) + f
    ranked_chars = sorted(char_occ, key=lambda c: (-char_occ[c], c))
    covered: set[str] = set()
    running, total_occ = 0.0, sum(char_occ.values())
    for ch in ranked_chars:
        if running >= character_coverage * total_occ and covered:
            break
        covered.add(ch)
        running += char_occ[ch]

    # Initial symbol inventory: only forms that occur in covered words.
    sequences: dict[tuple[str, ...], float] = {}
    for word, f in weighted.items():
        if not all(ch in covered for ch in word):
            continue
        seq = _word_symbols(word)
        sequences[seq] = sequences.get(seq, 0.0) + f
    alphabet = sorted({sym for seq in sequences for sym in seq})

    if target_size <= len(SPECIAL_TOKENS) + len(alphabet):
        raise ValueError(
            f"target_size={target_size} must exceed specials+alphabet="
            f"{len(SPECIAL_TOKENS) + len(alphabet)}"
        )

    pieces = list(SPECIAL_TOKENS) + alphabet
    known = set(pieces)
    work = dict(sequences)
    while len(pieces) < target_size:
        pair_freq: dict[tuple[str, str], float] = {}
        for seq, f in work.items():
            for a, b in zip(seq, seq[1:]):
                pair_freq[(a, b)] = pair_freq.get((a, b), 0.0) + f
        if not pair_freq:
            break
        best = min(pair_freq, key=lambda p: (-pair_freq[p], p))
        a, b = best
        merged = a + b.removeprefix(CONTINUATION_MARKER)
        if merged not in known:
            pieces.append(merged)
            known.add(merged)
        new_work: dict[tuple[str, ...], float] = {}
        for seq, f in work.items():
            out: list[str] = []
            i = 0
            while i < len(seq):
                if i + 1 < len(seq) and seq[i] == a and seq[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            key = tuple(out)
            new_work[key] = new_work.get(key, 0.0) + f
        work = new_work

    return Vocab(pieces=pieces)


def word_tokens(word: str, vocab: Vocab) -> list[int]:
    """Greedy longest-match-first tokenization of a single word.

    Returns [UNK_ID] when any position fails to match.
    """
    table = vocab.piece_to_id
    marker = vocab.continuation_marker
    ids: list[int] = []
    start = 0
    while start < len(word):
        end = len(word)
        found = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = marker + piece
            tid = table.get(piece)
            if tid is not None:
                found = tid
                break
            end -= 1
        if found is None:
            return [UNK_ID]
        ids.append(found)
        start = end
    return ids


def tokenize(text: str, vocab: Vocab, max_len: int, lang: str = "") -> TokenSequence:
    """Whitespace pre-split, wordpiece-match per word, wrap with CLS/SEP.

    Truncation keeps the first max_len-2 content tokens.
    """
    if max_len < 3:
        raise ValueError(f"max_len must be >= 3, got {max_len}")
    content: list[int] = []
    for word in text.split():
        content.extend(word_tokens(word, vocab))
    content = content[: max_len - 2]
    ids = (CLS_ID, *content, SEP_ID)
    return TokenSequence(ids=ids, lang=lang, surface_len=len(text))


def tokenize_sentence(sentence: Sentence, vocab: Vocab, max_len: int) -> TokenSequence:
    return tokenize(sentence.text, vocab, max_len, lang=sentence.lang)


def detokenize(tokens: TokenSequence | Sequence[int], vocab: Vocab) -> str:
    """Inverse of tokenize up to whitespace collapse, for UNK-free input."""
    ids = tokens.ids if isinstance(tokens, TokenSequence) else tokens
    marker = vocab.continuation_marker
    words: list[str] = []
    for tid in ids:
        if not 0 <= tid < len(vocab):
            raise ValueError(f"token id {tid} out of range for vocab of {len(vocab)}")
        if tid in (PAD_ID, CLS_ID, SEP_ID):
            continue
        piece = vocab.pieces[tid]
        if piece.startswith(marker) and words:
            words[-1] += piece[len(marker):]
        else:
            words.append(piece)
    return " ".join(words)
