"""Corpus ingestion: filtering, per-language-pair capping, score-based
selection, and vocabulary-coverage diagnostics.

File formats handled here:
  * monolingual corpus: one sentence per line, UTF-8, optional leading
    ``lang<TAB>`` prefix;
  * bilingual pairs: headerless TSV with columns src_lang, tgt_lang,
    src_text, tgt_text and an optional fifth score column.
"""

from __future__ import annotations

import math
import re
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

# Character counts below are Unicode scalar values (len of a str), not bytes.
DEFAULT_MIN_CHARS = 10
DEFAULT_MAX_CHARS = 5000
DEFAULT_PAIR_CAP = 100_000_000

_LANG_PREFIX_RE = re.compile(r"[a-z]{2,3}(?:[-_][a-z0-9]{2,8})?")


@dataclass(frozen=True)
class Sentence:
    """One sentence with an opaque id and a lowercase language tag."""

    id: str
    lang: str
    text: str

    def __post_init__(self) -> None:
        if not self.lang:
            raise ValueError("sentence language tag must be non-empty")


@dataclass(frozen=True)
class SentencePair:
    """An aligned source/target sentence pair with an optional quality score."""

    src: Sentence
    tgt: Sentence
    score: float | None = None

    def __post_init__(self) -> None:
        if self.score is not None and not math.isfinite(self.score):
            raise ValueError(f"pair score must be finite, got {self.score!r}")

    def lang_pair(self) -> tuple[str, str]:
        return (self.src.lang, self.tgt.lang)


@dataclass(frozen=True)
class CorpusStats:
    """Tokenization diagnostics for one corpus slice."""

    unknown_token_rate: float
    avg_token_length: float
    avg_sentence_length: float
    sentence_count: int


def filter_monolingual(
    lines: Sequence[Sentence],
    min_chars: int = DEFAULT_MIN_CHARS,
    max_chars: int = DEFAULT_MAX_CHARS,
) -> list[Sentence]:
    """Keep sentences whose character count lies in [min_chars, max_chars].

    Bounds are inclusive; order is preserved. Idempotent.
    """
    if min_chars < 0 or max_chars <= min_chars:
        raise ValueError(f"invalid bounds [{min_chars}, {max_chars}]")
    return [s for s in lines if min_chars <= len(s.text) <= max_chars]


def cap_pairs(
    pairs: Sequence[SentencePair],
    cap: int = DEFAULT_PAIR_CAP,
    key: Callable[[SentencePair], tuple[str, str]] | None = None,
) -> list[SentencePair]:
    """Keep at most ``cap`` pairs per language pair.

    Groups over ``cap`` retain the highest-scored pairs, ties broken by
    input order; output keeps the original input order. Any over-cap
    group containing unscored pairs is an error, since score-based
    capping is then required.
    """
    if cap <= 0:
        raise ValueError(f"cap must be positive, got {cap}")
    key = key or SentencePair.lang_pair
    groups: dict[tuple[str, str], list[int]] = {}
    for i, p in enumerate(pairs):
        groups.setdefault(key(p), []).append(i)

    keep: set[int] = set()
    for group_key, idxs in groups.items():
        if len(idxs) <= cap:
            keep.update(idxs)
            continue
        missing = [i for i in idxs if pairs[i].score is None]
        if missing:
            raise DataError(
                f"group {group_key} exceeds cap={cap} but has "
                f"{len(missing)} unscored pairs; cannot rank"
            )
        ranked = sorted(idxs, key=lambda i: (-pairs[i].score, i))  # type: ignore[operator]
        keep.update(ranked[:cap])
    return [p for i, p in enumerate(pairs) if i in keep]


def select_by_score(
    pairs: Sequence[SentencePair],
    scorer: Callable[[SentencePair], float],
    *,
    threshold: float | None = None,
    top_fraction: float | None = None,
) -> tuple[list[SentencePair], int]:
    """Select pairs by an external scorer.

    Exactly one of ``threshold`` (keep score >= tau) or ``top_fraction``
    (keep the ceil(f*n) best-scored of the n successfully scored pairs)
    must be given. Ties break by input order. Pairs on which the scorer
    raises are skipped; the skip count is returned alongside the
    selection.
    """
    if (threshold is None) == (top_fraction is None):
        raise ValueError("exactly one of threshold or top_fraction is required")
    if threshold is not None and not math.isfinite(threshold):
        raise ValueError(f"threshold must be finite, got {threshold!r}")
    if top_fraction is not None and not (0.0 < top_fraction <= 1.0):
        raise ValueError(f"top_fraction must be in (0, 1], got {top_fraction!r}")

    scored: list[tuple[int, SentencePair, float]] = []
    skipped = 0
    for i, p in enumerate(pairs):
        try:
            s = float(scorer(p))
        except Exception:
            skipped += 1
            continue
        scored.append((i, p, s))

    if threshold is not None:
        kept = [p for _, p, s in scored if s >= threshold]
        return kept, skipped

    n = len(scored)
    if n == 0:
        return [], skipped
    take = math.ceil(top_fraction * n)  # type: ignore[operator]
    ranked = sorted(scored, key=lambda t: (-t[2], t[0]))[:take]
    ranked.sort(key=lambda t: t[0])
    return [p for _, p, _ in ranked], skipped


def stored_score(pair: SentencePair) -> float:
    """Scorer reading the score already attached to a pair."""
    if pair.score is None:
        raise DataError(f"pair {pair.src.id}/{pair.tgt.id} carries no score")
    return pair.score


def cosine_pair_scorer(
    encode_text: Callable[[str], "object"],
) -> Callable[[SentencePair], float]:
    """Baseline quality scorer: cosine of the two sides under an encoder.

    ``encode_text`` must map a string to a unit-norm embedding vector.
    Stands in for an external pair-scoring model.
    """

    def score(pair: SentencePair) -> float:
        u = encode_text(pair.src.text)
        v = encode_text(pair.tgt.text)
        return float(sum(a * b for a, b in zip(u, v)))

    return score


def corpus_stats(sentences: Sequence[Sentence], vocab) -> CorpusStats:
    """Tokenize a corpus and report unknown-token rate and length averages.

    ``avg_token_length`` counts characters of matched surface pieces with
    the continuation marker stripped; unknown tokens have no matched
    surface and are excluded from that average. ``avg_sentence_length``
    counts tokens per sentence excluding special tokens.
    """
    from .vocab import UNK_ID, word_tokens

    token_total = 0
    unk_total = 0
    surface_chars = 0
    matched_tokens = 0
    marker = vocab.continuation_marker
    for sent in sentences:
        for word in sent.text.split():
            for tid in word_tokens(word, vocab):
                token_total += 1
                if tid == UNK_ID:
                    unk_total += 1
                else:
                    piece = vocab.pieces[tid]
                    if piece.startswith(marker):
                        piece = piece[len(marker):]
                    surface_chars += len(piece)
                    matched_tokens += 1
    n = len(sentences)
    if n == 0 or token_total == 0:
        return CorpusStats(0.0, 0.0, 0.0, n)
    return CorpusStats(
        unknown_token_rate=unk_total / token_total,
        avg_token_length=surface_chars / matched_tokens if matched_tokens else 0.0,
        avg_sentence_length=token_total / n,
        sentence_count=n,
    )


def format_stats_report(stats_by_lang: Mapping[str, CorpusStats]) -> str:
    """One line per language, space-separated name=value fields."""
    lines = []
    for lang in sorted(stats_by_lang):
        st = stats_by_lang[lang]
        lines.append(
            f"lang={lang} sentence_count={st.sentence_count}"
            f" unknown_token_rate={st.unknown_token_rate:.6f}"
            f" avg_token_length={st.avg_token_length:.6f}"
            f" avg_sentence_length={st.avg_sentence_length:.6f}"
        )
    return "\n".join(lines) + ("\n" if lines else "")


def read_monolingual(
    path: str | Path,
    default_lang: str = "und",
    id_prefix: str = "",
) -> list[Sentence]:
    """Read a one-sentence-per-line file, honoring optional lang prefixes.

    A line of the form ``lang<TAB>text`` (lang matching an ISO-639-style
    tag) sets that sentence's language; other lines get ``default_lang``.
    Sentence ids are 1-based line numbers with ``id_prefix`` prepended.
    """
    out: list[Sentence] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            lang, text = default_lang, line
            if "\t" in line:
                head, rest = line.split("\t", 1)
                if _LANG_PREFIX_RE.fullmatch(head):
                    lang, text = head, rest
            out.append(Sentence(id=f"{id_prefix}{lineno}", lang=lang, text=text))
    return out


def read_pairs_tsv(path: str | Path) -> list[SentencePair]:
    """Read headerless TSV pairs: src_lang, tgt_lang, src_text, tgt_text[, score]."""
    out: list[SentencePair] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) not in (4, 5):
                raise DataError(
                    f"{path}:{lineno}: expected 4 or 5 tab-separated columns, "
                    f"got {len(cols)}"
                )
            src_lang, tgt_lang, src_text, tgt_text = cols[:4]
            score = None
            if len(cols) == 5 and cols[4] != "":
                try:
                    score = float(cols[4])
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: bad score {cols[4]!r}") from exc
            try:
                out.append(
                    SentencePair(
                        src=Sentence(id=f"{lineno}:src", lang=src_lang, text=src_text),
                        tgt=Sentence(id=f"{lineno}:tgt", lang=tgt_lang, text=tgt_text),
                        score=score,
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def format_pairs_tsv(pairs: Iterable[SentencePair]) -> str:
    """Serialize pairs to the TSV wire format (scores with 6 decimals)."""
    rows = []
    for p in pairs:
        base = f"{p.src.lang}\t{p.tgt.lang}\t{p.src.text}\t{p.tgt.text}"
        rows.append(base if p.score is None else f"{base}\t{p.score:.6f}")
    return "\n".join(rows) + ("\n" if rows else "")
