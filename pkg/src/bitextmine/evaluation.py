"""Retrieval evaluation: precision-at-1 over a pooled index, per-language
retrieval accuracy with grouped macro-averages, best-F1 threshold sweeps
over candidate pair lists, and arccos-similarity Pearson correlation.

Gold files are TSV ``src_id<TAB>tgt_id``; candidate files add a third
score column. Reports are line-delimited ``metric=value`` records plus a
JSON summary.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .vecindex import VectorIndex, build, search


@dataclass(frozen=True)
class GoldAlignment:
    """True translation pairs; each source has at most one gold target."""

    pairs: frozenset[tuple[str, str]]
    src_universe: frozenset[str]
    tgt_universe: frozenset[str]

    def __post_init__(self) -> None:
        srcs = [s for s, _ in self.pairs]
        if len(set(srcs)) != len(srcs):
            raise ValueError("a source id may appear at most once in the gold alignment")
        for s, t in self.pairs:
            if s not in self.src_universe or t not in self.tgt_universe:
                raise ValueError(f"gold pair ({s!r}, {t!r}) outside its universe")

    @classmethod
    def from_pairs(
        cls,
        pairs: Sequence[tuple[str, str]],
        src_universe: Sequence[str] | None = None,
        tgt_universe: Sequence[str] | None = None,
    ) -> "GoldAlignment":
        srcs = frozenset(src_universe) if src_universe is not None else frozenset(s for s, _ in pairs)
        tgts = frozenset(tgt_universe) if tgt_universe is not None else frozenset(t for _, t in pairs)
        return cls(pairs=frozenset(pairs), src_universe=srcs, tgt_universe=tgts)

    def target_of(self) -> dict[str, str]:
        return {s: t for s, t in self.pairs}


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    threshold: float


def p_at_1(
    src_embeddings: Mapping[str, np.ndarray],
    tgt_index: VectorIndex,
    gold: GoldAlignment,
) -> float:
    """Fraction of gold sources whose top-1 retrieved id is the gold target."""
    if not gold.pairs:
        raise ValueError("empty gold alignment")
    hits = 0
    for src_id, tgt_id in sorted(gold.pairs):
        if src_id not in src_embeddings:
            raise DataError(f"no embedding for gold source {src_id!r}")
        top_id, _ = search(tgt_index, src_embeddings[src_id], k=1)[0]
        hits += top_id == tgt_id
    return hits / len(gold.pairs)


@dataclass
class LanguagePool:
    """One language's aligned evaluation pool."""

    src_embeddings: dict[str, np.ndarray]
    tgt_embeddings: dict[str, np.ndarray]
    gold: GoldAlignment


@dataclass
class RetrievalGroupResult:
    per_language: dict[str, float]
    group_means: dict[str, float | None]
    missing: dict[str, list[str]]


def tatoeba_accuracy(
    per_language_sets: Mapping[str, LanguagePool],
    groups: Mapping[str, Sequence[str]] | None = None,
) -> RetrievalGroupResult:
    """Per-language P@1 within each language's own pool, plus unweighted
    macro-averages over named language groups.

    Languages referenced by a group but absent from the evaluation sets
    are excluded from the mean and reported under ``missing``.
    """
    per_language: dict[str, float] = {}
    for lang in sorted(per_language_sets):
        pool = per_language_sets[lang]
        ids = sorted(pool.tgt_embeddings)
        index = build(np.stack([pool.tgt_embeddings[i] for i in ids]), ids)
        per_language[lang] = p_at_1(pool.src_embeddings, index, pool.gold)

    group_means: dict[str, float | None] = {}
    missing: dict[str, list[str]] = {}
    for name, langs in (groups or {}).items():
        present = [l for l in langs if l in per_language]
        absent = [l for l in langs if l not in per_language]
        if absent:
            missing[name] = absent
        group_means[name] = (
            sum(per_language[l] for l in present) / len(present) if present else None
        )
    return RetrievalGroupResult(per_language=per_language, group_means=group_means, missing=missing)


def bucc_best_f1(
    candidates: Sequence[tuple[str, str, float]], gold: GoldAlignment
) -> PRF:
    """Sweep thresholds over the distinct candidate scores and return the
    PRF at the F1-maximizing threshold (ties favor the larger threshold).

    Candidates must be deduplicated on (src_id, tgt_id) and carry finite
    scores.
    """
    if not gold.pairs:
        raise ValueError("empty gold alignment")
    seen = set()
    for s, t, score in candidates:
        if not math.isfinite(score):
            raise ValueError(f"non-finite candidate score for ({s!r}, {t!r})")
        if (s, t) in seen:
            raise ValueError(f"duplicate candidate ({s!r}, {t!r})")
        seen.add((s, t))
    if not candidates:
        return PRF(0.0, 0.0, 0.0, float("nan"))

    ranked = sorted(candidates, key=lambda c: -c[2])
    gold_pairs = gold.pairs
    best: PRF | None = None
    tp = 0
    n_pred = 0
    i = 0
    while i < len(ranked):
        tau = ranked[i][2]
        while i < len(ranked) and ranked[i][2] == tau:
            s, t, _ = ranked[i]
            n_pred += 1
            tp += (s, t) in gold_pairs
            i += 1
        precision = tp / n_pred
        recall = tp / len(gold_pairs)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        if best is None or f1 > best.f1:
            best = PRF(precision=precision, recall=recall, f1=f1, threshold=tau)
    assert best is not None
    return best


def bucc_candidates(
    src_embeddings: Mapping[str, np.ndarray],
    tgt_index: VectorIndex,
    k: int = 1,
) -> list[tuple[str, str, float]]:
    """Nearest-neighbor candidate generation: top-k targets per source."""
    out: list[tuple[str, str, float]] = []
    for src_id in sorted(src_embeddings):
        for tgt_id, score in search(tgt_index, src_embeddings[src_id], k=k):
            out.append((src_id, tgt_id, score))
    return out


def arccos_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Angular similarity 1 - arccos(clamp(u.v, -1, 1)) / pi."""
    dot = float(np.clip(np.dot(u, v), -1.0, 1.0))
    return 1.0 - math.acos(dot) / math.pi

def sts_pearson(
    embedding_pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    gold_scores: Sequence[float],
) -> float:
    """Pearson correlation between arccos similarities and gold scores."""
    if len(embedding_pairs) != len(gold_scores):
        raise ValueError("one gold score per embedding pair is required")
    if len(embedding_pairs) < 2:
        raise ValueError("correlation needs at least 2 pairs")
    model = np.array([arccos_similarity(u, v) for u, v in embedding_pairs])
    gold = np.asarray(gold_scores, dtype=np.float64)
    for name, x in (("gold", gold), ("model", model)):
        if np.all(x == x[0]):
            raise ValueError(f"{name} scores are constant; correlation undefined")
    mx = model - model.mean()
    gx = gold - gold.mean()
    return float((mx @ gx) / math.sqrt((mx @ mx) * (gx @ gx)))


# ---------------------------------------------------------------------------
# Report and gold/candidate file handling.
# ---------------------------------------------------------------------------


def read_gold_tsv(path: str | Path) -> GoldAlignment:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise DataError(f"{path}:{lineno}: expected src_id<TAB>tgt_id")
            pairs.append((cols[0], cols[1]))
    try:
        return GoldAlignment.from_pairs(pairs)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def read_candidates_tsv(path: str | Path) -> list[tuple[str, str, float]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise DataError(f"{path}:{lineno}: expected src_id<TAB>tgt_id<TAB>score")
            try:
                out.append((cols[0], cols[1], float(cols[2])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad score {cols[2]!r}") from exc
    return out


def format_metric_lines(metrics: Mapping[str, object]) -> str:
    lines = []
    for name, value in metrics.items():
        if isinstance(value, float):
            lines.append(f"{name}={value:.6f}")
        else:
            lines.append(f"{name}={value}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_metrics_report(metrics: Mapping[str, object], path: str | Path) -> None:
    """Write metric=value lines plus a machine-readable JSON summary."""
    from .fileio import atomic_write_text

    atomic_write_text(path, format_metric_lines(metrics))
    atomic_write_text(
        str(path) + ".json", json.dumps(dict(metrics), indent=2, sort_keys=True) + "\n"
    )
