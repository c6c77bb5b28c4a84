"""Command-line entry point wiring the library into reproducible
pipelines.

Every command resolves its configuration from flags plus an optional
INI-style config file (flat key=value under a section named after the
subcommand; flags override file values), writes outputs atomically, and
drops a JSON run manifest beside each output recording the resolved
config, input digests, seed, artifact paths, and wall-clock duration.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Logs go to stderr; data only ever goes to files.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .errors import DataError, NumericalError, UsageError

# Heavy imports (numpy and the numeric modules) happen inside command
# handlers so that --deterministic can pin the BLAS thread count first.

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors on exit code 1 instead of 2."""

    def error(self, message: str) -> "None":
        self.exit(1, f"{self.prog}: error: {message}\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# Run manifests.
# ---------------------------------------------------------------------------


def _digest_inputs(paths: list[str | Path]) -> dict[str, str]:
    from .fileio import sha256_file

    digests = {}
    for p in paths:
        p = Path(p)
        if p.is_file():
            digests[str(p)] = sha256_file(p)
    return digests


def _write_manifest(
    command: str,
    args: argparse.Namespace,
    inputs: list,
    outputs: list,
    started: float,
) -> None:
    from .fileio import atomic_write_text

    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k not in ("func", "command", "config") and not k.startswith("_")
    }
    manifest = {
        "command": command,
        "config": config,
        "inputs": _digest_inputs(inputs),
        "seed": getattr(args, "seed", None),
        "outputs": [str(o) for o in outputs],
        "duration_s": round(time.time() - started, 3),
    }
    primary = Path(str(outputs[0]))
    dest = primary / "manifest.json" if primary.is_dir() else Path(str(primary) + ".manifest.json")
    atomic_write_text(dest, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Shared loading helpers.
# ---------------------------------------------------------------------------


def _load_vocab(path):
    from .vocab import Vocab

    return Vocab.load(path)


def _load_params(path):
    from .trainer import load_checkpoint

    params, _ = load_checkpoint(path)
    return params


def _read_mono(path, lang):
    from .corpus import read_monolingual

    sentences = read_monolingual(path, default_lang=lang)
    if not sentences:
        raise DataError(f"{path}: no sentences")
    return sentences


def _encode_pool(params, vocab, sentences):
    import numpy as np

    from .encoder import encode_batch
    from .vocab import tokenize_sentence

    seqs = [tokenize_sentence(s, vocab, params.config.max_seq_len) for s in sentences]
    return encode_batch(params, seqs)


def _pool_as_map(path):
    from .vecindex import read_pool

    vectors, ids = read_pool(path)
    assert ids is not None
    return {i: vectors[k] for k, i in enumerate(ids)}, vectors, ids


# ---------------------------------------------------------------------------
# Command handlers.
# ---------------------------------------------------------------------------


def cmd_build_vocab(args) -> None:
    started = time.time()
    from .vocab import build_vocab

    corpora: dict[str, list] = {}
    for path in args.mono or []:
        for s in _read_mono(path, args.lang):
            corpora.setdefault(s.lang, []).append(s)
    if args.pairs:
        from .corpus import read_pairs_tsv

        for p in read_pairs_tsv(args.pairs):
            corpora.setdefault(p.src.lang, []).append(p.src)
            corpora.setdefault(p.tgt.lang, []).append(p.tgt)
    if not corpora:
        raise UsageError("build-vocab needs --mono and/or --pairs")
    try:
        vocab = build_vocab(
            corpora,
            target_size=args.target_size,
            smoothing_exponent=args.smoothing,
            character_coverage=args.coverage,
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    vocab.save(args.out)
    _log(f"build-vocab: {len(vocab)} pieces -> {args.out}")
    _write_manifest("build-vocab", args, (args.mono or []) + ([args.pairs] if args.pairs else []), [args.out], started)


def _parse_stages(layers_csv: str, steps_csv: str):
    from .trainer import Stage

    layers = [int(x) for x in layers_csv.split(",") if x]
    steps = [int(x) for x in steps_csv.split(",") if x]
    if len(layers) != len(steps) or not layers:
        raise UsageError("--stage-layers and --stage-steps must list the same count")
    return [Stage(num_layers=l, steps=s) for l, s in zip(layers, steps)]


def cmd_pretrain(args) -> None:
    started = time.time()
    from .corpus import read_pairs_tsv
    from .encoder import EncoderConfig, init_params
    from .trainer import TrainConfig, pretrain, save_checkpoint

    vocab = _load_vocab(args.vocab)
    mono = []
    for path in args.mono or []:
        mono.extend(_read_mono(path, args.lang))
    pairs = read_pairs_tsv(args.pairs) if args.pairs else []
    stages = _parse_stages(args.stage_layers, args.stage_steps)
    mlm_share, _, tlm_share = args.mix.partition(":")
    config = TrainConfig(
        batch_size=args.batch_size,
        steps=max(s.steps for s in stages),
        learning_rate=args.lr,
        seed=args.seed,
    )
    enc_config = EncoderConfig(
        vocab_size=len(vocab),
        hidden_dim=args.hidden_dim,
        num_layers=stages[0].num_layers,
        max_seq_len=args.max_seq_len,
        embed_dim=args.embed_dim,
    )
    params = init_params(enc_config, seed=args.seed)
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log")
    with open(log_path, "w", encoding="utf-8") as log:
        params = pretrain(
            params,
            mono,
            pairs,
            config,
            stages,
            vocab,
            mask_fraction=args.mask_fraction,
            mask_cap=args.mask_cap,
            mix=(int(mlm_share), int(tlm_share)),
            log=log,
        )
    save_checkpoint(params, None, args.out)
    _log(f"pretrain: {sum(s.steps for s in stages)} steps -> {args.out}")
    inputs = (args.mono or []) + ([args.pairs] if args.pairs else []) + [args.vocab]
    _write_manifest("pretrain", args, inputs, [args.out, log_path], started)


def cmd_train(args) -> None:
    started = time.time()
    from .corpus import read_pairs_tsv
    from .encoder import EncoderConfig, init_params
    from .trainer import (
        TrainConfig,
        finetune_dual_encoder,
        load_checkpoint,
        save_checkpoint,
    )

    vocab = _load_vocab(args.vocab)
    pairs = read_pairs_tsv(args.pairs)
    if not pairs:
        raise DataError(f"{args.pairs}: no pairs")
    config = TrainConfig(
        batch_size=args.batch_size,
        steps=args.steps,
        learning_rate=args.lr,
        margin=args.margin,
        scale=args.scale,
        scale_mode=args.scale_mode,
        shards=args.shards,
        seed=args.seed,
        weight_decay=args.weight_decay,
    )
    state = None
    if args.resume:
        params, state = load_checkpoint(args.resume)
        if state is None:
            raise DataError(f"{args.resume}: checkpoint has no optimizer state to resume")
    elif args.init:
        params = _load_params(args.init)
    else:
        params = init_params(
            EncoderConfig(
                vocab_size=len(vocab),
                hidden_dim=args.hidden_dim,
                num_layers=args.layers,
                max_seq_len=args.max_seq_len,
                embed_dim=args.embed_dim,
            ),
            seed=args.seed,
        )
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log")
    mode = "a" if args.resume else "w"
    with open(log_path, mode, encoding="utf-8") as log:
        params, state = finetune_dual_encoder(
            params,
            pairs,
            config,
            vocab,
            state=state,
            log=log,
            checkpoint_path=args.out,
            checkpoint_interval=args.checkpoint_interval,
        )
    save_checkpoint(params, state, args.out)
    _log(f"train: {state.step_count} steps -> {args.out}")
    inputs = [args.pairs, args.vocab] + [p for p in (args.init, args.resume) if p]
    _write_manifest("train", args, inputs, [args.out, log_path], started)


def cmd_encode(args) -> None:
    started = time.time()
    from .vecindex import write_pool

    vocab = _load_vocab(args.vocab)
    params = _load_params(args.ckpt)
    sentences = _read_mono(args.input, args.lang)
    vectors = _encode_pool(params, vocab, sentences)
    write_pool(args.out, vectors, [s.id for s in sentences])
    _log(f"encode: {vectors.shape[0]} sentences -> {args.out}")
    _write_manifest(
        "encode", args, [args.input, args.vocab, args.ckpt], [args.out, str(args.out) + ".ids"], started
    )


def cmd_index(args) -> None:
    started = time.time()
    from .vecindex import IndexConfig, build, read_pool, save_index

    vectors, ids = read_pool(args.pool)
    config = None
    if args.clusters > 0:
        config = IndexConfig(
            clusters=args.clusters,
            probes=args.probes,
            kmeans_iters=args.kmeans_iters,
            seed=args.seed,
        )
    try:
        index = build(vectors, ids, config)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    save_index(index, args.out)
    _log(f"index: {len(index)} vectors ({index.mode}) -> {args.out}")
    _write_manifest("index", args, [args.pool, str(args.pool) + ".ids"], [args.out], started)


def cmd_search(args) -> None:
    started = time.time()
    from .fileio import atomic_write_text
    from .vecindex import load_index, read_pool, search

    index = load_index(args.index)
    queries, qids = read_pool(args.queries)
    rows = []
    for qid, q in zip(qids, queries):
        for rid, score in search(index, q, k=args.k):
            rows.append(f"{qid}\t{rid}\t{score:.6f}")
    atomic_write_text(args.out, "\n".join(rows) + ("\n" if rows else ""))
    _log(f"search: {len(qids)} queries -> {args.out}")
    _write_manifest("search", args, [args.queries, str(args.queries) + ".ids"], [args.out], started)


def cmd_mine(args) -> None:
    started = time.time()
    from .corpus import format_pairs_tsv
    from .evaluation import write_metrics_report
    from .fileio import atomic_write_text
    from .mining import (
        MiningConfig,
        choose_query_side,
        dedup,
        mine,
        mining_report,
        select_top_fraction,
    )
    from .vecindex import IndexConfig, build

    vocab = _load_vocab(args.vocab)
    params = _load_params(args.ckpt)
    side_a = _read_mono(args.src, args.src_lang)
    side_b = _read_mono(args.tgt, args.tgt_lang)
    config = MiningConfig(
        similarity_threshold=args.threshold,
        neighbors_k=args.k,
        selection_fraction=args.fraction,
        direction=args.direction,
    )
    if config.direction == "auto" and choose_query_side(len(side_a), len(side_b)) == "b":
        queries, pool = side_b, side_a
    else:
        queries, pool = side_a, side_b
    pool_vectors = _encode_pool(params, vocab, pool)
    index_config = None
    if args.clusters > 0:
        index_config = IndexConfig(clusters=args.clusters, probes=args.probes, seed=args.seed)
    index = build(pool_vectors, [s.id for s in pool], index_config)
    lookup = {s.id: s for s in pool}
    mined = mine(queries, index, lookup, params, vocab, config)
    deduped = dedup(mined)
    selected = select_top_fraction(deduped, config.selection_fraction) if deduped else []
    atomic_write_text(args.out, format_pairs_tsv(selected))
    report = mining_report(mined, config, sources_processed=len(queries))
    report_path = args.report or str(args.out) + ".report"
    write_metrics_report(report, report_path)
    _log(
        f"mine: {len(queries)} sources -> {len(mined)} pairs, "
        f"{len(deduped)} deduped, {len(selected)} selected -> {args.out}"
    )
    _write_manifest(
        "mine",
        args,
        [args.src, args.tgt, args.vocab, args.ckpt],
        [args.out, report_path, str(report_path) + ".json"],
        started,
    )


def cmd_eval_p1(args) -> None:
    started = time.time()
    from .evaluation import GoldAlignment, p_at_1, read_gold_tsv, write_metrics_report
    from .vecindex import build

    src_map, _, src_ids = _pool_as_map(args.src_pool)
    _, tgt_vectors, tgt_ids = _pool_as_map(args.tgt_pool)
    gold = GoldAlignment.from_pairs(sorted(read_gold_tsv(args.gold).pairs), src_ids, tgt_ids)
    index = build(tgt_vectors, tgt_ids)
    value = p_at_1(src_map, index, gold)
    write_metrics_report({"p_at_1": value, "gold_pairs": len(gold.pairs)}, args.out)
    _log(f"eval-p1: P@1={value:.4f} -> {args.out}")
    _write_manifest(
        "eval-p1", args, [args.src_pool, args.tgt_pool, args.gold], [args.out, str(args.out) + ".json"], started
    )


def cmd_eval_tatoeba(args) -> None:
    started = time.time()
    from .evaluation import (
        GoldAlignment,
        LanguagePool,
        read_gold_tsv,
        tatoeba_accuracy,
        write_metrics_report,
    )

    sets = {}
    for spec_str in args.set:
        try:
            lang, rest = spec_str.split("=", 1)
            src_pool, tgt_pool, gold_path = rest.split(",")
        except ValueError as exc:
            raise UsageError(f"--set wants LANG=SRC_POOL,TGT_POOL,GOLD, got {spec_str!r}") from exc
        src_map, _, src_ids = _pool_as_map(src_pool)
        tgt_map, _, tgt_ids = _pool_as_map(tgt_pool)
        gold = read_gold_tsv(gold_path)
        gold = GoldAlignment.from_pairs(sorted(gold.pairs), src_ids, tgt_ids)
        sets[lang] = LanguagePool(src_embeddings=src_map, tgt_embeddings=tgt_map, gold=gold)
    groups = {}
    for group_str in args.group or []:
        name, _, langs = group_str.partition("=")
        groups[name] = langs.split("+")
    result = tatoeba_accuracy(sets, groups)
    metrics: dict[str, object] = {}
    for lang, acc in sorted(result.per_language.items()):
        metrics[f"acc_{lang}"] = acc
    for name, mean in sorted(result.group_means.items()):
        metrics[f"group_{name}"] = mean if mean is not None else "absent"
    for name, missing in sorted(result.missing.items()):
        metrics[f"missing_{name}"] = ",".join(missing)
    write_metrics_report(metrics, args.out)
    _log(f"eval-tatoeba: {len(sets)} languages -> {args.out}")
    inputs = []
    for spec_str in args.set:
        inputs.extend(spec_str.split("=", 1)[1].split(","))
    _write_manifest("eval-tatoeba", args, inputs, [args.out, str(args.out) + ".json"], started)


def cmd_eval_bucc(args) -> None:
    started = time.time()
    from .evaluation import (
        GoldAlignment,
        bucc_best_f1,
        bucc_candidates,
        read_candidates_tsv,
        read_gold_tsv,
        write_metrics_report,
    )
    from .vecindex import build

    gold = read_gold_tsv(args.gold)
    if args.candidates:
        candidates = read_candidates_tsv(args.candidates)
        inputs = [args.candidates, args.gold]
    else:
        if not (args.src_pool and args.tgt_pool):
            raise UsageError("eval-bucc needs --candidates or both --src-pool and --tgt-pool")
        src_map, _, src_ids = _pool_as_map(args.src_pool)
        _, tgt_vectors, tgt_ids = _pool_as_map(args.tgt_pool)
        gold = GoldAlignment.from_pairs(sorted(gold.pairs), src_ids, tgt_ids)
        candidates = bucc_candidates(src_map, build(tgt_vectors, tgt_ids), k=args.k)
        inputs = [args.src_pool, args.tgt_pool, args.gold]
    try:
        prf = bucc_best_f1(candidates, gold)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    write_metrics_report(
        {
            "precision": prf.precision,
            "recall": prf.recall,
            "f1": prf.f1,
            "threshold": prf.threshold,
            "candidates": len(candidates),
            "gold_pairs": len(gold.pairs),
        },
        args.out,
    )
    _log(f"eval-bucc: F1={prf.f1:.4f} @ tau={prf.threshold:.4f} -> {args.out}")
    _write_manifest("eval-bucc", args, inputs, [args.out, str(args.out) + ".json"], started)


def cmd_eval_sts(args) -> None:
    started = time.time()
    from .evaluation import sts_pearson, write_metrics_report
    from .vecindex import read_pool

    a_vectors, _ = read_pool(args.pool_a, with_ids=False)
    b_vectors, _ = read_pool(args.pool_b, with_ids=False)
    if a_vectors.shape != b_vectors.shape:
        raise DataError("pool-a and pool-b must hold the same number of rows")
    with open(args.gold_scores, encoding="utf-8") as fh:
        gold = [float(line) for line in fh if line.strip()]
    try:
        r = sts_pearson(list(zip(a_vectors, b_vectors)), gold)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    write_metrics_report({"pearson_r": r, "pairs": len(gold)}, args.out)
    _log(f"eval-sts: r={r:.4f} -> {args.out}")
    _write_manifest(
        "eval-sts", args, [args.pool_a, args.pool_b, args.gold_scores], [args.out, str(args.out) + ".json"], started
    )


def cmd_stats(args) -> None:
    started = time.time()
    from .corpus import corpus_stats, format_stats_report
    from .fileio import atomic_write_text

    vocab = _load_vocab(args.vocab)
    by_lang: dict[str, list] = {}
    for path in args.mono:
        for s in _read_mono(path, args.lang):
            by_lang.setdefault(s.lang, []).append(s)
    stats = {lang: corpus_stats(sents, vocab) for lang, sents in by_lang.items()}
    atomic_write_text(args.out, format_stats_report(stats))
    _log(f"stats: {len(stats)} languages -> {args.out}")
    _write_manifest("stats", args, list(args.mono) + [args.vocab], [args.out], started)


def cmd_report(args) -> None:
    started = time.time()
    from .corpus import read_pairs_tsv
    from .evaluation import write_metrics_report
    from .mining import MiningConfig, mining_report

    pairs = read_pairs_tsv(args.pairs)
    config = MiningConfig(
        similarity_threshold=args.threshold,
        selection_fraction=args.fraction,
    )
    report = mining_report(pairs, config, sources_processed=args.sources_processed)
    write_metrics_report(report, args.out)
    _log(f"report: {len(pairs)} pairs -> {args.out}")
    _write_manifest("report", args, [args.pairs], [args.out, str(args.out) + ".json"], started)


# ---------------------------------------------------------------------------
# Parser construction and config-file resolution.
# ---------------------------------------------------------------------------


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="INI config file; flags override its values")
    sp.add_argument(
        "--deterministic",
        action="store_true",
        help="force single-threaded numerics (pins BLAS thread env vars)",
    )


def build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="bitextmine", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bitextmine {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    fmt = argparse.ArgumentDefaultsHelpFormatter
    subs: dict[str, argparse.ArgumentParser] = {}

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_text, formatter_class=fmt)
        sp.set_defaults(func=func, command=name)
        _add_common(sp)
        subs[name] = sp
        return sp

    sp = add("build-vocab", cmd_build_vocab, "induce a subword vocabulary")
    sp.add_argument("--mono", action="append", help="monolingual file (repeatable)")
    sp.add_argument("--pairs", help="bilingual TSV whose sides join the corpus")
    sp.add_argument("--lang", default="und", help="language for unprefixed lines")
    sp.add_argument("--target-size", type=int, required=True, help="piece count target")
    sp.add_argument("--smoothing", type=float, default=0.3, help="language smoothing exponent")
    sp.add_argument("--coverage", type=float, default=1.0, help="character coverage fraction")
    sp.add_argument("--out", required=True, help="vocab file to write")

    sp = add("pretrain", cmd_pretrain, "masked-token pretraining with stacking")
    sp.add_argument("--mono", action="append", help="monolingual file (repeatable)")
    sp.add_argument("--pairs", help="bilingual TSV for translation-pair batches")
    sp.add_argument("--lang", default="und", help="language for unprefixed lines")
    sp.add_argument("--vocab", required=True, help="vocab file")
    sp.add_argument("--out", required=True, help="checkpoint to write")
    sp.add_argument("--hidden-dim", type=int, default=32, help="hidden width")
    sp.add_argument("--embed-dim", type=int, default=0, help="output dim (0 = hidden)")
    sp.add_argument("--max-seq-len", type=int, default=16, help="max tokens per sequence")
    sp.add_argument("--stage-layers", default="1,2", help="layers per stage, CSV")
    sp.add_argument("--stage-steps", default="300,300", help="steps per stage, CSV")
    sp.add_argument("--batch-size", type=int, default=32, help="sequences per step")
    sp.add_argument("--lr", type=float, default=3e-3, help="initial learning rate")
    sp.add_argument("--mask-fraction", type=float, default=0.2, help="masked token fraction")
    sp.add_argument("--mask-cap", type=int, default=80, help="max masked tokens per sequence")
    sp.add_argument("--mix", default="1:1", help="MLM:TLM step mix per cycle")
    sp.add_argument("--seed", type=int, default=0, help="RNG seed")
    sp.add_argument("--log", help="training log path (default <out>.log)")

    sp = add("train", cmd_train, "dual-encoder fine-tuning on pairs")
    sp.add_argument("--pairs", required=True, help="bilingual TSV")
    sp.add_argument("--vocab", required=True, help="vocab file")
    sp.add_argument("--out", required=True, help="checkpoint to write")
    sp.add_argument("--init", help="initialize from this checkpoint")
    sp.add_argument("--resume", help="resume (params + optimizer) from this checkpoint")
    sp.add_argument("--hidden-dim", type=int, default=32, help="hidden width (fresh init)")
    sp.add_argument("--embed-dim", type=int, default=0, help="output dim (0 = hidden)")
    sp.add_argument("--layers", type=int, default=2, help="layer count (fresh init)")
    sp.add_argument("--max-seq-len", type=int, default=16, help="max tokens per sequence")
    sp.add_argument("--batch-size", type=int, default=64, help="pairs per step")
    sp.add_argument("--steps", type=int, default=2000, help="total training steps")
    sp.add_argument("--lr", type=float, default=1e-3, help="initial learning rate")
    sp.add_argument("--margin", type=float, default=0.3, help="additive margin")
    sp.add_argument("--scale", type=float, default=10.0, help="similarity scaling factor")
    sp.add_argument(
        "--scale-mode",
        default="similarity",
        choices=("similarity", "embedding"),
        help="apply scale to the margined similarity or to each embedding",
    )
    sp.add_argument("--shards", type=int, default=1, help="simulated accelerator shards")
    sp.add_argument("--weight-decay", type=float, default=0.0, help="decoupled weight decay")
    sp.add_argument("--seed", type=int, default=0, help="RNG seed")
    sp.add_argument("--checkpoint-interval", type=int, default=0, help="steps between checkpoints (0 = end only)")
    sp.add_argument("--log", help="training log path (default <out>.log)")

    sp = add("encode", cmd_encode, "encode sentences into an embedding pool")
    sp.add_argument("--input", required=True, help="monolingual file")
    sp.add_argument("--lang", default="und", help="language for unprefixed lines")
    sp.add_argument("--vocab", required=True, help="vocab file")
    sp.add_argument("--ckpt", required=True, help="encoder checkpoint")
    sp.add_argument("--out", required=True, help="pool file to write (ids -> <out>.ids)")

    sp = add("index", cmd_index, "build a search index over a pool")
    sp.add_argument("--pool", required=True, help="embedding pool file")
    sp.add_argument("--out", required=True, help="index directory")
    sp.add_argument("--clusters", type=int, default=0, help="k-means clusters (0 = exact index)")
    sp.add_argument("--probes", type=int, default=1, help="clusters probed per search")
    sp.add_argument("--kmeans-iters", type=int, default=10, help="k-means iterations")
    sp.add_argument("--seed", type=int, default=0, help="clustering seed")

    sp = add("search", cmd_search, "query an index with a pool of embeddings")
    sp.add_argument("--index", required=True, help="index directory")
    sp.add_argument("--queries", required=True, help="query pool file")
    sp.add_argument("--k", type=int, default=1, help="neighbors per query")
    sp.add_argument("--out", required=True, help="results TSV (query_id, id, score)")

    sp = add("mine", cmd_mine, "mine parallel text from two monolingual files")
    sp.add_argument("--src", required=True, help="first monolingual file")
    sp.add_argument("--tgt", required=True, help="second monolingual file")
    sp.add_argument("--src-lang", default="src", help="language for unprefixed --src lines")
    sp.add_argument("--tgt-lang", default="tgt", help="language for unprefixed --tgt lines")
    sp.add_argument("--vocab", required=True, help="vocab file")
    sp.add_argument("--ckpt", required=True, help="encoder checkpoint")
    sp.add_argument("--threshold", type=float, default=0.6, help="cosine acceptance threshold")
    sp.add_argument("--k", type=int, default=1, help="neighbors per source")
    sp.add_argument("--fraction", type=float, default=0.2, help="top fraction kept after dedup")
    sp.add_argument(
        "--direction",
        default="auto",
        choices=("auto", "forward"),
        help="auto: smaller side queries the larger; forward: --src queries --tgt",
    )
    sp.add_argument("--clusters", type=int, default=0, help="ANN clusters (0 = exact)")
    sp.add_argument("--probes", type=int, default=1, help="ANN probes")
    sp.add_argument("--seed", type=int, default=0, help="ANN clustering seed")
    sp.add_argument("--out", required=True, help="mined pairs TSV")
    sp.add_argument("--report", help="report path (default <out>.report)")

    sp = add("eval-p1", cmd_eval_p1, "precision@1 of a source pool against a target pool")
    sp.add_argument("--src-pool", required=True, help="source embedding pool")
    sp.add_argument("--tgt-pool", required=True, help="target embedding pool")
    sp.add_argument("--gold", required=True, help="gold TSV src_id<TAB>tgt_id")
    sp.add_argument("--out", required=True, help="report path")

    sp = add("eval-tatoeba", cmd_eval_tatoeba, "per-language accuracy with group averages")
    sp.add_argument(
        "--set",
        action="append",
        required=True,
        help="LANG=SRC_POOL,TGT_POOL,GOLD (repeatable)",
    )
    sp.add_argument("--group", action="append", help="NAME=lang1+lang2+... (repeatable)")
    sp.add_argument("--out", required=True, help="report path")

    sp = add("eval-bucc", cmd_eval_bucc, "best-F1 threshold sweep over candidates")
    sp.add_argument("--candidates", help="candidate TSV src_id<TAB>tgt_id<TAB>score")
    sp.add_argument("--src-pool", help="source pool (candidate generation)")
    sp.add_argument("--tgt-pool", help="target pool (candidate generation)")
    sp.add_argument("--k", type=int, default=1, help="candidates per source when generating")
    sp.add_argument("--gold", required=True, help="gold TSV")
    sp.add_argument("--out", required=True, help="report path")

    sp = add("eval-sts", cmd_eval_sts, "Pearson correlation of arccos similarities")
    sp.add_argument("--pool-a", required=True, help="first side pool")
    sp.add_argument("--pool-b", required=True, help="second side pool (aligned rows)")
    sp.add_argument("--gold-scores", required=True, help="one gold score per line")
    sp.add_argument("--out", required=True, help="report path")

    sp = add("stats", cmd_stats, "vocabulary diagnostics per language")
    sp.add_argument("--mono", action="append", required=True, help="monolingual file (repeatable)")
    sp.add_argument("--lang", default="und", help="language for unprefixed lines")
    sp.add_argument("--vocab", required=True, help="vocab file")
    sp.add_argument("--out", required=True, help="report path")

    sp = add("report", cmd_report, "mining report for an existing pairs TSV")
    sp.add_argument("--pairs", required=True, help="mined pairs TSV with scores")
    sp.add_argument("--threshold", type=float, default=0.6, help="threshold recorded in the report")
    sp.add_argument("--fraction", type=float, default=0.2, help="selection fraction")
    sp.add_argument("--sources-processed", type=int, default=0, help="source count for the report")
    sp.add_argument("--out", required=True, help="report path")

    return parser, subs


def _apply_config_file(path: str, command: str, sp: argparse.ArgumentParser) -> None:
    """Install config-file values as subparser defaults (flags still win)."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise DataError(f"config file {path!r} not found")
    if command not in cp:
        return
    section = cp[command]
    known = {a.dest: a for a in sp._actions}
    overrides = {}
    for raw_key, raw_value in section.items():
        key = raw_key.replace("-", "_")
        if key not in known:
            raise UsageError(f"config file {path!r}: unknown key {raw_key!r} for {command}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            overrides[key] = raw_value.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            overrides[key] = [v for v in raw_value.split() if v]
        elif action.type is not None:
            overrides[key] = action.type(raw_value)
        else:
            overrides[key] = raw_value
    sp.set_defaults(**overrides)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--deterministic" in argv:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, "1")
    parser, subs = build_parser()
    try:
        # A config file changes subparser defaults, so resolve it first.
        if "--config" in argv and argv and argv[0] in subs:
            probe = argv[argv.index("--config") + 1 :]
            if not probe:
                parser.error("--config needs a path")
            _apply_config_file(probe[0], argv[0], subs[argv[0]])
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        _log(f"bitextmine: usage error: {exc}")
        return 1
    except (DataError, OSError, ValueError) as exc:
        _log(f"bitextmine: data error: {exc}")
        return 2
    except NumericalError as exc:
        _log(f"bitextmine: numerical failure: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
