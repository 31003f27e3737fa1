"""Command-line entry point orchestrating the pipeline end to end.

Commands: preprocess, pretrain, train, generate, evaluate, analyze,
benchmark. Every command takes --config PATH (JSON) and repeatable
--set key=value overrides; all commands are deterministic given the
configuration and seeds, and idempotent on re-run.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

from . import corpus as corpus_mod
from . import evaluation as eval_mod
from .config import ModelSection, RunConfig, load_config
from .errors import FbgenError
from .estimator import _coerce_prompts
from .models import (
    Greedy,
    ModelTextScorer,
    Sample,
    SeqModel,
    SeqModelConfig,
    build_vocabulary,
    generate_batch,
    load_checkpoint,
    perplexity,
    save_checkpoint,
)
from .storyline import (
    Story,
    TemporalRelation,
    TokenConventions,
    parse_storyline_tokens,
    tokenize as conv_tokenize,
)
from .training import (
    TrainConfig,
    pretrain_storyline,
    predict_storylines,
    train,
    train_text_scorer,
)


def _fatal(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _require(path: Optional[str], what: str) -> Path:
    if not path:
        raise FbgenError(f"config is missing a path for {what}")
    p = Path(path)
    if not p.exists():
        raise FbgenError(f"{what} not found: {p}")
    return p


def _profile(config: RunConfig) -> corpus_mod.DatasetProfile:
    try:
        return corpus_mod.PROFILES[config.profile]
    except KeyError:
        raise FbgenError(
            f"unknown profile {config.profile!r}; expected one of "
            f"{sorted(corpus_mod.PROFILES)}"
        ) from None


def _conv(config: RunConfig) -> TokenConventions:
    return config.conventions.build()


def _model_config(section: ModelSection, vocab_size: int) -> SeqModelConfig:
    return SeqModelConfig(
        vocab_size=vocab_size,
        embed_dim=section.embed_dim,
        hidden_dim=section.hidden_dim,
        n_layers=section.n_layers,
        max_len=section.max_len,
        dropout=section.dropout,
        rng_seed=section.rng_seed,
    )


def _strategy(config: RunConfig):
    gen = config.generation
    if gen.strategy == "greedy":
        return Greedy()
    if gen.strategy == "sample":
        return Sample(temperature=gen.temperature, rng_seed=gen.rng_seed)
    raise FbgenError(f"unknown decoding strategy {gen.strategy!r}")


def _print_prompt_distribution(records: Sequence[corpus_mod.StoryRecord]) -> None:
    counts = Counter(p for r in records for p in (r.prompts or ()))
    total = sum(counts.values())
    if not total:
        print("prompt distribution: (none)")
        return
    shares = ", ".join(
        f"{rel.value}={counts.get(rel, 0) / total:.3f}" for rel in TemporalRelation
    )
    print(f"prompt distribution over {total} pairs: {shares}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_preprocess(config: RunConfig) -> int:
    """Build the annotated train/val/test corpora.

    The synthetic profile generates template corpora and annotates them
    with the marker annotator; other profiles read raw JSONL corpora,
    extract events (external file first, rule-based fallback), and annotate
    with the vote-file annotator when votes are provided.
    """
    profile = _profile(config)
    paths = config.paths
    outputs = [paths.corpus, paths.val_corpus, paths.test_corpus]
    for out in outputs:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
    if config.profile == "synthetic":
        syn = config.synthetic
        splits = [
            (syn.n_train, syn.rng_seed),
            (syn.n_val, syn.rng_seed + 1),
            (syn.n_test, syn.rng_seed + 2),
        ]
        annotator = corpus_mod.MarkerAnnotator()
        for out, (n, seed) in zip(outputs, splits):
            records = corpus_mod.generate_synthetic_corpus(
                corpus_mod.SyntheticConfig(
                    n_stories=n,
                    n_events=syn.n_events,
                    after_rate=syn.after_rate,
                    rng_seed=seed,
                )
            )
            stripped = [
                corpus_mod.StoryRecord(
                    r.id, r.prefix, r.sentences, r.storyline.without_prompts()
                )
                for r in records
            ]
            annotated = corpus_mod.annotate_corpus(stripped, annotator)
            mismatches = sum(
                a.prompts != r.prompts for a, r in zip(annotated, records)
            )
            corpus_mod.save_annotated_corpus(annotated, out)
            print(f"wrote {len(annotated)} records to {out} "
                  f"(gold mismatches: {mismatches})")
            _print_prompt_distribution(annotated)
        return 0

    raw_paths = [paths.raw_corpus, paths.raw_val_corpus, paths.raw_test_corpus]
    events = None
    if paths.events:
        events = corpus_mod.load_external_events(_require(paths.events, "events file"))
    if paths.votes:
        annotator = corpus_mod.FileVoteAnnotator(_require(paths.votes, "votes file"))
    else:
        annotator = corpus_mod.MarkerAnnotator()
    for raw, out in zip(raw_paths, outputs):
        if raw is None:
            continue
        records = corpus_mod.load_corpus(
            _require(raw, "raw corpus"), profile, external_events=events
        )
        annotated = corpus_mod.annotate_corpus(records, annotator)
        corpus_mod.save_annotated_corpus(annotated, out)
        print(f"wrote {len(annotated)} records to {out}")
        _print_prompt_distribution(annotated)
    return 0


def cmd_pretrain(config: RunConfig) -> int:
    """Pretrain the storyline model on span-extracted storylines."""
    profile = _profile(config)
    conv = _conv(config)
    text_path = _require(config.paths.pretraining_text, "pretraining text")
    documents = corpus_mod.read_sentence_documents(text_path)
    span_len = profile.fixed_n_events or 5
    build = corpus_mod.build_pretraining_storylines(documents, span_len=span_len)
    print(
        f"pretraining spans: total={build.spans_total} noisy={build.spans_noisy} "
        f"kept={build.spans_kept}"
    )
    records = corpus_mod.load_corpus(_require(config.paths.corpus, "corpus"), profile)
    pretrain_records = [
        corpus_mod.StoryRecord(
            id=f"pretrain-{i}",
            prefix="",
            sentences=("",),
            storyline=s,
        )
        for i, s in enumerate(build.storylines)
    ]
    vocab = build_vocabulary(list(records) + pretrain_records, conv)
    model = SeqModel(_model_config(config.storyline_model, len(vocab)), vocab)
    cfg = config.train
    pretrain_storyline(model, build.storylines, cfg, conv)
    out_dir = Path(config.paths.checkpoints)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / "pretrained-storyline.fbgen"
    save_checkpoint(model, out, conv)
    print(f"wrote pretrained storyline model to {out}")
    return 0


def cmd_train(config: RunConfig) -> int:
    """Run the configured training regime; write checkpoints and metrics."""
    profile = _profile(config)
    conv = _conv(config)
    records = corpus_mod.load_corpus(_require(config.paths.corpus, "corpus"), profile)
    val_records = None
    if config.paths.val_corpus and Path(config.paths.val_corpus).exists():
        val_records = corpus_mod.load_corpus(config.paths.val_corpus, profile)
    init_alpha = None
    vocab = None
    if config.paths.init_storyline_checkpoint:
        init_alpha, _ = load_checkpoint(
            _require(config.paths.init_storyline_checkpoint, "initial checkpoint")
        )
        vocab = init_alpha.vocab
    else:
        vocab = build_vocabulary(records, conv)
    reports_dir = Path(config.paths.reports)
    reports_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = reports_dir / "train_metrics.jsonl"
    result = train(
        records,
        config.train,
        alpha_config=_model_config(config.storyline_model, len(vocab)),
        theta_config=_model_config(config.story_model, len(vocab)),
        vocab=vocab,
        conv=conv,
        profile=profile,
        use_prompts=config.use_prompts,
        val_records=val_records,
        metrics_path=metrics_path,
        checkpoint_dir=config.paths.checkpoints,
        init_alpha=init_alpha,
    )
    print(f"metrics log: {metrics_path}")
    for row in result.history:
        print(json.dumps(row))
    if result.best_epoch is not None:
        print(
            f"best checkpoint: epoch {result.best_epoch} "
            f"(val story ppl {result.best_val_ppl:.4f})"
        )
    print(f"checkpoints in {config.paths.checkpoints} (storyline-best / story-best)")
    return 0


def _load_model_pair(config: RunConfig) -> tuple[SeqModel, SeqModel, TokenConventions]:
    ckpt_dir = Path(config.paths.checkpoints)
    alpha, conv_a = load_checkpoint(_require(ckpt_dir / "storyline-best.fbgen", "storyline checkpoint"))
    theta, _ = load_checkpoint(_require(ckpt_dir / "story-best.fbgen", "story checkpoint"))
    if alpha.vocab.hash() != theta.vocab.hash():
        raise FbgenError(
            "storyline and story checkpoints carry different vocabularies"
        )
    return alpha, theta, conv_a


def _prompts_for_records(
    config: RunConfig, records: Sequence[corpus_mod.StoryRecord]
) -> tuple[list[Optional[list[TemporalRelation]]], list[Optional[str]]]:
    """Per-record prompts and per-record error strings (None when fine)."""
    gen = config.generation
    prompts: list[Optional[list[TemporalRelation]]] = []
    errors: list[Optional[str]] = []
    if gen.prompts_source == "literal":
        if not gen.literal_prompts:
            raise FbgenError("generation.literal_prompts is empty")
        literal = _coerce_prompts(gen.literal_prompts.split())
        for r in records:
            if len(literal) != r.storyline.n_events - 1:
                errors.append(
                    f"literal prompts have length {len(literal)}, "
                    f"need {r.storyline.n_events - 1}"
                )
                prompts.append(None)
            else:
                prompts.append(literal)
                errors.append(None)
        return prompts, errors
    if gen.prompts_source == "file":
        path = _require(gen.prompts_file, "prompts file")
        table: dict[str, list[str]] = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    obj = json.loads(line)
                    table[str(obj["id"])] = list(obj["prompts"])
        for r in records:
            raw = table.get(r.id)
            if raw is None:
                errors.append("no prompts entry for record")
                prompts.append(None)
                continue
            if len(raw) != r.storyline.n_events - 1:
                errors.append(
                    f"prompts file has length {len(raw)}, "
                    f"need {r.storyline.n_events - 1}"
                )
                prompts.append(None)
                continue
            prompts.append(_coerce_prompts(raw))
            errors.append(None)
        return prompts, errors
    if gen.prompts_source == "gold":
        for r in records:
            if r.prompts is None:
                errors.append("record has no gold prompts")
                prompts.append(None)
            else:
                prompts.append(list(r.prompts))
                errors.append(None)
        return prompts, errors
    raise FbgenError(f"unknown prompts_source {gen.prompts_source!r}")


def cmd_generate(config: RunConfig) -> int:
    """Generate storyline/story pairs for the test corpus."""
    profile = _profile(config)
    alpha, theta, conv = _load_model_pair(config)
    records = corpus_mod.load_corpus(
        _require(config.paths.test_corpus, "test corpus"), profile
    )
    gen = config.generation
    if gen.one_after_only:
        records = [
            r
            for r in records
            if r.prompts is not None
            and sum(p is TemporalRelation.AFTER for p in r.prompts) == 1
        ]
    if gen.max_records is not None:
        records = records[: gen.max_records]
    if not records:
        return _fatal("no test records to generate from")
    prompts, errors = _prompts_for_records(config, records)
    usable = [i for i, e in enumerate(errors) if e is None]
    strategy = _strategy(config)
    results = generate_batch(
        alpha,
        theta,
        [records[i].prefix for i in usable],
        [prompts[i] if config.use_prompts else None for i in usable],
        conv=conv,
        strategy=strategy,
        n_events=profile.fixed_n_events,
        keep_first_k=profile.keep_first_k,
        include_prefix_sentence=profile.prefix_is_first_sentence,
    )
    out_path = Path(config.paths.generations)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    by_index = dict(zip(usable, results))
    n_errors = 0
    with open(out_path, "w", encoding="utf-8") as f:
        for i, record in enumerate(records):
            if errors[i] is not None:
                row = {"id": record.id, "error": errors[i]}
                n_errors += 1
            else:
                res = by_index[i]
                row = {
                    "id": record.id,
                    "prompts": [p.value for p in prompts[i]] if prompts[i] else None,
                    "storyline_text": res.storyline_text,
                    "story": res.story.text,
                    "sentences": list(res.story.sentences),
                    "parse_ok": res.parse_ok,
                }
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"wrote {len(records) - n_errors} generations "
          f"({n_errors} prompt errors) to {out_path}")
    return 0


def _load_generations(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rows.append(json.loads(line))
    return [r for r in rows if "error" not in r]


def _train_default_scorer(config: RunConfig, out_path: Path):
    """Train the default frozen scorer: a small language model fit on the
    held-out training-corpus stories, then checkpointed for reuse."""
    profile = _profile(config)
    conv = _conv(config)
    records = corpus_mod.load_corpus(_require(config.paths.corpus, "corpus"), profile)
    texts = [" ".join(r.sentences) for r in records]
    vocab = build_vocabulary(records, conv)
    cfg = TrainConfig(
        mode="two_stage", epochs=2, batch_size=64, optimizer="adam", lr=2e-3,
        rng_seed=config.train.rng_seed,
    )
    model = train_text_scorer(
        texts, cfg, _model_config(config.storyline_model, len(vocab)), vocab, conv
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out_path, conv)
    print(f"trained default scorer model -> {out_path}")
    return model, conv


def cmd_evaluate(config: RunConfig) -> int:
    """Produce the metric report over generations (and annotations, if any).

    Missing inputs disable individual metrics rather than the whole report;
    absent metrics are emitted as nulls.
    """
    profile = _profile(config)
    conv = _conv(config)
    metrics: dict[str, Optional[float]] = {}
    records = corpus_mod.load_corpus(
        _require(config.paths.test_corpus, "test corpus"), profile
    )
    by_id = {r.id: r for r in records}
    rows = _load_generations(_require(config.paths.generations, "generations"))
    if not rows:
        return _fatal("generations file has no usable rows")
    hyps, refs, gen_texts = [], [], []
    gold_after, detected_after = [], []
    coverages = []
    detected_relations = []
    prompt_list, annotated_list = [], []
    for row in rows:
        record = by_id.get(row["id"])
        sentences = row.get("sentences") or []
        gen_texts.append(row["story"])
        detected = corpus_mod.detect_story_relations(sentences)
        detected_relations.extend(detected)
        if record is not None:
            skip = 1 if profile.prefix_is_first_sentence else 0
            hyps.append(" ".join(sentences[skip:]))
            refs.append(" ".join(record.sentences[skip:]))
        if row.get("prompts"):
            prompts = [TemporalRelation.from_string(p) for p in row["prompts"]]
            gold_after.append(sum(p is TemporalRelation.AFTER for p in prompts))
            detected_after.append(
                sum(t is TemporalRelation.AFTER for t in detected)
            )
            pairs = min(len(prompts), len(detected))
            prompt_list.extend(prompts[:pairs])
            annotated_list.extend(detected[:pairs])
        if row.get("parse_ok"):
            storyline = parse_storyline_tokens(
                conv_tokenize(row["storyline_text"], conv), conv
            )
            coverages.append(
                eval_mod.event_coverage(storyline, Story(tuple(sentences), 0))
            )

    metrics["distinct_ratio"] = eval_mod.distinct_ratio(gen_texts)
    metrics["bleu3"] = eval_mod.bleu3(hyps, refs) if hyps else None
    metrics["rouge_l"] = eval_mod.rouge_l(hyps, refs) if hyps else None
    metrics["event_coverage"] = (
        sum(coverages) / len(coverages) if coverages else None
    )
    try:
        metrics["after_count_pearson"] = eval_mod.after_count_correlation(
            gold_after, detected_after
        )
    except FbgenError:
        metrics["after_count_pearson"] = None
    if detected_relations:
        metrics["temporal_diversity_auto"] = eval_mod.temporal_diversity(
            eval_mod.distribution_from_relations(detected_relations)
        )
    try:
        metrics["prompt_accuracy_auto"] = eval_mod.prompt_accuracy(
            prompt_list, annotated_list
        )
    except FbgenError:
        metrics["prompt_accuracy_auto"] = None

    # reference perplexity at the inference condition (predicted storylines)
    ckpt_dir = Path(config.paths.checkpoints)
    if (ckpt_dir / "storyline-best.fbgen").exists() and (
        ckpt_dir / "story-best.fbgen"
    ).exists():
        alpha, theta, ckpt_conv = _load_model_pair(config)
        plans = predict_storylines(
            alpha, records, ckpt_conv,
            keep_first_k=profile.keep_first_k, use_prompts=config.use_prompts,
        )
        metrics["ref_ppl"] = perplexity(
            theta, records, "story", ckpt_conv,
            keep_first_k=profile.keep_first_k, use_prompts=config.use_prompts,
            storyline_texts=plans,
        )
        metrics["storyline_ref_ppl"] = perplexity(
            alpha, records, "storyline", ckpt_conv,
            keep_first_k=profile.keep_first_k, use_prompts=config.use_prompts,
        )
    else:
        metrics["ref_ppl"] = None
        metrics["storyline_ref_ppl"] = None

    if config.paths.scorer_checkpoint:
        scorer_path = Path(config.paths.scorer_checkpoint)
        if scorer_path.exists():
            scorer_model, scorer_conv = load_checkpoint(scorer_path)
        else:
            scorer_model, scorer_conv = _train_default_scorer(config, scorer_path)
        metrics["gen_ppl"] = eval_mod.gen_perplexity(
            gen_texts, ModelTextScorer(scorer_model, scorer_conv)
        )
    else:
        metrics["gen_ppl"] = None

    if config.paths.annotations and Path(config.paths.annotations).exists():
        annotations = eval_mod.load_annotations(config.paths.annotations)
        metrics["temporal_diversity"] = eval_mod.temporal_diversity(
            eval_mod.relation_distribution(annotations)
        )
        gen_by_id = {row["id"]: row for row in rows}
        h_prompts, h_annotated = [], []
        for a in annotations:
            row = gen_by_id.get(a.story_id)
            if row and row.get("prompts"):
                ps = [TemporalRelation.from_string(p) for p in row["prompts"]]
                pairs = min(len(ps), len(a.pair_relations))
                h_prompts.extend(ps[:pairs])
                h_annotated.extend(a.pair_relations[:pairs])
        try:
            metrics["prompt_accuracy"] = eval_mod.prompt_accuracy(
                h_prompts, h_annotated
            )
        except FbgenError:
            metrics["prompt_accuracy"] = None
        metrics["coherence_mean"] = sum(a.coherence for a in annotations) / len(
            annotations
        )
        metrics["interest_mean"] = sum(
            a.interest_rank for a in annotations
        ) / len(annotations)
    else:
        for name in (
            "temporal_diversity", "prompt_accuracy", "coherence_mean",
            "interest_mean",
        ):
            metrics[name] = None

    reports_dir = Path(config.paths.reports)
    reports_dir.mkdir(parents=True, exist_ok=True)
    json_path = reports_dir / "metrics.json"
    csv_path = reports_dir / "metrics.csv"
    eval_mod.write_metric_report(metrics, json_path, csv_path)
    absent = sorted(k for k, v in metrics.items() if v is None)
    print(json.dumps({k: v for k, v in sorted(metrics.items())}, indent=2))
    if absent:
        print(f"absent metrics: {', '.join(absent)}")
    print(f"report: {json_path} / {csv_path}")
    return 0


def cmd_analyze(config: RunConfig) -> int:
    """OLS of interest rank on coherence, per-story temporal diversity, and
    the per-story AFTER-prompt count."""
    annotations = eval_mod.load_annotations(
        _require(config.paths.annotations, "annotations")
    )
    n_after_by_id: dict[str, int] = {}
    joined = False
    gen_path = config.paths.generations
    if gen_path and Path(gen_path).exists():
        for row in _load_generations(Path(gen_path)):
            if row.get("prompts"):
                n_after_by_id[row["id"]] = sum(
                    p == TemporalRelation.AFTER.value for p in row["prompts"]
                )
        joined = True
    else:
        print(
            "note: no generations file; counting AFTER among annotated "
            "pair relations instead of prompts",
            file=sys.stderr,
        )
    y, X = [], []
    for a in annotations:
        if joined:
            if a.story_id not in n_after_by_id:
                continue
            n_after = n_after_by_id[a.story_id]
        else:
            n_after = sum(
                r is TemporalRelation.AFTER for r in a.pair_relations
            )
        diversity = eval_mod.temporal_diversity(
            eval_mod.distribution_from_relations(list(a.pair_relations))
        )
        y.append(float(a.interest_rank))
        X.append([float(a.coherence), diversity, float(n_after)])
    if len(y) < 5:
        return _fatal(f"need at least 5 usable annotation rows, got {len(y)}")
    try:
        fit = eval_mod.ols_regress(y, X)
    except FbgenError as exc:
        return _fatal(f"{exc} (check that predictors are not collinear)")
    names = ["Temporal Coherence", "Temporal Diversity", "# after prompt"]
    print(f"{'':<22}{'Coef.':>10}{'p-value':>10}")
    rows = []
    for name, coef, p in zip(names, fit.coef, fit.p_values):
        star = "*" if p < 0.01 else ""
        print(f"{name:<22}{coef:>10.3f}{p:>9.3f}{star}")
        rows.append({"predictor": name, "coef": float(coef), "p_value": float(p)})
    reports_dir = Path(config.paths.reports)
    reports_dir.mkdir(parents=True, exist_ok=True)
    out = reports_dir / "ols.json"
    with open(out, "w", encoding="utf-8") as f:
        json.dump({"rows": rows, "n": len(y), "intercept": fit.intercept}, f, indent=2)
        f.write("\n")
    print(f"report: {out}")
    return 0


def cmd_benchmark(config: RunConfig, predictions: str, gold: str) -> int:
    """Precision of predicted relations against interval-labeled gold pairs."""
    pred_path = _require(predictions, "predictions file")
    gold_path = _require(gold, "gold file")
    preds = [
        TemporalRelation.from_string(line)
        for line in pred_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    labels = [
        corpus_mod.CatersLabel.from_string(line)
        for line in gold_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    report = corpus_mod.benchmark_annotator(preds, labels)
    for rel in TemporalRelation:
        precision = report.per_relation_precision[rel]
        count = report.per_relation_counts[rel]
        shown = f"{precision:.4f}" if precision is not None else "n/a"
        print(f"precision[{rel.value}] = {shown} ({count} predictions)")
    print(f"overall compatibility precision = {report.overall_precision:.4f}")
    print(
        f"gold Overlaps pairs flagged for manual review: {report.flagged_overlaps}"
    )
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbgen",
        description="Temporally controllable story generation with flashbacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("preprocess", "extract events, annotate prompts, write corpora"),
        ("pretrain", "pretrain the storyline model on span storylines"),
        ("train", "train the storyline/story pair with the configured regime"),
        ("generate", "generate stories for the test corpus"),
        ("evaluate", "compute the metric report over generations"),
        ("analyze", "OLS regression of interest on coherence/diversity/afters"),
        ("benchmark", "score an annotator against CaTeRS-style gold labels"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (dotted path), repeatable",
        )
        if name == "benchmark":
            p.add_argument("--predictions", required=True)
            p.add_argument("--gold", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.overrides)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _fatal(f"bad configuration: {exc}")
    try:
        if args.command == "preprocess":
            return cmd_preprocess(config)
        if args.command == "pretrain":
            return cmd_pretrain(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "generate":
            return cmd_generate(config)
        if args.command == "evaluate":
            return cmd_evaluate(config)
        if args.command == "analyze":
            return cmd_analyze(config)
        if args.command == "benchmark":
            return cmd_benchmark(config, args.predictions, args.gold)
    except FbgenError as exc:
        return _fatal(str(exc))
    return _fatal(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
