import itertools
import json
import math

import pytest

from fbgen.corpus import (
    AnnotatorVote,
    CatersLabel,
    FileVoteAnnotator,
    MarkerAnnotator,
    ROCSTORIES_PROFILE,
    StoryRecord,
    SyntheticConfig,
    annotate_corpus,
    benchmark_annotator,
    build_pretraining_storylines,
    classify_connective,
    consensus_relation,
    detect_story_relations,
    extract_event,
    generate_synthetic_corpus,
    load_corpus,
    load_external_events,
    map_caters_label,
    read_sentence_documents,
    save_annotated_corpus,
)
from fbgen.errors import EmptyVotes, LengthMismatch, NoEventFound, SchemaError
from fbgen.storyline import Event, StructuredStoryline, TemporalRelation

B, A, V = TemporalRelation.BEFORE, TemporalRelation.AFTER, TemporalRelation.VAGUE


def vote(rel, who="x"):
    return AnnotatorVote(rel, who)


class TestExtractEvent:
    def test_classic_sentence(self):
        assert extract_event("she grabbed the dog and ran outside") == Event(
            "grabbed", "she", "the dog"
        )

    def test_empty_sentence(self):
        with pytest.raises(NoEventFound):
            extract_event("")

    def test_template_sentence(self):
        assert extract_event("tom visited the park") == Event("visited", "tom", "the park")

    def test_flashback_template_skips_auxiliary(self):
        assert extract_event("before that , tom had visited the bank .") == Event(
            "visited", "tom", "the bank"
        )

    def test_forward_template(self):
        assert extract_event("then anna bought the kettle .") == Event(
            "bought", "anna", "the kettle"
        )

    def test_no_verb(self):
        with pytest.raises(NoEventFound):
            extract_event("the red bed")


class TestExternalEvents:
    def test_single_record(self, tmp_path):
        p = tmp_path / "events.jsonl"
        p.write_text(
            json.dumps(
                {"id": "s1", "events": [{"trigger": "ran", "arg1": "he", "arg2": ""}]}
            )
            + "\n"
        )
        out = load_external_events(p)
        assert out == {"s1": [Event("ran", "he", "")]}

    def test_empty_file(self, tmp_path):
        p = tmp_path / "events.jsonl"
        p.write_text("")
        assert load_external_events(p) == {}

    def test_duplicate_id(self, tmp_path):
        p = tmp_path / "events.jsonl"
        rec = json.dumps({"id": "s1", "events": []})
        p.write_text(rec + "\n" + rec + "\n")
        with pytest.raises(SchemaError, match="line 2"):
            load_external_events(p)

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "events.jsonl"
        p.write_text('{"id": "s1"}\n')
        with pytest.raises(SchemaError, match="line 1"):
            load_external_events(p)


class TestConsensus:
    def test_unanimous(self):
        assert consensus_relation([vote(B), vote(B), vote(B)]) is B

    def test_any_disagreement_is_vague(self):
        assert consensus_relation([vote(B), vote(B), vote(A)]) is V

    def test_single_vote(self):
        assert consensus_relation([vote(A)]) is A

    def test_empty(self):
        with pytest.raises(EmptyVotes):
            consensus_relation([])

    def test_exhaustive_27_combinations(self):
        for combo in itertools.product((B, A, V), repeat=3):
            expected = combo[0] if len(set(combo)) == 1 else V
            assert consensus_relation([vote(r) for r in combo]) is expected

    def test_permutation_invariance(self):
        for combo in itertools.product((B, A, V), repeat=3):
            results = {
                consensus_relation([vote(r) for r in perm])
                for perm in itertools.permutations(combo)
            }
            assert len(results) == 1


class TestAnnotateCorpus:
    def _record(self, sentences):
        events = tuple(Event(f"t{i}") for i in range(len(sentences)))
        return StoryRecord(
            "r0", sentences[0], tuple(sentences), StructuredStoryline(events)
        )

    def test_five_events_get_four_prompts(self):
        rec = self._record(["a went .", "then b went .", "then c .", "then d .", "then e ."])
        out = annotate_corpus([rec], MarkerAnnotator())
        assert len(out[0].prompts) == 4

    def test_annotator_failure_defaults_to_vague(self, caplog):
        rec = self._record(["s1", "s2", "s3"])

        def flaky(record, k):
            if k == 1:
                raise RuntimeError("boom")
            return [vote(B)]

        with caplog.at_level("WARNING"):
            out = annotate_corpus([rec], flaky)
        assert out[0].prompts == (B, V)
        assert "defaulting to vague" in caplog.text

    def test_marker_annotator_recovers_synthetic_gold(self):
        records = generate_synthetic_corpus(
            SyntheticConfig(n_stories=200, after_rate=0.35, rng_seed=3)
        )
        stripped = [
            StoryRecord(r.id, r.prefix, r.sentences, r.storyline.without_prompts())
            for r in records
        ]
        annotated = annotate_corpus(stripped, MarkerAnnotator())
        assert all(
            got.prompts == want.prompts for got, want in zip(annotated, records)
        )

    def test_file_vote_annotator(self, tmp_path):
        p = tmp_path / "votes.jsonl"
        lines = [
            {"id": "r0", "pair_index": 0, "votes": ["before", "before", "before"]},
            {"id": "r0", "pair_index": 1, "votes": ["before", "after", "vague"]},
        ]
        p.write_text("\n".join(json.dumps(x) for x in lines) + "\n")
        rec = self._record(["s1", "s2", "s3"])
        out = annotate_corpus([rec], FileVoteAnnotator(p))
        assert out[0].prompts == (B, V)


class TestCatersMapping:
    def test_exhaustive_table(self):
        assert map_caters_label(CatersLabel.BEFORE) == frozenset({B})
        assert map_caters_label(CatersLabel.IDENTITY) == frozenset({V})
        assert map_caters_label(CatersLabel.CONTAINS) == frozenset({B})
        assert map_caters_label(CatersLabel.OVERLAPS) == frozenset({B, A, V})

    def test_label_parsing(self):
        assert CatersLabel.from_string("overlaps") is CatersLabel.OVERLAPS
        with pytest.raises(ValueError):
            CatersLabel.from_string("During")


class TestBenchmark:
    def test_all_compatible(self):
        preds = [B, V, A]
        gold = [CatersLabel.CONTAINS, CatersLabel.IDENTITY, CatersLabel.OVERLAPS]
        report = benchmark_annotator(preds, gold)
        assert report.overall_precision == 1.0
        assert report.flagged_overlaps == 1

    def test_before_vs_identity_is_wrong(self):
        report = benchmark_annotator([B], [CatersLabel.IDENTITY])
        assert report.overall_precision == 0.0
        assert report.per_relation_precision[B] == 0.0

    def test_mixed_batch_of_ten(self):
        # 7 compatible, 3 not, by construction.
        preds = [B, B, B, B, A, V, V, B, A, B]
        gold = [
            CatersLabel.BEFORE,      # B ok
            CatersLabel.CONTAINS,    # B ok
            CatersLabel.OVERLAPS,    # B ok
            CatersLabel.IDENTITY,    # B wrong
            CatersLabel.OVERLAPS,    # A ok
            CatersLabel.IDENTITY,    # V ok
            CatersLabel.BEFORE,      # V wrong
            CatersLabel.BEFORE,      # B ok
            CatersLabel.BEFORE,      # A wrong
            CatersLabel.CONTAINS,    # B ok
        ]
        report = benchmark_annotator(preds, gold)
        assert report.overall_precision == pytest.approx(0.7)
        assert report.n_pairs == 10
        assert report.flagged_overlaps == 2

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            benchmark_annotator([B], [])


class TestSyntheticCorpus:
    def test_after_rate_zero(self):
        records = generate_synthetic_corpus(
            SyntheticConfig(n_stories=50, after_rate=0.0, rng_seed=1)
        )
        assert all(p is B for r in records for p in r.prompts)

    def test_after_rate_one(self):
        records = generate_synthetic_corpus(
            SyntheticConfig(n_stories=50, after_rate=1.0, rng_seed=1)
        )
        assert all(p is A for r in records for p in r.prompts)

    def test_same_seed_is_byte_identical(self, tmp_path):
        cfg = SyntheticConfig(n_stories=100, after_rate=0.3, rng_seed=42)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_annotated_corpus(generate_synthetic_corpus(cfg), p1)
        save_annotated_corpus(generate_synthetic_corpus(cfg), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empirical_after_rate_converges(self):
        cfg = SyntheticConfig(n_stories=1500, after_rate=0.2, rng_seed=9)
        records = generate_synthetic_corpus(cfg)
        slots = [p for r in records for p in r.prompts]
        rate = sum(p is A for p in slots) / len(slots)
        se = math.sqrt(0.2 * 0.8 / len(slots))
        assert abs(rate - 0.2) <= 3 * se

    def test_extraction_matches_templates(self):
        records = generate_synthetic_corpus(
            SyntheticConfig(n_stories=30, after_rate=0.5, rng_seed=5)
        )
        for r in records:
            for sentence, event in zip(r.sentences, r.storyline.events):
                assert event.trigger and event.trigger in sentence.split()
                assert event.arg1  # protagonist
                assert event.arg2.startswith("the ")

    def test_marker_detection_on_story_text(self):
        records = generate_synthetic_corpus(
            SyntheticConfig(n_stories=20, after_rate=0.5, rng_seed=8)
        )
        for r in records:
            assert tuple(detect_story_relations(r.sentences)) == r.prompts

    def test_connective_classifier(self):
        assert classify_connective("then he ran .") is B
        assert classify_connective("before that , he had run .") is A
        assert classify_connective("he ran .") is V


class TestPretrainingStorylines:
    def test_ten_clean_sentences_give_two_spans(self):
        doc = [f"tom visited the park{i} ." for i in range(10)]
        build = build_pretraining_storylines([doc])
        assert len(build.storylines) == 2
        assert all(s.prompts is None for s in build.storylines)

    def test_short_document_gives_nothing(self):
        build = build_pretraining_storylines([["a b c ."] * 4])
        assert build.storylines == []

    def test_noisy_span_filtered_and_counted(self):
        clean = ["tom visited the park ."] * 5
        noisy = ["@@ ## $$ %% ^^ && !!"] * 5
        build = build_pretraining_storylines([clean + noisy])
        assert build.spans_total == 2
        assert build.spans_noisy == 1
        assert build.spans_kept == 1

    def test_document_reader(self, tmp_path):
        p = tmp_path / "docs.txt"
        p.write_text("a .\nb .\n\nc .\n")
        assert read_sentence_documents(p) == [["a .", "b ."], ["c ."]]


class TestCorpusIO:
    def test_round_trip_through_annotated_file(self, tmp_path):
        records = generate_synthetic_corpus(
            SyntheticConfig(n_stories=25, after_rate=0.4, rng_seed=2)
        )
        p = tmp_path / "corpus.jsonl"
        save_annotated_corpus(records, p)
        loaded = load_corpus(p, ROCSTORIES_PROFILE)
        assert [r.id for r in loaded] == [r.id for r in records]
        assert all(a.prompts == b.prompts for a, b in zip(loaded, records))
        assert all(a.storyline == b.storyline for a, b in zip(loaded, records))

    def test_profile_rejects_wrong_sentence_count(self, tmp_path):
        p = tmp_path / "corpus.jsonl"
        p.write_text(json.dumps({"id": "x", "prefix": "a", "sentences": ["a", "b"]}) + "\n")
        with pytest.raises(SchemaError):
            load_corpus(p, ROCSTORIES_PROFILE)

    def test_external_events_override_extraction(self, tmp_path):
        p = tmp_path / "corpus.jsonl"
        p.write_text(
            json.dumps(
                {"id": "x", "prefix": "a", "sentences": ["tom visited the park ."]}
            )
            + "\n"
        )
        ext = {"x": [Event("custom", "arg", "")]}
        loaded = load_corpus(
            p,
            ROCSTORIES_PROFILE.__class__(name="free", fixed_n_events=None),
            external_events=ext,
        )
        assert loaded[0].storyline.events[0] == Event("custom", "arg", "")


class TestWordLimit:
    def test_writingprompts_profile_drops_long_stories(self, tmp_path):
        from fbgen.corpus import WRITINGPROMPTS_PROFILE

        short = {"id": "a", "prefix": "p", "sentences": ["tom visited the park ."] * 3}
        long_story = {
            "id": "b",
            "prefix": "p",
            "sentences": ["tom visited the very large park today ."] * 100,
        }
        p = tmp_path / "wp.jsonl"
        p.write_text(json.dumps(short) + "\n" + json.dumps(long_story) + "\n")
        records = load_corpus(p, WRITINGPROMPTS_PROFILE)
        assert [r.id for r in records] == ["a"]
