import math

import pytest
import torch

from fbgen.corpus import SyntheticConfig, generate_synthetic_corpus
from fbgen.errors import CheckpointError, SequenceTooLong
from fbgen.models import (
    EOS,
    Greedy,
    RESERVED_TOKENS,
    Sample,
    SeqModel,
    SeqModelConfig,
    Vocabulary,
    build_storyline_source,
    build_storyline_target,
    build_vocabulary,
    decode,
    generate_batch,
    generate_story,
    load_checkpoint,
    perplexity,
    save_checkpoint,
    sequence_log_prob,
    split_sentences,
    story_loss,
    storyline_loss,
)
from fbgen.storyline import (
    DEFAULT_CONVENTIONS as CONV,
    Event,
    Story,
    StructuredStoryline,
    TemporalRelation,
)

B, A = TemporalRelation.BEFORE, TemporalRelation.AFTER


def tiny_vocab(words=("a", "b", "c")):
    return Vocabulary(
        tuple(RESERVED_TOKENS) + tuple(CONV.sentinels) + (";",) + tuple(words)
    )


def tiny_model(vocab=None, seed=0, **kwargs):
    vocab = vocab or tiny_vocab()
    defaults = dict(embed_dim=8, hidden_dim=12, n_layers=1, max_len=64, rng_seed=seed)
    defaults.update(kwargs)
    cfg = SeqModelConfig(vocab_size=len(vocab), **defaults)
    return SeqModel(cfg, vocab)


def make_uniform(model):
    with torch.no_grad():
        model.out.weight.zero_()
        model.out.bias.zero_()
    return model


def make_constant_token(model, token, bias=100.0):
    with torch.no_grad():
        model.out.weight.zero_()
        model.out.bias.zero_()
        model.out.bias[model.vocab.token_to_id[token]] = bias
    return model


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic_corpus(
        SyntheticConfig(n_stories=40, after_rate=0.3, rng_seed=17)
    )


GOLD = StructuredStoryline(
    (Event("grabbed", "she", "the dog"), Event("ran", "she", "")), (A,)
)


class TestVocabulary:
    def test_size_is_words_plus_fixed_tokens(self, corpus):
        vocab = build_vocabulary(corpus)
        words = set()
        for r in corpus:
            for s in r.sentences:
                words.update(s.split())
            for e in r.storyline.events:
                words.update((e.trigger + " " + e.arg1 + " " + e.arg2).split())
        fixed = len(RESERVED_TOKENS) + len(CONV.sentinels) + 1  # incl. ";"
        assert len(vocab) == len(words - {";"}) + fixed

    def test_unknown_token_maps_to_unk(self, corpus):
        vocab = build_vocabulary(corpus)
        assert vocab.encode(["zzzzz"]) == [vocab.unk_id]

    def test_two_builds_are_identical(self, corpus):
        v1 = build_vocabulary(corpus)
        v2 = build_vocabulary(corpus)
        assert v1.id_to_token == v2.id_to_token
        assert v1.hash() == v2.hash()

    def test_sentinels_present_exactly_once(self, corpus):
        vocab = build_vocabulary(corpus)
        for tok in CONV.sentinels:
            assert vocab.id_to_token.count(tok) == 1

    def test_empty_corpus(self):
        from fbgen.errors import EmptyCorpus

        with pytest.raises(EmptyCorpus):
            build_vocabulary([])


class TestSeqModel:
    def test_param_count_deterministic(self):
        m1, m2 = tiny_model(seed=0), tiny_model(seed=1)
        assert m1.n_params == m2.n_params

    def test_same_seed_same_parameters(self):
        m1, m2 = tiny_model(seed=3), tiny_model(seed=3)
        for p1, p2 in zip(m1.parameters(), m2.parameters()):
            assert torch.equal(p1, p2)

    def test_vocab_size_mismatch(self):
        vocab = tiny_vocab()
        with pytest.raises(ValueError):
            SeqModel(SeqModelConfig(vocab_size=len(vocab) + 1), vocab)

    def test_sequence_too_long(self):
        model = tiny_model(max_len=4)
        with pytest.raises(SequenceTooLong):
            sequence_log_prob(model, "a b c d e f", ["a"])


class TestLosses:
    def test_uniform_model_storyline_loss_is_log_vocab(self):
        model = make_uniform(tiny_model(tiny_vocab(("grabbed", "she", "the", "dog", "ran"))))
        loss = storyline_loss(model, "she grabbed the dog", GOLD, keep_first_k=1)
        assert loss.item() == pytest.approx(math.log(len(model.vocab)), rel=1e-6)

    def test_uniform_model_story_loss_is_log_vocab(self):
        model = make_uniform(tiny_model())
        story = Story(("x .", "a b c ."), prefix_len=1)
        loss = story_loss(model, "x .", "a ; b ; c<eoe>", story)
        assert loss.item() == pytest.approx(math.log(len(model.vocab)), rel=1e-6)

    def test_probability_one_model_scores_zero(self):
        model = make_constant_token(tiny_model(), "a")
        lp = sequence_log_prob(model, "x", ["a", "a", "a"])
        assert lp.item() == pytest.approx(0.0, abs=1e-6)

    def test_loss_decreases_when_overfitting(self):
        torch.manual_seed(0)
        model = tiny_model(tiny_vocab(("she", "grabbed", "the", "dog", "ran")))
        opt = torch.optim.Adam(model.parameters(), lr=5e-3)
        losses = []
        for _ in range(200):
            opt.zero_grad()
            loss = storyline_loss(model, "she grabbed the dog", GOLD)
            loss.backward()
            opt.step()
            losses.append(loss.item())
        assert losses[-1] < 0.1
        assert losses[-1] < losses[0]

    def test_storyline_loss_uses_prompt_free_form_when_unannotated(self):
        model = make_uniform(tiny_model())
        bare = GOLD.without_prompts()
        loss = storyline_loss(model, "x", bare)
        assert loss.item() == pytest.approx(math.log(len(model.vocab)), rel=1e-6)


class TestSequenceLogProb:
    def test_empty_target_scores_zero(self):
        model = tiny_model()
        assert sequence_log_prob(model, "a b", []).item() == 0.0

    def test_consistency_with_storyline_loss(self):
        model = tiny_model(tiny_vocab(("she", "grabbed", "the", "dog", "ran")))
        loss = storyline_loss(model, "she grabbed the dog", GOLD)
        src = build_storyline_source("she grabbed the dog", GOLD, 1)
        tgt = build_storyline_target(GOLD) + [EOS]
        lp = sequence_log_prob(model, src, tgt)
        assert loss.item() * len(tgt) == pytest.approx(-lp.item(), abs=1e-5)

    def test_probabilities_sum_to_one_over_full_vocab(self):
        vocab = tiny_vocab(("a", "b", "c"))
        model = tiny_model(vocab, embed_dim=4, hidden_dim=5).double()
        length = 2
        total = 0.0
        tokens = list(vocab.id_to_token)
        import itertools

        for combo in itertools.product(tokens, repeat=length):
            total += math.exp(sequence_log_prob(model, "a b", list(combo)).item())
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_subset_enumeration_sums_below_one(self):
        vocab = tiny_vocab(("a", "b", "c"))
        model = tiny_model(vocab, embed_dim=4, hidden_dim=5).double()
        total = 0.0
        import itertools

        for combo in itertools.product(["a", "b", "c"], repeat=3):
            total += math.exp(sequence_log_prob(model, "a", list(combo)).item())
        assert total <= 1.0

    def test_log_prob_is_differentiable(self):
        model = tiny_model()
        lp = sequence_log_prob(model, "a b", ["a", "b"])
        lp.backward()
        assert any(
            p.grad is not None and p.grad.abs().sum() > 0 for p in model.parameters()
        )


def flatten_params(model):
    return torch.cat([p.reshape(-1) for p in model.parameters()])


def finite_difference_check(model, loss_fn, eps=1e-5):
    loss = loss_fn()
    analytic = torch.autograd.grad(loss, list(model.parameters()))
    analytic_flat = torch.cat([g.reshape(-1) for g in analytic])
    params = list(model.parameters())
    fd = torch.zeros_like(analytic_flat)
    idx = 0
    with torch.no_grad():
        for p in params:
            flat = p.reshape(-1)
            for j in range(flat.numel()):
                orig = flat[j].item()
                flat[j] = orig + eps
                up = loss_fn().item()
                flat[j] = orig - eps
                down = loss_fn().item()
                flat[j] = orig
                fd[idx] = (up - down) / (2 * eps)
                idx += 1
    denom = max(analytic_flat.norm().item(), fd.norm().item(), 1e-12)
    return (analytic_flat - fd).norm().item() / denom


class TestGradientChecks:
    def test_storyline_loss_gradient_matches_finite_differences(self):
        vocab = tiny_vocab(("she", "ran", "x"))
        model = tiny_model(vocab, embed_dim=3, hidden_dim=4).double()
        assert model.n_params <= 500
        gold = StructuredStoryline((Event("ran", "she", ""),))
        rel = finite_difference_check(
            model, lambda: storyline_loss(model, "she ran", gold)
        )
        assert rel < 1e-4

    def test_story_loss_gradient_matches_finite_differences(self):
        vocab = tiny_vocab(("she", "ran", "x"))
        model = tiny_model(vocab, embed_dim=3, hidden_dim=4).double()
        story = Story(("x", "she ran . x she"), prefix_len=1)
        rel = finite_difference_check(
            model, lambda: story_loss(model, "x", "ran ; she ; <eoe>", story)
        )
        assert rel < 1e-4


class TestDecode:
    def test_greedy_is_deterministic(self):
        model = tiny_model()
        d1 = decode(model, "a b c", Greedy(), max_len=8)
        d2 = decode(model, "a b c", Greedy(), max_len=8)
        assert d1.tokens == d2.tokens

    def test_sampling_same_seed_is_deterministic(self):
        model = tiny_model()
        d1 = decode(model, "a b c", Sample(rng_seed=9), max_len=8)
        d2 = decode(model, "a b c", Sample(rng_seed=9), max_len=8)
        assert d1.tokens == d2.tokens

    def test_sampling_seeds_differ(self):
        model = tiny_model()
        outs = {
            tuple(decode(model, "a b c", Sample(rng_seed=s), max_len=8).tokens)
            for s in range(8)
        }
        assert len(outs) > 1

    def test_truncation_reported(self):
        model = make_constant_token(tiny_model(), "a")
        d = decode(model, "a", Greedy(), max_len=5)
        assert d.truncated
        assert d.tokens == ["a"] * 5

    def test_overfit_model_decodes_training_target(self):
        torch.manual_seed(1)
        vocab = tiny_vocab(("she", "grabbed", "the", "dog", "ran"))
        model = tiny_model(vocab, embed_dim=16, hidden_dim=24)
        opt = torch.optim.Adam(model.parameters(), lr=5e-3)
        src = build_storyline_source("she grabbed the dog", GOLD, 1)
        tgt = build_storyline_target(GOLD)
        for _ in range(200):
            opt.zero_grad()
            loss = storyline_loss(model, "she grabbed the dog", GOLD)
            loss.backward()
            opt.step()
        model.eval()
        assert decode(model, src, Greedy()).tokens == tgt


class TestPerplexity:
    def test_uniform_model_perplexity_is_vocab_size(self, corpus):
        vocab = build_vocabulary(corpus)
        cfg = SeqModelConfig(vocab_size=len(vocab), embed_dim=8, hidden_dim=8)
        model = make_uniform(SeqModel(cfg, vocab))
        for role in ("storyline", "story"):
            assert perplexity(model, corpus[:10], role) == pytest.approx(
                len(vocab), rel=1e-5
            )

    def test_empty_records(self):
        from fbgen.errors import EmptyCorpus

        with pytest.raises(EmptyCorpus):
            perplexity(tiny_model(), [], "story")

    def test_unknown_role(self, corpus):
        with pytest.raises(ValueError):
            perplexity(tiny_model(), corpus[:2], "poem")


class TestGeneration:
    def test_prompt_count_mismatch(self):
        model = tiny_model()
        with pytest.raises(ValueError):
            generate_story(model, model, "a b", [B, A], n_events=5)

    def test_generation_is_deterministic_given_seed(self):
        model = tiny_model()
        kw = dict(strategy=Sample(rng_seed=4), n_events=None, keep_first_k=0)
        r1 = generate_story(model, model, "a b c", [B, A], **kw)
        r2 = generate_story(model, model, "a b c", [B, A], **kw)
        assert r1.storyline_tokens == r2.storyline_tokens
        assert r1.story == r2.story

    def test_batch_matches_own_rerun(self):
        model = tiny_model()
        prefixes = ["a b", "b c", "c a"]
        prompts = [[B, A], [A, A], [B, B]]
        out1 = generate_batch(model, model, prefixes, prompts, strategy=Sample(rng_seed=1))
        out2 = generate_batch(model, model, prefixes, prompts, strategy=Sample(rng_seed=1))
        assert [r.story for r in out1] == [r.story for r in out2]

    def test_story_includes_prefix_sentence(self):
        model = tiny_model()
        r = generate_story(model, model, "a b", [B], strategy=Greedy())
        assert r.story.sentences[0] == "a b"
        assert r.story.prefix_len == 1

    def test_split_sentences(self):
        toks = ["he", "ran", ".", "then", "he", "ate", ".", "done"]
        assert split_sentences(toks) == ["he ran .", "then he ate .", "done"]


class TestCheckpoints:
    def test_round_trip(self, tmp_path, corpus):
        vocab = build_vocabulary(corpus)
        cfg = SeqModelConfig(vocab_size=len(vocab), embed_dim=8, hidden_dim=8)
        model = SeqModel(cfg, vocab)
        path = tmp_path / "model.fbgen"
        save_checkpoint(model, path)
        loaded, conv = load_checkpoint(path)
        assert loaded.config == model.config
        assert loaded.vocab.id_to_token == vocab.id_to_token
        assert conv == CONV
        src = [vocab.encode(["tom"])]
        tgt = [vocab.encode(["visited"])]
        before = model.sequence_scores(src, tgt)[0]
        after = loaded.sequence_scores(src, tgt)[0]
        assert torch.allclose(before, after)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.fbgen"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "wrong.fbgen"
        torch.save({"magic": "OTHER"}, path)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
