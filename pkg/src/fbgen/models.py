"""Sequence models for storyline planning and story realization.

A single small attention-based encoder-decoder architecture backs both the
storyline model and the story model (and the frozen scorer used for
generated-text perplexity). Sources and targets are whitespace token
sequences; storyline sentinels are atomic vocabulary items.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import torch
from torch import nn

from .corpus import StoryRecord, extract_event
from .errors import CheckpointError, SequenceTooLong
from .storyline import (
    DEFAULT_CONVENTIONS,
    Event,
    Story,
    StructuredStoryline,
    TemporalRelation,
    TokenConventions,
    mask_events,
    parse_storyline_tokens,
    serialize_storyline,
    tokenize,
)
from .validation import check_non_empty_corpus, check_positive

PAD, BOS, EOS, UNK, SEP = "<pad>", "<bos>", "<eos>", "<unk>", "<sep>"
RESERVED_TOKENS = (PAD, BOS, EOS, UNK, SEP)

CHECKPOINT_MAGIC = "FBGEN1"


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Vocabulary:
    """Bijective token/id map with reserved and sentinel tokens up front."""

    id_to_token: tuple[str, ...]
    token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mapping = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(mapping) != len(self.id_to_token):
            raise ValueError("vocabulary tokens must be unique")
        for tok in RESERVED_TOKENS:
            if tok not in mapping:
                raise ValueError(f"vocabulary is missing reserved token {tok!r}")
        object.__setattr__(self, "token_to_id", mapping)

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def bos_id(self) -> int:
        return self.token_to_id[BOS]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def sep_id(self) -> int:
        return self.token_to_id[SEP]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        unk = self.unk_id
        return [self.token_to_id.get(t, unk) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def hash(self) -> str:
        digest = hashlib.sha256("\n".join(self.id_to_token).encode("utf-8"))
        return digest.hexdigest()


def build_vocabulary(
    records: Sequence[StoryRecord],
    conv: TokenConventions = DEFAULT_CONVENTIONS,
) -> Vocabulary:
    """Whitespace-token vocabulary over serialized storylines and story text.

    Reserved tokens and storyline sentinels come first; corpus tokens follow
    sorted by (frequency desc, token asc) so two builds from the same corpus
    assign identical ids.
    """
    check_non_empty_corpus(records, "corpus")
    counts: dict[str, int] = {}

    def add(tokens: Iterable[str]):
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1

    for r in records:
        add(tokenize(r.prefix, conv))
        for sentence in r.sentences:
            add(tokenize(sentence, conv))
        add(
            tokenize(
                serialize_storyline(
                    r.storyline, with_prompts=r.storyline.is_annotated, conv=conv
                ),
                conv,
            )
        )
    fixed = list(RESERVED_TOKENS) + list(conv.sentinels)
    sep = conv.field_separator.strip()
    if sep:
        fixed.append(sep)
    seen = set(fixed)
    ordered = sorted(
        (t for t in counts if t not in seen), key=lambda t: (-counts[t], t)
    )
    return Vocabulary(tuple(fixed + ordered))


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeqModelConfig:
    vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 128
    n_layers: int = 1
    max_len: int = 160
    dropout: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "hidden_dim", "n_layers", "max_len"):
            check_positive(getattr(self, name), name)
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


class SeqModel(nn.Module):
    """GRU encoder-decoder with dot-product attention and tied source/target
    embeddings. Parameters are initialized deterministically from the
    config's rng_seed."""

    def __init__(self, config: SeqModelConfig, vocab: Vocabulary):
        super().__init__()
        if config.vocab_size != len(vocab):
            raise ValueError(
                f"config.vocab_size {config.vocab_size} != len(vocab) {len(vocab)}"
            )
        self.config = config
        self.vocab = vocab
        rnn_dropout = config.dropout if config.n_layers > 1 else 0.0
        with torch.random.fork_rng():
            torch.manual_seed(config.rng_seed)
            self.embedding = nn.Embedding(
                config.vocab_size, config.embed_dim, padding_idx=vocab.pad_id
            )
            self.encoder = nn.GRU(
                config.embed_dim, config.hidden_dim, config.n_layers,
                batch_first=True, dropout=rnn_dropout,
            )
            self.decoder = nn.GRU(
                config.embed_dim, config.hidden_dim, config.n_layers,
                batch_first=True, dropout=rnn_dropout,
            )
            self.attn_combine = nn.Linear(2 * config.hidden_dim, config.hidden_dim)
            self.out = nn.Linear(config.hidden_dim, config.vocab_size)
            self.dropout = nn.Dropout(config.dropout)

    @property
    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def _dtype(self) -> torch.dtype:
        return self.out.weight.dtype

    def _pad_batch(self, seqs: Sequence[Sequence[int]]) -> tuple[torch.Tensor, torch.Tensor]:
        max_len = max(len(s) for s in seqs)
        pad = self.vocab.pad_id
        ids = torch.full((len(seqs), max_len), pad, dtype=torch.long)
        for i, s in enumerate(seqs):
            if s:
                ids[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        lens = torch.tensor([len(s) for s in seqs], dtype=torch.long)
        return ids, lens

    def _encode(self, src_ids: torch.Tensor, src_lens: torch.Tensor):
        emb = self.dropout(self.embedding(src_ids))
        packed = nn.utils.rnn.pack_padded_sequence(
            emb, src_lens, batch_first=True, enforce_sorted=False
        )
        out, hidden = self.encoder(packed)
        out, _ = nn.utils.rnn.pad_packed_sequence(
            out, batch_first=True, total_length=src_ids.shape[1]
        )
        return out, hidden

    def _attend(self, dec_out: torch.Tensor, enc_out: torch.Tensor, src_mask: torch.Tensor):
        scores = dec_out @ enc_out.transpose(1, 2)
        scores = scores.masked_fill(~src_mask.unsqueeze(1), float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        context = attn @ enc_out
        combined = torch.tanh(self.attn_combine(torch.cat([dec_out, context], dim=-1)))
        return self.out(combined)

    def sequence_scores(
        self,
        sources: Sequence[Sequence[int]],
        targets: Sequence[Sequence[int]],
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Teacher-forced scoring of target ids given source ids.

        Sources get a BOS prepended (so empty sources are legal); target
        inputs are BOS-shifted. Returns per-sample (log-prob sums, token
        counts); the sums are differentiable.
        """
        if len(sources) != len(targets):
            raise ValueError("sources and targets must align")
        bos = self.vocab.bos_id
        src_ids, src_lens = self._pad_batch([[bos, *s] for s in sources])
        tgt_in_ids, _ = self._pad_batch([[bos, *t[:-1]] for t in targets])
        tgt_out_ids, tgt_lens = self._pad_batch(targets)
        self._check_len(src_ids.shape[1])
        self._check_len(tgt_out_ids.shape[1])
        src_mask = torch.arange(src_ids.shape[1])[None, :] < src_lens[:, None]
        enc_out, hidden = self._encode(src_ids, src_lens)
        dec_emb = self.dropout(self.embedding(tgt_in_ids))
        dec_out, _ = self.decoder(dec_emb, hidden)
        logits = self._attend(dec_out, enc_out, src_mask)
        logprobs = torch.log_softmax(logits, dim=-1)
        token_lp = logprobs.gather(-1, tgt_out_ids.unsqueeze(-1)).squeeze(-1)
        tgt_mask = torch.arange(tgt_out_ids.shape[1])[None, :] < tgt_lens[:, None]
        token_lp = token_lp * tgt_mask.to(token_lp.dtype)
        return token_lp.sum(dim=1), tgt_lens

    def _check_len(self, length: int) -> None:
        if length > self.config.max_len:
            raise SequenceTooLong(
                f"sequence length {length} exceeds max_len {self.config.max_len}"
            )

    @torch.no_grad()
    def generate_ids(
        self,
        sources: Sequence[Sequence[int]],
        strategy: "DecodeStrategy",
        max_len: Optional[int] = None,
        generator: Optional[torch.Generator] = None,
    ) -> tuple[list[list[int]], list[bool]]:
        """Autoregressive decoding until EOS or max_len, batched.

        Sampling draws through the supplied generator (or one seeded from
        the strategy) so decoding is reproducible.
        """
        limit = max_len if max_len is not None else self.config.max_len
        bos, eos, pad = self.vocab.bos_id, self.vocab.eos_id, self.vocab.pad_id
        src_ids, src_lens = self._pad_batch([[bos, *s] for s in sources])
        self._check_len(src_ids.shape[1])
        src_mask = torch.arange(src_ids.shape[1])[None, :] < src_lens[:, None]
        enc_out, hidden = self._encode(src_ids, src_lens)
        batch = len(sources)
        if generator is None and isinstance(strategy, Sample):
            generator = torch.Generator().manual_seed(strategy.rng_seed)
        tokens = torch.full((batch, 1), bos, dtype=torch.long)
        finished = torch.zeros(batch, dtype=torch.bool)
        outputs: list[list[int]] = [[] for _ in range(batch)]
        step_input = tokens
        for _ in range(limit):
            dec_emb = self.embedding(step_input)
            dec_out, hidden = self.decoder(dec_emb, hidden)
            logits = self._attend(dec_out, enc_out, src_mask)[:, -1, :]
            if isinstance(strategy, Greedy):
                next_ids = logits.argmax(dim=-1)
            else:
                probs = torch.softmax(logits / strategy.temperature, dim=-1)
                next_ids = torch.multinomial(
                    probs, 1, generator=generator
                ).squeeze(-1)
            next_ids = torch.where(
                finished, torch.full_like(next_ids, pad), next_ids
            )
            for i in range(batch):
                if not finished[i] and next_ids[i].item() != eos:
                    outputs[i].append(int(next_ids[i]))
            finished = finished | (next_ids == eos)
            if bool(finished.all()):
                break
            step_input = next_ids.unsqueeze(-1)
        truncated = [not bool(f) for f in finished]
        return outputs, truncated


@dataclass(frozen=True)
class Greedy:
    """Pick the most likely token at every step."""


@dataclass(frozen=True)
class Sample:
    """Sample from the softmax at the given temperature, seeded."""

    temperature: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        check_positive(self.temperature, "temperature")


DecodeStrategy = Union[Greedy, Sample]


# ---------------------------------------------------------------------------
# Source/target builders
# ---------------------------------------------------------------------------

def _as_tokens(text_or_tokens: Union[str, Sequence[str]], conv: TokenConventions) -> list[str]:
    if isinstance(text_or_tokens, str):
        return tokenize(text_or_tokens, conv)
    return list(text_or_tokens)


def build_storyline_source(
    prefix: str,
    skeleton: StructuredStoryline,
    keep_first_k: int,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    use_prompts: bool = True,
) -> list[str]:
    """Prefix text, a separator, then the masked storyline with concrete
    prompts (prompt tokens are given inputs, not predictions)."""
    masked = mask_events(skeleton, keep_first_k, conv, with_prompts=use_prompts)
    return tokenize(prefix, conv) + [SEP] + tokenize(masked, conv)


def build_storyline_target(
    gold: StructuredStoryline,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    use_prompts: bool = True,
) -> list[str]:
    return tokenize(serialize_storyline(gold, with_prompts=use_prompts, conv=conv), conv)


def build_story_source(
    prefix: str,
    storyline: Union[str, Sequence[str]],
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    max_len: Optional[int] = None,
) -> list[str]:
    """Prefix, separator, storyline tokens. When max_len is given, the
    storyline tokens are truncated so the padded source (with its BOS)
    fits; predicted storylines can run to the planner's decode limit."""
    prefix_tokens = tokenize(prefix, conv)
    storyline_tokens = _as_tokens(storyline, conv)
    if max_len is not None:
        budget = max_len - len(prefix_tokens) - 2
        storyline_tokens = storyline_tokens[: max(0, budget)]
    return prefix_tokens + [SEP] + storyline_tokens


def build_story_target(story: Story) -> list[str]:
    return " ".join(story.generated_sentences).split()


def record_story(record: StoryRecord) -> Story:
    """View a corpus record as a Story with its first sentence as prefix."""
    return Story(record.sentences, prefix_len=1)


# ---------------------------------------------------------------------------
# Losses, scoring, perplexity
# ---------------------------------------------------------------------------

def _nll(model: SeqModel, src_tokens: Sequence[str], tgt_tokens: Sequence[str]):
    """Mean per-token NLL including the end-of-sequence token."""
    src = model.vocab.encode(src_tokens)
    tgt = model.vocab.encode(tgt_tokens) + [model.vocab.eos_id]
    sums, counts = model.sequence_scores([src], [tgt])
    return -sums[0] / counts[0].to(sums.dtype)


def storyline_loss(
    model: SeqModel,
    x: str,
    gold: StructuredStoryline,
    prompts: Optional[Sequence[TemporalRelation]] = None,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    keep_first_k: int = 1,
    use_prompts: Optional[bool] = None,
) -> torch.Tensor:
    """Teacher-forced NLL of the gold storyline given the masked source.

    The source carries the prefix, the first keep_first_k events in concrete
    form, mask sentinels for the rest, and the given prompts; the target is
    the full serialized storyline. Differentiable.
    """
    if prompts is not None:
        gold = gold.with_prompts(prompts)
    if use_prompts is None:
        use_prompts = gold.is_annotated
    src = build_storyline_source(x, gold, keep_first_k, conv, use_prompts)
    tgt = build_storyline_target(gold, conv, use_prompts)
    return _nll(model, src, tgt)


def story_loss(
    model: SeqModel,
    x: str,
    storyline_text: Union[str, Sequence[str]],
    gold: Story,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
) -> torch.Tensor:
    """Teacher-forced NLL of the gold story's generated sentences given the
    prefix and a storyline (gold or predicted). Differentiable."""
    src = build_story_source(x, storyline_text, conv)
    return _nll(model, src, build_story_target(gold))


def sequence_log_prob(
    model: SeqModel,
    source: Union[str, Sequence[str]],
    target: Sequence[str],
    conv: TokenConventions = DEFAULT_CONVENTIONS,
) -> torch.Tensor:
    """Sum of per-token log-probabilities of exactly the given target tokens.

    No end-of-sequence token is appended; an empty target scores 0. The
    result is differentiable with respect to the model parameters.
    """
    if len(target) == 0:
        return torch.zeros((), dtype=model._dtype())
    src = model.vocab.encode(_as_tokens(source, conv))
    tgt = model.vocab.encode(target)
    sums, _ = model.sequence_scores([src], [tgt])
    return sums[0]


def decode(
    model: SeqModel,
    source: Union[str, Sequence[str]],
    strategy: DecodeStrategy = Greedy(),
    max_len: Optional[int] = None,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
) -> "DecodedSequence":
    """Decode a single source; truncation at max_len is reported, not fatal."""
    src = model.vocab.encode(_as_tokens(source, conv))
    ids, truncated = model.generate_ids([src], strategy, max_len)
    return DecodedSequence(tokens=model.vocab.decode(ids[0]), truncated=truncated[0])


@dataclass(frozen=True)
class DecodedSequence:
    tokens: list[str]
    truncated: bool

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@torch.no_grad()
def corpus_nll(
    model: SeqModel,
    examples: Sequence[tuple[Sequence[str], Sequence[str]]],
    batch_size: int = 64,
) -> tuple[float, int]:
    """Total NLL and token count (EOS included) over (source, target) pairs."""
    total, count = 0.0, 0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        srcs = [model.vocab.encode(s) for s, _ in chunk]
        tgts = [model.vocab.encode(t) + [model.vocab.eos_id] for _, t in chunk]
        sums, counts = model.sequence_scores(srcs, tgts)
        total += float(-sums.sum())
        count += int(counts.sum())
    return total, count


def perplexity(
    model: SeqModel,
    records: Sequence[StoryRecord],
    role: str,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    keep_first_k: int = 1,
    use_prompts: bool = True,
    storyline_texts: Optional[Sequence[Union[str, Sequence[str]]]] = None,
    batch_size: int = 64,
) -> float:
    """exp(total NLL / total predicted tokens) over an evaluation set.

    role "storyline" scores gold storylines given masked sources; role
    "story" scores gold stories given the prefix and either the gold
    storyline or, when storyline_texts is supplied, a predicted one per
    record (the inference-time condition).
    """
    check_non_empty_corpus(records, "evaluation set")
    if role not in ("storyline", "story"):
        raise ValueError(f"unknown role {role!r}")
    examples = []
    for i, r in enumerate(records):
        if role == "storyline":
            src = build_storyline_source(r.prefix, r.storyline, keep_first_k, conv, use_prompts)
            tgt = build_storyline_target(r.storyline, conv, use_prompts)
        else:
            if storyline_texts is not None:
                storyline = storyline_texts[i]
            else:
                storyline = serialize_storyline(r.storyline, use_prompts, conv)
            src = build_story_source(r.prefix, storyline, conv, max_len=model.config.max_len)
            tgt = build_story_target(record_story(r))
        examples.append((src, tgt))
    total, count = corpus_nll(model, examples, batch_size)
    return math.exp(total / count)


class ModelTextScorer:
    """Adapt a trained prefix-free SeqModel to the frozen-scorer protocol."""

    def __init__(self, model: SeqModel, conv: TokenConventions = DEFAULT_CONVENTIONS):
        self.model = model
        self.conv = conv

    @torch.no_grad()
    def text_nll(self, text: str) -> tuple[float, int]:
        tokens = tokenize(text, self.conv)
        total, count = corpus_nll(self.model, [([], tokens)])
        return total, count


# ---------------------------------------------------------------------------
# Two-step generation
# ---------------------------------------------------------------------------

SENTENCE_END_TOKENS = {".", "!", "?"}


def split_sentences(tokens: Sequence[str]) -> list[str]:
    """Group decoded story tokens into sentences at end punctuation."""
    sentences = []
    current: list[str] = []
    for tok in tokens:
        current.append(tok)
        if tok in SENTENCE_END_TOKENS:
            sentences.append(" ".join(current))
            current = []
    if current:
        sentences.append(" ".join(current))
    return sentences


@dataclass(frozen=True)
class GenerationResult:
    storyline: Optional[StructuredStoryline]
    story: Story
    storyline_tokens: tuple[str, ...]
    parse_ok: bool
    storyline_truncated: bool
    story_truncated: bool

    @property
    def storyline_text(self) -> str:
        return " ".join(self.storyline_tokens)


def _storyline_skeleton(
    prefix: str,
    prompts: Optional[Sequence[TemporalRelation]],
    n_events: Optional[int],
    keep_first_k: int,
    conv: TokenConventions,
) -> StructuredStoryline:
    if prompts is not None:
        n = len(prompts) + 1
        if n_events is not None and n_events != n:
            raise ValueError(
                f"{len(prompts)} prompts imply {n} events, got n_events={n_events}"
            )
    elif n_events is not None:
        n = n_events
    else:
        raise ValueError("need prompts or n_events to size the storyline")
    events: list[Event] = []
    if keep_first_k >= 1:
        try:
            events.append(extract_event(prefix))
        except Exception:
            events.append(Event("", "", ""))
    events.extend(Event.masked(conv) for _ in range(n - len(events)))
    return StructuredStoryline(
        tuple(events), tuple(prompts) if prompts is not None else None
    )


def generate_story(
    storyline_model: SeqModel,
    story_model: SeqModel,
    prefix: str,
    prompts: Optional[Sequence[TemporalRelation]],
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    strategy: DecodeStrategy = Greedy(),
    n_events: Optional[int] = None,
    keep_first_k: int = 1,
    include_prefix_sentence: bool = True,
) -> GenerationResult:
    """Plan a storyline from the masked prompt-bearing source, then realize
    the story conditioned on the prefix and the decoded storyline.

    A storyline that fails to parse is flagged but its raw token sequence is
    still fed to the story model.
    """
    results = generate_batch(
        storyline_model, story_model, [prefix], [prompts], conv, strategy,
        n_events=n_events, keep_first_k=keep_first_k,
        include_prefix_sentence=include_prefix_sentence,
    )
    return results[0]


def generate_batch(
    storyline_model: SeqModel,
    story_model: SeqModel,
    prefixes: Sequence[str],
    prompts_list: Sequence[Optional[Sequence[TemporalRelation]]],
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    strategy: DecodeStrategy = Greedy(),
    n_events: Optional[int] = None,
    keep_first_k: int = 1,
    include_prefix_sentence: bool = True,
    batch_size: int = 64,
) -> list[GenerationResult]:
    """Vectorized two-step generation; deterministic given the strategy."""
    if len(prefixes) != len(prompts_list):
        raise ValueError("prefixes and prompts_list must align")
    use_prompts = [p is not None for p in prompts_list]
    generator = None
    if isinstance(strategy, Sample):
        generator = torch.Generator().manual_seed(strategy.rng_seed)
    results: list[GenerationResult] = []
    for start in range(0, len(prefixes), batch_size):
        chunk = slice(start, start + batch_size)
        chunk_prefixes = prefixes[chunk]
        chunk_prompts = prompts_list[chunk]
        sources = []
        for prefix, prompts, up in zip(
            chunk_prefixes, chunk_prompts, use_prompts[chunk]
        ):
            skel = _storyline_skeleton(prefix, prompts, n_events, keep_first_k, conv)
            sources.append(
                storyline_model.vocab.encode(
                    build_storyline_source(prefix, skel, keep_first_k, conv, up)
                )
            )
        plan_ids, plan_trunc = storyline_model.generate_ids(
            sources, strategy, generator=generator
        )
        story_sources = []
        plans: list[tuple[Optional[StructuredStoryline], tuple[str, ...], bool]] = []
        for prefix, ids in zip(chunk_prefixes, plan_ids):
            tokens = storyline_model.vocab.decode(ids)
            try:
                parsed = parse_storyline_tokens(tokens, conv)
                ok = True
            except Exception:
                parsed, ok = None, False
            plans.append((parsed, tuple(tokens), ok))
            story_sources.append(
                story_model.vocab.encode(
                    build_story_source(
                        prefix, tokens, conv, max_len=story_model.config.max_len
                    )
                )
            )
        story_ids, story_trunc = story_model.generate_ids(
            story_sources, strategy, generator=generator
        )
        for prefix, (parsed, plan_tokens, ok), sids, pt, st in zip(
            chunk_prefixes, plans, story_ids, plan_trunc, story_trunc
        ):
            sentences = split_sentences(story_model.vocab.decode(sids))
            if include_prefix_sentence:
                story = Story((prefix, *sentences), prefix_len=1)
            else:
                story = Story(tuple(sentences), prefix_len=0)
            results.append(
                GenerationResult(
                    storyline=parsed,
                    story=story,
                    storyline_tokens=plan_tokens,
                    parse_ok=ok,
                    storyline_truncated=pt,
                    story_truncated=st,
                )
            )
    return results


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: SeqModel, path: str | Path, conv: TokenConventions = DEFAULT_CONVENTIONS) -> None:
    """Write a single self-describing checkpoint file."""
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "config": asdict(model.config),
        "vocab": list(model.vocab.id_to_token),
        "conventions": {
            "field_separator": conv.field_separator,
            "eoe_token": conv.eoe_token,
            "mask_token": conv.mask_token,
            "prompt_tokens": {r.value: t for r, t in conv.prompt_tokens.items()},
        },
        "state_dict": model.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[SeqModel, TokenConventions]:
    """Load a checkpoint written by save_checkpoint."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_MAGIC} checkpoint")
    config = SeqModelConfig(**payload["config"])
    vocab = Vocabulary(tuple(payload["vocab"]))
    conv_data = payload["conventions"]
    conv = TokenConventions(
        field_separator=conv_data["field_separator"],
        eoe_token=conv_data["eoe_token"],
        mask_token=conv_data["mask_token"],
        prompt_tokens={
            TemporalRelation(r): t for r, t in conv_data["prompt_tokens"].items()
        },
    )
    model = SeqModel(config, vocab)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, conv
