"""Domain types and the textual serialization grammar for structured storylines.

A structured storyline is an ordered sequence of events (trigger plus two
arguments) interleaved with temporal prompt tokens that state how each event
relates in time to the next one. Everything here is a pure value type or a
pure function, safe to share across threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

from .errors import MalformedStoryline


class TemporalRelation(Enum):
    """Temporal order between two adjacent events, judged by start time.

    VAGUE means the order is undetermined from context; it is a legitimate
    label, not an error.
    """

    BEFORE = "before"
    AFTER = "after"
    VAGUE = "vague"

    @classmethod
    def from_string(cls, s: str) -> "TemporalRelation":
        try:
            return cls(s.strip().lower())
        except ValueError:
            raise ValueError(f"unknown temporal relation: {s!r}") from None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Event:
    """One event: a trigger word and up to two argument spans.

    Arguments may be empty strings. A fully masked event has all three
    fields equal to the mask sentinel; an all-empty event is the placeholder
    recorded when extraction finds no verb.
    """

    trigger: str
    arg1: str = ""
    arg2: str = ""

    def is_placeholder(self) -> bool:
        return not (self.trigger or self.arg1 or self.arg2)

    @classmethod
    def masked(cls, conv: "TokenConventions") -> "Event":
        m = conv.mask_token
        return cls(m, m, m)


def _default_prompt_tokens() -> Mapping[TemporalRelation, str]:
    return {
        TemporalRelation.BEFORE: "<before>",
        TemporalRelation.AFTER: "<after>",
        TemporalRelation.VAGUE: "<vague>",
    }


@dataclass(frozen=True)
class TokenConventions:
    """Special tokens and separators used by the serialization grammar.

    All special tokens must be pairwise distinct and must not contain the
    field separator, otherwise the grammar would be ambiguous.
    """

    field_separator: str = " ; "
    eoe_token: str = "<eoe>"
    mask_token: str = "<mask>"
    prompt_tokens: Mapping[TemporalRelation, str] = field(
        default_factory=_default_prompt_tokens
    )

    def __post_init__(self):
        specials = [self.eoe_token, self.mask_token, *self.prompt_tokens.values()]
        if len(set(self.prompt_tokens)) != 3:
            raise ValueError("prompt_tokens must cover all three relations")
        if len(set(specials)) != len(specials):
            raise ValueError("special tokens must be pairwise distinct")
        for tok in specials:
            if not tok or self.field_separator in tok:
                raise ValueError(f"invalid special token: {tok!r}")

    @property
    def sentinels(self) -> tuple[str, ...]:
        """All atomic special tokens, never split by tokenization."""
        return (
            self.eoe_token,
            self.mask_token,
            *(self.prompt_tokens[r] for r in TemporalRelation),
        )

    @property
    def terminator_tokens(self) -> tuple[str, ...]:
        return (self.eoe_token, *(self.prompt_tokens[r] for r in TemporalRelation))

    def prompt_token(self, relation: TemporalRelation) -> str:
        return self.prompt_tokens[relation]

    def relation_for_token(self, token: str) -> Optional[TemporalRelation]:
        for rel, tok in self.prompt_tokens.items():
            if tok == token:
                return rel
        return None


DEFAULT_CONVENTIONS = TokenConventions()


@dataclass(frozen=True)
class StructuredStoryline:
    """Ordered events plus the n-1 temporal prompts between adjacent events.

    The last event has no outgoing relation, hence n-1 prompts. prompts is
    None while a storyline is not yet annotated (corpus ingestion before
    annotation, pretraining storylines). For a single-event storyline the
    no-prompt state is canonicalized to an empty tuple since both serialized
    forms coincide.
    """

    events: tuple[Event, ...]
    prompts: Optional[tuple[TemporalRelation, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if len(self.events) < 1:
            raise ValueError("a storyline needs at least one event")
        prompts = self.prompts
        if prompts is not None:
            prompts = tuple(prompts)
        if len(self.events) == 1:
            prompts = ()
        if prompts is not None and len(prompts) != len(self.events) - 1:
            raise ValueError(
                f"need {len(self.events) - 1} prompts for {len(self.events)} "
                f"events, got {len(prompts)}"
            )
        object.__setattr__(self, "prompts", prompts)

    @property
    def n_events(self) -> int:
        return len(self.events)

    @property
    def is_annotated(self) -> bool:
        return self.prompts is not None

    def with_prompts(
        self, prompts: Sequence[TemporalRelation]
    ) -> "StructuredStoryline":
        return StructuredStoryline(self.events, tuple(prompts))

    def without_prompts(self) -> "StructuredStoryline":
        return StructuredStoryline(self.events, None)


@dataclass(frozen=True)
class Story:
    """A story as an ordered list of sentences; the first prefix_len
    sentences were given as input rather than generated."""

    sentences: tuple[str, ...]
    prefix_len: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not 0 <= self.prefix_len <= len(self.sentences):
            raise ValueError("prefix_len out of range")

    @property
    def text(self) -> str:
        return " ".join(self.sentences)

    @property
    def generated_sentences(self) -> tuple[str, ...]:
        return self.sentences[self.prefix_len:]


def serialize_event(e: Event, conv: TokenConventions = DEFAULT_CONVENTIONS) -> str:
    """Render one event as "trigger ; arg1 ; arg2" (no terminator)."""
    return conv.field_separator.join((e.trigger, e.arg1, e.arg2))


def _terminators(
    s: StructuredStoryline, with_prompts: bool, conv: TokenConventions
) -> list[str]:
    if with_prompts:
        if s.prompts is None:
            raise ValueError("storyline has no prompts to serialize")
        return [conv.prompt_token(r) for r in s.prompts] + [conv.eoe_token]
    return [conv.eoe_token] * s.n_events


def serialize_storyline(
    s: StructuredStoryline,
    with_prompts: bool = True,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
) -> str:
    """Serialize a storyline.

    With prompts, event k is terminated by the prompt token for its relation
    to event k+1; the final event is terminated by the end-of-event token.
    Without prompts, every event is terminated by the end-of-event token.
    Terminators attach directly to the event text, with no separator.
    """
    terms = _terminators(s, with_prompts, conv)
    return "".join(
        serialize_event(e, conv) + t for e, t in zip(s.events, terms)
    )


def mask_events(
    s: StructuredStoryline,
    keep_first_k: int,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    with_prompts: bool = True,
) -> str:
    """Serialize with only the first k events concrete.

    The remaining events are rendered as fully masked events. Prompts are
    given inputs, so they always stay concrete; pass with_prompts=False for
    the prompt-free variant (every terminator is the end-of-event token).
    """
    if not 0 <= keep_first_k <= s.n_events:
        raise ValueError(f"keep_first_k must be in [0, {s.n_events}]")
    terms = _terminators(s, with_prompts, conv)
    masked = serialize_event(Event.masked(conv), conv)
    parts = []
    for k, (e, t) in enumerate(zip(s.events, terms)):
        body = serialize_event(e, conv) if k < keep_first_k else masked
        parts.append(body + t)
    return "".join(parts)


def _split_on_terminators(text: str, conv: TokenConventions) -> list[str]:
    pattern = "|".join(
        re.escape(t) for t in sorted(conv.terminator_tokens, key=len, reverse=True)
    )
    return re.split(f"({pattern})", text)


def parse_storyline(
    text: str, conv: TokenConventions = DEFAULT_CONVENTIONS
) -> StructuredStoryline:
    """Invert serialize_storyline.

    Accepts both the with-prompt form (prompt terminators, then a final
    end-of-event token) and the prompt-free form (end-of-event tokens
    throughout, giving an unannotated storyline). Raises MalformedStoryline
    on empty input, wrong field arity, a mixed or missing terminator
    pattern, or trailing junk.
    """
    text = text.strip()
    if not text:
        raise MalformedStoryline("empty input")
    pieces = _split_on_terminators(text, conv)
    # re.split with a capture group alternates chunk/terminator and ends on a
    # chunk, which must be empty if the text ends with a terminator.
    if len(pieces) < 3 or pieces[-1] != "":
        raise MalformedStoryline("storyline does not end with a terminator")
    chunks = pieces[0:-1:2]
    terms = pieces[1::2]
    events = []
    for chunk in chunks:
        fields = chunk.split(conv.field_separator)
        if len(fields) != 3:
            raise MalformedStoryline(
                f"event has {len(fields)} fields, expected 3: {chunk!r}"
            )
        events.append(Event(*fields))
    if terms[-1] != conv.eoe_token:
        raise MalformedStoryline("final terminator must be the end-of-event token")
    inner = terms[:-1]
    if all(t == conv.eoe_token for t in inner):
        prompts = None
    elif all(conv.relation_for_token(t) is not None for t in inner):
        prompts = tuple(conv.relation_for_token(t) for t in inner)
    else:
        raise MalformedStoryline("mixed prompt and end-of-event terminators")
    return StructuredStoryline(tuple(events), prompts)


def parse_storyline_tokens(
    tokens: Sequence[str], conv: TokenConventions = DEFAULT_CONVENTIONS
) -> StructuredStoryline:
    """Parse a whitespace-tokenized storyline (e.g. model output).

    Same grammar as parse_storyline but over tokens, so empty argument
    fields survive (they have no token of their own).
    """
    if not tokens:
        raise MalformedStoryline("empty input")
    sep = conv.field_separator.strip()
    terminators = set(conv.terminator_tokens)
    events: list[Event] = []
    terms: list[str] = []
    fields: list[list[str]] = [[]]
    for tok in tokens:
        if tok in terminators:
            if len(fields) != 3:
                raise MalformedStoryline(
                    f"event has {len(fields)} fields, expected 3"
                )
            events.append(Event(*(" ".join(f) for f in fields)))
            terms.append(tok)
            fields = [[]]
        elif tok == sep:
            fields.append([])
        else:
            fields[-1].append(tok)
    if fields != [[]]:
        raise MalformedStoryline("trailing tokens after the final terminator")
    if not events:
        raise MalformedStoryline("no events found")
    if terms[-1] != conv.eoe_token:
        raise MalformedStoryline("final terminator must be the end-of-event token")
    inner = terms[:-1]
    if all(t == conv.eoe_token for t in inner):
        prompts = None
    elif all(conv.relation_for_token(t) is not None for t in inner):
        prompts = tuple(conv.relation_for_token(t) for t in inner)
    else:
        raise MalformedStoryline("mixed prompt and end-of-event terminators")
    return StructuredStoryline(tuple(events), prompts)


def tokenize(text: str, conv: TokenConventions = DEFAULT_CONVENTIONS) -> list[str]:
    """Whitespace tokenization that keeps sentinel tokens atomic.

    Sentinels attach to neighboring text without spaces in serialized
    storylines, so plain str.split would glue them to event words.
    """
    pattern = "|".join(
        re.escape(t) for t in sorted(conv.sentinels, key=len, reverse=True)
    )
    tokens: list[str] = []
    for piece in re.split(f"({pattern})", text):
        if not piece:
            continue
        if piece in conv.sentinels:
            tokens.append(piece)
        else:
            tokens.extend(piece.split())
    return tokens
