import random
import string

import pytest

from fbgen.storyline import Event, StructuredStoryline, TemporalRelation

RELATIONS = (TemporalRelation.BEFORE, TemporalRelation.AFTER, TemporalRelation.VAGUE)


def random_word(rng: random.Random) -> str:
    return "".join(
        rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, 8))
    )


def random_span(rng: random.Random, min_words: int = 0, max_words: int = 3) -> str:
    return " ".join(random_word(rng) for _ in range(rng.randint(min_words, max_words)))


def random_event(rng: random.Random) -> Event:
    return Event(
        trigger=random_span(rng, 1, 2),
        arg1=random_span(rng, 0, 3),
        arg2=random_span(rng, 0, 3),
    )


def random_storyline(
    rng: random.Random,
    min_events: int = 1,
    max_events: int = 6,
    annotated: bool = True,
) -> StructuredStoryline:
    n = rng.randint(min_events, max_events)
    events = tuple(random_event(rng) for _ in range(n))
    if annotated:
        prompts = tuple(rng.choice(RELATIONS) for _ in range(n - 1))
        return StructuredStoryline(events, prompts)
    return StructuredStoryline(events, None)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20260811)
