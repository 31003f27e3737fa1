"""Small input-validation helpers shared across modules."""

from __future__ import annotations

from typing import Sequence, Sized

from .errors import EmptyCorpus, EmptyInput, LengthMismatch


def check_aligned(a: Sized, b: Sized, what: str = "inputs") -> None:
    if len(a) != len(b):
        raise LengthMismatch(f"{what}: {len(a)} vs {len(b)}")


def check_non_empty_corpus(items: Sized, what: str = "corpus") -> None:
    if len(items) == 0:
        raise EmptyCorpus(f"{what} is empty")


def check_non_empty(items: Sized, what: str = "input") -> None:
    if len(items) == 0:
        raise EmptyInput(f"{what} is empty")


def check_probability(p: float, what: str = "probability") -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{what} must be in [0, 1], got {p}")


def check_positive(value: float, what: str) -> None:
    if value <= 0:
        raise ValueError(f"{what} must be positive, got {value}")


def check_prompt_count(prompts: Sequence, n_events: int) -> None:
    if len(prompts) != n_events - 1:
        raise ValueError(
            f"need {n_events - 1} prompts for {n_events} events, got {len(prompts)}"
        )
