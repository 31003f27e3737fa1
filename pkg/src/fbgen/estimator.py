"""scikit-learn style estimator over the plan-and-write pipeline.

FlashbackStoryGenerator bundles vocabulary construction, the chosen
training regime, and two-step generation behind fit/generate, so the
pipeline composes with the usual get_params/set_params tooling.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import PROFILES, DatasetProfile, StoryRecord
from .models import (
    DecodeStrategy,
    GenerationResult,
    Greedy,
    SeqModel,
    SeqModelConfig,
    build_vocabulary,
    generate_batch,
    perplexity,
)
from .storyline import DEFAULT_CONVENTIONS, TemporalRelation, TokenConventions
from .training import TrainConfig, predict_storylines, train


def _coerce_prompts(
    prompts: Optional[Sequence[Union[str, TemporalRelation]]]
) -> Optional[list[TemporalRelation]]:
    if prompts is None:
        return None
    return [
        p if isinstance(p, TemporalRelation) else TemporalRelation.from_string(p)
        for p in prompts
    ]


class FlashbackStoryGenerator(BaseEstimator):
    """Plan-and-write story generator with temporal-prompt control.

    Parameters mirror TrainConfig plus the shared model dimensions; fit()
    trains the storyline/story model pair on annotated story records and
    generate() runs the two-step pipeline with user-chosen prompts.
    """

    def __init__(
        self,
        mode: str = "e2e",
        use_prompts: bool = True,
        lr: float = 5e-5,
        batch_size: int = 10,
        grad_accum: int = 1,
        epochs: int = 10,
        rng_seed: int = 5,
        mu: float = 0.0,
        baseline: str = "none",
        optimizer: str = "sgd",
        sample_temperature: float = 1.0,
        grad_clip: Optional[float] = None,
        alpha_warmup_epochs: int = 1,
        normalize_rewards: bool = False,
        rl_lr: Optional[float] = None,
        embed_dim: int = 64,
        hidden_dim: int = 128,
        n_layers: int = 1,
        max_len: int = 160,
        dropout: float = 0.0,
        profile: str = "rocstories_like",
        conventions: Optional[TokenConventions] = None,
    ):
        self.mode = mode
        self.use_prompts = use_prompts
        self.lr = lr
        self.batch_size = batch_size
        self.grad_accum = grad_accum
        self.epochs = epochs
        self.rng_seed = rng_seed
        self.mu = mu
        self.baseline = baseline
        self.optimizer = optimizer
        self.sample_temperature = sample_temperature
        self.grad_clip = grad_clip
        self.alpha_warmup_epochs = alpha_warmup_epochs
        self.normalize_rewards = normalize_rewards
        self.rl_lr = rl_lr
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.max_len = max_len
        self.dropout = dropout
        self.profile = profile
        self.conventions = conventions

    # -- internals ---------------------------------------------------------

    def _conv(self) -> TokenConventions:
        return self.conventions if self.conventions is not None else DEFAULT_CONVENTIONS

    def _profile(self) -> DatasetProfile:
        if isinstance(self.profile, DatasetProfile):
            return self.profile
        try:
            return PROFILES[self.profile]
        except KeyError:
            raise ValueError(
                f"unknown profile {self.profile!r}; expected one of {sorted(PROFILES)}"
            ) from None

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            mode=self.mode,
            lr=self.lr,
            batch_size=self.batch_size,
            grad_accum=self.grad_accum,
            epochs=self.epochs,
            rng_seed=self.rng_seed,
            mu=self.mu,
            baseline=self.baseline,
            optimizer=self.optimizer,
            sample_temperature=self.sample_temperature,
            grad_clip=self.grad_clip,
            alpha_warmup_epochs=self.alpha_warmup_epochs,
            normalize_rewards=self.normalize_rewards,
            rl_lr=self.rl_lr,
        )

    def _model_config(self, vocab_size: int, seed_offset: int) -> SeqModelConfig:
        return SeqModelConfig(
            vocab_size=vocab_size,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            n_layers=self.n_layers,
            max_len=self.max_len,
            dropout=self.dropout,
            rng_seed=self.rng_seed + seed_offset,
        )

    # -- estimator API -----------------------------------------------------

    def fit(
        self,
        records: Sequence[StoryRecord],
        val_records: Optional[Sequence[StoryRecord]] = None,
        init_storyline_model: Optional[SeqModel] = None,
        metrics_path=None,
        checkpoint_dir=None,
    ) -> "FlashbackStoryGenerator":
        """Train the model pair with the configured regime."""
        conv = self._conv()
        profile = self._profile()
        if init_storyline_model is not None:
            vocab = init_storyline_model.vocab
        else:
            vocab = build_vocabulary(records, conv)
        result = train(
            records,
            self._train_config(),
            alpha_config=self._model_config(len(vocab), 0),
            theta_config=self._model_config(len(vocab), 1),
            vocab=vocab,
            conv=conv,
            profile=profile,
            use_prompts=self.use_prompts,
            val_records=val_records,
            metrics_path=metrics_path,
            checkpoint_dir=checkpoint_dir,
            init_alpha=init_storyline_model,
        )
        self.vocab_ = vocab
        self.storyline_model_ = result.storyline_model
        self.story_model_ = result.story_model
        self.history_ = result.history
        self.result_ = result
        return self

    def generate(
        self,
        prefix: str,
        prompts: Optional[Sequence[Union[str, TemporalRelation]]] = None,
        strategy: Optional[DecodeStrategy] = None,
        n_events: Optional[int] = None,
    ) -> GenerationResult:
        """Generate one storyline/story pair from a prefix and prompts."""
        return self.generate_many([prefix], [prompts], strategy, n_events)[0]

    def generate_many(
        self,
        prefixes: Sequence[str],
        prompts_list: Sequence[Optional[Sequence[Union[str, TemporalRelation]]]],
        strategy: Optional[DecodeStrategy] = None,
        n_events: Optional[int] = None,
    ) -> list[GenerationResult]:
        check_is_fitted(self, "storyline_model_")
        profile = self._profile()
        coerced = [_coerce_prompts(p) for p in prompts_list]
        if not self.use_prompts:
            if n_events is None:
                n_events = profile.fixed_n_events or (
                    len(coerced[0]) + 1 if coerced[0] is not None else None
                )
            coerced = [None] * len(coerced)
        return generate_batch(
            self.storyline_model_,
            self.story_model_,
            list(prefixes),
            coerced,
            conv=self._conv(),
            strategy=strategy if strategy is not None else Greedy(),
            n_events=n_events,
            keep_first_k=profile.keep_first_k,
            include_prefix_sentence=profile.prefix_is_first_sentence,
        )

    def score_perplexity(
        self,
        records: Sequence[StoryRecord],
        storyline_source: str = "predicted",
    ) -> float:
        """Reference-story perplexity under the fitted story model.

        storyline_source "predicted" scores at the inference condition
        (greedy storyline predictions feed the story model); "gold" scores
        with reference storylines.
        """
        check_is_fitted(self, "story_model_")
        profile = self._profile()
        conv = self._conv()
        texts = None
        if storyline_source == "predicted":
            texts = predict_storylines(
                self.storyline_model_, records, conv,
                keep_first_k=profile.keep_first_k, use_prompts=self.use_prompts,
            )
        elif storyline_source != "gold":
            raise ValueError("storyline_source must be 'predicted' or 'gold'")
        return perplexity(
            self.story_model_, records, "story", conv,
            keep_first_k=profile.keep_first_k, use_prompts=self.use_prompts,
            storyline_texts=texts,
        )

    def storyline_perplexity(self, records: Sequence[StoryRecord]) -> float:
        check_is_fitted(self, "storyline_model_")
        profile = self._profile()
        return perplexity(
            self.storyline_model_, records, "storyline", self._conv(),
            keep_first_k=profile.keep_first_k, use_prompts=self.use_prompts,
        )
