"""Training regimes for the storyline/story model pair.

Three regimes: two_stage trains both models on gold inputs independently;
e2e trains the story model on the storyline model's own (sampled)
predictions while keeping the supervised storyline loss; rl replaces the
supervised storyline update with a policy-gradient step whose reward is the
negative story-model loss on the sampled storyline, so story-model feedback
reaches the planner. A gold/predicted mixture schedule can feed the story
model gold storylines with a probability that decays over training steps.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Optional, Sequence, Union

import torch

from .corpus import DatasetProfile, ROCSTORIES_PROFILE, StoryRecord
from .errors import DivergedLoss, NonFiniteReward
from .models import (
    Greedy,
    Sample,
    SeqModel,
    SeqModelConfig,
    Vocabulary,
    build_story_source,
    build_story_target,
    build_storyline_source,
    build_storyline_target,
    build_vocabulary,
    perplexity,
    save_checkpoint,
    sequence_log_prob,
)
from .storyline import (
    DEFAULT_CONVENTIONS,
    Story,
    TokenConventions,
    tokenize,
)

logger = logging.getLogger(__name__)

MODES = ("two_stage", "e2e", "rl")
BASELINES = ("none", "moving_average")
OPTIMIZERS = ("sgd", "adam")


# ---------------------------------------------------------------------------
# Configuration and mixture schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by all regimes.

    Defaults follow the reference setup (lr 5e-5, batch 10, 10 epochs,
    seed 5, no reward baseline); desk-scale runs typically switch the
    optimizer to adam with a larger lr since the models train from scratch.
    """

    mode: str = "two_stage"
    lr: float = 5e-5
    batch_size: int = 10
    grad_accum: int = 1
    epochs: int = 10
    rng_seed: int = 5
    mu: float = 0.0
    baseline: str = "none"
    optimizer: str = "sgd"
    sample_temperature: float = 1.0
    grad_clip: Optional[float] = None
    alpha_warmup_epochs: int = 1
    baseline_decay: float = 0.9
    normalize_rewards: bool = False
    rl_lr: Optional[float] = None  # policy-gradient step size; defaults to lr

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.batch_size < 1 or self.grad_accum < 1:
            raise ValueError("batch_size and grad_accum must be >= 1")
        if self.rl_lr is not None and self.rl_lr <= 0:
            raise ValueError("rl_lr must be positive when set")


def mixture_ratio(mu: float, step: int) -> float:
    """Probability of feeding the gold storyline at training step `step`:
    mu / (mu + exp(step / mu)), with the mu -> 0 limit pinned to 0.

    Strictly decreasing in step for fixed mu > 0; large mu keeps it near 1.
    """
    if mu < 0:
        raise ValueError("mu must be >= 0")
    if step < 0:
        raise ValueError("step must be >= 0")
    if mu == 0.0:
        return 0.0
    z = step / mu
    if z > 700.0:
        # exp(z) overflows; algebraically p = mu*exp(-z) / (mu*exp(-z) + 1)
        scaled = mu * math.exp(-z)
        return scaled / (scaled + 1.0)
    return mu / (mu + math.exp(z))


@dataclass
class MixtureState:
    """Tracks the decaying gold-storyline probability across steps."""

    mu: float
    step: int = 0

    @property
    def p(self) -> float:
        return mixture_ratio(self.mu, self.step)

    def advance(self) -> None:
        self.step += 1


# ---------------------------------------------------------------------------
# Example preparation
# ---------------------------------------------------------------------------

@dataclass
class _Example:
    prefix_ids: list[int]
    plan_src: list[int]
    plan_tgt: list[int]      # no EOS; appended at batch time
    story_src_gold: list[int]
    story_tgt: list[int]


def _prepare_examples(
    records: Sequence[StoryRecord],
    vocab: Vocabulary,
    conv: TokenConventions,
    keep_first_k: int,
    use_prompts: bool,
    prefix_len: int,
) -> list[_Example]:
    examples = []
    for r in records:
        story = Story(r.sentences, prefix_len=prefix_len)
        plan_src = build_storyline_source(
            r.prefix, r.storyline, keep_first_k, conv, use_prompts
        )
        plan_tgt = build_storyline_target(r.storyline, conv, use_prompts)
        story_src = build_story_source(
            r.prefix, build_storyline_target(r.storyline, conv, use_prompts), conv
        )
        examples.append(
            _Example(
                prefix_ids=vocab.encode(tokenize(r.prefix, conv)),
                plan_src=vocab.encode(plan_src),
                plan_tgt=vocab.encode(plan_tgt),
                story_src_gold=vocab.encode(story_src),
                story_tgt=vocab.encode(build_story_target(story)),
            )
        )
    return examples


def _story_src_from_plan(
    ex: _Example, plan_ids: Sequence[int], vocab: Vocabulary, max_len: int
) -> list[int]:
    budget = max_len - len(ex.prefix_ids) - 2
    return ex.prefix_ids + [vocab.sep_id] + list(plan_ids)[: max(0, budget)]


# ---------------------------------------------------------------------------
# Step helpers
# ---------------------------------------------------------------------------

def _make_optimizer(model: SeqModel, cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "adam":
        return torch.optim.Adam(model.parameters(), lr=cfg.lr)
    return torch.optim.SGD(model.parameters(), lr=cfg.lr)


def _mean_nll(
    model: SeqModel, srcs: Sequence[Sequence[int]], tgts: Sequence[Sequence[int]]
) -> tuple[torch.Tensor, torch.Tensor]:
    """Batch loss (mean over samples of per-token-mean NLL, EOS included)
    plus the per-sample mean NLLs."""
    eos = model.vocab.eos_id
    with_eos = [list(t) + [eos] for t in tgts]
    sums, counts = model.sequence_scores(srcs, with_eos)
    per_sample = -sums / counts.to(sums.dtype)
    return per_sample.mean(), per_sample


def _check_finite(value: torch.Tensor, what: str) -> None:
    if not torch.isfinite(value).all():
        raise DivergedLoss(f"{what} became non-finite")


def _optim_step(
    loss: torch.Tensor,
    optimizer: torch.optim.Optimizer,
    model: SeqModel,
    cfg: TrainConfig,
    accum_index: int,
) -> None:
    (loss / cfg.grad_accum).backward()
    if (accum_index + 1) % cfg.grad_accum == 0:
        if cfg.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        optimizer.step()
        optimizer.zero_grad()


class _MetricsLog:
    """Per-step JSONL metrics writer; rows have a fixed key order."""

    def __init__(self, path: Optional[Union[str, Path, IO[str]]]):
        self._own = isinstance(path, (str, Path))
        self._fh: Optional[IO[str]] = None
        if path is None:
            return
        self._fh = open(path, "w", encoding="utf-8") if self._own else path

    def write(self, step: int, mode: str, loss_alpha, loss_theta, reward_mean, p_mixture):
        if self._fh is None:
            return
        row = {
            "step": step,
            "mode": mode,
            "loss_alpha": loss_alpha,
            "loss_theta": loss_theta,
            "reward_mean": reward_mean,
            "p_mixture": p_mixture,
        }
        self._fh.write(json.dumps(row) + "\n")

    def close(self):
        if self._fh is not None and self._own:
            self._fh.close()


@dataclass
class TrainResult:
    storyline_model: SeqModel
    story_model: Optional[SeqModel]
    history: list[dict] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_val_ppl: Optional[float] = None

    @property
    def models(self) -> tuple[SeqModel, Optional[SeqModel]]:
        return self.storyline_model, self.story_model


# ---------------------------------------------------------------------------
# REINFORCE
# ---------------------------------------------------------------------------

def reinforce_gradient_step(
    model: SeqModel,
    optimizer: torch.optim.Optimizer,
    source: Union[str, Sequence[str]],
    sampled_tokens: Sequence[str],
    reward: float,
    baseline_value: float = 0.0,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
) -> float:
    """One policy-gradient ascent step on (reward - baseline) * log p(sample).

    The sampled tokens must have been drawn from the model's own sampling
    distribution for the update to be an unbiased estimate of the expected
    reward gradient. Returns the scalar surrogate loss that was minimized.
    """
    if not math.isfinite(reward) or not math.isfinite(baseline_value):
        raise NonFiniteReward(f"reward={reward} baseline={baseline_value}")
    advantage = reward - baseline_value
    log_prob = sequence_log_prob(model, source, sampled_tokens, conv)
    loss = -(advantage * log_prob)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    optimizer.zero_grad()
    return float(loss.item())


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------

class _Run:
    """Shared state for one training run."""

    def __init__(
        self,
        records: Sequence[StoryRecord],
        cfg: TrainConfig,
        alpha_config: SeqModelConfig,
        theta_config: SeqModelConfig,
        vocab: Optional[Vocabulary],
        conv: TokenConventions,
        profile: DatasetProfile,
        use_prompts: bool,
        val_records: Optional[Sequence[StoryRecord]],
        metrics_path,
        checkpoint_dir,
        init_alpha: Optional[SeqModel],
        init_theta: Optional[SeqModel],
    ):
        if not records:
            raise ValueError("no training records")
        torch.manual_seed(cfg.rng_seed)
        self.cfg = cfg
        self.conv = conv
        self.profile = profile
        self.use_prompts = use_prompts
        if vocab is not None:
            self.vocab = vocab
        elif init_alpha is not None:
            self.vocab = init_alpha.vocab
        elif init_theta is not None:
            self.vocab = init_theta.vocab
        else:
            self.vocab = build_vocabulary(records, conv)
        for init in (init_alpha, init_theta):
            if init is not None and init.vocab.hash() != self.vocab.hash():
                raise ValueError("initial model vocabulary does not match the run's")
        self.prefix_len = 1 if profile.prefix_is_first_sentence else 0
        if init_alpha is not None:
            self.alpha = copy.deepcopy(init_alpha)
        else:
            self.alpha = SeqModel(self._sized(alpha_config), self.vocab)
        if init_theta is not None:
            self.theta = copy.deepcopy(init_theta)
        else:
            self.theta = SeqModel(self._sized(theta_config), self.vocab)
        self.alpha.train()
        self.theta.train()
        self.examples = _prepare_examples(
            records, self.vocab, conv, profile.keep_first_k, use_prompts,
            self.prefix_len,
        )
        self.val_records = list(val_records) if val_records else None
        self.rng = random.Random(cfg.rng_seed)
        self.torch_gen = torch.Generator().manual_seed(cfg.rng_seed)
        self.opt_alpha = _make_optimizer(self.alpha, cfg)
        self.opt_theta = _make_optimizer(self.theta, cfg)
        self.log = _MetricsLog(metrics_path)
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        if self.checkpoint_dir:
            self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        self.step = 0
        self.plan_decode_limit = min(
            self.alpha.config.max_len,
            max(len(e.plan_tgt) for e in self.examples) + 8,
        )
        self.history: list[dict] = []
        self.best: Optional[tuple[float, int, dict, dict]] = None

    def _sized(self, config: SeqModelConfig) -> SeqModelConfig:
        if config.vocab_size == len(self.vocab):
            return config
        return SeqModelConfig(
            vocab_size=len(self.vocab),
            embed_dim=config.embed_dim,
            hidden_dim=config.hidden_dim,
            n_layers=config.n_layers,
            max_len=config.max_len,
            dropout=config.dropout,
            rng_seed=config.rng_seed,
        )

    def batches(self) -> list[list[_Example]]:
        # leftover accumulation gradients do not leak across epochs
        self.opt_alpha.zero_grad()
        self.opt_theta.zero_grad()
        order = list(range(len(self.examples)))
        self.rng.shuffle(order)
        size = self.cfg.batch_size
        return [
            [self.examples[i] for i in order[start:start + size]]
            for start in range(0, len(order), size)
        ]

    def sample_plans(self, batch: Sequence[_Example]) -> tuple[list[list[int]], list[bool]]:
        self.alpha.eval()
        ids, truncated = self.alpha.generate_ids(
            [ex.plan_src for ex in batch],
            Sample(temperature=self.cfg.sample_temperature),
            max_len=self.plan_decode_limit,
            generator=self.torch_gen,
        )
        self.alpha.train()
        return ids, truncated

    def story_sources(
        self, batch: Sequence[_Example], plans: Sequence[Sequence[int]],
        gold_mask: Sequence[bool],
    ) -> list[list[int]]:
        out = []
        for ex, plan, use_gold in zip(batch, plans, gold_mask):
            if use_gold:
                out.append(ex.story_src_gold)
            else:
                out.append(
                    _story_src_from_plan(ex, plan, self.vocab, self.theta.config.max_len)
                )
        return out

    def validate(self) -> Optional[float]:
        if not self.val_records:
            return None
        self.alpha.eval()
        self.theta.eval()
        if self.cfg.mode == "two_stage":
            ppl = perplexity(
                self.theta, self.val_records, "story", self.conv,
                keep_first_k=self.profile.keep_first_k, use_prompts=self.use_prompts,
            )
        else:
            plans = predict_storylines(
                self.alpha, self.val_records, self.conv,
                keep_first_k=self.profile.keep_first_k,
                use_prompts=self.use_prompts,
            )
            ppl = perplexity(
                self.theta, self.val_records, "story", self.conv,
                keep_first_k=self.profile.keep_first_k, use_prompts=self.use_prompts,
                storyline_texts=plans,
            )
        self.alpha.train()
        self.theta.train()
        return ppl

    def end_epoch(self, epoch: int, stats: dict) -> None:
        val_ppl = self.validate()
        stats = {"epoch": epoch, **stats, "val_story_ppl": val_ppl}
        self.history.append(stats)
        if val_ppl is not None and (self.best is None or val_ppl < self.best[0]):
            self.best = (
                val_ppl,
                epoch,
                copy.deepcopy(self.alpha.state_dict()),
                copy.deepcopy(self.theta.state_dict()),
            )
        if self.checkpoint_dir:
            save_checkpoint(
                self.alpha, self.checkpoint_dir / f"storyline-epoch{epoch}.fbgen",
                self.conv,
            )
            save_checkpoint(
                self.theta, self.checkpoint_dir / f"story-epoch{epoch}.fbgen",
                self.conv,
            )

    def finish(self) -> TrainResult:
        best_epoch = best_ppl = None
        if self.best is not None:
            best_ppl, best_epoch, alpha_state, theta_state = self.best
            self.alpha.load_state_dict(alpha_state)
            self.theta.load_state_dict(theta_state)
        self.alpha.eval()
        self.theta.eval()
        if self.checkpoint_dir:
            save_checkpoint(
                self.alpha, self.checkpoint_dir / "storyline-best.fbgen", self.conv
            )
            save_checkpoint(
                self.theta, self.checkpoint_dir / "story-best.fbgen", self.conv
            )
        self.log.close()
        return TrainResult(
            storyline_model=self.alpha,
            story_model=self.theta,
            history=self.history,
            best_epoch=best_epoch,
            best_val_ppl=best_ppl,
        )


def predict_storylines(
    alpha: SeqModel,
    records: Sequence[StoryRecord],
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    keep_first_k: int = 1,
    use_prompts: bool = True,
    batch_size: int = 64,
) -> list[list[str]]:
    """Greedy storyline predictions for each record (inference condition)."""
    vocab = alpha.vocab
    sources = [
        vocab.encode(
            build_storyline_source(r.prefix, r.storyline, keep_first_k, conv, use_prompts)
        )
        for r in records
    ]
    out: list[list[str]] = []
    for start in range(0, len(sources), batch_size):
        ids, _ = alpha.generate_ids(sources[start:start + batch_size], Greedy())
        out.extend(vocab.decode(seq) for seq in ids)
    return out


def _supervised_alpha_epoch(run: _Run, log_mode: str) -> float:
    total, n = 0.0, 0
    for i, batch in enumerate(run.batches()):
        loss, _ = _mean_nll(
            run.alpha, [ex.plan_src for ex in batch], [ex.plan_tgt for ex in batch]
        )
        _check_finite(loss, "storyline loss")
        _optim_step(loss, run.opt_alpha, run.alpha, run.cfg, i)
        run.log.write(run.step, log_mode, float(loss.item()), None, None, None)
        run.step += 1
        total += float(loss.item())
        n += 1
    return total / max(n, 1)


def train_two_stage(
    records: Sequence[StoryRecord],
    cfg: TrainConfig,
    *,
    alpha_config: SeqModelConfig,
    theta_config: SeqModelConfig,
    vocab: Optional[Vocabulary] = None,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    profile: DatasetProfile = ROCSTORIES_PROFILE,
    use_prompts: bool = True,
    val_records: Optional[Sequence[StoryRecord]] = None,
    metrics_path=None,
    checkpoint_dir=None,
    init_alpha: Optional[SeqModel] = None,
    init_theta: Optional[SeqModel] = None,
) -> TrainResult:
    """Train the storyline model on gold storylines and the story model on
    gold (prefix, storyline) -> story pairs; no gradients are shared."""
    run = _Run(
        records, cfg, alpha_config, theta_config, vocab, conv, profile,
        use_prompts, val_records, metrics_path, checkpoint_dir,
        init_alpha, init_theta,
    )
    for epoch in range(cfg.epochs):
        sum_a = sum_t = 0.0
        n = 0
        for i, batch in enumerate(run.batches()):
            loss_a, _ = _mean_nll(
                run.alpha, [ex.plan_src for ex in batch], [ex.plan_tgt for ex in batch]
            )
            _check_finite(loss_a, "storyline loss")
            _optim_step(loss_a, run.opt_alpha, run.alpha, run.cfg, i)
            loss_t, _ = _mean_nll(
                run.theta,
                [ex.story_src_gold for ex in batch],
                [ex.story_tgt for ex in batch],
            )
            _check_finite(loss_t, "story loss")
            _optim_step(loss_t, run.opt_theta, run.theta, run.cfg, i)
            run.log.write(
                run.step, cfg.mode, float(loss_a.item()), float(loss_t.item()),
                None, None,
            )
            run.step += 1
            sum_a += float(loss_a.item())
            sum_t += float(loss_t.item())
            n += 1
        run.end_epoch(epoch, {"loss_alpha": sum_a / n, "loss_theta": sum_t / n})
    return run.finish()


def train_e2e_vanilla(
    records: Sequence[StoryRecord],
    cfg: TrainConfig,
    *,
    alpha_config: SeqModelConfig,
    theta_config: SeqModelConfig,
    vocab: Optional[Vocabulary] = None,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    profile: DatasetProfile = ROCSTORIES_PROFILE,
    use_prompts: bool = True,
    val_records: Optional[Sequence[StoryRecord]] = None,
    metrics_path=None,
    checkpoint_dir=None,
    init_alpha: Optional[SeqModel] = None,
    init_theta: Optional[SeqModel] = None,
) -> TrainResult:
    """End-to-end training without policy gradients.

    Per batch: sample storylines from the storyline model (no gradient flows
    through decoding), train the story model on them (or on gold storylines
    with the mixture probability p), and keep the supervised storyline
    update on gold storylines.
    """
    run = _Run(
        records, cfg, alpha_config, theta_config, vocab, conv, profile,
        use_prompts, val_records, metrics_path, checkpoint_dir,
        init_alpha, init_theta,
    )
    mixture = MixtureState(cfg.mu)
    for epoch in range(cfg.epochs):
        sum_a = sum_t = sum_p = 0.0
        n = 0
        for i, batch in enumerate(run.batches()):
            plans, _ = run.sample_plans(batch)
            p = mixture_ratio(cfg.mu, mixture.step)
            gold_mask = [run.rng.random() < p for _ in batch]
            loss_t, _ = _mean_nll(
                run.theta,
                run.story_sources(batch, plans, gold_mask),
                [ex.story_tgt for ex in batch],
            )
            _check_finite(loss_t, "story loss")
            _optim_step(loss_t, run.opt_theta, run.theta, run.cfg, i)
            loss_a, _ = _mean_nll(
                run.alpha, [ex.plan_src for ex in batch], [ex.plan_tgt for ex in batch]
            )
            _check_finite(loss_a, "storyline loss")
            _optim_step(loss_a, run.opt_alpha, run.alpha, run.cfg, i)
            run.log.write(
                run.step, cfg.mode, float(loss_a.item()), float(loss_t.item()),
                None, p,
            )
            run.step += 1
            mixture.advance()
            sum_a += float(loss_a.item())
            sum_t += float(loss_t.item())
            sum_p += p
            n += 1
        run.end_epoch(
            epoch,
            {"loss_alpha": sum_a / n, "loss_theta": sum_t / n, "p_mixture": sum_p / n},
        )
    return run.finish()


def train_rl(
    records: Sequence[StoryRecord],
    cfg: TrainConfig,
    *,
    alpha_config: SeqModelConfig,
    theta_config: SeqModelConfig,
    vocab: Optional[Vocabulary] = None,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    profile: DatasetProfile = ROCSTORIES_PROFILE,
    use_prompts: bool = True,
    val_records: Optional[Sequence[StoryRecord]] = None,
    metrics_path=None,
    checkpoint_dir=None,
    init_alpha: Optional[SeqModel] = None,
    init_theta: Optional[SeqModel] = None,
) -> TrainResult:
    """Policy-gradient end-to-end training.

    Per batch: sample storylines from the storyline model, compute the story
    loss on them, use its negative as the reward, apply the policy-gradient
    ascent step to the storyline model, and a gradient-descent step on the
    story loss to the story model. The storyline model receives no
    supervised loss after its warmup epochs (which stand in for pretraining
    when no pretrained model is passed in).
    """
    run = _Run(
        records, cfg, alpha_config, theta_config, vocab, conv, profile,
        use_prompts, val_records, metrics_path, checkpoint_dir,
        init_alpha, init_theta,
    )
    warmup = cfg.alpha_warmup_epochs if init_alpha is None else 0
    for _ in range(warmup):
        _supervised_alpha_epoch(run, "rl-warmup")
    if cfg.rl_lr is not None:
        run.opt_alpha = _make_optimizer(run.alpha, replace(cfg, lr=cfg.rl_lr))
    mixture = MixtureState(cfg.mu)
    baseline_ema: Optional[float] = None
    eos = run.vocab.eos_id
    for epoch in range(cfg.epochs):
        sum_pg = sum_t = sum_r = sum_p = 0.0
        n = 0
        for i, batch in enumerate(run.batches()):
            plans, truncated = run.sample_plans(batch)
            sampled_srcs = run.story_sources(batch, plans, [False] * len(batch))
            with torch.no_grad():
                _, per_sample = _mean_nll(
                    run.theta, sampled_srcs, [ex.story_tgt for ex in batch]
                )
            rewards = -per_sample
            if not torch.isfinite(rewards).all():
                raise NonFiniteReward("non-finite reward in batch")
            reward_mean = float(rewards.mean().item())
            if cfg.baseline == "moving_average":
                if baseline_ema is None:
                    baseline_ema = reward_mean
                baseline_value = baseline_ema
                baseline_ema = (
                    cfg.baseline_decay * baseline_ema
                    + (1 - cfg.baseline_decay) * reward_mean
                )
            else:
                baseline_value = 0.0
            advantages = rewards - baseline_value
            if cfg.normalize_rewards:
                std = float(advantages.std().item())
                advantages = (advantages - advantages.mean()) / (std + 1e-8)
            # score exactly the sampled decisions (incl. the EOS draw when
            # the sample terminated on its own)
            scored = [
                list(p) + ([] if trunc else [eos])
                for p, trunc in zip(plans, truncated)
            ]
            sums, _ = run.alpha.sequence_scores(
                [ex.plan_src for ex in batch], scored
            )
            loss_pg = -(advantages.detach() * sums).mean()
            _check_finite(loss_pg, "policy-gradient loss")
            _optim_step(loss_pg, run.opt_alpha, run.alpha, run.cfg, i)

            p = mixture_ratio(cfg.mu, mixture.step)
            gold_mask = [run.rng.random() < p for _ in batch]
            loss_t, _ = _mean_nll(
                run.theta,
                run.story_sources(batch, plans, gold_mask),
                [ex.story_tgt for ex in batch],
            )
            _check_finite(loss_t, "story loss")
            _optim_step(loss_t, run.opt_theta, run.theta, run.cfg, i)
            run.log.write(
                run.step, cfg.mode, float(loss_pg.item()), float(loss_t.item()),
                reward_mean, p,
            )
            run.step += 1
            mixture.advance()
            sum_pg += float(loss_pg.item())
            sum_t += float(loss_t.item())
            sum_r += reward_mean
            sum_p += p
            n += 1
        run.end_epoch(
            epoch,
            {
                "loss_alpha": sum_pg / n,
                "loss_theta": sum_t / n,
                "reward_mean": sum_r / n,
                "p_mixture": sum_p / n,
            },
        )
    return run.finish()


def train(
    records: Sequence[StoryRecord],
    cfg: TrainConfig,
    **kwargs,
) -> TrainResult:
    """Dispatch to the regime named by cfg.mode."""
    trainer = {
        "two_stage": train_two_stage,
        "e2e": train_e2e_vanilla,
        "rl": train_rl,
    }[cfg.mode]
    return trainer(records, cfg, **kwargs)


# ---------------------------------------------------------------------------
# Storyline pretraining and the scorer model
# ---------------------------------------------------------------------------

def pretrain_storyline(
    model: SeqModel,
    storylines: Sequence,
    cfg: TrainConfig,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
    metrics_path=None,
) -> SeqModel:
    """Pretrain the storyline model on prompt-free storylines.

    Sources keep the first event concrete and mask the rest, with plain
    end-of-event terminators throughout (no prompts exist yet at this
    stage). An empty storyline set is a warned no-op.
    """
    if not storylines:
        logger.warning("no pretraining storylines; skipping pretraining")
        return model
    torch.manual_seed(cfg.rng_seed)
    vocab = model.vocab
    examples = []
    for s in storylines:
        src = build_storyline_source("", s, keep_first_k=1, conv=conv, use_prompts=False)
        tgt = build_storyline_target(s, conv, use_prompts=False)
        examples.append((vocab.encode(src), vocab.encode(tgt)))
    optimizer = _make_optimizer(model, cfg)
    rng = random.Random(cfg.rng_seed)
    log = _MetricsLog(metrics_path)
    step = 0
    model.train()
    for _ in range(cfg.epochs):
        order = list(range(len(examples)))
        rng.shuffle(order)
        for i, start in enumerate(range(0, len(order), cfg.batch_size)):
            chunk = [examples[j] for j in order[start:start + cfg.batch_size]]
            loss, _ = _mean_nll(model, [s for s, _ in chunk], [t for _, t in chunk])
            _check_finite(loss, "pretraining loss")
            _optim_step(loss, optimizer, model, cfg, i)
            log.write(step, "pretrain", float(loss.item()), None, None, None)
            step += 1
    log.close()
    model.eval()
    return model


def train_text_scorer(
    texts: Sequence[str],
    cfg: TrainConfig,
    model_config: SeqModelConfig,
    vocab: Vocabulary,
    conv: TokenConventions = DEFAULT_CONVENTIONS,
) -> SeqModel:
    """Train a prefix-free language model over raw texts, for use as the
    frozen scorer behind generated-text perplexity."""
    if not texts:
        raise ValueError("no texts to train the scorer on")
    torch.manual_seed(cfg.rng_seed)
    model = SeqModel(model_config, vocab)
    examples = [([], vocab.encode(tokenize(t, conv))) for t in texts]
    optimizer = _make_optimizer(model, cfg)
    rng = random.Random(cfg.rng_seed)
    model.train()
    for _ in range(cfg.epochs):
        order = list(range(len(examples)))
        rng.shuffle(order)
        for i, start in enumerate(range(0, len(order), cfg.batch_size)):
            chunk = [examples[j] for j in order[start:start + cfg.batch_size]]
            loss, _ = _mean_nll(model, [s for s, _ in chunk], [t for _, t in chunk])
            _check_finite(loss, "scorer loss")
            _optim_step(loss, optimizer, model, cfg, i)
    model.eval()
    return model
