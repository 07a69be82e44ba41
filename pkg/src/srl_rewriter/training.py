"""Optimization loop: Adam over the analytic gradients, greedy-decode evals,
best-checkpoint tracking, and the triple-source x mask-variant ablation grid.

Every stochastic choice (packing order, batch order, init) is derived from the
configured seed, so a rerun with the same inputs reproduces the same weights.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import RewriteExample, RewriterError
from .masks import MaskVariant
from .metrics import EvalReport, evaluate_corpus
from .model import ModelConfig, RewriterModel, greedy_decode, make_batch
from .packing import PackedSequence, Vocabulary, build_vocabulary, pack
from .seeding import derive_seed, substream
from .srl import HeuristicRules, TripleMode, TripleSource, acquire_triples, score_srl_corpus

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    """Knobs for one training run.

    ``lr`` may be zero: a zero-rate run must leave parameters bit-identical,
    which is useful as a no-op baseline.  When both ``stop_loss`` and
    ``stop_dev_em`` are set, training stops only once both hold at the same
    eval point.
    """

    batch_size: int = 32
    lr: float = 5e-5
    max_steps: int = 1000
    eval_every: int = 100
    seed: int = 0
    triple_source: TripleSource = TripleSource(TripleMode.GOLD)
    mask_variant: MaskVariant = MaskVariant.TRIPLE_MASK
    clip_norm: Optional[float] = 1.0
    stop_loss: Optional[float] = None
    stop_dev_em: Optional[float] = None
    max_decode_steps: int = 32
    max_length: Optional[int] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise RewriterError("CONFIG_INVALID", f"batch_size {self.batch_size} < 1")
        if self.lr < 0:
            raise RewriterError("CONFIG_INVALID", f"negative learning rate {self.lr}")
        if self.max_steps < 1:
            raise RewriterError("CONFIG_INVALID", f"max_steps {self.max_steps} < 1")
        if self.eval_every < 1:
            raise RewriterError("CONFIG_INVALID", f"eval_every {self.eval_every} < 1")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise RewriterError("CONFIG_INVALID", f"clip_norm {self.clip_norm} must be positive")
        if self.mask_variant is MaskVariant.NO_SRL and self.triple_source.mode is not TripleMode.NONE:
            raise RewriterError(
                "VARIANT_MISMATCH",
                "the variant without a triple region requires the empty triple source",
            )


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @staticmethod
    def init(model: RewriterModel) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(p) for k, p in model.params.items()},
            v={k: np.zeros_like(p) for k, p in model.params.items()},
        )


def clip_gradients(grads: dict[str, np.ndarray], max_norm: Optional[float]) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm is not None and total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total

def adam_update(model: RewriterModel, state: AdamState, lr: float) -> None:
    state.step += 1
    t = state.step
    bias1 = 1.0 - ADAM_BETA1**t
    bias2 = 1.0 - ADAM_BETA2**t
    for name, p in model.params.items():
        g = model.grads[name]
        m, v = state.m[name], state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        if lr != 0.0:  # guarantee the zero-rate run never rewrites a float
            p -= lr * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)


def prepare_instances(
    examples: Sequence[RewriteExample],
    vocab: Vocabulary,
    source: TripleSource,
    master_seed: int,
    heuristic_rules: Optional[HeuristicRules] = None,
    include_reference: bool = True,
    max_length: Optional[int] = None,
) -> list[PackedSequence]:
    """Acquire triples and pack every example with a derived per-example seed."""
    packs = []
    for idx, example in enumerate(examples):
        triples = acquire_triples(example, source, heuristic_rules)
        seed = derive_seed(master_seed, f"pack:{idx}")
        packs.append(
            pack(
                example,
                triples,
                vocab,
                seed,
                include_reference=include_reference,
                max_length=max_length,
            )
        )
    return packs


def decode_corpus(
    model: RewriterModel,
    packs: Sequence[PackedSequence],
    max_steps: int,
    vocab: Optional[Vocabulary] = None,
) -> list[list]:
    return [greedy_decode(p, model, max_steps=max_steps, vocab=vocab) for p in packs]


@dataclass
class EvalPoint:
    step: int
    train_loss: float
    report: EvalReport


@dataclass
class TrainResult:
    model: RewriterModel  # weights at the best dev exact-match step
    final_model: RewriterModel
    best_step: int
    best_em: float
    steps_run: int
    history: list[EvalPoint] = field(default_factory=list)


def train(
    model: RewriterModel,
    train_examples: Sequence[RewriteExample],
    dev_examples: Sequence[RewriteExample],
    vocab: Vocabulary,
    config: TrainConfig,
    heuristic_rules: Optional[HeuristicRules] = None,
) -> TrainResult:
    """Minimize rewrite NLL; keep the weights with the best dev exact match.

    Ties on dev exact match keep the earliest step.  Dev quality is measured
    by greedy decoding against the stored references.
    """
    if not train_examples:
        raise RewriterError("EMPTY_CORPUS", "no training examples")
    if not dev_examples:
        raise RewriterError("EMPTY_CORPUS", "no dev examples")
    if config.mask_variant is not model.config.mask_variant:
        raise RewriterError("VARIANT_MISMATCH", "train and model mask variants differ")

    train_packs = prepare_instances(
        train_examples, vocab, config.triple_source, config.seed,
        heuristic_rules=heuristic_rules, max_length=config.max_length,
    )
    dev_packs = prepare_instances(
        dev_examples, vocab, config.triple_source, config.seed,
        heuristic_rules=heuristic_rules, include_reference=False, max_length=config.max_length,
    )
    dev_refs = [list(ex.reference) for ex in dev_examples]

    opt = AdamState.init(model)
    order_rng = substream(config.seed, "batch-order")
    history: list[EvalPoint] = []
    best_model = model.copy()
    best_em = -1.0
    best_step = 0
    step = 0
    last_loss = math.inf
    stop = False

    def run_eval() -> EvalPoint:
        hyps = decode_corpus(model, dev_packs, config.max_decode_steps, vocab=vocab)
        report = evaluate_corpus(hyps, dev_refs)
        return EvalPoint(step=step, train_loss=last_loss, report=report)

    while step < config.max_steps and not stop:
        perm = order_rng.permutation(len(train_packs))
        for lo in range(0, len(perm), config.batch_size):
            idxs = perm[lo : lo + config.batch_size]
            batch = make_batch([train_packs[i] for i in idxs], config.mask_variant)
            n_targets = int(batch["target_mask"].sum())
            model.zero_grads()
            loss_sum, _ = model.loss_and_grads(batch, loss_scale=1.0 / n_targets)
            last_loss = loss_sum / n_targets
            if not math.isfinite(last_loss):
                raise RewriterError("DIVERGENCE", f"non-finite loss at step {step + 1}")
            clip_gradients(model.grads, config.clip_norm)
            adam_update(model, opt, config.lr)
            step += 1

            if step % config.eval_every == 0 or step >= config.max_steps:
                point = run_eval()
                history.append(point)
                if point.report.em > best_em:
                    best_em = point.report.em
                    best_step = step
                    best_model = model.copy()
                conditions = []
                if config.stop_loss is not None:
                    conditions.append(last_loss < config.stop_loss)
                if config.stop_dev_em is not None:
                    conditions.append(point.report.em >= config.stop_dev_em)
                if conditions and all(conditions):
                    stop = True
            if step >= config.max_steps or stop:
                break

    if not history:  # max_steps smaller than eval_every never fires above
        point = run_eval()
        history.append(point)
        best_em, best_step, best_model = point.report.em, step, model.copy()

    return TrainResult(
        model=best_model,
        final_model=model,
        best_step=best_step,
        best_em=best_em,
        steps_run=step,
        history=history,
    )


# -- ablation grid ------------------------------------------------------------


@dataclass(frozen=True)
class AblationCell:
    label: str
    source: TripleSource
    variant: MaskVariant


DEFAULT_GRID: tuple[AblationCell, ...] = (
    AblationCell("no-srl", TripleSource(TripleMode.NONE), MaskVariant.NO_SRL),
    AblationCell("gold+bi", TripleSource(TripleMode.GOLD), MaskVariant.BI_MASK),
    AblationCell("gold+triple", TripleSource(TripleMode.GOLD), MaskVariant.TRIPLE_MASK),
    AblationCell("heuristic+bi", TripleSource(TripleMode.HEURISTIC), MaskVariant.BI_MASK),
    AblationCell("heuristic+triple", TripleSource(TripleMode.HEURISTIC), MaskVariant.TRIPLE_MASK),
)


@dataclass
class CellRun:
    seed: int
    steps_run: int
    best_step: int
    parameter_count: int
    dev_report: EvalReport
    test_report: EvalReport
    srl_scores: Optional[tuple[float, float, float]] = None


@dataclass
class AblationResult:
    runs: dict[str, list[CellRun]]

    def median_test_em(self, label: str) -> float:
        return statistics.median(r.test_report.em for r in self.runs[label])

    def table(self) -> str:
        lines = [
            f"{'cell':<18} {'seed':>4} {'EM':>7} {'BLEU-4':>7} {'ROUGE-L':>8} {'params':>9}"
        ]
        for label, runs in self.runs.items():
            for r in runs:
                rep = r.test_report
                lines.append(
                    f"{label:<18} {r.seed:>4} {rep.em * 100:>7.2f} {rep.bleu4 * 100:>7.2f}"
                    f" {rep.rougeL * 100:>8.2f} {r.parameter_count:>9}"
                )
            lines.append(f"{label:<18} {'med':>4} {self.median_test_em(label) * 100:>7.2f}")
        return "\n".join(lines)


def run_ablation_grid(
    train_examples: Sequence[RewriteExample],
    dev_examples: Sequence[RewriteExample],
    test_examples: Sequence[RewriteExample],
    model_config: ModelConfig,
    train_config: TrainConfig,
    grid: Sequence[AblationCell] = DEFAULT_GRID,
    seeds: Sequence[int] = (0, 1, 2),
    heuristic_rules: Optional[HeuristicRules] = None,
    vocab: Optional[Vocabulary] = None,
) -> AblationResult:
    """Train every grid cell across seeds on identical splits.

    All cells share one model architecture, so parameter counts match exactly;
    only the triple source and the visibility rules differ.  Heuristic cells
    also score their acquired triples against the stored gold ones.
    """
    if vocab is None:
        vocab = build_vocabulary([*train_examples, *dev_examples, *test_examples])
    runs: dict[str, list[CellRun]] = {cell.label: [] for cell in grid}
    for cell in grid:
        for seed in seeds:
            cfg = replace(
                model_config, vocab_size=len(vocab), mask_variant=cell.variant
            )
            tcfg = replace(
                train_config, seed=seed, triple_source=cell.source, mask_variant=cell.variant
            )
            model = RewriterModel(cfg, seed=derive_seed(seed, f"init:{cell.label}"))
            result = train(
                model, train_examples, dev_examples, vocab, tcfg,
                heuristic_rules=heuristic_rules,
            )
            test_packs = prepare_instances(
                test_examples, vocab, cell.source, seed,
                heuristic_rules=heuristic_rules, include_reference=False,
                max_length=tcfg.max_length,
            )
            hyps = decode_corpus(result.model, test_packs, tcfg.max_decode_steps, vocab=vocab)
            test_report = evaluate_corpus(hyps, [list(ex.reference) for ex in test_examples])
            srl_scores = None
            if cell.source.mode is TripleMode.HEURISTIC:
                predicted = [
                    list(acquire_triples(ex, cell.source, heuristic_rules))
                    for ex in test_examples
                ]
                gold = [list(ex.triples) for ex in test_examples]
                srl_scores = score_srl_corpus(predicted, gold)
            best_dev = next(
                p.report for p in result.history if p.step == result.best_step
            )
            runs[cell.label].append(
                CellRun(
                    seed=seed,
                    steps_run=result.steps_run,
                    best_step=result.best_step,
                    parameter_count=model.parameter_count(),
                    dev_report=best_dev,
                    test_report=test_report,
                    srl_scores=srl_scores,
                )
            )
    return AblationResult(runs=runs)
