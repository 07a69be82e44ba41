"""Command-line entry points.

Exit codes: 0 on success, 1 for validation failures (bad inputs, bad config),
2 for unexpected internal errors.  Every command takes --seed and --config;
a config file supplies flat key = value defaults that explicit flags override.
Commands that write files also write a manifest with content digests, so a
rerun over identical inputs is byte-identical, manifest included.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from typing import Optional

from .core import (
    RewriterError,
    example_to_record,
    read_examples,
    read_records,
    write_records,
)
from .generator import GeneratorConfig, default_rules, sample_corpus, split_corpus
from .manifest import RunManifest, parse_config_file
from .masks import MaskVariant, build_mask
from .metrics import REPORT_HEADER, evaluate_corpus
from .model import (
    ModelConfig,
    RewriterModel,
    load_checkpoint,
    save_checkpoint,
)
from .packing import Vocabulary, build_vocabulary, pack
from .srl import (
    TripleMode,
    TripleScope,
    TripleSource,
    acquire_triples,
    compute_statistics,
    lint_annotations,
    score_srl_corpus,
)
from .training import (
    DEFAULT_GRID,
    TrainConfig,
    decode_corpus,
    prepare_instances,
    run_ablation_grid,
    train,
)


def _manifest_config(args: argparse.Namespace) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "config", "manifest"):
            continue
        if isinstance(value, (str, int, float, bool, type(None), list, tuple)):
            out[key] = list(value) if isinstance(value, tuple) else value
    return out


def _source(args: argparse.Namespace) -> TripleSource:
    return TripleSource(TripleMode(args.source), TripleScope(args.scope))


def _rules(args: argparse.Namespace):
    if args.source != TripleMode.HEURISTIC.value:
        return None
    return default_rules(GeneratorConfig(token_mode=args.token_mode))


def _clip(value: float) -> Optional[float]:
    return None if value == 0 else value


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--config", help="flat key = value file of defaults")
    sub.add_argument("--manifest", help="manifest path override")


def _add_source_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--source", choices=[m.value for m in TripleMode], default="gold")
    sub.add_argument("--scope", choices=[s.value for s in TripleScope], default="full")
    sub.add_argument("--variant", choices=[v.value for v in MaskVariant], default="triple-mask")
    sub.add_argument("--token-mode", choices=["char", "word"], default="char",
                     help="lexicon for heuristic rules")


def _add_model_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--d-model", type=int, default=64)
    sub.add_argument("--n-heads", type=int, default=4)
    sub.add_argument("--n-layers", type=int, default=2)
    sub.add_argument("--d-ff", type=int, default=128)
    sub.add_argument("--max-position", type=int, default=64)
    sub.add_argument("--tie-embeddings", action="store_true")


def _add_train_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--batch-size", type=int, default=32)
    sub.add_argument("--lr", type=float, default=5e-5)
    sub.add_argument("--max-steps", type=int, default=1000)
    sub.add_argument("--eval-every", type=int, default=100)
    sub.add_argument("--clip-norm", type=float, default=1.0, help="0 disables clipping")
    sub.add_argument("--stop-loss", type=float, default=None)
    sub.add_argument("--stop-dev-em", type=float, default=None)
    sub.add_argument("--max-decode-steps", type=int, default=32)


def _model_config(args: argparse.Namespace, vocab_size: int, variant: MaskVariant) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        d_model=args.d_model,
        n_heads=args.n_heads,
        n_layers=args.n_layers,
        d_ff=args.d_ff,
        max_position=args.max_position,
        mask_variant=variant,
        tie_embeddings=args.tie_embeddings,
    )


def _train_config(args: argparse.Namespace, seed: Optional[int] = None) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size,
        lr=args.lr,
        max_steps=args.max_steps,
        eval_every=args.eval_every,
        seed=args.seed if seed is None else seed,
        triple_source=_source(args),
        mask_variant=MaskVariant(args.variant),
        clip_norm=_clip(args.clip_norm),
        stop_loss=args.stop_loss,
        stop_dev_em=args.stop_dev_em,
        max_decode_steps=args.max_decode_steps,
    )


# -- commands -----------------------------------------------------------------


def cmd_gen_corpus(args: argparse.Namespace) -> int:
    config = GeneratorConfig(
        n_sessions=args.n_sessions,
        seed=args.seed,
        token_mode=args.token_mode,
        cross_turn_rate=args.cross_turn_rate,
        omission_rate=args.omission_rate,
        pronoun_rate=args.pronoun_rate,
        neg_rate=args.neg_rate,
        tmp_rate=args.tmp_rate,
        loc_rate=args.loc_rate,
        include_negation_triples=args.include_negation_triples,
    )
    examples = sample_corpus(config)
    manifest = RunManifest("gen-corpus", _manifest_config(args))
    if args.split:
        parts = zip(("train", "dev", "test"), split_corpus(examples))
    else:
        parts = [("all", examples)]
    for name, part in parts:
        path = f"{args.out_prefix}.{name}.jsonl"
        write_records(path, [example_to_record(ex) for ex in part])
        manifest.add_output(path)
        print(f"wrote {len(part):>6} examples to {path}")
    stats = compute_statistics(examples)
    print(stats.table())
    manifest.save(args.manifest or f"{args.out_prefix}.manifest.json")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    examples = read_examples(args.input)
    stats = compute_statistics(examples)
    print(stats.table())
    if args.lint:
        counts: dict[str, int] = {}
        for ex in examples:
            report = lint_annotations(ex.session, ex.triples)
            for entry in report.entries:
                for code in (entry.c1, entry.c2, entry.c3, entry.c4):
                    if code != "ok":
                        counts[code] = counts.get(code, 0) + 1
        if counts:
            for code, n in sorted(counts.items()):
                print(f"lint {code}: {n}")
        else:
            print("lint clean")
    if args.manifest:
        manifest = RunManifest("stats", _manifest_config(args))
        manifest.add_input(args.input)
        manifest.save(args.manifest)
    return 0


def cmd_pack(args: argparse.Namespace) -> int:
    examples = read_examples(args.input)
    if not 0 <= args.index < len(examples):
        raise RewriterError("BAD_RECORD", f"index {args.index} outside corpus of {len(examples)}")
    example = examples[args.index]
    vocab = Vocabulary.load(args.vocab) if args.vocab else build_vocabulary(examples)
    triples = acquire_triples(example, _source(args), _rules(args))
    packed = pack(example, triples, vocab, args.seed)
    if args.dump:
        print(f"{'idx':>4} {'token':<12} {'segment':<6} {'pos':>4} region")
        for i in range(len(packed)):
            tag = packed.region_tags[i]
            print(
                f"{i:>4} {vocab.token_of(packed.token_ids[i]):<12} "
                f"{packed.segment_ids[i].name:<6} {packed.position_ids[i]:>4} "
                f"{tag.kind.value}:{tag.index}"
            )
    if args.dump_mask:
        mask = build_mask(packed.region_tags, MaskVariant(args.variant))
        for row in mask.astype(int):
            print("".join(str(v) for v in row))
    if args.manifest:
        manifest = RunManifest("pack", _manifest_config(args))
        manifest.add_input(args.input)
        manifest.save(args.manifest)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    train_examples = read_examples(args.train)
    dev_examples = read_examples(args.dev)
    vocab = build_vocabulary([*train_examples, *dev_examples])
    variant = MaskVariant(args.variant)
    model = RewriterModel(_model_config(args, len(vocab), variant), seed=args.seed)
    config = _train_config(args)
    result = train(model, train_examples, dev_examples, vocab, config, _rules(args))
    for point in result.history:
        rep = point.report
        print(
            f"step {point.step:>6}  loss {point.train_loss:.4f}  "
            f"dev-EM {rep.em * 100:6.2f}  BLEU-4 {rep.bleu4 * 100:6.2f}"
        )
    print(f"best dev-EM {result.best_em * 100:.2f} at step {result.best_step}")
    save_checkpoint(result.model, args.out)
    vocab.save(args.out + ".vocab")
    manifest = RunManifest("train", _manifest_config(args))
    manifest.add_input(args.train)
    manifest.add_input(args.dev)
    manifest.add_output(args.out)
    manifest.add_output(args.out + ".vocab")
    manifest.save(args.manifest or args.out + ".manifest.json")
    return 0


def cmd_rewrite(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.model)
    vocab = Vocabulary.load(args.vocab or args.model + ".vocab")
    examples = read_examples(args.input)
    packs = prepare_instances(
        examples, vocab, _source(args), args.seed, heuristic_rules=_rules(args),
        include_reference=False,
    )
    hyps = decode_corpus(model, packs, args.max_decode_steps, vocab=vocab)
    records = [example_to_record(ex, hypothesis=hyp) for ex, hyp in zip(examples, hyps)]
    write_records(args.out, records)
    manifest = RunManifest("rewrite", _manifest_config(args))
    manifest.add_input(args.model)
    manifest.add_input(args.input)
    manifest.add_output(args.out)
    manifest.save(args.manifest or args.out + ".manifest.json")
    print(f"wrote {len(records)} rewrites to {args.out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    hyp_records = read_records(args.input)
    ref_records = read_records(args.ref) if args.ref else hyp_records
    if len(hyp_records) != len(ref_records):
        raise RewriterError("LENGTH_MISMATCH", "hypothesis and reference files differ in length")
    hyps, refs = [], []
    for i, (hrec, rrec) in enumerate(zip(hyp_records, ref_records)):
        hyp = hrec.get("hypothesis", hrec.get("reference"))
        ref = rrec.get("reference")
        if hyp is None or ref is None:
            raise RewriterError("BAD_RECORD", f"record {i} lacks hypothesis/reference tokens")
        hyps.append(list(hyp))
        refs.append(list(ref))
    report = evaluate_corpus(hyps, refs, smooth_bleu=args.smooth_bleu)
    print(REPORT_HEADER)
    print(report.row())
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.manifest:
        manifest = RunManifest("evaluate", _manifest_config(args))
        manifest.add_input(args.input)
        if args.ref:
            manifest.add_input(args.ref)
        if args.json_out:
            manifest.add_output(args.json_out)
        manifest.save(args.manifest)
    return 0


def cmd_score_srl(args: argparse.Namespace) -> int:
    gold_examples = read_examples(args.input)
    gold = [list(ex.triples) for ex in gold_examples]
    if args.pred:
        pred_examples = read_examples(args.pred)
        predicted = [list(ex.triples) for ex in pred_examples]
    else:
        source = _source(args)
        if source.mode is TripleMode.GOLD:
            raise RewriterError(
                "CONFIG_INVALID", "scoring gold against itself; pass --pred or --source heuristic"
            )
        rules = default_rules(GeneratorConfig(token_mode=args.token_mode))
        predicted = [list(acquire_triples(ex, source, rules)) for ex in gold_examples]
    precision, recall, f1 = score_srl_corpus(predicted, gold)
    print(f"precision {precision:.4f}")
    print(f"recall    {recall:.4f}")
    print(f"f1        {f1:.4f}")
    if args.manifest:
        manifest = RunManifest("score-srl", _manifest_config(args))
        manifest.add_input(args.input)
        if args.pred:
            manifest.add_input(args.pred)
        manifest.save(args.manifest)
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    train_examples = read_examples(args.train)
    dev_examples = read_examples(args.dev)
    test_examples = read_examples(args.test)
    seeds = [int(s) for s in args.seeds.split(",") if s]
    labels = [c for c in args.cells.split(",") if c]
    by_label = {cell.label: cell for cell in DEFAULT_GRID}
    unknown = [c for c in labels if c not in by_label]
    if unknown:
        raise RewriterError("CONFIG_INVALID", f"unknown cells {unknown}; know {sorted(by_label)}")
    grid = [by_label[c] for c in labels]
    model_config = _model_config(args, vocab_size=4, variant=MaskVariant.TRIPLE_MASK)
    train_config = _train_config(args)
    rules = default_rules(GeneratorConfig(token_mode=args.token_mode))
    result = run_ablation_grid(
        train_examples, dev_examples, test_examples, model_config, train_config,
        grid=grid, seeds=seeds, heuristic_rules=rules,
    )
    table = result.table()
    print(table)
    srl_lines = []
    for label, runs in result.runs.items():
        scores = runs[0].srl_scores
        if scores is not None:
            srl_lines.append(
                f"srl {label}: precision {scores[0]:.4f} recall {scores[1]:.4f} f1 {scores[2]:.4f}"
            )
    for line in srl_lines:
        print(line)
    payload = {
        label: [
            {
                "seed": r.seed,
                "steps_run": r.steps_run,
                "best_step": r.best_step,
                "parameter_count": r.parameter_count,
                "dev": r.dev_report.to_dict(),
                "test": r.test_report.to_dict(),
                "srl": list(r.srl_scores) if r.srl_scores else None,
            }
            for r in runs
        ]
        for label, runs in result.runs.items()
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest = RunManifest("ablate", _manifest_config(args))
    for path in (args.train, args.dev, args.test):
        manifest.add_input(path)
    manifest.add_output(args.out)
    manifest.save(args.manifest or args.out + ".manifest.json")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="srl-rewriter",
        description="SRL-guided multi-turn dialogue rewriting toolkit",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def register(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        sub = subs.add_parser(name, help=help_text)
        sub.set_defaults(func=handler)
        _add_common(sub)
        registry[name] = sub
        return sub

    sub = register("gen-corpus", cmd_gen_corpus, "sample a synthetic dialogue corpus")
    sub.add_argument("--n-sessions", type=int, default=1000)
    sub.add_argument("--token-mode", choices=["char", "word"], default="char")
    sub.add_argument("--cross-turn-rate", type=float, default=0.3)
    sub.add_argument("--omission-rate", type=float, default=0.5)
    sub.add_argument("--pronoun-rate", type=float, default=0.5)
    sub.add_argument("--neg-rate", type=float, default=0.25)
    sub.add_argument("--tmp-rate", type=float, default=0.0)
    sub.add_argument("--loc-rate", type=float, default=0.0)
    sub.add_argument("--include-negation-triples", action="store_true")
    sub.add_argument("--split", action="store_true", help="write train/dev/test files")
    sub.add_argument("--out-prefix", required=True)

    sub = register("stats", cmd_stats, "role mix and cross-turn ratios of a corpus")
    sub.add_argument("--input", required=True)
    sub.add_argument("--lint", action="store_true", help="also lint the annotations")

    sub = register("pack", cmd_pack, "inspect one packed training instance")
    sub.add_argument("--input", required=True)
    sub.add_argument("--index", type=int, default=0)
    sub.add_argument("--vocab")
    sub.add_argument("--dump", action="store_true", help="print the packed token table")
    sub.add_argument("--dump-mask", action="store_true", help="print visibility rows as 0/1")
    _add_source_flags(sub)

    sub = register("train", cmd_train, "train a rewriter")
    sub.add_argument("--train", required=True)
    sub.add_argument("--dev", required=True)
    sub.add_argument("--out", required=True, help="checkpoint path")
    _add_source_flags(sub)
    _add_model_flags(sub)
    _add_train_flags(sub)

    sub = register("rewrite", cmd_rewrite, "decode rewrites for a record file")
    sub.add_argument("--model", required=True)
    sub.add_argument("--vocab")
    sub.add_argument("--input", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--max-decode-steps", type=int, default=32)
    _add_source_flags(sub)

    sub = register("evaluate", cmd_evaluate, "score hypotheses against references")
    sub.add_argument("--input", required=True, help="records with hypothesis tokens")
    sub.add_argument("--ref", help="separate reference records (defaults to --input)")
    sub.add_argument("--smooth-bleu", action="store_true")
    sub.add_argument("--json-out")

    sub = register("score-srl", cmd_score_srl, "triple-level precision/recall/F1")
    sub.add_argument("--input", required=True, help="records with gold triples")
    sub.add_argument("--pred", help="records whose triples are the predictions")
    _add_source_flags(sub)

    sub = register("ablate", cmd_ablate, "train the source x mask grid across seeds")
    sub.add_argument("--train", required=True)
    sub.add_argument("--dev", required=True)
    sub.add_argument("--test", required=True)
    sub.add_argument("--seeds", default="0,1,2")
    sub.add_argument("--cells", default=",".join(cell.label for cell in DEFAULT_GRID))
    sub.add_argument("--out", required=True, help="JSON results path")
    _add_source_flags(sub)
    _add_model_flags(sub)
    _add_train_flags(sub)

    return parser, registry


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            overrides = parse_config_file(args.config)
            sub = registry[args.command]
            valid = {action.dest for action in sub._actions}
            unknown = sorted(set(overrides) - valid)
            if unknown:
                raise RewriterError("BAD_CONFIG", f"unknown config keys {unknown}")
            sub.set_defaults(**overrides)
            args = parser.parse_args(argv)
        return args.func(args)
    except RewriterError as err:
        print(f"error[{err.code}]: {err}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 0
    except SystemExit:
        raise
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
