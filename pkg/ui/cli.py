"""
anchorcap command line.

Exit codes: 0 on success, 1 for usage, configuration and data errors, 2 for
numeric failures (including a failed gradient check).
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import pandas as pd

from common import report_file_name
from common.config import PRESETS, SynthConfig, TrainConfig, load_config_file, resolve_config
from common.errors import AnchorCapError, NumericError
from common.helpers import build_id, seed_everything
from common.logger_config import get_logger
from common.pretty_print import pretty_print_results
from data_prep.normalize_data import iter_jsonl_lines, write_json, write_jsonl
from data_prep.scene_io import DatasetManifest, load_scenes, write_scenes
from data_prep.synthetic import generate_synthetic
from data_prep.vocab import build_vocab
from graph.mining import mine_ground_truth
from inference.generate import generate_all
from inference.schema import GenerationResult
from metrics.report import evaluate_results
from training.ablation import compare_strategies, run_rule_ablation
from training.checkpoint import load_checkpoint
from training.gradcheck import gradient_check, tiny_config
from training.trainer import train
from ui.helpers.run_manifest import RunLogger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERIC = 2

dims_fields = ["d_app", "d_ft", "d_phoc", "max_objects", "max_tokens"]


class CliParser(argparse.ArgumentParser):
    """Usage errors print usage to stderr and exit with code 1"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _file_values(args) -> Dict:
    return load_config_file(args.config) if args.config else {}


def _log_start(command: str, seed: Optional[int], config: Dict) -> None:
    logger.info(f"{command}: seed={seed} build={build_id()}")
    logger.info(f"{command}: config={config}")


def _dataset_dims(manifest: DatasetManifest) -> Dict:
    return manifest.dims.model_dump(include=set(dims_fields))


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def cmd_synth(args) -> int:
    cli_values = {
        "n_scenes": args.n_scenes, "objects_per_scene": args.objects_per_scene,
        "tokens_per_scene": args.tokens_per_scene, "refs_per_scene": args.refs_per_scene,
    }
    config = resolve_config(SynthConfig, args.preset, _file_values(args), cli_values)
    _log_start("synth", args.seed, config.model_dump())
    with RunLogger.start("synth", config.model_dump(), args.seed, args.out) as run:
        manifest = generate_synthetic(config, args.seed)
        write_scenes(manifest, args.out)
        run.add_output("scenes", args.out)
    return EXIT_OK


def cmd_mine_acg(args) -> int:
    manifest = load_scenes(args.data)
    _log_start("mine-acg", args.seed, {"data": args.data})
    with RunLogger.start("mine-acg", {"data": args.data}, args.seed, args.out) as run:
        vocab = build_vocab([ref for s in manifest.scenes for ref in s.references])
        records, skipped = [], 0
        for scene in manifest.scenes:
            texts = [t.text for t in scene.ocr_tokens]
            if not scene.references:
                records.append({"id": scene.id, "anchor": None, "graph": [], "skipped": "no references"})
                skipped += 1
                continue
            gt = mine_ground_truth(scene, vocab)
            if gt.anchor_idx is None:
                records.append({"id": scene.id, "anchor": None, "graph": [], "support": gt.support,
                                "skipped": "no anchor"})
                skipped += 1
                continue
            members = gt.graph_members
            records.append({
                "id": scene.id,
                "anchor": texts[gt.anchor_idx],
                "graph": [texts[i] for i in members],
                "anchor_index": gt.anchor_idx,
                "graph_indices": members,
                "support": gt.support,
            })
        logger.info(f"mined {len(records) - skipped} scenes, skipped {skipped}")

        if args.out:
            write_jsonl(records, args.out)
            run.add_output("audit", args.out)
        else:
            write_jsonl_stdout(records)
    return EXIT_OK


def write_jsonl_stdout(records: List[Dict]) -> None:
    for record in records:
        sys.stdout.write(json.dumps(record, ensure_ascii=False) + "\n")


def cmd_train(args) -> int:
    if args.config is None:
        args.parser.error("train requires --config")
    file_values = _file_values(args)
    cli_values = {
        "seed": args.seed, "iterations": args.iterations, "batch_size": args.batch_size,
        "learning_rate": args.learning_rate, "strategy": args.strategy, "data": args.data,
    }
    config = resolve_config(TrainConfig, args.preset, file_values, cli_values)
    dataset = _training_data(config)
    # dataset header dims sit under the file and CLI layers
    config = resolve_config(TrainConfig, args.preset, {**_dataset_dims(dataset), **file_values}, cli_values)
    _log_start("train", config.seed, config.model_dump())
    with RunLogger.start("train", config.model_dump(), config.seed, args.out, is_dir=True) as run:
        _, report = train(dataset, config, args.out, resume_from=args.resume)
        run.add_output("checkpoint", report.checkpoint_path)
        run.add_output("report", str(Path(args.out) / report_file_name))
    return EXIT_OK


def _training_data(config: TrainConfig) -> DatasetManifest:
    if config.data:
        return load_scenes(config.data)
    synth = resolve_config(SynthConfig, "desk", {k: getattr(config, k) for k in dims_fields},
                           {"n_scenes": config.synth_scenes})
    logger.info(f"no dataset given, training on {synth.n_scenes} synthetic scenes")
    return generate_synthetic(synth, config.seed)


def cmd_generate(args) -> int:
    model, _ = load_checkpoint(args.ckpt)
    manifest = load_scenes(args.data)
    config = {"ckpt": args.ckpt, "data": args.data, "topk": args.topk, **model.config.model_dump()}
    _log_start("generate", args.seed, config)
    with RunLogger.start("generate", config, args.seed, args.out) as run:
        seed_everything(args.seed)
        results = generate_all(manifest.scenes, model, k=args.topk)
        if args.out:
            write_jsonl([r.model_dump() for r in results], args.out)
            run.add_output("results", args.out)
        if args.pretty or not args.out:
            pretty_print_results(results)
    return EXIT_OK


def load_results(path: str) -> List[GenerationResult]:
    return [GenerationResult.model_validate(json.loads(line)) for _, line in iter_jsonl_lines(path)]


def cmd_eval(args) -> int:
    manifest = load_scenes(args.data)
    if args.captions_from == "refs":
        results = [GenerationResult(id=s.id, visual_caption="") for s in manifest.scenes]
    elif args.gen is None:
        args.parser.error("eval needs --gen unless --captions-from refs")
    else:
        results = load_results(args.gen)
    config = {"gen": args.gen, "data": args.data, "captions_from": args.captions_from}
    _log_start("eval", args.seed, config)
    with RunLogger.start("eval", config, args.seed, args.out) as run:
        report = evaluate_results(results, manifest, args.captions_from)
        if args.out:
            write_json(report.model_dump(), args.out)
            run.add_output("report", args.out)
        else:
            print(report.model_dump_json(indent=2, exclude={"per_image"}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    config = tiny_config(args.strategy) if args.dims == "tiny" else resolve_config(
        TrainConfig, args.dims, _file_values(args), {"strategy": args.strategy, "precision": "float64"},
    )
    _log_start("gradcheck", args.seed, config.model_dump())
    with RunLogger.start("gradcheck", config.model_dump(), args.seed, args.out) as run:
        report = gradient_check(seed=args.seed, samples=args.samples, config=config)
        print(f"max relative error: {report.max_rel_error:.3e} over {report.n_coordinates} coordinates")
        if args.out:
            write_json({**report.model_dump(), "passed": report.passed}, args.out)
            run.add_output("report", args.out)
        run.finish("ok" if report.passed else "failed")
        return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_ablate(args) -> int:
    manifest = load_scenes(args.data)
    out_dir = Path(args.out)
    if args.strategies:
        if args.config is None:
            args.parser.error("ablate --strategies requires --config")
        config = resolve_config(
            TrainConfig, args.preset, {**_dataset_dims(manifest), **_file_values(args)}, {"seed": args.seed},
        )
        run_config = config.model_dump()
    else:
        if args.ckpt is None:
            args.parser.error("ablate needs --ckpt (or --strategies)")
        run_config = {"ckpt": args.ckpt, "data": args.data, "k_around": args.k_around}
    _log_start("ablate", args.seed, run_config)
    with RunLogger.start("ablate", run_config, args.seed, out_dir, is_dir=True) as run:
        if args.strategies:
            table = compare_strategies(manifest, config, out_dir / "strategies")
            name = "strategies"
        else:
            model, _ = load_checkpoint(args.ckpt)
            table = run_rule_ablation(model, manifest, k_around=args.k_around, seed=args.seed)
            name = "rules"
        _write_table(table, out_dir, name, run)
    return EXIT_OK


def _write_table(table: pd.DataFrame, out_dir: Path, name: str, run: RunLogger) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_dir / f"ablation_{name}.csv", index=False)
    table.to_json(out_dir / f"ablation_{name}.json", orient="records", indent=2)
    run.add_output("csv", out_dir / f"ablation_{name}.csv")
    run.add_output("json", out_dir / f"ablation_{name}.json")
    logger.info(f"ablation table:\n{table.to_string(index=False)}")


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def build_parser() -> CliParser:
    common_flags = CliParser(add_help=False)
    common_flags.add_argument("--seed", type=int, default=0)
    common_flags.add_argument("--out", default=None, help="output file or directory")
    common_flags.add_argument("--config", default=None, help="JSON or key=value config file")
    common_flags.add_argument("--preset", choices=sorted(PRESETS), default="desk")

    parser = CliParser(prog="anchorcap", description="Anchor-centred text-aware image captioning")
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name: str, handler: Callable, help_text: str) -> CliParser:
        sub = commands.add_parser(name, parents=[common_flags], help=help_text)
        sub.set_defaults(handler=handler, parser=sub)
        return sub

    synth = command("synth", cmd_synth, "write a synthetic scene corpus")
    synth.add_argument("--n-scenes", type=int)
    synth.add_argument("--objects-per-scene", type=int)
    synth.add_argument("--tokens-per-scene", type=int)
    synth.add_argument("--refs-per-scene", type=int)

    mine = command("mine-acg", cmd_mine_acg, "audit the mined anchors and graphs of a dataset")
    mine.add_argument("--data", required=True)

    trainer = command("train", cmd_train, "train a captioner")
    trainer.add_argument("--data")
    trainer.add_argument("--resume", help="checkpoint written by an earlier run")
    trainer.add_argument("--iterations", type=int)
    trainer.add_argument("--batch-size", type=int)
    trainer.add_argument("--learning-rate", type=float)
    trainer.add_argument("--strategy", choices=["sequence", "independent", "multiple"])

    generator = command("generate", cmd_generate, "caption scenes with a trained model")
    generator.add_argument("--ckpt", required=True)
    generator.add_argument("--data", required=True)
    generator.add_argument("--topk", type=int, default=1)
    generator.add_argument("--pretty", action="store_true", help="print coloured results to the terminal")

    evaluator = command("eval", cmd_eval, "score generated captions")
    evaluator.add_argument("--gen")
    evaluator.add_argument("--data", required=True)
    evaluator.add_argument("--captions-from", choices=["generated", "refs"], default="generated")

    checker = command("gradcheck", cmd_gradcheck, "compare analytic and finite-difference gradients")
    checker.add_argument("--dims", choices=sorted(PRESETS), default="tiny")
    checker.add_argument("--samples", type=int, default=200)
    checker.add_argument("--strategy", choices=["sequence", "independent", "multiple"], default="sequence")

    ablate = command("ablate", cmd_ablate, "rule-based graph and graph-strategy ablations")
    ablate.add_argument("--data", required=True)
    ablate.add_argument("--ckpt")
    ablate.add_argument("--k-around", type=int, default=5)
    ablate.add_argument("--strategies", action="store_true", help="train and compare every graph strategy")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "synth" and args.out is None:
            args.parser.error("synth requires --out")
        if args.command in ("train", "ablate") and args.out is None:
            args.out = f"runs/{args.command}"
        if args.command == "generate" and args.topk < 1:
            args.parser.error("--topk must be >= 1")
        return args.handler(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INVALID
    except NumericError as e:
        logger.error(str(e))
        return EXIT_NUMERIC
    except (AnchorCapError, OSError, ValueError) as e:
        logger.error(str(e))
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
