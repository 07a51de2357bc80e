"""Command-line entry point: train, eval, serve, dump-graph."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import TgqaError

log = logging.getLogger("tgqa")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("TGQA_LOG", "info").lower()
    logging.basicConfig(
        level=_LOG_LEVELS.get(level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_dataset(args):
    """Either the bundled synthetic corpus or an SQA-format split on disk."""
    from .sqa import load_split
    from .synthetic import build_synthetic_corpus

    if getattr(args, "synthetic", False):
        conversations, tables = build_synthetic_corpus()
        return conversations, tables, None
    if not args.data_dir:
        raise TgqaError("provide --data-dir or --synthetic")
    data_dir = Path(args.data_dir)
    split = getattr(args, "split", "train")
    tsv = data_dir / f"{split}.tsv"
    if not tsv.exists():
        raise TgqaError(f"split file {tsv} not found")
    data = load_split(tsv, data_dir)
    if data.rejects:
        log.warning("%d rows rejected while loading %s", len(data.rejects), tsv)
    return data.conversations, data.tables, data


def _cmd_train(args) -> int:
    from .network import ModelConfig
    from .sqa import expand_grid, load_config
    from .training import TrainConfig, checkpoint_save, train

    if args.config:
        model_config, train_config, _ = load_config(args.config)
        raw = json.loads(Path(args.config).read_text())
    else:
        model_config, train_config = ModelConfig(), TrainConfig()
        raw = {}
    if args.seed is not None:
        train_config.seed = args.seed

    conversations, tables, _ = _load_dataset(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    grid = train_config.grid or {}
    configs = expand_grid(raw, grid) if grid else [raw]
    for i, combo in enumerate(configs):
        if grid:
            from .sqa import _MODEL_KEYS  # same key split as load_config

            model_config = ModelConfig.from_dict({
                **ModelConfig().to_dict(),
                **{k: v for k, v in combo.items() if k in _MODEL_KEYS},
            })
            train_kwargs = {
                k: v for k, v in combo.items() if k in TrainConfig().to_dict()
            }
            train_config = TrainConfig.from_dict({**TrainConfig().to_dict(), **train_kwargs})
            if args.seed is not None:
                train_config.seed = args.seed
            run_dir = out_dir / f"grid_{i:03d}"
            run_dir.mkdir(exist_ok=True)
        else:
            run_dir = out_dir
        log.info("training run %d/%d -> %s", i + 1, len(configs), run_dir)
        result = train(
            conversations, tables, model_config, train_config,
            log_path=run_dir / "train_log.jsonl",
            progress=lambda e: log.info(
                "step %d loss %.4f lr %.2e train ALL %.3f",
                e["step"], e["loss"], e["lr"], e["train_all"],
            ),
        )
        checkpoint_save(run_dir / "checkpoint.tgqa", result.params, model_config,
                        result.vocab, train_config)
        try:
            from .figures import render_training_curve

            if result.log:
                render_training_curve(result.log, run_dir / "training_curve.png")
        except Exception as exc:  # figures are best-effort on train
            log.warning("could not render training curve: %s", exc)
        log.info("saved checkpoint to %s (final loss %.4f)", run_dir / "checkpoint.tgqa", result.final_loss)
    return 0


def _cmd_eval(args) -> int:
    from .evaluation import (
        EvalConfig,
        evaluate,
        export_error_annotations,
        summary_text,
        write_records_tsv,
        write_report,
    )
    from .figures import render_report_figures
    from .training import checkpoint_load

    checkpoint = checkpoint_load(args.model)
    conversations, tables, _ = _load_dataset(args)
    config = EvalConfig(
        context_mode=args.context.upper(),
        match_mode="COORDS" if args.match == "coords" else "TEXT_MULTISET",
        numeric_relations_enabled=not args.no_numeric,
    )
    report = evaluate(checkpoint, conversations, tables, config)

    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, report_path)
    base = report_path.with_suffix("")
    write_records_tsv(report, base.parent / (base.name + "_records.tsv"))
    n_errors = export_error_annotations(report, base.parent / (base.name + "_errors.jsonl"))
    summary = summary_text(report)
    (base.parent / (base.name + "_summary.txt")).write_text(summary)
    if not args.no_figures:
        render_report_figures(report, base.parent)
    sys.stdout.write(summary)
    log.info("wrote report to %s (%d error stubs)", report_path, n_errors)
    return 0


def _cmd_serve(args) -> int:
    from .server import QaService, serve
    from .sqa import load_table_csv
    from .training import checkpoint_load

    checkpoint = checkpoint_load(args.model)
    tables = {}
    if args.data_dir:
        data_dir = Path(args.data_dir)
        for csv_path in sorted(data_dir.rglob("*.csv")):
            table_id = str(csv_path.relative_to(data_dir))
            try:
                tables[table_id] = load_table_csv(csv_path, table_id)
            except TgqaError as exc:
                log.warning("skipping table %s: %s", table_id, exc)
    service = QaService(checkpoint, tables)
    httpd = serve(service, args.port, args.static)
    log.info("serving on port %d (%d tables, static=%s)", args.port, len(tables), args.static)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        httpd.shutdown()
    return 0


def _cmd_dump_graph(args) -> int:
    from .sqa import SplitData, dump_graphs
    from .text import build_vocab, corpus_tokens
    from .training import checkpoint_load, ensure_column_types

    conversations, tables, data = _load_dataset(args)
    ensure_column_types(tables)
    if args.model:
        vocab = checkpoint_load(args.model).vocab
    else:
        vocab = build_vocab(corpus_tokens(
            (t.text for c in conversations for t in c.turns), tables.values()
        ))
    split = data or SplitData(conversations=conversations, tables=tables)
    count = dump_graphs(split, vocab, args.out)
    log.info("dumped %d graphs to %s", count, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tgqa",
        description="Conversational question answering over tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--config", help="flat JSON config file")
    p_train.add_argument("--data-dir", help="directory with <split>.tsv and table CSVs")
    p_train.add_argument("--split", default="train", choices=["train", "test", "dev"])
    p_train.add_argument("--synthetic", action="store_true", help="use the built-in toy corpus")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data-dir")
    p_eval.add_argument("--split", default="test", choices=["train", "test", "dev"])
    p_eval.add_argument("--synthetic", action="store_true")
    p_eval.add_argument("--context", default="predicted", choices=["predicted", "reference"])
    p_eval.add_argument("--match", default="text", choices=["text", "coords"])
    p_eval.add_argument("--no-numeric", action="store_true",
                        help="disable numeric relations, ranks, and question numbers")
    p_eval.add_argument("--report", required=True, help="output report JSON path")
    p_eval.add_argument("--no-figures", action="store_true")
    p_eval.set_defaults(func=_cmd_eval)

    p_serve = sub.add_parser("serve", help="run the HTTP inference service")
    p_serve.add_argument("--model", required=True)
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--static", help="directory of UI files to serve")
    p_serve.add_argument("--data-dir", help="directory of table CSVs to preload")
    p_serve.set_defaults(func=_cmd_serve)

    p_dump = sub.add_parser("dump-graph", help="dump per-turn graphs as JSON lines")
    p_dump.add_argument("--data-dir")
    p_dump.add_argument("--split", default="train", choices=["train", "test", "dev"])
    p_dump.add_argument("--synthetic", action="store_true")
    p_dump.add_argument("--model", help="checkpoint whose vocabulary to reuse")
    p_dump.add_argument("--out", required=True)
    p_dump.set_defaults(func=_cmd_dump_graph)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TgqaError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
