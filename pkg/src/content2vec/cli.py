"""Command-line surface: synth, split, train, eval, embed, retrieve.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Identical inputs, config and seed produce byte-identical output files. The
C2V_THREADS environment variable caps worker threads; everything here runs
single-threaded (the default of 1) for determinism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .data import (
    generate_synthetic,
    load_catalog,
    load_pairs,
    load_synth_config,
    make_hard_cold_start_split,
    make_soft_cold_start_split,
    save_catalog,
    save_pairs,
    DatasetSplit,
    PairSet,
)
from .errors import DataError, NumericError
from .evaluation import ResultRow, evaluate_link_prediction, render_table
from .pipeline import (
    BundleScorers,
    FUSION_KINDS,
    STAGES,
    export_embeddings,
    load_bundle,
    run_pipeline,
    save_bundle,
)
from .store import load_store, save_store, topk_retrieve
from .training import ModelDims, TrainConfig, load_train_config


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we want exit 1
        raise UsageError(message)


def worker_threads() -> int:
    raw = os.environ.get("C2V_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise DataError(f"C2V_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise DataError(f"C2V_THREADS must be >= 1, got {n}")
    return n


def _build_parser() -> _Parser:
    parser = _Parser(prog="c2v", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", help="generate a synthetic catalog and pairs")
    p.add_argument("--config", required=True, help="flat TOML synth config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("split", help="build a cold-start split from a pairs file")
    p.add_argument("--catalog", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--regime", choices=("hard", "soft"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--fractions",
        default="0.8,0.1,0.1",
        help="hard: train,val,test product fractions; soft: ignored first value",
    )
    p.add_argument("--top-k", type=int, default=None, help="soft regime: keep top-k products")
    p.add_argument("--link-fraction", type=float, default=1.0, help="soft regime")

    p = sub.add_parser("train", help="run training stages into a bundle directory")
    p.add_argument("--catalog", required=True)
    p.add_argument("--split", required=True, help="split directory")
    p.add_argument("--config", required=True, help="flat TOML train config")
    p.add_argument("--stage", default="all", help=f"comma list of {STAGES} or 'all'")
    p.add_argument("--fusion", default="ciu", choices=FUSION_KINDS)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("eval", help="evaluate a trained bundle on the test split")
    p.add_argument("--catalog", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--model", required=True, help="bundle directory")
    p.add_argument("--config", default=None, help="train config (for dims)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("embed", help="export an embedding store from a bundle")
    p.add_argument("--catalog", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--fusion", required=True, help="store kind: linear/ciu/compressed/cf")
    p.add_argument("--out", required=True, help="store file path")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("retrieve", help="exact top-k inner-product retrieval")
    p.add_argument("--store", required=True)
    p.add_argument("--query", required=True, help="product id present in the store")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", default=None, help="write results here instead of stdout")

    return parser


def _load_split(directory, catalog) -> DatasetSplit:
    with open(os.path.join(directory, "split.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    parts = {}
    for name in ("train", "validation", "test"):
        path = os.path.join(directory, f"{name}.tsv")
        parts[name] = load_pairs(path, catalog) if os.path.getsize(path) else PairSet([])
    return DatasetSplit(regime=meta["regime"], **parts)


def _save_split(directory, split: DatasetSplit, meta: dict) -> None:
    os.makedirs(directory, exist_ok=True)
    save_pairs(os.path.join(directory, "train.tsv"), split.train)
    save_pairs(os.path.join(directory, "validation.tsv"), split.validation)
    save_pairs(os.path.join(directory, "test.tsv"), split.test)
    payload = dict(meta, regime=split.regime)
    with open(os.path.join(directory, "split.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _configs(path) -> tuple[TrainConfig, ModelDims]:
    if path is None:
        return TrainConfig(), ModelDims()
    return load_train_config(path)


def _cmd_synth(args) -> int:
    config = load_synth_config(args.config)
    catalog, pairs = generate_synthetic(config, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    save_catalog(os.path.join(args.out, "catalog.jsonl"), catalog)
    save_pairs(os.path.join(args.out, "pairs.tsv"), pairs)
    print(f"wrote {len(catalog)} products, {len(pairs)} pairs to {args.out}")
    return 0


def _cmd_split(args) -> int:
    catalog = load_catalog(args.catalog)
    pairs = load_pairs(args.pairs, catalog)
    fractions = tuple(float(x) for x in args.fractions.split(","))
    if len(fractions) != 3:
        raise UsageError(f"--fractions needs three values, got {args.fractions!r}")
    if args.regime == "hard":
        split = make_hard_cold_start_split(pairs, fractions, seed=args.seed)
    else:
        top_k = args.top_k if args.top_k is not None else len(pairs.product_ids())
        split = make_soft_cold_start_split(
            pairs,
            top_k=top_k,
            link_fraction=args.link_fraction,
            val_test_fractions=(fractions[1], fractions[2]),
            seed=args.seed,
        )
    _save_split(args.out, split, {"seed": args.seed, "fractions": list(fractions)})
    print(
        f"{split.regime} split: {len(split.train)} train / "
        f"{len(split.validation)} val / {len(split.test)} test pairs"
    )
    return 0


def _cmd_train(args) -> int:
    catalog = load_catalog(args.catalog)
    split = _load_split(args.split, catalog)
    config, dims = _configs(args.config)
    seed = args.seed if args.seed is not None else config.seed
    stages = list(STAGES) if args.stage == "all" else args.stage.split(",")
    bundle = run_pipeline(
        catalog,
        split,
        stages=stages,
        fusion_kind=args.fusion,
        config=config,
        dims=dims,
        seed=seed,
    )
    save_bundle(args.out, bundle, seed=seed)
    with open(os.path.join(args.out, "config.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(
            {
                "stages": stages,
                "fusion": args.fusion,
                "seed": seed,
                "train_config": vars(config),
                "dims": {k: list(v) if isinstance(v, tuple) else v for k, v in vars(dims).items()},
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    print(f"trained stages {stages}; bundle written to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    catalog = load_catalog(args.catalog)
    split = _load_split(args.split, catalog)
    _, dims = _configs(args.config)
    bundle = load_bundle(args.model, dims)
    scorers = BundleScorers(catalog, bundle)
    all_positives = split.all_pair_keys()
    rows = []
    for kind in bundle.available_scorers():
        auc, ap = evaluate_link_prediction(
            scorers.scorer(kind),
            split.test,
            all_positives,
            seed=args.seed,
        )
        rows.append(ResultRow(kind, "test", "roc_auc", auc))
        rows.append(ResultRow(kind, "test", "auprc", ap))
    text, payload = render_table(rows)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(payload)
    print(text, end="")
    return 0


def _cmd_embed(args) -> int:
    catalog = load_catalog(args.catalog)
    _, dims = _configs(args.config)
    bundle = load_bundle(args.model, dims)
    store = export_embeddings(bundle, catalog, kind=args.fusion, seed=args.seed)
    save_store(args.out, store)
    print(f"wrote {len(store)} vectors of dim {store.dim} to {args.out}")
    return 0


def _cmd_retrieve(args) -> int:
    store = load_store(args.store)
    results = topk_retrieve(store, args.query, args.k)
    lines = "".join(f"{pid}\t{score!r}\n" for pid, score in results)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(lines)
    else:
        sys.stdout.write(lines)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "split": _cmd_split,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "embed": _cmd_embed,
    "retrieve": _cmd_retrieve,
}


def cli_dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        worker_threads()  # validate the env var before doing any work
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
