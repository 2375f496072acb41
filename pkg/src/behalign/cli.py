"""Single executable exposing the pipeline as subcommands.

Every subcommand is deterministic for fixed inputs and seeds: output files
carry no timestamps, and --seed falls back to the BEHAVE_SEED environment
variable, then to 0. A JSON config file can pre-set any flag; explicit flags
win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import align, evaluate, preprocess, synth
from .dataset import default_catalog, load_profiles, save_profiles, serialize_log, parse_log
from .embeddings import (
    EmbeddingTable,
    TextEmbedder,
    TextEmbedderConfig,
    join,
    read_table,
    write_table,
)
from .errors import BehalignError, MissingEmbeddingError, UnknownGameError
from .evaluate import ClassifierConfig

_LABEL_CHOICES = ("game", "panning", "navigation", "weapon", "caption")


def _seed_default() -> int:
    env = os.environ.get("BEHAVE_SEED")
    return int(env) if env else 0


def _add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="rng seed (default: BEHAVE_SEED or 0)")


def _resolve_seed(value: int | None) -> int:
    return _seed_default() if value is None else value


def _write_lines(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _load_manifest(path: str):
    return preprocess.read_manifest(path)


def _labels_from_manifest(samples, kind: str) -> list:
    if kind == "game":
        return [s.game_id for s in samples]
    if kind == "caption":
        return [s.caption for s in samples]
    return [int(s.categories.get(kind)) for s in samples]


def _joined(table_path: str, manifest_path: str):
    table = read_table(table_path)
    samples = _load_manifest(manifest_path)
    return join(table, samples)


def _catalog_with(args) -> tuple:
    catalog = default_catalog()
    profiles = {}
    if getattr(args, "profiles", None):
        profiles, overrides = load_profiles(args.profiles)
        if overrides:
            catalog = catalog.with_overrides(overrides)
    return catalog, profiles


# ---------------------------------------------------------------- subcommands


def _cmd_preprocess(args) -> None:
    catalog, profiles = _catalog_with(args)
    all_samples = []
    per_game: dict[str, list] = {}
    for log_path in args.logs:
        records = parse_log(log_path, catalog)
        streams: dict[tuple[str, str], list] = {}
        for r in records:
            streams.setdefault((r.game_id, r.session_id), []).append(r)
        for (game_id, _session), stream in streams.items():
            if game_id not in profiles:
                raise UnknownGameError(f"no profile for game {game_id!r}")
            samples = preprocess.run_pipeline(
                stream,
                profiles[game_id],
                catalog,
                window_size=args.window,
                stride=args.stride,
                max_gap_ms=args.max_gap_ms,
            )
            all_samples.extend(samples)
            per_game.setdefault(game_id, []).extend(samples)
    preprocess.write_manifest(all_samples, args.out_manifest)
    print("game,windows,panning_pct,navigation_pct,weapon_pct")
    for game_id in sorted(per_game):
        samples = per_game[game_id]
        n = len(samples)
        pan = 100.0 * sum(s.categories.panning for s in samples) / n if n else 0.0
        nav = 100.0 * sum(s.categories.navigation for s in samples) / n if n else 0.0
        weap = 100.0 * sum(s.categories.weapon for s in samples) / n if n else 0.0
        print(f"{game_id},{n},{pan:.2f},{nav:.2f},{weap:.2f}")


def _cmd_embed_text(args) -> None:
    samples = _load_manifest(args.manifest)
    catalog = default_catalog()
    config = TextEmbedderConfig.from_catalog(catalog, dim=args.dim, seed=_resolve_seed(args.seed))
    embedder = TextEmbedder(config)
    rows = embedder.embed_all([s.caption for s in samples])
    table = EmbeddingTable(ids=tuple(s.sample_id for s in samples), rows=rows)
    write_table(table, args.out)
    print(f"embedded {len(table)} captions at dim {config.dim} -> {args.out}")


def _parse_hidden(spec: str) -> tuple[int, ...]:
    return tuple(int(part) for part in spec.split(",") if part)


def _cmd_train(args) -> None:
    video = read_table(args.video_table)
    text = read_table(args.text_table)
    text_index = {i: k for k, i in enumerate(text.ids)}
    missing = tuple(i for i in video.ids if i not in text_index)
    if missing:
        raise MissingEmbeddingError(missing)
    caption_rows = text.rows[[text_index[i] for i in video.ids]]
    config = align.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        dropout_rate=args.dropout,
        loss=args.loss,
        margin=args.margin,
        seed=_resolve_seed(args.seed),
    )
    report = align.train_alignment(
        video.rows, caption_rows, config, hidden=_parse_hidden(args.hidden)
    )
    report.projector.seed = config.seed
    align.save_checkpoint(report.projector, args.out_checkpoint)
    loss_lines = ["epoch,mean_loss"] + [
        f"{epoch},{loss:.6f}" for epoch, loss in enumerate(report.epoch_losses)
    ]
    Path(str(args.out_checkpoint) + ".losses.csv").write_text(
        "\n".join(loss_lines) + "\n", encoding="utf-8"
    )
    for line in loss_lines:
        print(line)


def _cmd_project(args) -> None:
    projector = align.load_checkpoint(args.checkpoint)
    table = read_table(args.table)
    write_table(align.project(projector, table), args.out)
    print(f"projected {len(table)} rows {table.dim} -> {projector.output_dim}: {args.out}")


def _rows_and_labels(args) -> tuple[np.ndarray, list, str]:
    """Table rows paired with labels, honoring manifest order when joining."""
    table = read_table(args.table)
    if args.labels_file:
        labels = Path(args.labels_file).read_text(encoding="utf-8").splitlines()
        if len(labels) != len(table):
            raise BehalignError(f"{len(labels)} labels for {len(table)} rows")
        return table.rows, labels, "file"
    if not args.manifest:
        raise BehalignError("need --manifest or --labels-file to derive labels")
    paired = join(table, _load_manifest(args.manifest))
    return paired.rows, _labels_from_manifest(paired.samples, args.labels), args.labels


def _cmd_silhouette(args) -> None:
    rows, labels, kind = _rows_and_labels(args)
    codes = np.unique(np.asarray(labels, dtype=object), return_inverse=True)[1]
    report = evaluate.silhouette(
        rows,
        codes,
        label_kind=kind,
        subsample_max=args.subsample_max,
        seed=_resolve_seed(args.seed),
    )
    _write_lines(evaluate.silhouette_report_lines("silhouette", report), args.out_report)


def _classifier_config(args, seed: int) -> ClassifierConfig:
    return ClassifierConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        dropout_rate=args.dropout,
        seed=seed,
        balanced_subsample=args.balanced,
    )


def _cmd_classify(args) -> None:
    paired = _joined(args.table, args.manifest)
    seed = _resolve_seed(args.seed)
    y = np.array([int(s.categories.get(args.category)) for s in paired.samples], dtype=np.float32)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(paired))
    n_test = max(1, int(round(len(paired) * args.test_fraction)))
    test_idx, train_idx = order[:n_test], order[n_test:]
    model = evaluate.train_classifier(
        paired.rows[train_idx], y[train_idx], _classifier_config(args, seed)
    )
    train_acc = evaluate.accuracy(model, paired.rows[train_idx], y[train_idx])
    test_acc = evaluate.accuracy(model, paired.rows[test_idx], y[test_idx])
    _write_lines(
        [
            f"classify,{args.category},0,train_acc,{train_acc:.6f}",
            f"classify,{args.category},0,test_acc,{test_acc:.6f}",
            f"classify,{args.category},0,seed,{seed}",
        ],
        args.out_report,
    )


def _target_datasets(args):
    if len(args.target_table) != len(args.target_manifest):
        raise BehalignError("--target-table and --target-manifest must pair up")
    return [_joined(t, m) for t, m in zip(args.target_table, args.target_manifest)]


def _cmd_transfer(args) -> None:
    source = _joined(args.source_table, args.source_manifest)
    targets = _target_datasets(args)
    projector = align.load_checkpoint(args.checkpoint) if args.checkpoint else None
    seed = _resolve_seed(args.seed)
    report = evaluate.run_transfer_experiment(
        source,
        targets,
        projector,
        runs=args.runs,
        seed=seed,
        config=_classifier_config(args, seed),
        test_fraction=args.test_fraction,
    )
    _write_lines(evaluate.transfer_report_lines("transfer", report), args.out_report)


def _cmd_idm(args) -> None:
    source = _joined(args.source_table, args.source_manifest)
    targets = _target_datasets(args)
    projector = align.load_checkpoint(args.checkpoint) if args.checkpoint else None
    seed = _resolve_seed(args.seed)
    report = evaluate.idm_marginal(
        source,
        targets,
        projector,
        min_freq=args.min_freq,
        runs=args.runs,
        seed=seed,
        config=_classifier_config(args, seed),
        test_fraction=args.test_fraction,
    )
    _write_lines(evaluate.idm_report_lines("idm", report), args.out_report)


def _cmd_synth(args) -> None:
    config = synth.SynthConfig(
        n_games=args.games,
        frames_per_game=args.frames,
        seed=_resolve_seed(args.seed),
        dim=args.dim,
        matrix_seed=args.matrix_seed,
        game_gap=args.game_gap,
        noise=args.noise,
        window_size=args.window,
        stride=args.stride,
    )
    out = Path(args.out_dir)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    catalog = default_catalog()
    samples, games = synth.generate_windows(config, catalog)
    for game in games:
        serialize_log(game.records, catalog, out / "logs" / f"{game.game_id}.csv")
    save_profiles({g.game_id: g.profile for g in games}, out / "profiles.json")
    preprocess.write_manifest(samples, out / "manifest.csv")
    table = synth.generate_foundation_embeddings(samples, config)
    write_table(table, out / "video.bhve")
    print(f"synth: {config.n_games} games, {len(samples)} windows, dim {config.dim} -> {out}")


def _cmd_export_2d(args) -> None:
    rows, labels, _ = _rows_and_labels(args)
    points = evaluate.pca_2d(rows)
    lines = ["x,y,label"] + [
        f"{points[i, 0]:.6f},{points[i, 1]:.6f},{labels[i]}" for i in range(len(labels))
    ]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"exported {len(labels)} points -> {args.out}")


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="behalign",
        description="Behaviour-aligned gameplay embeddings: preprocessing, training, evaluation.",
    )
    parser.add_argument("--config", help="JSON file with per-subcommand flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="logs -> window manifest + frequency table")
    p.add_argument("--logs", nargs="+", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--stride", type=int, default=8)
    p.add_argument("--max-gap-ms", type=int, default=500)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("embed-text", help="manifest captions -> BHVE table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=_cmd_embed_text)

    p = sub.add_parser("train", help="train the alignment projector")
    p.add_argument("--video-table", required=True)
    p.add_argument("--text-table", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--loss", choices=align.LOSS_KINDS, default="cosine")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--hidden", default="256,256,256")
    _add_seed(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("project", help="apply a trained projector to a table")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("silhouette", help="cluster quality of a table")
    p.add_argument("--table", required=True)
    p.add_argument("--manifest")
    p.add_argument("--labels", choices=_LABEL_CHOICES, default="game")
    p.add_argument("--labels-file")
    p.add_argument("--subsample-max", type=int, default=5000)
    p.add_argument("--out-report")
    _add_seed(p)
    p.set_defaults(func=_cmd_silhouette)

    def classifier_flags(p):
        p.add_argument("--epochs", type=int, default=10)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--batch", type=int, default=128)
        p.add_argument("--dropout", type=float, default=0.4)
        p.add_argument("--balanced", action="store_true")
        p.add_argument("--test-fraction", type=float, default=0.2)
        p.add_argument("--out-report")
        _add_seed(p)

    p = sub.add_parser("classify", help="train/evaluate one behaviour classifier")
    p.add_argument("--table", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--category", choices=evaluate.CATEGORY_NAMES, required=True)
    classifier_flags(p)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("transfer", help="source->targets transferability per category")
    p.add_argument("--source-table", required=True)
    p.add_argument("--source-manifest", required=True)
    p.add_argument("--target-table", action="append", default=[])
    p.add_argument("--target-manifest", action="append", default=[])
    p.add_argument("--checkpoint")
    p.add_argument("--runs", type=int, default=5)
    classifier_flags(p)
    p.set_defaults(func=_cmd_transfer)

    p = sub.add_parser("idm", help="per-action marginal classifiers with a frequency filter")
    p.add_argument("--source-table", required=True)
    p.add_argument("--source-manifest", required=True)
    p.add_argument("--target-table", action="append", default=[])
    p.add_argument("--target-manifest", action="append", default=[])
    p.add_argument("--checkpoint")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--min-freq", type=float, default=0.30)
    classifier_flags(p)
    p.set_defaults(func=_cmd_idm)

    p = sub.add_parser("synth", help="generate a synthetic multi-game dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--games", type=int, default=6)
    p.add_argument("--frames", type=int, default=4096)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--matrix-seed", type=int, default=0)
    p.add_argument("--game-gap", type=float, default=5.0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--stride", type=int, default=8)
    _add_seed(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("export-2d", help="PCA projection of a table for plotting")
    p.add_argument("--table", required=True)
    p.add_argument("--manifest")
    p.add_argument("--labels", choices=_LABEL_CHOICES, default="game")
    p.add_argument("--labels-file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_2d)

    return parser


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Pre-scan for --config and fold its values in as parser defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv
    with open(known.config, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    command = next((a for a in argv if not a.startswith("-") and a != known.config), None)
    section = dict(doc.get(command, {})) if command else {}
    if "seed" in doc and "seed" not in section:
        section["seed"] = doc["seed"]
    for action in parser._subparsers._group_actions:  # noqa: SLF001 - argparse has no public hook
        if command in getattr(action, "choices", {}):
            action.choices[command].set_defaults(**section)
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        args.func(args)
    except BehalignError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ZeroDivisionError as exc:
        print(f"error: DivisionByZero: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
