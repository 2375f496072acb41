"""Zero-shot transfer of behaviour classifiers, plus the per-action study.

Trains the alignment projector on four synthetic games, then trains binary
behaviour classifiers on a fifth game (never seen by the aligner) and
evaluates them on two more unseen games, with and without alignment.
Finishes with the per-action marginal study and its frequency filter.

Run: python demos/03_transfer_and_idm.py     (~40 s CPU)
"""

from __future__ import annotations

from behalign import (
    PairedDataset,
    TextEmbedder,
    TextEmbedderConfig,
    TrainConfig,
    default_catalog,
    idm_marginal,
    run_transfer_experiment,
    train_alignment,
)
from behalign.evaluate import ClassifierConfig
from behalign.synth import (
    SynthConfig,
    behaviour_signal_scale,
    generate_foundation_embeddings,
    generate_windows,
)

probe = SynthConfig(n_games=7, frames_per_game=8192, seed=0)
samples, _ = generate_windows(probe)
config = SynthConfig(
    n_games=7, frames_per_game=8192, seed=0,
    game_gap=3.0 * behaviour_signal_scale(samples, probe),
)
table = generate_foundation_embeddings(samples, config)

by_game: dict[str, list[int]] = {}
for i, s in enumerate(samples):
    by_game.setdefault(s.game_id, []).append(i)

idx_train = [i for g in ("game00", "game01", "game02", "game03") for i in by_game[g]]
embedder = TextEmbedder(TextEmbedderConfig.from_catalog(default_catalog()))
captions = embedder.embed_all([samples[i].caption for i in idx_train])
projector = train_alignment(
    table.rows[idx_train], captions,
    TrainConfig(epochs=10, learning_rate=2e-3, seed=0),
).projector
print("aligner trained on game00..game03")


def paired(game_id: str) -> PairedDataset:
    idx = by_game[game_id]
    return PairedDataset(rows=table.rows[idx], samples=tuple(samples[i] for i in idx))


source = paired("game04")
targets = [paired("game05"), paired("game06")]
print(f"classifier source: game04 ({len(source)} windows); targets: game05+game06\n")

report = run_transfer_experiment(source, targets, projector, runs=5, seed=100)
print(f"{'category':<12} {'src unal':>8} {'src al':>8} {'tgt unal':>8} {'tgt al':>8} {'transfer':>9}")
for cat in report.categories:
    print(
        f"{cat.category:<12} {cat.source_acc_unaligned:>8.3f} {cat.source_acc_aligned:>8.3f} "
        f"{cat.target_acc_unaligned:>8.3f} {cat.target_acc_aligned:>8.3f} "
        f"{cat.transferability_pct:>+8.1f}%"
    )

# the canonical filter is 0.30; relaxed here so the demo trains a few heads
print("\nper-action marginal study (positives >= 20% of source windows):")
idm = idm_marginal(
    source, targets, projector, min_freq=0.20, runs=2, seed=100,
    config=ClassifierConfig(epochs=5),
)
for action in idm.actions:
    if action.trained:
        print(
            f"  {action.action_id:<12} freq {action.freq:.2f}  "
            f"transfer {action.transfer.transferability_pct:+.1f}%"
        )
    else:
        print(f"  {action.action_id:<12} freq {action.freq:.2f}  skipped ({action.skip_reason})")
