"""Synthetic multi-game datasets with a controllable domain gap.

The generator is the verification oracle for the whole pipeline: per-category
behaviour runs as an alternating geometric on/off process whose transition
probability is solved exactly (dynamic program over the propagated-label
window statistic) so measured window frequencies land on the configured
targets; embeddings are linear-in-actions plus a per-game offset plus noise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dataset import (
    ActionCatalog,
    GameProfile,
    MouseMode,
    TimestepRecord,
    default_catalog,
)
from .embeddings import EmbeddingTable, l2_normalize
from .errors import UnknownGameError
from .preprocess import WindowSample, run_pipeline

SCREEN = (1920, 1080)
CENTER = (SCREEN[0] // 2, SCREEN[1] // 2)
FRAME_MS = 1000.0 / 16.0  # nominal 16 Hz capture cadence


@dataclass(frozen=True)
class GameStyle:
    """Per-game rendering stand-ins: pointer handling, mouse sensitivity, and
    target window rates per behaviour category."""

    mouse_mode: MouseMode = MouseMode.FREE_FORM
    sensitivity: float = 1.0
    panning_rate: float = 0.55
    navigation_rate: float = 0.6
    weapon_rate: float = 0.35

    def __post_init__(self) -> None:
        for rate in (self.panning_rate, self.navigation_rate, self.weapon_rate):
            if not 0.0 < rate < 1.0:
                raise ValueError("category rates must be in (0, 1)")
        if self.sensitivity <= 0:
            raise ValueError("sensitivity must be positive")

    @property
    def delta_threshold_px(self) -> int:
        return max(1, round(12 * self.sensitivity))


_DEFAULT_STYLE_CYCLE = (
    GameStyle(MouseMode.FREE_FORM, 1.8, 0.40, 0.45, 0.35),
    GameStyle(MouseMode.AUTO_CENTER, 0.18, 0.35, 0.50, 0.30),
    GameStyle(MouseMode.FREE_FORM, 1.1, 0.45, 0.40, 0.40),
    GameStyle(MouseMode.AUTO_CENTER, 0.14, 0.30, 0.50, 0.25),
    GameStyle(MouseMode.FREE_FORM, 0.8, 0.45, 0.35, 0.35),
    GameStyle(MouseMode.FREE_FORM, 1.5, 0.35, 0.45, 0.40),
)


def default_styles(n_games: int) -> tuple[GameStyle, ...]:
    return tuple(_DEFAULT_STYLE_CYCLE[i % len(_DEFAULT_STYLE_CYCLE)] for i in range(n_games))


@dataclass(frozen=True)
class SynthConfig:
    n_games: int = 6
    frames_per_game: int = 4096
    seed: int = 0
    styles: tuple[GameStyle, ...] | None = None
    dim: int = 64
    matrix_seed: int = 0
    game_gap: float = 4.5
    noise: float = 0.15
    style_dim: int = 2
    window_size: int = 16
    stride: int = 8

    def __post_init__(self) -> None:
        if self.n_games < 2:
            raise ValueError("n_games must be >= 2")
        if self.frames_per_game < self.window_size:
            raise ValueError("frames_per_game must cover at least one window")
        if self.game_gap < 0 or self.noise < 0:
            raise ValueError("game_gap and noise must be >= 0")
        if not 1 <= self.style_dim <= self.dim:
            raise ValueError("style_dim must be in [1, dim]")
        if self.styles is not None and len(self.styles) != self.n_games:
            raise ValueError("styles must cover every game")

    def style_for(self, index: int) -> GameStyle:
        styles = self.styles or default_styles(self.n_games)
        return styles[index]

    def game_ids(self) -> tuple[str, ...]:
        return tuple(f"game{i:02d}" for i in range(self.n_games))


@dataclass(frozen=True)
class SynthGame:
    game_id: str
    profile: GameProfile
    records: tuple[TimestepRecord, ...]


# Mean on-run lengths (frames) per category; off-run means fall out of the
# calibrated transition probability.
_MEAN_ON = {"panning": 20.0, "navigation": 32.0, "weapon": 18.0}


def _window_positive_rate(q: float, stay_on: float, window: int, cutoff: int = 2) -> float:
    """Exact P(window has >= cutoff propagated-label frames) for the primary
    action process (delay 1, length 2: label_t = raw_{t-1} or raw_{t-2}),
    with the chain started from its stationary pair distribution."""
    t = ((1.0 - q, q), (1.0 - stay_on, stay_on))
    p_on = q / (q + (1.0 - stay_on))
    pi = (1.0 - p_on, p_on)
    probs: dict[tuple[int, int, int], float] = {}
    for s2 in (0, 1):
        for s1 in (0, 1):
            probs[(s2, s1, 0)] = pi[s2] * t[s2][s1]
    for _ in range(window):
        nxt: dict[tuple[int, int, int], float] = {}
        for (s2, s1, count), p in probs.items():
            count2 = min(cutoff, count + (s1 | s2))
            for s0 in (0, 1):
                key = (s1, s0, count2)
                nxt[key] = nxt.get(key, 0.0) + p * t[s1][s0]
        probs = nxt
    return sum(p for (_, _, count), p in probs.items() if count >= cutoff)


def _solve_transition(target_rate: float, mean_on: float, window: int) -> float:
    """Bisect the off->on probability so the window-positive rate hits target."""
    stay_on = 1.0 - 1.0 / mean_on
    lo, hi = 1e-9, 1.0 - 1e-9
    for _ in range(70):
        mid = 0.5 * (lo + hi)
        if _window_positive_rate(mid, stay_on, window) < target_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _activity_series(rng: np.random.Generator, n: int, q: float, stay_on: float) -> np.ndarray:
    """Alternating geometric on/off runs, started from the stationary state."""
    out = np.zeros(n, dtype=np.uint8)
    p_on = q / (q + (1.0 - stay_on))
    state = bool(rng.random() < p_on)
    t = 0
    while t < n:
        run = int(rng.geometric(1.0 - stay_on) if state else rng.geometric(q))
        if state:
            out[t : t + run] = 1
        t += run
        state = not state
    return out


def _runs_of(series: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, stop) index ranges where the series is 1."""
    padded = np.diff(np.concatenate([[0], series.astype(np.int8), [0]]))
    starts = np.flatnonzero(padded == 1)
    stops = np.flatnonzero(padded == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def _keyed_matrix(
    rng: np.random.Generator,
    catalog: ActionCatalog,
    n: int,
    navigation: np.ndarray,
    weapon: np.ndarray,
) -> np.ndarray:
    """Raw key-hold bits (n, keyed) realizing the category activity series."""
    pos = {e.action_id: i for i, e in enumerate(catalog.keyed_entries)}
    keys = np.zeros((n, len(catalog.keyed_entries)), dtype=np.uint8)
    for start, stop in _runs_of(navigation):
        primary = "backward" if rng.random() < 0.1 else "forward"
        keys[start:stop, pos[primary]] = 1
        length = stop - start
        if length >= 6 and rng.random() < 0.18:
            side = "strafe_left" if rng.random() < 0.5 else "strafe_right"
            sub = int(rng.integers(3, length))
            off = int(rng.integers(0, length - sub + 1))
            keys[start + off : start + off + sub, pos[side]] = 1
        if length >= 10 and rng.random() < 0.08:
            sub = int(rng.integers(5, length))
            off = int(rng.integers(0, length - sub + 1))
            keys[start + off : start + off + sub, pos["sprint"]] = 1
        if rng.random() < 0.05:
            keys[start + int(rng.integers(0, length)), pos["jump"]] = 1
        if length >= 6 and rng.random() < 0.03:
            sub = int(rng.integers(2, 5))
            off = int(rng.integers(0, length - sub + 1))
            keys[start + off : start + off + sub, pos["crouch"]] = 1
    for start, stop in _runs_of(weapon):
        keys[start:stop, pos["fire"]] = 1
        length = stop - start
        if length >= 6 and rng.random() < 0.2:
            sub = int(rng.integers(3, length))
            off = int(rng.integers(0, length - sub + 1))
            keys[start + off : start + off + sub, pos["aim"]] = 1
        # long animations stay inside the bout so they cannot distort the
        # calibrated category rate
        if length >= 20 and rng.random() < 0.15:
            keys[start + int(rng.integers(0, length - 17)), pos["reload"]] = 1
        if length >= 14 and rng.random() < 0.05:
            keys[start + int(rng.integers(0, length - 11)), pos["change_gun"]] = 1
    interact = rng.random(n) < 0.002
    keys[interact, pos["interact"]] = 1
    return keys


def _mouse_track(
    rng: np.random.Generator, style: GameStyle, panning: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Pointer positions realizing the panning series under the style's mouse
    mode; returns (xs, ys) integer coordinates inside the screen."""
    n = panning.shape[0]
    t = style.delta_threshold_px
    hi_step = max(int(np.ceil(2.4 * t)), int(np.ceil(1.2 * t)) + 1)
    jitter_max = max(0, min(int(0.4 * t), t - 1))
    margin = min(4 * hi_step, 300)
    xs = np.empty(n, dtype=np.int64)
    ys = np.empty(n, dtype=np.int64)
    cx, cy = CENTER
    x, y = cx, cy
    auto = style.mouse_mode is MouseMode.AUTO_CENTER
    direction = (1, 0)
    frames_in_dir = 0
    for i in range(n):
        if panning[i]:
            if frames_in_dir <= 0:
                horiz = rng.random() < 0.7
                sx = int(rng.choice((-1, 1)))
                sy = int(rng.choice((-1, 1)))
                if rng.random() < 0.1:
                    direction = (sx, sy)  # diagonal
                elif horiz:
                    direction = (sx, 0)
                else:
                    direction = (0, sy)
                frames_in_dir = int(rng.integers(12, 25))
            frames_in_dir -= 1
            step_x = int(rng.integers(int(np.ceil(1.2 * t)), hi_step + 1)) * direction[0]
            step_y = int(rng.integers(int(np.ceil(1.2 * t)), hi_step + 1)) * direction[1]
            if direction[0] and not direction[1] and jitter_max:
                step_y = int(rng.integers(-jitter_max, jitter_max + 1))
            if direction[1] and not direction[0] and jitter_max:
                step_x = int(rng.integers(-jitter_max, jitter_max + 1))
            if auto and max(abs(x - cx), abs(y - cy)) > 320:
                x, y = cx, cy  # mid-bout pointer reset; suppressed downstream
            else:
                if not margin < x + step_x < SCREEN[0] - margin:
                    direction = (-direction[0], direction[1])
                    step_x = -step_x
                if not margin < y + step_y < SCREEN[1] - margin:
                    direction = (direction[0], -direction[1])
                    step_y = -step_y
                x += step_x
                y += step_y
        else:
            if auto:
                x, y = cx, cy
                if jitter_max:
                    x += int(rng.integers(-jitter_max, jitter_max + 1))
                    y += int(rng.integers(-jitter_max, jitter_max + 1))
            elif jitter_max:
                x += int(rng.integers(-jitter_max, jitter_max + 1))
                y += int(rng.integers(-jitter_max, jitter_max + 1))
                x = min(max(x, margin), SCREEN[0] - margin)
                y = min(max(y, margin), SCREEN[1] - margin)
        xs[i] = min(max(x, 0), SCREEN[0] - 1)
        ys[i] = min(max(y, 0), SCREEN[1] - 1)
        x, y = int(xs[i]), int(ys[i])
    return xs, ys


def generate_logs(config: SynthConfig, catalog: ActionCatalog | None = None) -> list[SynthGame]:
    """Seeded per-game record streams plus matching profiles."""
    catalog = catalog or default_catalog()
    games: list[SynthGame] = []
    children = np.random.SeedSequence(config.seed).spawn(config.n_games)
    for index, game_id in enumerate(config.game_ids()):
        style = config.style_for(index)
        rng = np.random.default_rng(children[index])
        n = config.frames_per_game
        rates = {
            "panning": style.panning_rate,
            "navigation": style.navigation_rate,
            "weapon": style.weapon_rate,
        }
        activity = {}
        for category, rate in rates.items():
            mean_on = _MEAN_ON[category]
            q = _solve_transition(rate, mean_on, config.window_size)
            activity[category] = _activity_series(rng, n, q, 1.0 - 1.0 / mean_on)
        keys = _keyed_matrix(rng, catalog, n, activity["navigation"], activity["weapon"])
        xs, ys = _mouse_track(rng, style, activity["panning"])
        records = tuple(
            TimestepRecord(
                game_id=game_id,
                session_id="s0",
                frame_index=i,
                timestamp_ms=int(i * FRAME_MS),
                mouse_x=int(xs[i]),
                mouse_y=int(ys[i]),
                keys=tuple(int(k) for k in keys[i]),
            )
            for i in range(n)
        )
        profile = GameProfile(
            game_id=game_id,
            mouse_mode=style.mouse_mode,
            delta_threshold_px=style.delta_threshold_px,
            screen_center=CENTER,
            center_epsilon_px=2,
        )
        games.append(SynthGame(game_id=game_id, profile=profile, records=records))
    return games


def generate_windows(
    config: SynthConfig, catalog: ActionCatalog | None = None
) -> tuple[list[WindowSample], list[SynthGame]]:
    """Generate logs and push them through the real preprocessing pipeline."""
    catalog = catalog or default_catalog()
    games = generate_logs(config, catalog)
    samples: list[WindowSample] = []
    for game in games:
        samples.extend(
            run_pipeline(
                game.records,
                game.profile,
                catalog,
                window_size=config.window_size,
                stride=config.stride,
            )
        )
    return samples, games


def behaviour_matrix(config: SynthConfig, n_actions: int = 16) -> np.ndarray:
    """(dim, n_actions) map from action bits to embedding space, unit columns."""
    rng = np.random.default_rng(np.random.SeedSequence([config.matrix_seed, 0xB]))
    matrix = rng.standard_normal((config.dim, n_actions))
    return matrix / np.linalg.norm(matrix, axis=0, keepdims=True)


def style_subspace(config: SynthConfig) -> np.ndarray:
    """(style_dim, dim) orthonormal basis of the shared game-style subspace.

    Keeping styles low-dimensional is what makes randomisation over a handful
    of games generalize: training games span the subspace, so a projector
    that nulls it also nulls the offsets of games it never saw.
    """
    rng = np.random.default_rng(np.random.SeedSequence([config.matrix_seed, 0x57]))
    raw = rng.standard_normal((config.dim, config.style_dim))
    q, _ = np.linalg.qr(raw)
    return q.T


def game_offset_directions(config: SynthConfig) -> np.ndarray:
    """(n_games, dim) unit offset directions, one per game, inside the style subspace."""
    basis = style_subspace(config)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x0FF]))
    coeffs = rng.standard_normal((config.n_games, config.style_dim))
    dirs = coeffs @ basis
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def behaviour_signal_scale(windows: Sequence[WindowSample], config: SynthConfig) -> float:
    """Mean norm of the behaviour component over the given windows."""
    matrix = behaviour_matrix(config)
    bits = np.array([w.actions for w in windows], dtype=np.float64)
    return float(np.linalg.norm(bits @ matrix.T, axis=1).mean())


def generate_foundation_embeddings(
    windows: Sequence[WindowSample], config: SynthConfig
) -> EmbeddingTable:
    """Simulated frozen-encoder output: normalize(B @ actions + offset + noise).

    The per-game offset has norm ``game_gap``; noise is i.i.d. normal with
    scale ``noise``, drawn in window order. Deterministic given the config.
    """
    ids = config.game_ids()
    game_index = {g: i for i, g in enumerate(ids)}
    matrix = behaviour_matrix(config)
    offsets = config.game_gap * game_offset_directions(config)
    noise_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xE0]))
    rows = np.zeros((len(windows), config.dim), dtype=np.float64)
    for i, window in enumerate(windows):
        if window.game_id not in game_index:
            raise UnknownGameError(f"window {window.sample_id} references unknown {window.game_id!r}")
        bits = np.asarray(window.actions, dtype=np.float64)
        eps = config.noise * noise_rng.standard_normal(config.dim)
        rows[i] = matrix @ bits + offsets[game_index[window.game_id]] + eps
    return EmbeddingTable(
        ids=tuple(w.sample_id for w in windows),
        rows=l2_normalize(rows).astype(np.float32),
    )


def with_game_gap(config: SynthConfig, game_gap: float) -> SynthConfig:
    return replace(config, game_gap=game_gap)
