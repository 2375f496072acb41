"""Frozen encoder backends behind one batched-encode interface.

Hub-backed models (CLIP, GPT-2, MiniLM, VideoMAE) are loaded lazily so the
heavyweight dependencies stay optional; the ``toy:<dim>`` backends are
seeded, randomly-initialized torch models that run fully offline and exist
so format compliance can be exercised without hub access.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ModelLoadError

WINDOW_FRAMES = 16
FRAME_SIZE = 224

# model key -> (hub name, encoding size, max tokens)
TEXT_MODELS = {
    "clip": ("openai/clip-vit-base-patch32", 512, 77),
    "gpt2": ("gpt2", 768, 512),
    "minilm": ("sentence-transformers/all-MiniLM-L12-v2", 384, 256),
}
# model key -> (hub name, encoding size)
VIDEO_MODELS = {
    "videomae": ("MCG-NJU/videomae-base", 768),
}


@dataclass(frozen=True)
class EncoderSpec:
    kind: str  # "text" | "video"
    model: str
    dim: int
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("text", "video"):
            raise ValueError(f"kind must be text or video, got {self.kind!r}")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")


def spec_for(kind: str, model: str) -> EncoderSpec:
    """Resolve a model name (registry key or ``toy[:dim]``) to its spec."""
    if model.startswith("toy"):
        parts = model.split(":")
        dim = int(parts[1]) if len(parts) > 1 else 512
        return EncoderSpec(kind=kind, model=model, dim=dim)
    registry = TEXT_MODELS if kind == "text" else VIDEO_MODELS
    if model not in registry:
        raise ModelLoadError(
            f"unknown {kind} model {model!r}; known: {sorted(registry)} or toy:<dim>"
        )
    if kind == "text":
        name, dim, tokens = TEXT_MODELS[model]
        return EncoderSpec(kind=kind, model=name, dim=dim, max_tokens=tokens)
    name, dim = VIDEO_MODELS[model]
    return EncoderSpec(kind=kind, model=name, dim=dim)


def _hashed_token_features(text: str, dim: int = 256) -> np.ndarray:
    """Stable bag-of-hashed-tokens vector; no vocabulary files needed."""
    vec = np.zeros(dim, dtype=np.float32)
    for token in text.replace(",", " ").split():
        digest = hashlib.sha256(token.lower().encode("utf-8")).digest()
        index = int.from_bytes(digest[:4], "little") % dim
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        vec[index] += sign
    return vec


class ToyTextEncoder:
    """Seeded random torch MLP over hashed token features; offline stand-in."""

    FEATURE_DIM = 256

    def __init__(self, spec: EncoderSpec, seed: int = 0):
        self.spec = spec
        generator = torch.Generator().manual_seed(seed)
        self.model = torch.nn.Sequential(
            torch.nn.Linear(self.FEATURE_DIM, 512),
            torch.nn.Tanh(),
            torch.nn.Linear(512, spec.dim),
        )
        with torch.no_grad():
            for parameter in self.model.parameters():
                parameter.copy_(torch.empty_like(parameter).uniform_(-0.1, 0.1, generator=generator))
        self.model.eval()

    @torch.no_grad()
    def encode(self, captions: list[str]) -> np.ndarray:
        features = np.stack([_hashed_token_features(c, self.FEATURE_DIM) for c in captions])
        return self.model(torch.from_numpy(features)).numpy().astype(np.float32)


class ToyVideoEncoder:
    """Seeded random linear readout of average-pooled frames; offline stand-in."""

    POOLED = 8

    def __init__(self, spec: EncoderSpec, seed: int = 0):
        self.spec = spec
        generator = torch.Generator().manual_seed(seed)
        in_features = WINDOW_FRAMES * 3 * self.POOLED * self.POOLED
        self.model = torch.nn.Linear(in_features, spec.dim)
        with torch.no_grad():
            for parameter in self.model.parameters():
                parameter.copy_(torch.empty_like(parameter).uniform_(-0.05, 0.05, generator=generator))
        self.model.eval()
        self.pool = torch.nn.AdaptiveAvgPool2d(self.POOLED)

    @torch.no_grad()
    def encode(self, clips: np.ndarray) -> np.ndarray:
        # clips: (batch, frames, height, width, channels) in [0, 255]
        x = torch.from_numpy(np.ascontiguousarray(clips, dtype=np.float32)) / 255.0
        x = x.permute(0, 1, 4, 2, 3)  # -> (batch, frames, channels, h, w)
        b, f, c, h, w = x.shape
        pooled = self.pool(x.reshape(b * f * c, 1, h, w)).reshape(b, f * c * self.POOLED**2)
        return self.model(pooled).numpy().astype(np.float32)


class HubTextEncoder:
    """sentence-transformers (preferred) or transformers mean-pooled encoder."""

    def __init__(self, spec: EncoderSpec, seed: int = 0):
        self.spec = spec
        try:
            if spec.model.startswith("sentence-transformers/"):
                from sentence_transformers import SentenceTransformer

                self._st = SentenceTransformer(spec.model)
                self._tokenizer = self._model = None
            else:
                from transformers import AutoModel, AutoTokenizer

                self._st = None
                self._tokenizer = AutoTokenizer.from_pretrained(spec.model)
                if self._tokenizer.pad_token is None:
                    self._tokenizer.pad_token = self._tokenizer.eos_token
                self._model = AutoModel.from_pretrained(spec.model).eval()
        except Exception as exc:  # noqa: BLE001 - any failure here is a load failure
            raise ModelLoadError(f"cannot load text model {spec.model!r}: {exc}") from exc

    @torch.no_grad()
    def encode(self, captions: list[str]) -> np.ndarray:
        if self._st is not None:
            return np.asarray(self._st.encode(captions, convert_to_numpy=True), dtype=np.float32)
        tokens = self._tokenizer(
            captions, padding=True, truncation=True,
            max_length=self.spec.max_tokens, return_tensors="pt",
        )
        hidden = self._model(**tokens).last_hidden_state
        mask = tokens["attention_mask"].unsqueeze(-1)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
        return pooled.numpy().astype(np.float32)


class HubVideoEncoder:
    """transformers video model, mean-pooled over patch tokens."""

    def __init__(self, spec: EncoderSpec, seed: int = 0):
        self.spec = spec
        try:
            from transformers import AutoModel

            self._model = AutoModel.from_pretrained(spec.model).eval()
        except Exception as exc:  # noqa: BLE001
            raise ModelLoadError(f"cannot load video model {spec.model!r}: {exc}") from exc

    @torch.no_grad()
    def encode(self, clips: np.ndarray) -> np.ndarray:
        x = torch.from_numpy(np.ascontiguousarray(clips, dtype=np.float32)) / 255.0
        x = x.permute(0, 1, 4, 2, 3)  # (batch, frames, channels, h, w)
        hidden = self._model(pixel_values=x).last_hidden_state
        return hidden.mean(dim=1).numpy().astype(np.float32)


def build_encoder(spec: EncoderSpec, seed: int = 0):
    if spec.model.startswith("toy"):
        return ToyTextEncoder(spec, seed) if spec.kind == "text" else ToyVideoEncoder(spec, seed)
    return HubTextEncoder(spec, seed) if spec.kind == "text" else HubVideoEncoder(spec, seed)
