"""Tiny transformer cross-encoder for 3-way NLI, with weight I/O and scoring.

The architecture is deliberately small (two pre-norm encoder blocks over
hashed word embeddings) so the committed weights stay under a megabyte and
CPU inference is instant. Weights are stored as a plain .npz archive: one
array per parameter plus a JSON metadata entry describing the dimensions.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from nli_service.config import CANONICAL_LABELS
from nli_service.tokenizer import PAD_ID, encode_pair

WEIGHTS_FORMAT = "tiny-cross-encoder-v1"


@dataclass(frozen=True)
class ModelDimensions:
    vocab_size: int = 512
    dim: int = 48
    heads: int = 4
    layers: int = 2
    ffn_dim: int = 96
    max_positions: int = 160


class EncoderBlock(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_dim: int):
        super().__init__()
        self.attn_norm = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.ffn_norm = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_dim), nn.GELU(), nn.Linear(ffn_dim, dim)
        )

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        normed = self.attn_norm(x)
        attended, _ = self.attn(
            normed, normed, normed, key_padding_mask=pad_mask, need_weights=False
        )
        x = x + attended
        return x + self.ffn(self.ffn_norm(x))


class TinyCrossEncoder(nn.Module):
    """Joint encoder over [CLS] premise [SEP] hypothesis [SEP]."""

    def __init__(self, dims: ModelDimensions):
        super().__init__()
        self.dims = dims
        self.token_emb = nn.Embedding(dims.vocab_size, dims.dim, padding_idx=PAD_ID)
        self.segment_emb = nn.Embedding(2, dims.dim)
        self.position_emb = nn.Embedding(dims.max_positions, dims.dim)
        self.input_norm = nn.LayerNorm(dims.dim)
        self.blocks = nn.ModuleList(
            EncoderBlock(dims.dim, dims.heads, dims.ffn_dim)
            for _ in range(dims.layers)
        )
        self.final_norm = nn.LayerNorm(dims.dim)
        self.classifier = nn.Linear(dims.dim, 3)

    def forward(
        self, ids: torch.Tensor, segments: torch.Tensor, mask: torch.Tensor
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Returns (logits, hidden states per layer including embeddings)."""
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = (
            self.token_emb(ids)
            + self.segment_emb(segments)
            + self.position_emb(positions)[None, :, :]
        )
        x = self.input_norm(x)
        hidden_states = [x]
        pad_mask = ~mask
        for block in self.blocks:
            x = block(x, pad_mask)
            hidden_states.append(x)
        logits = self.classifier(self.final_norm(x)[:, 0])
        return logits, hidden_states


def save_weights(model: TinyCrossEncoder, path: str | Path) -> None:
    arrays = {
        name: tensor.detach().cpu().numpy()
        for name, tensor in model.state_dict().items()
    }
    meta = {"format": WEIGHTS_FORMAT, "dimensions": asdict(model.dims)}
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        np.savez_compressed(handle, **arrays)


def load_weights(path: str | Path) -> TinyCrossEncoder:
    """Load a weights archive into an eval-mode model."""
    with np.load(path) as archive:
        arrays = {name: archive[name] for name in archive.files}
    raw_meta = arrays.pop("__meta__", None)
    if raw_meta is None:
        raise ValueError(f"{path}: not a {WEIGHTS_FORMAT} archive (missing metadata)")
    meta = json.loads(raw_meta.tobytes().decode("utf-8"))
    if meta.get("format") != WEIGHTS_FORMAT:
        raise ValueError(f"{path}: unsupported weights format {meta.get('format')!r}")
    dims = ModelDimensions(**meta["dimensions"])
    model = TinyCrossEncoder(dims)
    state = {name: torch.from_numpy(np.array(value)) for name, value in arrays.items()}
    model.load_state_dict(state)
    model.eval()
    return model


class NliScorer:
    """A loaded model plus tokenizer; read-only and thread-safe after load.

    label_order declares the order of the model's output logits; scores are
    always returned in the canonical (entailment, neutral, contradiction)
    order regardless.
    """

    def __init__(self, weights_path: str | Path, label_order=CANONICAL_LABELS):
        self._model = load_weights(weights_path)
        order = tuple(label_order)
        if sorted(order) != sorted(CANONICAL_LABELS):
            raise ValueError(f"label_order must permute {CANONICAL_LABELS}")
        self._canonical_index = tuple(order.index(l) for l in CANONICAL_LABELS)

    @property
    def layer_count(self) -> int:
        return self._model.dims.layers + 1

    @property
    def hidden_dim(self) -> int:
        return self._model.dims.dim

    def _encode(self, premise: str, hypothesis: str):
        ids, segments = encode_pair(premise, hypothesis, self._model.dims.vocab_size)
        if len(ids) > self._model.dims.max_positions:
            ids = ids[: self._model.dims.max_positions]
            segments = segments[: self._model.dims.max_positions]
        id_tensor = torch.tensor([ids], dtype=torch.long)
        segment_tensor = torch.tensor([segments], dtype=torch.long)
        mask = torch.ones_like(id_tensor, dtype=torch.bool)
        return id_tensor, segment_tensor, mask

    def classify(self, premise: str, hypothesis: str) -> tuple[str, tuple[float, float, float]]:
        """Returns (label, scores) with scores in canonical order summing to 1."""
        with torch.no_grad():
            logits, _ = self._model(*self._encode(premise, hypothesis))
        raw = logits[0].numpy().astype(np.float64)
        shifted = np.exp(raw - raw.max())
        probs = shifted / shifted.sum()
        scores = tuple(float(probs[i]) for i in self._canonical_index)
        label = CANONICAL_LABELS[int(np.argmax(scores))]
        return label, scores

    def representations(self, premise: str, hypothesis: str) -> list[list[float]]:
        """Mean-pooled hidden state per layer, embeddings first."""
        with torch.no_grad():
            _, hidden_states = self._model(*self._encode(premise, hypothesis))
        return [state[0].mean(dim=0).numpy().astype(float).tolist()
                for state in hidden_states]
