"""Contextual encoder contract and a small built-in transformer.

The contract: a module with a ``dim`` attribute whose forward maps
(ids [B, L], mask [B, L]) to embeddings [B, L, dim], deterministic in
eval mode, and tolerant of sequences longer than any seen in training.
The built-in encoder satisfies the last point with clipped relative
position biases; pretrained encoders can be plugged in behind the same
interface.
"""

from __future__ import annotations

import torch
from torch import nn


class RelativeBias(nn.Module):
    """Per-head additive attention bias from clipped relative distance."""

    def __init__(self, heads: int, max_distance: int = 32):
        super().__init__()
        self.max_distance = max_distance
        self.bias = nn.Embedding(2 * max_distance + 1, heads)

    def forward(self, length: int) -> torch.Tensor:
        positions = torch.arange(length)
        rel = positions[None, :] - positions[:, None]
        rel = rel.clamp(-self.max_distance, self.max_distance) + self.max_distance
        return self.bias(rel).permute(2, 0, 1)  # [heads, L, L]


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_dim: int, dropout: float):
        super().__init__()
        if dim % heads:
            raise ValueError("dim must be divisible by heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_dim), nn.ReLU(), nn.Linear(ffn_dim, dim)
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, mask, bias):
        b, length, dim = x.shape
        h = self.norm1(x)
        q, k, v = self.qkv(h).chunk(3, dim=-1)

        def split(t):
            return t.view(b, length, self.heads, self.head_dim).transpose(1, 2)

        q, k, v = split(q), split(k), split(v)
        scores = q @ k.transpose(-1, -2) / self.head_dim**0.5
        scores = scores + bias[None]
        scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(b, length, dim)
        x = x + self.dropout(self.out(ctx))
        x = x + self.dropout(self.ffn(self.norm2(x)))
        return x


class TinyEncoder(nn.Module):
    """From-scratch transformer encoder small enough for CPU tests."""

    def __init__(
        self,
        vocab_size: int,
        dim: int = 64,
        layers: int = 2,
        heads: int = 4,
        ffn_mult: int = 2,
        max_distance: int = 32,
        dropout: float = 0.1,
    ):
        super().__init__()
        self.dim = dim
        self.embed = nn.Embedding(vocab_size, dim, padding_idx=0)
        self.rel_bias = RelativeBias(heads, max_distance)
        self.layers = nn.ModuleList(
            EncoderLayer(dim, heads, ffn_mult * dim, dropout)
            for _ in range(layers)
        )
        self.norm = nn.LayerNorm(dim)
        self.hparams = {
            "vocab_size": vocab_size, "dim": dim, "layers": layers,
            "heads": heads, "ffn_mult": ffn_mult, "max_distance": max_distance,
            "dropout": dropout,
        }

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = self.embed(ids)
        bias = self.rel_bias(ids.shape[1])
        for layer in self.layers:
            x = layer(x, mask, bias)
        return self.norm(x)
