"""Optimizers behind one constructor so tests can swap implementations.

The factored-moment optimizer implements the published update rule with
an externally supplied learning rate (no relative step sizes): factored
second moments for matrices, full moments for vectors, and update
clipping at unit RMS.
"""

from __future__ import annotations

import torch
from torch.optim import Optimizer


class Adafactor(Optimizer):
    def __init__(self, params, lr: float = 1e-3, eps: float = 1e-30,
                 clip_threshold: float = 1.0, decay_exponent: float = -0.8,
                 weight_decay: float = 0.0):
        defaults = dict(lr=lr, eps=eps, clip_threshold=clip_threshold,
                        decay_exponent=decay_exponent,
                        weight_decay=weight_decay)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = closure() if closure is not None else None
        for group in self.param_groups:
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                state = self.state[p]
                if not state:
                    state["step"] = 0
                    if grad.dim() >= 2:
                        state["row"] = torch.zeros(grad.shape[:-1],
                                                   dtype=grad.dtype)
                        state["col"] = torch.zeros(
                            grad.shape[:-2] + grad.shape[-1:], dtype=grad.dtype
                        )
                    else:
                        state["second"] = torch.zeros_like(grad)
                state["step"] += 1
                beta2 = 1.0 - state["step"] ** group["decay_exponent"]
                update = grad.square() + group["eps"]
                if grad.dim() >= 2:
                    row, col = state["row"], state["col"]
                    row.mul_(beta2).add_(update.mean(dim=-1), alpha=1 - beta2)
                    col.mul_(beta2).add_(update.mean(dim=-2), alpha=1 - beta2)
                    second = (
                        row.unsqueeze(-1) * col.unsqueeze(-2)
                        / row.mean(dim=-1, keepdim=True).unsqueeze(-1)
                    )
                else:
                    second = state["second"]
                    second.mul_(beta2).add_(update, alpha=1 - beta2)
                direction = grad / second.sqrt()
                rms = direction.square().mean().sqrt()
                direction = direction / torch.clamp(
                    rms / group["clip_threshold"], min=1.0
                )
                if group["weight_decay"]:
                    p.mul_(1 - group["lr"] * group["weight_decay"])
                p.add_(direction, alpha=-group["lr"])
        return loss


OPTIMIZERS = ("adam", "adafactor", "sgd")


def make_optimizer(name: str, params, lr: float) -> Optimizer:
    if name == "adam":
        return torch.optim.Adam(params, lr=lr)
    if name == "adafactor":
        return Adafactor(params, lr=lr)
    if name == "sgd":
        return torch.optim.SGD(params, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}; expected one of {OPTIMIZERS}")


def set_lr(optimizer: Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr
