from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    lr: float = 1e-4
    weight_decay: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, groups: list[tuple[str, dict, dict]], lr: float | None = None) -> None:
        """Update every ``(prefix, params, grads)`` group in place."""
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.step_count += 1
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for prefix, params, grads in groups:
            for name, p in params.items():
                key = f"{prefix}.{name}"
                g = grads[name] + self.weight_decay * p
                if key not in self.m:
                    self.m[key] = np.zeros_like(p)
                    self.v[key] = np.zeros_like(p)
                m = self.m[key]
                v = self.v[key]
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def step_decay_lr(base_lr: float, epoch: int, milestones, factor: float = 0.2) -> float:
    """Learning rate for a 0-based ``epoch``: multiplied by ``factor`` at each milestone reached."""
    return base_lr * factor ** sum(epoch >= m for m in milestones)


def scaled_milestones(epochs: int, ref_epochs: int = 50, ref_milestones=(25, 40)) -> list[int]:
    """Place the reference decay points proportionally within a shorter run."""
    return [int(round(m * epochs / ref_epochs)) for m in ref_milestones]
