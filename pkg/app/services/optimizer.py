"""Adam with global-norm gradient clipping."""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.tensor import Parameter

logger = logging.getLogger(__name__)


class Adam:
    """Bias-corrected Adam over a fixed list of Parameters.

    Moments are keyed by parameter id so they survive checkpointing.
    """

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 0.003,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        clip_norm: Optional[float] = None,
    ):
        ids = [p.id for p in params]
        if len(set(ids)) != len(ids):
            raise ValueError("Parameter ids must be unique")
        self.params: List[Parameter] = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.step_count = 0
        self.first_moment: Dict[str, np.ndarray] = {p.id: np.zeros_like(p.data) for p in self.params}
        self.second_moment: Dict[str, np.ndarray] = {p.id: np.zeros_like(p.data) for p in self.params}

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in self.params)))

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self, lr: Optional[float] = None) -> None:
        """Apply one update to every parameter, then reset the gradients."""
        lr = self.lr if lr is None else lr
        beta1, beta2 = self.betas

        factor = 1.0
        if self.clip_norm is not None:
            norm = self.grad_norm()
            if norm > self.clip_norm:
                factor = self.clip_norm / norm
                logger.debug("Clipping gradient norm %.4f to %.4f", norm, self.clip_norm)

        self.step_count += 1
        correction1 = 1.0 - beta1**self.step_count
        correction2 = 1.0 - beta2**self.step_count
        for param in self.params:
            grad = param.grad * factor
            m = self.first_moment[param.id]
            v = self.second_moment[param.id]
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad
            param.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)

        self.zero_grad()

    def state_dict(self) -> Dict[str, object]:
        return {
            "lr": self.lr,
            "step_count": self.step_count,
            "first_moment": {pid: m.copy() for pid, m in self.first_moment.items()},
            "second_moment": {pid: v.copy() for pid, v in self.second_moment.items()},
        }

    def load_state_dict(self, state: Dict[str, object]) -> None:
        """Restore moments; raises ValueError when ids or shapes disagree."""
        for name in ("first_moment", "second_moment"):
            moments = state[name]
            target = getattr(self, name)
            if set(moments) != set(target):
                raise ValueError(f"{name} ids do not match the optimizer's parameters")
            for pid, values in moments.items():
                if values.shape != target[pid].shape:
                    raise ValueError(
                        f"{name}[{pid}] has shape {values.shape}, expected {target[pid].shape}"
                    )
                target[pid] = np.array(values, dtype=np.float64)
        self.lr = float(state["lr"])
        self.step_count = int(state["step_count"])


def adam_step(optimizer: Adam, lr: Optional[float] = None) -> None:
    """One Adam update of every parameter held by ``optimizer``."""
    optimizer.step(lr)


__all__ = ["Adam", "adam_step"]
