"""Adam optimiser on flat parameter vectors."""

from dataclasses import asdict, dataclass

import numpy as np

from ..exceptions import LengthMismatch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 200
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.adam_beta1 < 1 or not 0 < self.adam_beta2 < 1:
            raise ValueError("Adam betas must lie strictly between 0 and 1")
        if not self.adam_epsilon > 0:
            raise ValueError("adam_epsilon must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grads, state, config):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise LengthMismatch(
            f"params {params.shape}, grads {grads.shape}, state {state.first_moment.shape}"
        )
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.step_count + 1
    m = b1 * state.first_moment + (1.0 - b1) * grads
    v = b2 * state.second_moment + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    return new, AdamState(m, v, t)
