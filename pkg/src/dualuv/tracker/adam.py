"""Adam with bias correction over a flat parameter vector."""

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad

LEARNING_RATE = 1e-3
BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
DIVERGENCE_FACTOR = 10.0
DIVERGENCE_PATIENCE = 50


class OptimizationError(RuntimeError):
    """Non-finite values or divergence; ``step`` is the failing iteration."""

    def __init__(self, message, step, trace=None):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.trace = list(trace or [])


@dataclass
class AdamResult:
    x: np.ndarray
    trace: list
    steps: int


def value_and_grad(loss):
    """Wrap a dual-generic scalar loss into ``x -> (value, gradient)``."""
    def fn(x):
        out = loss(ad.Dual.seed(x))
        if not ad.is_dual(out):
            return float(out), np.zeros(np.size(x))
        return float(out.val), out.grad
    return fn


def adam_minimize(fun, x0, steps, lr=LEARNING_RATE, betas=BETAS, eps=ADAM_EPS,
                  divergence_factor=DIVERGENCE_FACTOR, patience=DIVERGENCE_PATIENCE):
    """Run ``steps`` Adam updates; ``fun(x)`` returns ``(loss, grad)``.

    The trace holds the loss at every iterate, initial and final included,
    so it has ``steps + 1`` entries. Raises :class:`OptimizationError` on a
    non-finite loss or gradient, or when the loss stays above
    ``divergence_factor`` times the initial loss for ``patience``
    consecutive steps.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    b1, b2 = betas
    if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0) or not lr > 0 or not eps > 0:
        raise ValueError("invalid Adam hyperparameters")
    x = np.array(x0, dtype=np.float64).reshape(-1)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    trace = []
    above = 0
    for k in range(steps + 1):
        f, g = fun(x)
        f = float(f)
        g = np.asarray(g, dtype=np.float64).reshape(x.shape)
        if not np.isfinite(f):
            raise OptimizationError("loss is not finite", k, trace)
        if not np.all(np.isfinite(g)):
            raise OptimizationError("gradient is not finite", k, trace)
        trace.append(f)
        if f > divergence_factor * abs(trace[0]) and trace[0] != 0.0:
            above += 1
            if above >= patience:
                raise OptimizationError(
                    f"diverged: loss {f:.6g} above {divergence_factor:g}x initial {trace[0]:.6g} "
                    f"for {patience} steps", k, trace)
        else:
            above = 0
        if k == steps:
            break
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** (k + 1))
        v_hat = v / (1.0 - b2 ** (k + 1))
        x = x - lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamResult(x, trace, steps)
