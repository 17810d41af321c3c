"""Synthetic stand-ins for the classification and regression experiments.

The classifier needs no training. Class prototypes are binary patterns and
inputs are centred, ``x = pattern - 0.5`` blended toward uniform noise. For
such inputs the multiplication-free operator gives, per row,
``sum sign(x)|w| + sum sign(w)|x|``. With all-positive weights
``|w| = a + b*t`` (``t = +-1`` the template) the first sum is
``a*sum sign(x) + b*sum t*sign(x)``: a term shared by every row plus the
correlation between the template and the input's sign pattern. The second sum
is the same for every row. The readout (``+1`` on the diagonal, ``-1``
elsewhere) turns the ReLU'd scores ``h`` into ``const + 2*h_k - sum(h)``,
which keeps the arg-max. Corruption scrambles the sign pattern, shrinks the
winning margin and spreads the dropout votes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import DenseLayer, NetworkSpec, mf_forward

__all__ = [
    "CORRUPTION_LEVELS",
    "PrototypeTask",
    "prototype_classifier",
    "corrupted_inputs",
    "RegressionTask",
    "heteroscedastic_regression",
]

CORRUPTION_LEVELS = np.linspace(0.0, 1.0, 12)


@dataclass
class PrototypeTask:
    net: NetworkSpec
    prototypes: np.ndarray  # (classes, dim) binary patterns

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]


def prototype_classifier(num_classes: int = 10, dim: int = 31, seed: int = 0, precision_n: int = 6,
                         adc_bits: int = 5, dropout: bool = True, a: float = 1.0, b: float = 0.5) -> PrototypeTask:
    """Template layer (with input dropout) followed by an arg-max preserving readout."""
    if not 0 < b < a:
        raise ValueError("template weights need 0 < b < a so every weight stays positive")
    g = np.random.default_rng([seed, 21])
    P = (g.random((num_classes, dim)) < 0.5).astype(float)
    templates = a + b * np.where(P >= 0.5, 1.0, -1.0)
    readout = np.where(np.eye(num_classes) > 0, 1.0, -1.0)
    net = NetworkSpec([DenseLayer(templates, "relu", dropout_before=dropout), DenseLayer(readout, "identity")],
                      precision_n, adc_bits)
    return PrototypeTask(net, P)


def corrupted_inputs(task: PrototypeTask, level: float, count: int, seed: int = 0):
    """``count`` inputs ``(1 - level) * prototype + level * noise - 0.5`` with their labels.

    ``noise`` is uniform on ``[0, 1]`` like the prototypes themselves, so
    inputs lie in ``[-0.5, 0.5]``.
    """
    if not 0.0 <= level <= 1.0:
        raise ValueError("corruption level must lie in [0, 1]")
    g = np.random.default_rng([seed, 22, int(round(level * 1e6))])
    k, d = task.prototypes.shape
    labels = g.integers(0, k, count)
    noise = g.uniform(0.0, 1.0, size=(count, d))
    return (1.0 - level) * task.prototypes[labels] + level * noise - 0.5, labels


@dataclass
class RegressionTask:
    net: NetworkSpec
    inputs: np.ndarray
    targets: np.ndarray
    noise_std: np.ndarray


def heteroscedastic_regression(samples: int = 60, dim: int = 16, hidden: int = 16, seed: int = 0,
                               precision_n: int = 6, adc_bits: int = 5, noise_gain: float = 0.5) -> RegressionTask:
    """Targets from the network's own deterministic output plus input-dependent noise.

    Input amplitude varies over a 10x range; the injected target noise is
    proportional to it, so larger inputs carry both larger errors and larger
    dropout spread.
    """
    g = np.random.default_rng([seed, 31])
    w1 = g.normal(0, math.sqrt(2.0 / dim), size=(hidden, dim))
    w2 = g.normal(0, math.sqrt(1.0 / hidden), size=(1, hidden))
    net = NetworkSpec([DenseLayer(w1, "relu", dropout_before=True), DenseLayer(w2, "identity", dropout_before=True)],
                      precision_n, adc_bits)
    amp = np.exp(g.uniform(math.log(0.2), math.log(2.0), samples))
    u = g.normal(size=(samples, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    X = amp[:, None] * u
    clean = np.array([mf_forward(net, x)[0] for x in X])
    std = noise_gain * amp
    y = clean + std * g.normal(size=samples)
    return RegressionTask(net, X, y, std)
