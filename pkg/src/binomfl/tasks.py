"""Synthetic training tasks for the simulator.

A task owns M devices' local data and exposes:

    d, M                      problem and population sizes
    initial_point()           starting model vector
    loss(w)                   population-average loss
    device_gradients(w, ks)   stacked local gradients, shape (len(ks), d)
    grad_bound()              per-coordinate gradient magnitude bound
    smoothness()              smoothness constant of the average loss
"""

from __future__ import annotations

import numpy as np


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class QuadraticBowlTask:
    """Per-device quadratic f_k(w) = 0.5 * sum_j a_j (w_j - c_kj)^2.

    Deterministic sanity workhorse: with a step below 1/L plain gradient
    descent on the average must never increase the loss.
    """

    def __init__(self, d: int, M: int, seed: int, curvature_max: float = 1.0):
        if d < 1 or M < 1:
            raise ValueError("d and M must be >= 1")
        rng = np.random.default_rng(seed)
        self.d = d
        self.M = M
        self.curvatures = rng.uniform(0.2 * curvature_max, curvature_max, size=d)
        self.centers = rng.normal(0.0, 1.0, size=(M, d))
        # from w0 = 0 the iterates stay inside the centers' envelope
        self._grad_bound = 1.5 * float(np.max(self.curvatures * np.max(np.abs(self.centers), axis=0)))

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.d)

    def loss(self, w: np.ndarray) -> float:
        diff = w[None, :] - self.centers
        return float(0.5 * np.mean(np.sum(self.curvatures * diff * diff, axis=1)))

    def device_gradients(self, w: np.ndarray, devices) -> np.ndarray:
        return self.curvatures * (w[None, :] - self.centers[np.asarray(devices)])

    def grad_bound(self) -> float:
        return self._grad_bound

    def smoothness(self) -> float:
        return float(np.max(self.curvatures))


class LogisticRegressionTask:
    """Binary logistic regression on synthetic per-device datasets.

    Features are Gaussian with unit-norm rows in expectation; labels come
    from a shared ground-truth separator, so devices are statistically
    identical but hold disjoint samples.  An L2 term keeps the problem
    strongly convex.
    """

    def __init__(self, d: int, M: int, samples_per_device: int = 25,
                 seed: int = 0, l2: float = 0.05):
        if d < 1 or M < 1 or samples_per_device < 1:
            raise ValueError("d, M and samples_per_device must be >= 1")
        if l2 < 0.0:
            raise ValueError("l2 must be >= 0")
        rng = np.random.default_rng(seed)
        self.d = d
        self.M = M
        self.l2 = l2
        self.n_per = samples_per_device
        # unit-variance logits regardless of d: |w_true| ~ 2/sqrt(d) per coord
        self.w_true = rng.normal(0.0, 2.0, size=d) / np.sqrt(d)
        self.X = rng.normal(0.0, 1.0, size=(M, samples_per_device, d))
        logits = self.X @ self.w_true
        self.y = (rng.random(logits.shape) < _sigmoid(logits)).astype(np.float64)
        mean_abs = np.abs(self.X).mean(axis=1)          # (M, d) mean |x| per column
        self._grad_bound = float(mean_abs.max()) + self.l2 * 3.0 * float(np.abs(self.w_true).max())
        gram_top = max(
            float(np.linalg.eigvalsh(x.T @ x / samples_per_device)[-1]) for x in self.X
        )
        self._smoothness = 0.25 * gram_top + self.l2

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.d)

    def loss(self, w: np.ndarray) -> float:
        logits = self.X @ w
        # stable log(1 + exp(z)) - y*z
        ce = np.logaddexp(0.0, logits) - self.y * logits
        return float(ce.mean()) + 0.5 * self.l2 * float(w @ w)

    def device_gradients(self, w: np.ndarray, devices) -> np.ndarray:
        ks = np.asarray(devices)
        X = self.X[ks]
        resid = _sigmoid(X @ w) - self.y[ks]
        return np.einsum("kij,ki->kj", X, resid) / self.n_per + self.l2 * w[None, :]

    def grad_bound(self) -> float:
        return self._grad_bound

    def smoothness(self) -> float:
        return self._smoothness


class FixedGradientTask:
    """Frozen gradient table; the loss is irrelevant, only gradients matter.

    Used to probe the mechanism bias at a controlled gradient population.
    """

    def __init__(self, gradients: np.ndarray, grad_bound: float):
        g = np.asarray(gradients, dtype=np.float64)
        if g.ndim != 2:
            raise ValueError("gradients must have shape (M, d)")
        self.M, self.d = g.shape
        self._g = g
        self._bound = float(grad_bound)

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.d)

    def loss(self, w: np.ndarray) -> float:
        return 0.0

    def device_gradients(self, w: np.ndarray, devices) -> np.ndarray:
        return self._g[np.asarray(devices)]

    def grad_bound(self) -> float:
        return self._bound

    def smoothness(self) -> float:
        return 1.0
