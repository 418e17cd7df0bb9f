"""Desk-scale federated SGD with stochastic quantization and Binomial noise.

One round: the server state is broadcast, each selected device computes a
local gradient, caps it to [-D, D], stochastically rounds every coordinate
onto the q-level grid, adds Binomial(n, p) counts, and ships the integer
indices; the server averages the de-quantized values and takes a step.
The quantizer is mean-preserving and the noise is mean-shifted, so the
whole pipeline is unbiased.

Randomness: every routine takes an explicit ``numpy.random.Generator``;
two runs with equal generators produce bit-identical traces.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DivergedError, MechanismMismatchError
from .privacy import MechanismParams
from .solver import Solution
from .wireless import SystemParams

TRACE_COLUMNS = ("round", "loss", "grad_norm_sq", "bias_sample", "bits")
FLOAT32_BITS = 32


@dataclass(frozen=True)
class ConvergenceParams:
    """Smoothness/accuracy constants controlling step size and round counts.

    L: smoothness constant, G: per-coordinate gradient bound, G_f: initial
    optimality gap, theta: target squared-gradient accuracy, capital_lambda:
    allowed failure probability of reaching it, gamma: learning rate.
    """

    L: float
    G: float
    G_f: float
    theta: float
    capital_lambda: float
    gamma: float

    def __post_init__(self):
        for name in ("L", "G", "G_f", "gamma"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 < self.theta <= 1.0):
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if not (0.0 < self.capital_lambda < 1.0):
            raise ValueError(f"capital_lambda must lie in (0, 1), got {self.capital_lambda}")

    @classmethod
    def auto(
        cls,
        L: float,
        G: float,
        G_f: float,
        theta: float,
        capital_lambda: float,
        sigma_sq: float,
        rounds: int,
    ) -> "ConvergenceParams":
        """Set the learning rate to min{1/L, sqrt(2 G_f)/(sigma sqrt(L rounds))}."""
        if sigma_sq > 0.0:
            gamma = min(1.0 / L, math.sqrt(2.0 * G_f) / (math.sqrt(sigma_sq) * math.sqrt(L * rounds)))
        else:
            gamma = 1.0 / L
        return cls(L=L, G=G, G_f=G_f, theta=theta, capital_lambda=capital_lambda, gamma=gamma)


@dataclass(frozen=True)
class PrivatizedUpdate:
    """Integer payload of one device: quantizer index plus noise count."""

    indices: np.ndarray
    q: int
    n: int
    p: float
    s: float
    D: float

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 1:
            raise ValueError("indices must be a 1-d integer array")
        if idx.size and (idx.min() < 0 or idx.max() > self.q - 1 + self.n):
            raise ValueError(f"indices must lie in [0, {self.q - 1 + self.n}]")

    @property
    def bit_size(self) -> int:
        return self.indices.size * bits_per_coord(self.q, self.n)


@dataclass
class BiasEstimate:
    mean: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class TheoreticalBounds:
    """Closed-form caps on the sampling variance U and injected bias B."""

    u_hi: float
    u_hi_iid: float
    b_lo: float
    b_hi: float


@dataclass(frozen=True)
class IterationsEstimate:
    exact: float
    order_form: float


@dataclass
class SimTrace:
    """Per-round records of one run; one list entry per round."""

    loss: list[float] = field(default_factory=list)
    grad_norm_sq: list[float] = field(default_factory=list)
    bias_sample: list[float] = field(default_factory=list)
    bits: list[int] = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return len(self.loss)

    @property
    def total_bits(self) -> int:
        return sum(self.bits)

    def append(self, loss: float, grad_norm_sq: float, bias_sample: float, bits: int) -> None:
        self.loss.append(float(loss))
        self.grad_norm_sq.append(float(grad_norm_sq))
        self.bias_sample.append(float(bias_sample))
        self.bits.append(int(bits))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for t in range(self.rounds):
                writer.writerow(
                    [t, repr(self.loss[t]), repr(self.grad_norm_sq[t]),
                     repr(self.bias_sample[t]), self.bits[t]]
                )

    @classmethod
    def from_csv(cls, path) -> "SimTrace":
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TRACE_COLUMNS:
                raise ValueError(f"unexpected trace header {header}")
            for row in reader:
                trace.append(float(row[1]), float(row[2]), float(row[3]), int(row[4]))
        return trace


def bits_per_coord(q: int, n: int) -> int:
    """Bits to address one of the q + n possible payload values."""
    return (q + n - 1).bit_length()


def comm_cost(rounds: int, K: int, d: int, q: int, n: int) -> int:
    """Total uplink bits of a run: rounds * K * d * ceil(log2(q + n))."""
    if min(rounds, K, d) < 1:
        raise ValueError("rounds, K and d must all be >= 1")
    return rounds * K * d * bits_per_coord(q, n)


def _quantize_positions(g: np.ndarray, D: float, q: int) -> tuple[np.ndarray, np.ndarray]:
    # grid position t in [0, q-1]; lower level r and carry probability t - r
    t = ((g + D) / (2.0 * D)) * (q - 1)
    r = np.clip(np.floor(t), 0, q - 2)
    return r, t - r


def quantize_coord(g: float, mech: MechanismParams, rng: np.random.Generator) -> int:
    """Stochastically round one capped value onto the q-level grid.

    Returns the grid index in {0, ..., q-1}; the represented value is
    -D + s*index and its expectation over the rounding equals g.
    """
    if not (-mech.D <= g <= mech.D):
        raise ValueError(f"value {g} outside [-D, D] = [{-mech.D}, {mech.D}]; cap it first")
    t = ((g + mech.D) / (2.0 * mech.D)) * (mech.q - 1)
    r = min(math.floor(t), mech.q - 2)
    return r + 1 if rng.random() < t - r else r


def privatize(
    gradient: Sequence[float] | np.ndarray,
    mech: MechanismParams,
    rng: np.random.Generator,
) -> PrivatizedUpdate:
    """Quantize a capped gradient and add per-coordinate Binomial counts.

    The payload index j + z lies in [0, q-1+n] and the represented value
    s*(j + z) - D - s*n*p has expectation equal to the input coordinate.
    """
    g = np.asarray(gradient, dtype=np.float64)
    if g.ndim != 1:
        raise ValueError("gradient must be a vector")
    if g.size and (g.min() < -mech.D or g.max() > mech.D):
        raise ValueError("gradient has coordinates outside [-D, D]; cap it first")
    r, frac = _quantize_positions(g, mech.D, mech.q)
    j = r + (rng.random(g.shape) < frac)
    z = rng.binomial(mech.n, mech.p, size=g.shape)
    return PrivatizedUpdate(
        indices=(j + z).astype(np.int64),
        q=mech.q, n=mech.n, p=mech.p, s=mech.s, D=mech.D,
    )


def dequantize(update: PrivatizedUpdate) -> np.ndarray:
    """Server-side reconstruction s*index - D - s*n*p of one payload."""
    return update.s * update.indices - update.D - update.s * update.n * update.p


def aggregate(updates: Sequence[PrivatizedUpdate], K: int) -> np.ndarray:
    """Average the de-quantized payloads of K devices."""
    if len(updates) != K:
        raise ValueError(f"got {len(updates)} updates, expected K={K}")
    first = updates[0]
    for u in updates[1:]:
        if (u.q, u.n, u.p, u.s, u.D, u.indices.size) != (
            first.q, first.n, first.p, first.s, first.D, first.indices.size
        ):
            raise MechanismMismatchError(
                "updates were built with different mechanism parameters"
            )
    total = np.zeros(first.indices.size, dtype=np.float64)
    for u in updates:
        total += dequantize(u)
    return total / K


def _cap_gradients(grads: np.ndarray, D: float, mode: str) -> np.ndarray:
    if mode == "clip":
        return np.clip(grads, -D, D)
    if mode == "scale":
        # per-device rescale: shrink the whole row only when it overflows the cap
        peak = np.max(np.abs(grads), axis=-1, keepdims=True)
        factor = np.maximum(1.0, peak / D)
        return grads / factor
    raise ValueError(f"rescale mode must be 'clip' or 'scale', got {mode!r}")


def _privatized_mean(
    grads: np.ndarray, mech: MechanismParams, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized privatize + aggregate over a (K, d) gradient block."""
    r, frac = _quantize_positions(grads, mech.D, mech.q)
    j = r + (rng.random(grads.shape) < frac)
    z = rng.binomial(mech.n, mech.p, size=grads.shape)
    values = mech.s * (j + z) - mech.D - mech.s * mech.n * mech.p
    return values.mean(axis=0)


def theoretical_bounds(
    sys: SystemParams, sol: Solution, conv: ConvergenceParams
) -> TheoreticalBounds:
    """Closed-form bounds on the gradient-sampling variance and the bias."""
    d, G, K, M = sys.d, conv.G, sys.K, sys.M
    x = sol.n * sol.p * (1.0 - sol.p)
    denom = K * (sol.q - 1) ** 2
    return TheoreticalBounds(
        u_hi=4.0 * ((M - K) / M) ** 2 * d * G * G,
        u_hi_iid=8.0 * (M - K) / M**2 * d * G * G / K,
        b_lo=4.0 * d * G * G * x / denom,
        b_hi=4.0 * d * G * G * (1.0 + x) / denom,
    )


def measure_bias(
    task,
    sol: Solution,
    trials: int,
    rng: np.random.Generator,
    w: np.ndarray | None = None,
    rescale: str = "clip",
) -> BiasEstimate:
    """Monte-Carlo estimate of E||g - g_tilde||^2 at one fixed model state.

    g is the clean mean gradient of the first K devices and g_tilde its
    privatized counterpart; only the mechanism randomness varies across
    trials.
    """
    if trials < 2:
        raise ValueError(f"need at least 2 trials, got {trials}")
    K = len(sol.powers)
    if w is None:
        w = task.initial_point()
    grads = task.device_gradients(w, list(range(K)))
    mech = MechanismParams(q=sol.q, n=sol.n, p=sol.p, D=task.grad_bound())
    capped = _cap_gradients(grads, mech.D, rescale)
    clean = capped.mean(axis=0)
    samples = np.empty(trials)
    for t in range(trials):
        noisy = _privatized_mean(capped, mech, rng)
        diff = noisy - clean
        samples[t] = diff @ diff
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(trials))
    return BiasEstimate(mean=mean, stderr=stderr, trials=trials)


def run_fsgd(
    task,
    sys: SystemParams,
    sol: Solution | None,
    rounds: int,
    rng: np.random.Generator,
    gamma: float | None = None,
    conv: ConvergenceParams | None = None,
    rescale: str = "clip",
) -> SimTrace:
    """Federated SGD loop; privatized when ``sol`` is given, plain otherwise.

    Each round selects K of the task's M devices uniformly without
    replacement, averages their (possibly privatized) gradients and takes
    one step.  The plain branch charges 32 bits per coordinate, the
    privatized one the payload's actual index width.  Raises
    :class:`DivergedError` the moment the loss stops being finite.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if task.d != sys.d:
        raise ValueError(f"task dimension {task.d} != system dimension {sys.d}")
    if gamma is None:
        if conv is not None:
            gamma = conv.gamma
        else:
            gamma = 1.0 / task.smoothness()
    mech = None
    if sol is not None:
        mech = MechanismParams(q=sol.q, n=sol.n, p=sol.p, D=task.grad_bound())
        round_bits = sys.K * sys.d * bits_per_coord(sol.q, sol.n)
    else:
        round_bits = sys.K * sys.d * FLOAT32_BITS

    w = np.array(task.initial_point(), dtype=np.float64, copy=True)
    trace = SimTrace()
    for _ in range(rounds):
        devices = rng.choice(task.M, size=sys.K, replace=False)
        grads = task.device_gradients(w, devices)
        clean = grads.mean(axis=0)
        if mech is not None:
            capped = _cap_gradients(grads, mech.D, rescale)
            step_grad = _privatized_mean(capped, mech, rng)
            diff = step_grad - capped.mean(axis=0)
            bias_sample = float(diff @ diff)
        else:
            step_grad = clean
            bias_sample = 0.0
        w = w - gamma * step_grad
        loss = float(task.loss(w))
        if not math.isfinite(loss):
            raise DivergedError(f"loss became {loss} after round {trace.rounds + 1}")
        trace.append(loss, float(step_grad @ step_grad), bias_sample, round_bits)
    return trace


def iterations_estimate(conv: ConvergenceParams, sigma_sq: float) -> IterationsEstimate:
    """Rounds needed for a (theta, capital_lambda)-accurate point.

    ``exact`` is the closed-form count; ``order_form`` is the simplified
    1/(theta*Lambda) + sigma^2/(theta*Lambda)^2 shape for display.
    """
    if sigma_sq < 0.0:
        raise ValueError(f"sigma_sq must be >= 0, got {sigma_sq}")
    sigma = math.sqrt(sigma_sq)
    lg = conv.L * conv.G_f
    tl = conv.theta * conv.capital_lambda
    exact = ((lg * sigma + math.sqrt(lg * lg * sigma_sq + tl * lg * lg)) / tl) ** 2
    order = 1.0 / tl + sigma_sq / tl**2
    return IterationsEstimate(exact=exact, order_form=order)
