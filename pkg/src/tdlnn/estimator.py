"""Tapped-delay-line channel estimation by gradient descent.

Each transmitter's pilot feeds a bank of L+1 delays (multiples of tau
samples); the output weights c[m, i] are fit by full-batch gradient descent
on the mean squared error between predicted and received pilots::

    y_hat[n] = sum_m sum_i c[m, i] * x_m[n - i*tau]
    J(c)     = (1/N) sum_n |y[n] - y_hat[n]|^2
    c       <- c - lr * (2/N) sum_n (y_hat[n] - y[n]) * conj(x_m[n - i*tau])

The loss is quadratic in c, so the per-sample sums in the gradient are
collapsed once into the Gram matrix R and cross-correlation vector p
(``grad = 2 (R c - p)``). Every epoch is still one exact full-batch step,
but costs O((M(L+1))^2) instead of O(N M (L+1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg

from .channel import TapSet
from .errors import DivergenceError, InvalidArgumentError, SingularDesignError
from .signal import ComplexSignal

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


@dataclass(frozen=True)
class TdlConfig:
    """Estimator hyperparameters.

    Attributes:
        num_taps: L; weights are indexed 0..L.
        tap_resolution: tau, tap spacing in samples.
        num_transmitters: M, one sub-model per transmitter.
        learning_rate: Gradient step size.
        epochs: Number of full-batch updates (no early stopping).
        block_size: Pilot length N. ``None`` accepts whatever length the
            pilots have.
        prune_threshold: If set, weights with smaller magnitude are zeroed
            after the last epoch.
    """

    num_taps: int
    tap_resolution: int = 1
    num_transmitters: int = 1
    learning_rate: float = 0.01
    epochs: int = 5000
    block_size: int | None = None
    prune_threshold: float | None = None

    def __post_init__(self):
        if self.num_taps < 1:
            raise InvalidArgumentError("num_taps must be >= 1")
        if self.tap_resolution < 1:
            raise InvalidArgumentError("tap_resolution must be >= 1")
        if self.num_transmitters < 1:
            raise InvalidArgumentError("num_transmitters must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if self.block_size is not None and self.num_taps * self.tap_resolution >= self.block_size:
            raise InvalidArgumentError("L * tau must be smaller than the block size")
        if self.prune_threshold is not None and self.prune_threshold < 0:
            raise InvalidArgumentError("prune_threshold must be non-negative")

    @property
    def max_delay(self) -> int:
        return self.num_taps * self.tap_resolution


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    """Fitted weights, shape (M, L+1); ``weights[m, i]`` sits at delay i*tau."""

    weights: np.ndarray
    config: TdlConfig
    loss_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.complex128)
        if w.ndim == 1:
            w = w[None, :]
        if w.shape != (self.config.num_transmitters, self.config.num_taps + 1):
            raise InvalidArgumentError(f"weights shape {w.shape} does not match config")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "loss_trace", np.asarray(self.loss_trace, dtype=float))

    @property
    def delays(self) -> np.ndarray:
        return np.arange(self.config.num_taps + 1) * self.config.tap_resolution

    def to_tapsets(self, threshold: float = 0.0) -> list[TapSet]:
        """Taps with |c| > threshold, one TapSet per transmitter."""
        out = []
        for m, row in enumerate(self.weights):
            keep = np.abs(row) > threshold
            out.append(TapSet.from_pairs(zip(self.delays[keep], row[keep]), transmitter_id=m))
        return out


def _samples(x) -> np.ndarray:
    if isinstance(x, ComplexSignal):
        return x.samples
    return np.asarray(x, dtype=np.complex128).reshape(-1)


def build_shift_bank(x, num_taps: int, tap_resolution: int = 1) -> np.ndarray:
    """Rows of ``x`` delayed by 0, tau, ..., L*tau samples (zero-filled on the left)."""
    x = _samples(x)
    if num_taps < 0 or tap_resolution < 1:
        raise InvalidArgumentError("need L >= 0 and tau >= 1")
    if num_taps * tap_resolution >= x.size:
        raise InvalidArgumentError("L * tau must be smaller than the signal length")
    bank = np.zeros((num_taps + 1, x.size), dtype=np.complex128)
    for i in range(num_taps + 1):
        s = i * tap_resolution
        bank[i, s:] = x[:x.size - s]
    return bank


# --- sufficient statistics --------------------------------------------------

def _xcorr(a: np.ndarray, b: np.ndarray, max_lag: int) -> np.ndarray:
    """sum_t conj(a[t]) b[t+d] for d = -max_lag..max_lag (valid indices only)."""
    n = a.size
    size = 1 << int(math.ceil(math.log2(2 * n)))
    full = np.fft.ifft(np.conj(np.fft.fft(a, size)) * np.fft.fft(b, size))
    lags = np.arange(-max_lag, max_lag + 1)
    return full[lags % size]


def _gram_block(xa: np.ndarray, xb: np.ndarray, num_taps: int, tau: int) -> np.ndarray:
    """S[i, j] = sum_{n<N} conj(xa[n - i tau]) xb[n - j tau]."""
    n = xa.size
    span = num_taps * tau
    full = _xcorr(xa, xb, span)                       # index d + span
    # terms t >= N - a are missing from S(a, b); collect them from the tail
    t = np.arange(n - span, n) if span else np.arange(0)
    d = np.arange(-span, span + 1)
    idx = t[:, None] + d[None, :]
    valid = (idx >= 0) & (idx < n)
    v = np.where(valid, np.conj(xa[t])[:, None] * xb[np.clip(idx, 0, n - 1)], 0)
    # tail[a, :] = sum over the last a values of t
    tail = np.zeros((span + 1, 2 * span + 1), dtype=np.complex128)
    if span:
        tail[1:] = np.cumsum(v[::-1], axis=0)
    shifts = np.arange(num_taps + 1) * tau
    a = shifts[:, None]
    dd = shifts[:, None] - shifts[None, :]
    return full[dd + span] - tail[np.broadcast_to(a, dd.shape), dd + span]


def normal_statistics(tx_pilots: Sequence, rx_pilot, num_taps: int, tau: int = 1):
    """Return (R, p, J0) for the stacked shift-bank design.

    R[k, l] = (1/N) sum_n conj(a_k[n]) a_l[n], p[k] = (1/N) sum_n conj(a_k[n]) y[n],
    J0 = (1/N) sum_n |y[n]|^2, with k = m*(L+1) + i and a_k = x_m delayed by i*tau.
    """
    xs = [_samples(x) for x in tx_pilots]
    y = _samples(rx_pilot)
    n = y.size
    width = num_taps + 1
    size = len(xs) * width
    R = np.empty((size, size), dtype=np.complex128)
    p = np.empty(size, dtype=np.complex128)
    shifts = np.arange(width) * tau
    for m, xm in enumerate(xs):
        p[m * width:(m + 1) * width] = _xcorr(xm, y, num_taps * tau)[num_taps * tau + shifts]
        for m2 in range(m, len(xs)):
            block = _gram_block(xm, xs[m2], num_taps, tau)
            R[m * width:(m + 1) * width, m2 * width:(m2 + 1) * width] = block
            R[m2 * width:(m2 + 1) * width, m * width:(m + 1) * width] = block.conj().T
    R /= n
    p /= n
    R = 0.5 * (R + R.conj().T)
    return R, p, float(np.vdot(y, y).real) / n


def _descend(R, p, J0, lr, epochs, c):
    trace = np.empty(epochs)
    step = 2.0 * lr
    for e in range(epochs):
        g = np.dot(R, c)
        loss = J0 + np.vdot(c, g - 2.0 * p).real
        trace[e] = loss
        if not np.isfinite(loss) or loss > 1e150:
            return c, trace[:e + 1], e
        c = c - step * (g - p)
    return c, trace, -1


if numba is not None:
    _descend = numba.njit(cache=True)(_descend)


def _check_pilots(config: TdlConfig, tx_pilots, rx_pilot):
    if len(tx_pilots) != config.num_transmitters:
        raise InvalidArgumentError(
            f"expected {config.num_transmitters} transmit pilots, got {len(tx_pilots)}")
    n = len(_samples(rx_pilot))
    if config.block_size is not None and n != config.block_size:
        raise InvalidArgumentError(f"pilot length {n} != block_size {config.block_size}")
    for x in tx_pilots:
        if len(_samples(x)) != n:
            raise InvalidArgumentError("transmit and receive pilots differ in length")
    if config.max_delay >= n:
        raise InvalidArgumentError("L * tau must be smaller than the pilot length")


def _fit_raw(config, tx_pilots, rx_pilot, init=None, epochs=None):
    _check_pilots(config, tx_pilots, rx_pilot)
    R, p, J0 = normal_statistics(tx_pilots, rx_pilot, config.num_taps, config.tap_resolution)
    c0 = np.zeros(p.size, dtype=np.complex128) if init is None else \
        np.array(init, dtype=np.complex128).reshape(-1)
    epochs = config.epochs if epochs is None else int(epochs)
    c, trace, bad = _descend(R, p, J0, float(config.learning_rate), epochs, c0)
    if bad >= 0:
        raise DivergenceError(
            f"loss became non-finite at epoch {bad} (learning_rate={config.learning_rate})", bad)
    weights = c.reshape(config.num_transmitters, config.num_taps + 1)
    return ChannelEstimate(weights, config, trace)


def fit(config: TdlConfig, tx_pilots: Sequence, rx_pilot, *, init=None,
        epochs: int | None = None) -> ChannelEstimate:
    """Fit the TDL weights to one block of pilots.

    Starts from zero weights (or ``init``) and runs exactly ``epochs``
    full-batch gradient steps; ``loss_trace[e]`` is the MSE before step e.
    Pruning, when configured, is applied once at the end.

    Raises:
        InvalidArgumentError: pilot count or lengths inconsistent with config.
        DivergenceError: the loss stopped being finite.
    """
    est = _fit_raw(config, tx_pilots, rx_pilot, init, epochs)
    if config.prune_threshold is not None:
        est = prune(est, config.prune_threshold)
    return est


def fit_ls_oracle(tx_pilots: Sequence, rx_pilot, num_taps: int, tau: int = 1,
                  max_condition: float = 1e12, chunk: int = 65536) -> ChannelEstimate:
    """Exact least-squares weights from the normal equations.

    The design matrix is assembled row by row from shifted samples and
    accumulated in chunks, sharing nothing with :func:`fit`.
    """
    xs = [_samples(x) for x in tx_pilots]
    y = _samples(rx_pilot)
    n = y.size
    if any(x.size != n for x in xs):
        raise InvalidArgumentError("transmit and receive pilots differ in length")
    if num_taps * tau >= n:
        raise InvalidArgumentError("L * tau must be smaller than the pilot length")
    width = num_taps + 1
    cols = len(xs) * width
    gram = np.zeros((cols, cols), dtype=np.complex128)
    rhs = np.zeros(cols, dtype=np.complex128)
    for lo in range(0, n, chunk):
        rows = np.arange(lo, min(n, lo + chunk))
        A = np.zeros((rows.size, cols), dtype=np.complex128)
        for m, x in enumerate(xs):
            for i in range(width):
                src = rows - i * tau
                ok = src >= 0
                A[ok, m * width + i] = x[src[ok]]
        gram += A.conj().T @ A
        rhs += A.conj().T @ y[rows]
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularDesignError(f"design is rank deficient (condition ~ {cond:.3g})", cond)
    c = scipy.linalg.solve(gram, rhs, assume_a="her")
    loss = float(np.mean(np.abs(y) ** 2)) - float(np.vdot(rhs, c).real) / n
    config = TdlConfig(num_taps=num_taps, tap_resolution=tau, num_transmitters=len(xs))
    return ChannelEstimate(c.reshape(len(xs), width), config, np.array([loss]))


def fit_sequence(config: TdlConfig, frames: Sequence, warm_epochs: int | None = None
                 ) -> list[ChannelEstimate]:
    """Track a time-varying channel frame by frame.

    ``frames`` yields (tx_pilots, rx_pilot) pairs. Frame 0 gets a full fit;
    each later frame starts from the previous (unpruned) weights and runs
    ``warm_epochs`` steps, by default ``config.epochs // 10``.
    """
    if warm_epochs is None:
        warm_epochs = max(1, config.epochs // 10)
    out = []
    prev = None
    for k, (tx_pilots, rx_pilot) in enumerate(frames):
        raw = _fit_raw(config, tx_pilots, rx_pilot,
                       init=None if prev is None else prev.weights,
                       epochs=None if prev is None else warm_epochs)
        prev = raw
        out.append(prune(raw, config.prune_threshold) if config.prune_threshold is not None else raw)
    return out


def prune(estimate: ChannelEstimate, threshold: float) -> ChannelEstimate:
    """Zero every weight with |c| < threshold."""
    if threshold < 0:
        raise InvalidArgumentError("threshold must be non-negative")
    w = estimate.weights.copy()
    w[np.abs(w) < threshold] = 0
    return replace(estimate, weights=w)


def truth_matrix(truth: Sequence[TapSet], num_taps: int, tau: int = 1) -> np.ndarray:
    return np.vstack([ts.on_grid(num_taps, tau) for ts in truth])


def rmse(estimate: ChannelEstimate, truth: Sequence[TapSet]) -> float:
    """sqrt(mean |c_hat - c_true|^2) over the full M x (L+1) weight grid."""
    cfg = estimate.config
    if len(truth) != cfg.num_transmitters:
        raise InvalidArgumentError("need one ground-truth TapSet per transmitter")
    dense = truth_matrix(truth, cfg.num_taps, cfg.tap_resolution)
    return float(np.sqrt(np.mean(np.abs(estimate.weights - dense) ** 2)))
