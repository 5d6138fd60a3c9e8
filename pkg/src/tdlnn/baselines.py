"""Classical channel estimators used for comparison.

``csi_frequency_ls`` is the conventional per-bin least-squares CSI; LMS and
RLS are sample-recursive adaptive FIR filters over the same sample-spaced
tap grid as the TDL estimator, with prediction ``w . u_n`` where
``u_n = [x[n], x[n-1], ..., x[n-L]]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InvalidArgumentError
from .signal import ComplexSignal


@dataclass(frozen=True, eq=False)
class CsiVector:
    impulse_response: np.ndarray
    regularization_eps: float = 1e-12

    def __post_init__(self):
        h = np.asarray(self.impulse_response, dtype=np.complex128).reshape(-1)
        if not np.all(np.isfinite(h)):
            raise InvalidArgumentError("CSI entries must be finite")
        object.__setattr__(self, "impulse_response", h)


def _samples(x) -> np.ndarray:
    if isinstance(x, ComplexSignal):
        return x.samples
    return np.asarray(x, dtype=np.complex128).reshape(-1)


def csi_frequency_ls(tx_pilot, rx_pilot, eps: float = 1e-12) -> CsiVector:
    """H_k = Y_k conj(X_k) / (|X_k|^2 + eps), returned as its inverse DFT.

    The DFT makes this a circular model: a linearly-convolved burst is only
    reproduced exactly when the pilot is periodic over the window.
    """
    x, y = _samples(tx_pilot), _samples(rx_pilot)
    if x.size != y.size:
        raise InvalidArgumentError("pilots differ in length")
    if x.size < 2:
        raise InvalidArgumentError("pilots need at least two samples")
    X = np.fft.fft(x)
    Y = np.fft.fft(y)
    H = Y * np.conj(X) / (np.abs(X) ** 2 + eps)
    return CsiVector(np.fft.ifft(H), eps)


def _windows(x: np.ndarray, num_taps: int) -> np.ndarray:
    padded = np.concatenate([np.zeros(num_taps, dtype=np.complex128), x])
    # row n = [x[n], x[n-1], ..., x[n-L]]
    view = np.lib.stride_tricks.sliding_window_view(padded, num_taps + 1)
    return view[:, ::-1]


def _check(x, y, num_taps):
    if x.size != y.size:
        raise InvalidArgumentError("pilots differ in length")
    if num_taps < 0 or num_taps >= x.size:
        raise InvalidArgumentError("need 0 <= L < N")


def lms_estimate(tx_pilot, rx_pilot, num_taps: int, step_mu: float = 0.01):
    """Least-mean-squares adaptive filter.

    Returns:
        (weights, error_trace): final (L+1) weights and |a priori error| per sample.
    """
    x, y = _samples(tx_pilot), _samples(rx_pilot)
    _check(x, y, num_taps)
    if not step_mu > 0:
        raise InvalidArgumentError("step_mu must be positive")
    U = _windows(x, num_taps)
    w = np.zeros(num_taps + 1, dtype=np.complex128)
    errors = np.empty(x.size)
    # overflow is reported as DivergenceError below, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(x.size):
            u = U[n]
            e = y[n] - w @ u
            w = w + step_mu * e * np.conj(u)
            errors[n] = abs(e)
            if not np.isfinite(errors[n]):
                raise DivergenceError(f"LMS diverged at sample {n}", n)
    if not np.all(np.isfinite(w)):
        raise DivergenceError("LMS weights are not finite", x.size - 1)
    return w, errors


def rls_estimate(tx_pilot, rx_pilot, num_taps: int, forgetting_lambda: float = 0.99,
                 delta: float = 1e-2):
    """Exponentially weighted recursive least squares.

    The inverse correlation matrix starts at I / delta.

    Returns:
        (weights, error_trace) as for :func:`lms_estimate`.
    """
    x, y = _samples(tx_pilot), _samples(rx_pilot)
    _check(x, y, num_taps)
    if not 0 < forgetting_lambda <= 1:
        raise InvalidArgumentError("forgetting_lambda must be in (0, 1]")
    if not delta > 0:
        raise InvalidArgumentError("delta must be positive")
    lam_inv = 1.0 / forgetting_lambda
    U = _windows(x, num_taps)
    w = np.zeros(num_taps + 1, dtype=np.complex128)
    P = np.eye(num_taps + 1, dtype=np.complex128) / delta
    errors = np.empty(x.size)
    for n in range(x.size):
        v = np.conj(U[n])                 # regressor for y ~ w . u = v^H w
        Pv = P @ v
        k = Pv / (forgetting_lambda + np.vdot(v, Pv).real)
        e = y[n] - w @ U[n]
        w = w + k * e
        P = lam_inv * (P - np.outer(k, v.conj() @ P))
        errors[n] = abs(e)
        if not np.isfinite(errors[n]):
            raise DivergenceError(f"RLS diverged at sample {n}", n)
    return w, errors
