"""Symbol-spaced MLSE (Viterbi) equalization, adaptive linear equalizers and BER."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import lms_estimate, rls_estimate
from .channel import TapSet
from .errors import InvalidArgumentError
from .estimator import ChannelEstimate
from .signal import CONSTELLATION, symbol_indices

MAX_MEMORY = 8


@dataclass(frozen=True, eq=False)
class SymbolChannel:
    taps: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.taps, dtype=np.complex128).reshape(-1)
        if h.size < 1 or h[0] == 0:
            raise InvalidArgumentError("leading symbol tap must be non-zero")
        if h.size - 1 > MAX_MEMORY:
            raise InvalidArgumentError(f"channel memory {h.size - 1} exceeds {MAX_MEMORY}")
        object.__setattr__(self, "taps", h)

    @property
    def memory(self) -> int:
        return self.taps.size - 1


def to_symbol_spaced(channel, samples_per_symbol: int, transmitter: int = 0,
                     tolerance: float = 1e-6) -> SymbolChannel:
    """Read symbol-spaced taps off a sample-spaced TapSet or estimate.

    Taps with |gain| >= ``tolerance`` that do not sit on a multiple of
    ``samples_per_symbol`` are rejected; smaller ones are ignored.
    """
    if isinstance(channel, ChannelEstimate):
        delays = channel.delays
        gains = channel.weights[transmitter]
    elif isinstance(channel, TapSet):
        delays, gains = channel.delays, channel.gains
    else:
        raise InvalidArgumentError("expected a TapSet or ChannelEstimate")
    h: dict[int, complex] = {}
    for d, g in zip(delays, gains):
        if g == 0:
            continue
        k, rem = divmod(int(d), samples_per_symbol)
        if rem:
            if abs(g) >= tolerance:
                raise InvalidArgumentError(
                    f"tap at delay {d} is off the symbol grid (|gain| = {abs(g):.3g})")
            continue
        h[k] = h.get(k, 0j) + g
    if not h:
        raise InvalidArgumentError("no on-grid taps")
    taps = np.zeros(max(h) + 1, dtype=np.complex128)
    for k, g in h.items():
        taps[k] = g
    return SymbolChannel(taps)


def mid_symbol_samples(samples, samples_per_symbol: int, count: int | None = None) -> np.ndarray:
    """One sample per symbol, taken at index k*sps + sps//2."""
    samples = np.asarray(samples).reshape(-1)
    picked = samples[samples_per_symbol // 2::samples_per_symbol]
    return picked if count is None else picked[:count]


def mlse_equalize(rx_symbols, channel: SymbolChannel, num_symbols: int | None = None) -> np.ndarray:
    """Maximum-likelihood QPSK sequence via the Viterbi algorithm.

    The transmitted block is assumed framed by known zeros: nothing before
    time 0 and V zero symbols after it, so ``rx_symbols`` normally carries
    K + V received samples for K decisions (``num_symbols`` defaults to
    ``len(rx_symbols) - V``). Minimizes sum_n |r_n - sum_k h_k s_{n-k}|^2.
    """
    r = np.asarray(rx_symbols, dtype=np.complex128).reshape(-1)
    h = channel.taps
    V = channel.memory
    if r.size < V + 1:
        raise InvalidArgumentError("need at least V + 1 received samples")
    K = r.size - V if num_symbols is None else int(num_symbols)
    if not 1 <= K <= r.size:
        raise InvalidArgumentError("num_symbols out of range")
    steps = K + V
    if r.size < steps:
        r = np.concatenate([r, np.zeros(steps - r.size)])
    if V == 0:
        return CONSTELLATION[np.argmin(np.abs(r[:K, None] - h[0] * CONSTELLATION[None, :]), axis=1)]

    n_states = 4 ** V
    low = 4 ** (V - 1)
    states = np.arange(n_states)
    # digits[s, k-1] = constellation index of s_{n-k} held in state s
    digits = (states[:, None] // (4 ** np.arange(V))[None, :]) % 4
    hist_vals = CONSTELLATION[digits]                     # (S, V)
    metric = np.full(n_states, np.inf)
    metric[0] = 0.0
    back = np.empty((steps, low, 4), dtype=np.int8)
    for n in range(steps):
        # history position k (1..V) is a real symbol iff 0 <= n-k < K
        k = np.arange(1, V + 1)
        live = ((n - k) >= 0) & ((n - k) < K)
        isi = hist_vals[:, live] @ h[1:][live]             # (S,)
        if n < K:
            expected = isi[:, None] + h[0] * CONSTELLATION[None, :]
            n_inputs = 4
        else:
            expected = isi[:, None]
            n_inputs = 1
        cand = metric[:, None] + np.abs(r[n] - expected) ** 2          # (S, inputs)
        cand = cand.reshape(4, low, n_inputs)              # [oldest digit, rest, input]
        best = np.argmin(cand, axis=0)                     # (low, inputs)
        new_metric = np.full((low, 4), np.inf)
        new_metric[:, :n_inputs] = np.take_along_axis(cand, best[None], axis=0)[0]
        back[n, :, :n_inputs] = best
        metric = new_metric.reshape(-1)                    # index = 4*rest + input
    # traceback
    state = int(np.argmin(metric))
    decided = np.empty(K, dtype=int)
    for n in range(steps - 1, -1, -1):
        rest, inp = divmod(state, 4)
        if n < K:
            decided[n] = inp
        oldest = int(back[n, rest, inp])
        state = rest + low * oldest
    return CONSTELLATION[decided]


def mlse_brute_force(rx_symbols, channel: SymbolChannel, num_symbols: int | None = None) -> np.ndarray:
    """Exhaustive ML search over all 4^K sequences (small K only)."""
    r = np.asarray(rx_symbols, dtype=np.complex128).reshape(-1)
    h = channel.taps
    V = channel.memory
    K = r.size - V if num_symbols is None else int(num_symbols)
    if K > 9:
        raise InvalidArgumentError("brute force limited to 9 symbols")
    steps = K + V
    r = np.concatenate([r, np.zeros(max(0, steps - r.size))])[:steps]
    idx = np.indices((4,) * K).reshape(K, -1).T           # (4^K, K)
    seqs = CONSTELLATION[idx]
    conv = np.zeros((seqs.shape[0], steps), dtype=np.complex128)
    for k, hk in enumerate(h):
        conv[:, k:k + K] += hk * seqs
    cost = np.sum(np.abs(r[None, :] - conv) ** 2, axis=1)
    return seqs[int(np.argmin(cost))]


def train_linear_equalizer(rx_symbols, tx_symbols, num_taps: int = 11, decision_delay: int = 5,
                           algorithm: str = "lms", **kwargs) -> np.ndarray:
    """Adapt a symbol-spaced FIR equalizer so that (w . r window)_n ~ s_{n - delay}.

    Reuses the adaptive filters from :mod:`baselines` with the received
    symbols as input and the delayed training symbols as the desired signal.
    """
    r = np.asarray(rx_symbols, dtype=np.complex128).reshape(-1)
    s = np.asarray(tx_symbols, dtype=np.complex128).reshape(-1)
    desired = np.concatenate([np.zeros(decision_delay, dtype=np.complex128), s])[:r.size]
    if algorithm == "lms":
        w, _ = lms_estimate(r, desired, num_taps - 1, **kwargs)
    elif algorithm == "rls":
        w, _ = rls_estimate(r, desired, num_taps - 1, **kwargs)
    else:
        raise InvalidArgumentError(f"unknown algorithm {algorithm!r}")
    return w


def linear_equalize(rx_symbols, weights, decision_delay: int, num_symbols: int) -> np.ndarray:
    """Filter with ``weights`` and hard-slice; returns ``num_symbols`` decisions."""
    r = np.asarray(rx_symbols, dtype=np.complex128).reshape(-1)
    need = num_symbols + decision_delay
    r = np.concatenate([r, np.zeros(max(0, need - r.size))])
    z = np.convolve(r, weights)[decision_delay:need]
    return CONSTELLATION[symbol_indices(z)]


def compute_ber(decided_bits, true_bits) -> float:
    a = np.asarray(decided_bits).reshape(-1)
    b = np.asarray(true_bits).reshape(-1)
    if a.size != b.size:
        raise InvalidArgumentError("bit sequences differ in length")
    if a.size == 0:
        raise InvalidArgumentError("empty bit sequences")
    return float(np.count_nonzero(a != b)) / a.size
