"""Pilot generation, QPSK mapping, sample-and-hold shaping and AWGN."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

DEFAULT_SAMPLE_PERIOD_S = 20e-9

# Gray order: index 0..3 <-> bit pairs 00, 01, 11, 10.
_GRAY_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)
CONSTELLATION = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2)
# bit pair value (2*b0 + b1) -> Gray index
_PAIR_TO_INDEX = np.array([0, 1, 3, 2])


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise InvalidArgumentError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


@dataclass(frozen=True, eq=False)
class ComplexSignal:
    """A discretized complex baseband sequence.

    Attributes:
        samples: 1-D complex array.
        sample_rate_hz: Sampling rate in samples/second.
    """

    samples: np.ndarray
    sample_rate_hz: float = 1.0 / DEFAULT_SAMPLE_PERIOD_S

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128).reshape(-1)
        if samples.size < 1:
            raise InvalidArgumentError("signal must contain at least one sample")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgumentError("signal samples must be finite")
        if not self.sample_rate_hz > 0:
            raise InvalidArgumentError("sample_rate_hz must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def power(self) -> float:
        """Mean |sample|^2."""
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples: np.ndarray) -> ComplexSignal:
        return ComplexSignal(samples, self.sample_rate_hz)


@dataclass(frozen=True)
class ModulationConfig:
    """Pilot burst parameters.

    ``tx_power_dbm`` and ``rx_gain_db`` are link-budget metadata only; every
    result in the package depends on SNR, not absolute power.
    """

    symbol_count: int
    samples_per_symbol: int = 100
    sample_period_s: float = DEFAULT_SAMPLE_PERIOD_S
    carrier_hz: float = 900e6
    tx_power_dbm: float = 50.0
    rx_gain_db: float = 30.0

    def __post_init__(self):
        if self.symbol_count < 1:
            raise InvalidArgumentError("symbol_count must be >= 1")
        if self.samples_per_symbol < 1:
            raise InvalidArgumentError("samples_per_symbol must be >= 1")
        if not self.sample_period_s > 0:
            raise InvalidArgumentError("sample_period_s must be positive")
        if not self.carrier_hz > 0:
            raise InvalidArgumentError("carrier_hz must be positive")

    @property
    def sample_rate_hz(self) -> float:
        return 1.0 / self.sample_period_s

    @property
    def sample_count(self) -> int:
        return self.symbol_count * self.samples_per_symbol


def generate_bits(count: int, seed: int) -> np.ndarray:
    """Uniform i.i.d. bits as a uint8 array, reproducible from ``seed``."""
    if count < 1:
        raise InvalidArgumentError("bit count must be >= 1")
    rng = np.random.default_rng(_check_seed(seed))
    return rng.integers(0, 2, size=int(count), dtype=np.uint8)


def qpsk_modulate(bits) -> np.ndarray:
    """Map bit pairs to unit-magnitude Gray-coded QPSK symbols.

    00 -> (+1+j)/sqrt2, 01 -> (-1+j)/sqrt2, 11 -> (-1-j)/sqrt2,
    10 -> (+1-j)/sqrt2.
    """
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if bits.size % 2:
        raise InvalidArgumentError("QPSK needs an even number of bits")
    if np.any(bits > 1):
        raise InvalidArgumentError("bits must be 0 or 1")
    pairs = bits.reshape(-1, 2)
    return CONSTELLATION[_PAIR_TO_INDEX[2 * pairs[:, 0] + pairs[:, 1]]]


def symbol_indices(symbols) -> np.ndarray:
    """Minimum-distance constellation index per symbol (ties -> lower index)."""
    symbols = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    dist = np.abs(symbols[:, None] - CONSTELLATION[None, :])
    return np.argmin(dist, axis=1)


def qpsk_demodulate(symbols) -> np.ndarray:
    return _GRAY_BITS[symbol_indices(symbols)].reshape(-1)


def oversample(symbols, samples_per_symbol: int,
               sample_rate_hz: float = 1.0 / DEFAULT_SAMPLE_PERIOD_S) -> ComplexSignal:
    """Rectangular pulse shaping: repeat every symbol ``samples_per_symbol`` times."""
    if samples_per_symbol < 1:
        raise InvalidArgumentError("samples_per_symbol must be >= 1")
    symbols = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    return ComplexSignal(np.repeat(symbols, int(samples_per_symbol)), sample_rate_hz)


def add_awgn(signal: ComplexSignal, snr_db: float, seed: int) -> ComplexSignal:
    """Add circularly-symmetric white Gaussian noise at ``snr_db``.

    Noise variance is the empirical mean power of ``signal`` divided by
    10^(snr_db/10). ``snr_db = inf`` returns ``signal`` itself.
    """
    if len(signal.samples) == 0:
        raise InvalidArgumentError("signal must be non-empty")
    if math.isinf(snr_db) and snr_db > 0:
        return signal
    if math.isnan(snr_db):
        raise InvalidArgumentError("snr_db must not be NaN")
    variance = signal.power / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(_check_seed(seed))
    noise = rng.standard_normal((2, len(signal))) * math.sqrt(variance / 2.0)
    return signal.with_samples(signal.samples + noise[0] + 1j * noise[1])


def empirical_snr_db(clean: ComplexSignal, noisy: ComplexSignal) -> float:
    noise = noisy.samples - clean.samples
    return 10.0 * math.log10(clean.power / float(np.mean(np.abs(noise) ** 2)))


def make_pilot(config: ModulationConfig, seed: int):
    """Bits, QPSK symbols and the oversampled transmit signal for one burst."""
    bits = generate_bits(2 * config.symbol_count, seed)
    symbols = qpsk_modulate(bits)
    return bits, symbols, oversample(symbols, config.samples_per_symbol, config.sample_rate_hz)
