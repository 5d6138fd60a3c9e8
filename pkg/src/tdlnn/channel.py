"""Ground-truth multipath channels.

A 2-D image-method tracer turns a :class:`Scene` into per-transmitter
:class:`TapSet` objects (integer-sample delays, complex gains with carrier
phase folded in). Time variation comes from re-tracing the scene along a
:class:`Trajectory`; sensing events are applied afterwards as explicit tap
edits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyChannelError, InvalidArgumentError
from .signal import DEFAULT_SAMPLE_PERIOD_S, ComplexSignal, add_awgn

C_LIGHT = 299_792_458.0
_EPS = 1e-9


@dataclass(frozen=True)
class Tap:
    delay_samples: int
    gain: complex

    def __post_init__(self):
        if int(self.delay_samples) != self.delay_samples or self.delay_samples < 0:
            raise InvalidArgumentError("tap delay must be a non-negative integer")
        if not np.isfinite(complex(self.gain)):
            raise InvalidArgumentError("tap gain must be finite")
        object.__setattr__(self, "delay_samples", int(self.delay_samples))
        object.__setattr__(self, "gain", complex(self.gain))


@dataclass(frozen=True)
class TapSet:
    """Multipath description of one transmitter-receiver link.

    Taps are kept sorted by delay with unique delays; co-delayed rays are
    summed before construction (see :func:`merge_taps`). ``normalization`` is
    the factor that was applied to raw path amplitudes.
    """

    taps: tuple[Tap, ...]
    transmitter_id: int = 0
    normalization: float = 1.0

    def __post_init__(self):
        taps = tuple(self.taps)
        delays = [t.delay_samples for t in taps]
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise InvalidArgumentError("tap delays must be strictly increasing")
        object.__setattr__(self, "taps", taps)

    @classmethod
    def from_pairs(cls, pairs, transmitter_id: int = 0) -> TapSet:
        """Build from (delay, gain) pairs, summing duplicates."""
        return cls(merge_taps(Tap(d, g) for d, g in pairs), transmitter_id)

    def __len__(self) -> int:
        return len(self.taps)

    @property
    def delays(self) -> np.ndarray:
        return np.array([t.delay_samples for t in self.taps], dtype=int)

    @property
    def gains(self) -> np.ndarray:
        return np.array([t.gain for t in self.taps], dtype=np.complex128)

    def gain_at(self, delay: int) -> complex | None:
        for t in self.taps:
            if t.delay_samples == delay:
                return t.gain
        return None

    def impulse_response(self, length: int | None = None) -> np.ndarray:
        if length is None:
            length = (self.delays.max() + 1) if self.taps else 1
        h = np.zeros(length, dtype=np.complex128)
        for t in self.taps:
            if t.delay_samples < length:
                h[t.delay_samples] += t.gain
        return h

    def on_grid(self, num_taps: int, tap_resolution: int = 1) -> np.ndarray:
        """Dense gain vector over delays 0, tau, ..., L*tau."""
        dense = np.zeros(num_taps + 1, dtype=np.complex128)
        for t in self.taps:
            index, rem = divmod(t.delay_samples, tap_resolution)
            if rem or index > num_taps:
                raise InvalidArgumentError(
                    f"delay {t.delay_samples} is not on the tap grid "
                    f"(L={num_taps}, tau={tap_resolution})")
            dense[index] = t.gain
        return dense


def merge_taps(taps) -> tuple[Tap, ...]:
    """Sum co-delayed taps and sort by delay. Exact cancellations are dropped."""
    acc: dict[int, complex] = {}
    for t in taps:
        acc[t.delay_samples] = acc.get(t.delay_samples, 0j) + t.gain
    return tuple(Tap(d, g) for d, g in sorted(acc.items()) if g != 0)


@dataclass(frozen=True)
class Transmitter:
    position: tuple[float, float]
    power_dbm: float = 50.0


@dataclass(frozen=True)
class Reflector:
    start: tuple[float, float]
    end: tuple[float, float]
    coefficient: complex = -0.7

    def __post_init__(self):
        if abs(complex(self.coefficient)) > 1:
            raise InvalidArgumentError("|reflection coefficient| must be <= 1")
        if np.allclose(self.start, self.end):
            raise InvalidArgumentError("reflector segment has zero length")

    def shifted(self, offset) -> Reflector:
        dx, dy = offset
        return replace(self,
                       start=(self.start[0] + dx, self.start[1] + dy),
                       end=(self.end[0] + dx, self.end[1] + dy))


@dataclass(frozen=True)
class Scene:
    transmitters: tuple[Transmitter, ...]
    receiver: tuple[float, float]
    reflectors: tuple[Reflector, ...] = ()
    carrier_hz: float = 900e6
    max_bounces: int = 1
    sample_period_s: float = DEFAULT_SAMPLE_PERIOD_S

    def __post_init__(self):
        object.__setattr__(self, "transmitters", tuple(self.transmitters))
        object.__setattr__(self, "reflectors", tuple(self.reflectors))
        if not self.transmitters:
            raise InvalidArgumentError("scene needs at least one transmitter")
        if self.max_bounces not in (0, 1, 2):
            raise InvalidArgumentError("max_bounces must be 0, 1 or 2")
        if not (self.carrier_hz > 0 and self.sample_period_s > 0):
            raise InvalidArgumentError("carrier_hz and sample_period_s must be positive")
        for tx in self.transmitters:
            if np.allclose(tx.position, self.receiver):
                raise InvalidArgumentError("receiver coincides with a transmitter")

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.carrier_hz


@dataclass(frozen=True)
class Trajectory:
    """Receiver waypoints; optionally, per-waypoint reflector displacements.

    ``reflector_shifts`` maps a reflector index to a (T, 2) array of offsets,
    which is how moving scatterers (a truck, say) are expressed.
    """

    times: np.ndarray
    positions: np.ndarray
    reflector_shifts: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if times.size < 1 or times.size != positions.shape[0]:
            raise InvalidArgumentError("trajectory needs one time per waypoint")
        if np.any(np.diff(times) <= 0):
            raise InvalidArgumentError("trajectory times must be strictly increasing")
        shifts = {}
        for k, v in dict(self.reflector_shifts).items():
            v = np.asarray(v, dtype=float).reshape(-1, 2)
            if v.shape[0] != times.size:
                raise InvalidArgumentError("reflector shifts need one offset per waypoint")
            shifts[int(k)] = v
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "reflector_shifts", shifts)

    def __len__(self) -> int:
        return self.times.size

    @classmethod
    def static(cls, position, count: int, dt: float = 1.0, **kwargs) -> Trajectory:
        return cls(np.arange(count) * dt, np.tile(np.asarray(position, float), (count, 1)), **kwargs)

    @classmethod
    def along_path(cls, vertices, count: int, dt: float = 1.0) -> Trajectory:
        """``count`` waypoints spaced evenly by arc length along a polyline."""
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        seg = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        s = np.linspace(0.0, cum[-1], count)
        pos = np.column_stack([np.interp(s, cum, vertices[:, 0]),
                               np.interp(s, cum, vertices[:, 1])])
        return cls(np.arange(count) * dt, pos)


@dataclass(frozen=True)
class PerturbationEvent:
    """Edit applied to frames ``start..end`` (inclusive).

    ``add_path`` inserts ``tap``; ``remove_path`` deletes the tap at
    ``delay``; ``scale_gain`` multiplies the tap at ``delay`` by ``factor``.
    """

    kind: str
    start: int
    end: int
    delay: int | None = None
    tap: Tap | None = None
    factor: complex = 1.0

    def __post_init__(self):
        if self.kind not in ("add_path", "remove_path", "scale_gain"):
            raise InvalidArgumentError(f"unknown event kind {self.kind!r}")
        if self.start < 0 or self.end < self.start:
            raise InvalidArgumentError("event window must satisfy 0 <= start <= end")
        if self.kind == "add_path" and self.tap is None:
            raise InvalidArgumentError("add_path needs a tap")
        if self.kind != "add_path" and self.delay is None:
            raise InvalidArgumentError(f"{self.kind} needs a target delay")
        if not np.isfinite(complex(self.factor)):
            raise InvalidArgumentError("event factor must be finite")


# --- geometry -------------------------------------------------------------

def _mirror(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (b - a) / np.linalg.norm(b - a)
    v = p - a
    return a + 2 * np.dot(v, d) * d - v


def _intersect(p, q, a, b):
    """Parameters (t, u) of the crossing of segment p->q with line a->b, or None."""
    r = q - p
    s = b - a
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < 1e-12:
        return None
    w = a - p
    t = (w[0] * s[1] - w[1] * s[0]) / denom
    u = (w[0] * r[1] - w[1] * r[0]) / denom
    return t, u


def _blocked(p, q, reflectors, skip=()) -> bool:
    for k, r in enumerate(reflectors):
        if k in skip:
            continue
        hit = _intersect(p, q, np.asarray(r.start, float), np.asarray(r.end, float))
        if hit is None:
            continue
        t, u = hit
        if _EPS < t < 1 - _EPS and -_EPS <= u <= 1 + _EPS:
            return True
    return False


def _path_points(tx, rx, order, reflectors):
    """Specular path through reflectors in ``order``, or None if invalid."""
    images = [tx]
    for k in order:
        r = reflectors[k]
        images.append(_mirror(images[-1], np.asarray(r.start, float), np.asarray(r.end, float)))
    points = [rx]
    target = rx
    for level in range(len(order), 0, -1):
        r = reflectors[order[level - 1]]
        a, b = np.asarray(r.start, float), np.asarray(r.end, float)
        hit = _intersect(images[level], target, a, b)
        if hit is None:
            return None
        t, u = hit
        if not (_EPS < t < 1 - _EPS and 0.0 <= u <= 1.0):
            return None
        target = images[level] + t * (target - images[level])
        points.append(target)
    points.append(tx)
    points.reverse()
    # leg j runs points[j] -> points[j+1]; its end reflectors are exempt from blocking
    for j in range(len(points) - 1):
        skip = set()
        if j > 0:
            skip.add(order[j - 1])
        if j < len(order):
            skip.add(order[j])
        if _blocked(points[j], points[j + 1], reflectors, skip):
            return None
    return points


def _raw_paths(scene: Scene, transmitter_id: int, receiver, reflectors):
    tx_obj = scene.transmitters[transmitter_id]
    tx = np.asarray(tx_obj.position, float)
    rx = np.asarray(receiver, float)
    amp_scale = math.sqrt(10.0 ** (tx_obj.power_dbm / 10.0))
    lam = scene.wavelength
    paths = []
    for bounces in range(scene.max_bounces + 1):
        for order in itertools.product(range(len(reflectors)), repeat=bounces):
            if any(a == b for a, b in zip(order, order[1:])):
                continue
            points = _path_points(tx, rx, order, reflectors)
            if points is None:
                continue
            d = sum(float(np.linalg.norm(points[j + 1] - points[j])) for j in range(len(points) - 1))
            coeff = complex(np.prod([complex(reflectors[k].coefficient) for k in order])) if order else 1.0
            gain = amp_scale * lam / (4 * math.pi * d) * coeff * np.exp(-2j * math.pi * d / lam)
            delay = int(round(d / (C_LIGHT * scene.sample_period_s)))
            paths.append((d, delay, gain, order))
    return paths


def _trace(scene, transmitter_id, receiver, reflectors, normalization, allow_empty=False):
    paths = _raw_paths(scene, transmitter_id, receiver, reflectors)
    taps = merge_taps(Tap(delay, gain) for _, delay, gain, _ in paths)
    if not taps:
        if allow_empty:
            return TapSet((), transmitter_id, normalization or 1.0)
        raise EmptyChannelError(f"no propagation path from transmitter {transmitter_id}")
    if normalization is None:
        normalization = 1.0 / max(abs(t.gain) for t in taps)
    return TapSet(tuple(Tap(t.delay_samples, t.gain * normalization) for t in taps),
                  transmitter_id, normalization)


def trace_paths(scene: Scene, transmitter_id: int = 0, normalization: float | None = None) -> TapSet:
    """Trace LOS plus up to ``scene.max_bounces`` specular reflections.

    Each path of length d contributes amplitude lambda/(4 pi d) times the
    product of its reflection coefficients (and sqrt of the transmit power in
    mW), phase exp(-j 2 pi f_c d / c) and delay round(d / (c T_s)). Reflector
    segments are opaque and block any leg they cross. Without an explicit
    ``normalization`` the result is scaled so that max |gain| = 1.
    """
    if not 0 <= transmitter_id < len(scene.transmitters):
        raise InvalidArgumentError(f"no transmitter {transmitter_id}")
    return _trace(scene, transmitter_id, scene.receiver, scene.reflectors, normalization)


def trace_scene(scene: Scene) -> list[TapSet]:
    """TapSets for every transmitter, all scaled by transmitter 0's constant."""
    primary = trace_paths(scene, 0)
    return [primary] + [trace_paths(scene, m, primary.normalization)
                        for m in range(1, len(scene.transmitters))]


def apply_channel(tx_signals: Sequence[ComplexSignal], tapsets: Sequence[TapSet],
                  snr_db: float = math.inf, seed: int = 0) -> ComplexSignal:
    """Superpose every transmit signal through its TapSet, then add AWGN.

    Shorter signals are zero-padded to the longest; the output has that
    length (linear convolution truncated, samples before time 0 are zero).
    The noise level is set against the power of the noiseless superposition.
    """
    if len(tx_signals) != len(tapsets) or not tx_signals:
        raise InvalidArgumentError("need exactly one TapSet per transmit signal")
    rates = {s.sample_rate_hz for s in tx_signals}
    if len(rates) != 1:
        raise InvalidArgumentError("transmit signals have different sample rates")
    n = max(len(s) for s in tx_signals)
    y = np.zeros(n, dtype=np.complex128)
    for sig, tapset in zip(tx_signals, tapsets):
        x = sig.samples
        for t in tapset.taps:
            d = t.delay_samples
            if d < len(x) and d < n:
                m = min(len(x), n - d)
                y[d:d + m] += t.gain * x[:m]
    return add_awgn(ComplexSignal(y, rates.pop()), snr_db, seed)


def evolve_channel(scene: Scene, trajectory: Trajectory, transmitter_id: int = 0) -> list[TapSet]:
    """Re-trace the scene with the receiver at every waypoint.

    The normalization constant comes from the first frame so that gain
    changes between frames survive. Later frames may be empty (fully
    blocked); the first may not.
    """
    frames = []
    normalization = None
    for k in range(len(trajectory)):
        reflectors = tuple(
            r.shifted(trajectory.reflector_shifts[i][k]) if i in trajectory.reflector_shifts else r
            for i, r in enumerate(scene.reflectors))
        frame = _trace(scene, transmitter_id, tuple(trajectory.positions[k]), reflectors,
                       normalization, allow_empty=k > 0)
        normalization = frame.normalization
        frames.append(frame)
    return frames


def apply_events(frames: Sequence[TapSet], events: Sequence[PerturbationEvent]):
    """Apply sensing events; returns (new frames, per-frame ground-truth mask)."""
    frames = list(frames)
    mask = np.zeros(len(frames), dtype=bool)
    for ev in events:
        if ev.end >= len(frames):
            raise InvalidArgumentError(
                f"event window [{ev.start}, {ev.end}] exceeds {len(frames)} frames")
        for k in range(ev.start, ev.end + 1):
            frame = frames[k]
            taps = list(frame.taps)
            if ev.kind == "add_path":
                taps = list(merge_taps(taps + [ev.tap]))
            else:
                idx = [i for i, t in enumerate(taps) if t.delay_samples == ev.delay]
                if not idx:
                    raise InvalidArgumentError(
                        f"{ev.kind}: frame {k} has no tap at delay {ev.delay}")
                i = idx[0]
                if ev.kind == "remove_path":
                    del taps[i]
                else:
                    taps[i] = Tap(taps[i].delay_samples, taps[i].gain * complex(ev.factor))
            frames[k] = replace(frame, taps=tuple(taps))
            mask[k] = True
    return frames, mask
