"""JSON experiment configuration (strict: unknown keys are rejected).

Complex numbers are written as a bare real or a two-element ``[re, im]``
list. SNR values may be the string ``"inf"`` for a noiseless run. See
``configs/`` for worked examples and README.md for the full schema.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import scenarios
from .channel import PerturbationEvent, Reflector, Scene, Tap, TapSet, Trajectory, Transmitter
from .estimator import TdlConfig
from .signal import ModulationConfig

ComplexLike = Union[float, tuple[float, float]]


def to_complex(value: ComplexLike) -> complex:
    if isinstance(value, (tuple, list)):
        return complex(value[0], value[1])
    return complex(value)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TransmitterModel(_Strict):
    position: tuple[float, float]
    power_dbm: float = 50.0


class ReflectorModel(_Strict):
    start: tuple[float, float]
    end: tuple[float, float]
    coefficient: ComplexLike = -0.7


class SceneModel(_Strict):
    transmitters: list[TransmitterModel] = Field(min_length=1)
    receiver: tuple[float, float]
    reflectors: list[ReflectorModel] = []
    carrier_hz: float = 900e6
    max_bounces: int = 1
    sample_period_s: float = 20e-9

    def build(self) -> Scene:
        return Scene(
            tuple(Transmitter(t.position, t.power_dbm) for t in self.transmitters),
            self.receiver,
            tuple(Reflector(r.start, r.end, to_complex(r.coefficient)) for r in self.reflectors),
            self.carrier_hz, self.max_bounces, self.sample_period_s)


class TapModel(_Strict):
    delay: int = Field(ge=0)
    gain: ComplexLike


class TrajectoryModel(_Strict):
    """Either explicit waypoints (``times`` + ``positions``) or a polyline
    resampled to ``count`` evenly spaced points (``path``)."""

    times: Optional[list[float]] = None
    positions: Optional[list[tuple[float, float]]] = None
    path: Optional[list[tuple[float, float]]] = None
    count: Optional[int] = None
    dt: float = 1.0
    reflector_shifts: dict[int, list[tuple[float, float]]] = {}

    @model_validator(mode="after")
    def _one_form(self):
        explicit = self.positions is not None
        if explicit == (self.path is not None):
            raise ValueError("give either positions or path")
        if self.path is not None and not self.count:
            raise ValueError("path needs count")
        return self

    def build(self) -> Trajectory:
        if self.path is not None:
            base = Trajectory.along_path(self.path, self.count, self.dt)
        else:
            times = self.times if self.times is not None else np.arange(len(self.positions)) * self.dt
            base = Trajectory(times, self.positions)
        return Trajectory(base.times, base.positions,
                          {k: np.asarray(v, float) for k, v in self.reflector_shifts.items()})


class EventModel(_Strict):
    kind: Literal["add_path", "remove_path", "scale_gain"]
    start: int
    end: int
    delay: Optional[int] = None
    gain: Optional[ComplexLike] = None
    factor: ComplexLike = 1.0

    def build(self) -> PerturbationEvent:
        if self.kind == "add_path":
            if self.delay is None or self.gain is None:
                raise ValueError("add_path needs delay and gain")
            return PerturbationEvent(self.kind, self.start, self.end,
                                     tap=Tap(self.delay, to_complex(self.gain)))
        return PerturbationEvent(self.kind, self.start, self.end, delay=self.delay,
                                 factor=to_complex(self.factor))


class ScenarioModel(_Strict):
    preset: Optional[str] = None
    name: Optional[str] = None
    scene: Optional[SceneModel] = None
    taps: Optional[list[list[TapModel]]] = None
    trajectory: Optional[TrajectoryModel] = None
    events: Optional[list[EventModel]] = None

    @model_validator(mode="after")
    def _one_source(self):
        given = [x is not None for x in (self.preset, self.scene, self.taps)]
        if sum(given) != 1:
            raise ValueError("scenario needs exactly one of preset, scene, taps")
        if self.preset is not None and self.preset not in scenarios.PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        return self

    def build(self) -> scenarios.Scenario:
        if self.preset is not None:
            base = scenarios.preset(self.preset)
        elif self.scene is not None:
            base = scenarios.Scenario(self.name or "scene", scene=self.scene.build())
        else:
            tapsets = tuple(TapSet.from_pairs([(t.delay, to_complex(t.gain)) for t in row], m)
                            for m, row in enumerate(self.taps))
            base = scenarios.Scenario(self.name or "taps", tapsets=tapsets)
        return scenarios.Scenario(
            self.name or base.name, base.scene, base.tapsets,
            self.trajectory.build() if self.trajectory is not None else base.trajectory,
            tuple(e.build() for e in self.events) if self.events is not None else base.events)


class ModulationModel(_Strict):
    symbol_count: int = Field(10_000, ge=1)
    samples_per_symbol: int = Field(100, ge=1)
    sample_period_s: float = Field(20e-9, gt=0)
    carrier_hz: float = Field(900e6, gt=0)
    tx_power_dbm: float = 50.0
    rx_gain_db: float = 30.0

    def build(self, symbol_count: int | None = None) -> ModulationConfig:
        return ModulationConfig(symbol_count or self.symbol_count, self.samples_per_symbol,
                                self.sample_period_s, self.carrier_hz,
                                self.tx_power_dbm, self.rx_gain_db)


class EstimatorModel(_Strict):
    num_taps: int = Field(63, ge=1)
    tap_resolution: int = Field(1, ge=1)
    learning_rate: float = Field(0.01, gt=0)
    epochs: int = Field(5000, ge=1)
    prune_threshold: Optional[float] = Field(None, ge=0)
    warm_epochs: Optional[int] = Field(None, ge=1)

    def build(self, num_transmitters: int, block_size: int | None = None) -> TdlConfig:
        return TdlConfig(self.num_taps, self.tap_resolution, num_transmitters,
                         self.learning_rate, self.epochs, block_size, self.prune_threshold)


class MobileModel(_Strict):
    symbols_per_frame: int = Field(1000, ge=1)
    occupancy_threshold: float = 1e-3


class BerModel(_Strict):
    train_symbols: int = Field(10_000, ge=1)
    test_symbols: int = Field(2000, ge=1)
    equalizer_taps: int = Field(11, ge=1)
    decision_delay: int = Field(5, ge=0)
    lms_mu: float = Field(0.01, gt=0)
    rls_lambda: float = Field(0.99, gt=0, le=1)


class SensingModel(_Strict):
    symbols_per_frame: int = Field(100, ge=1)
    snr_db: float = 60.0
    dims: int = Field(2, ge=1)
    restarts: int = Field(10, ge=1)
    csi_eps: float = Field(1e-12, ge=0)


class ExperimentConfig(_Strict):
    scenario: ScenarioModel
    modulation: ModulationModel = ModulationModel()
    estimator: EstimatorModel = EstimatorModel()
    snr_grid: list[float] = Field([40.0, 60.0, 80.0], min_length=1)
    runs_per_point: int = Field(10, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    outputs: str = "out"
    workers: int = Field(1, ge=1)
    mobile: MobileModel = MobileModel()
    ber: BerModel = BerModel()
    sensing: SensingModel = SensingModel()

    @field_validator("snr_grid")
    @classmethod
    def _no_nan(cls, v):
        if any(math.isnan(x) for x in v):
            raise ValueError("SNR values must not be NaN")
        return v

    def config_hash(self) -> str:
        # where results go and how many processes compute them never changes a number
        data = self.model_dump(mode="json", exclude={"outputs", "workers"})
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def load_config(path, **overrides) -> ExperimentConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.model_validate(data)
