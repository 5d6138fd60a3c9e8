"""Built-in scenes used by the experiment runner and the acceptance suite.

Coordinates are metres; with 20 ns samples one tap spans ~6 m of path, and
every preset keeps its delays below 64 samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import PerturbationEvent, Reflector, Scene, Tap, TapSet, Trajectory, Transmitter
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Scenario:
    name: str
    scene: Scene | None = None
    tapsets: tuple[TapSet, ...] | None = None
    trajectory: Trajectory | None = None
    events: tuple[PerturbationEvent, ...] = field(default_factory=tuple)

    @property
    def num_transmitters(self) -> int:
        if self.scene is not None:
            return len(self.scene.transmitters)
        return len(self.tapsets)


def _wall(a, b, coefficient=-0.7):
    return Reflector(tuple(a), tuple(b), coefficient)


def rural_scene() -> Scene:
    """Open field: line of sight only (1 tap)."""
    return Scene((Transmitter((0.0, 0.0)),), (120.0, 0.0))


def suburban_scene(interferers: int = 0) -> Scene:
    """Two facades either side of the link (3 taps per transmitter)."""
    txs = [Transmitter((0.0, 0.0)), Transmitter((30.0, 25.0), 47.0),
           Transmitter((150.0, -40.0), 46.0)]
    return Scene(tuple(txs[:1 + interferers]), (100.0, 0.0),
                 (_wall((-50, 40), (150, 40)), _wall((-50, -70), (150, -70))))


def urban_scene() -> Scene:
    """Street canyon closed by an end wall, two bounces (6 taps)."""
    return Scene((Transmitter((0.0, 0.0)),), (90.0, 0.0),
                 (_wall((-60, 20), (160, 20)), _wall((-60, -25), (160, -25)),
                  _wall((160, -25), (160, 20), -0.6)),
                 max_bounces=2)


def walk_scenario(count: int = 50) -> Scenario:
    """Receiver walking past a building that hides the transmitter for a while."""
    scene = Scene((Transmitter((0.0, 0.0)),), (40.0, -20.0),
                  (_wall((-50, 30), (250, 30)), _wall((60, -12), (60, -40), -0.5)))
    traj = Trajectory.along_path([(40.0, -20.0), (160.0, -20.0)], count)
    return Scenario("walk", scene=scene, trajectory=traj)


def drone_events() -> tuple[PerturbationEvent, ...]:
    """Drone hovering in the street twice: it shadows the LOS and adds a scatter path."""
    events = []
    for start, end in ((12, 15), (30, 32)):
        events.append(PerturbationEvent("scale_gain", start, end, delay=17, factor=0.5))
        events.append(PerturbationEvent("add_path", start, end, tap=Tap(25, 0.3j)))
    return tuple(events)


def drone_scenario(frames: int = 40, truck: bool = False) -> Scenario:
    """Static link with drone events; optionally a truck crossing the street."""
    scene = suburban_scene()
    shifts = {}
    if truck:
        # 10 m long side wall on a cross street at x = 45, driving north 2.5 m per frame:
        # it shadows the LOS around frames 20-24 and the upper facade bounce around 35-38
        scene = Scene(scene.transmitters, scene.receiver,
                      scene.reflectors + (_wall((45, -60), (45, -50), -0.8),))
        shifts = {2: np.column_stack([np.zeros(frames), 2.5 * np.arange(frames)])}
    traj = Trajectory.static(scene.receiver, frames, reflector_shifts=shifts)
    return Scenario("drone_truck" if truck else "drone", scene=scene, trajectory=traj,
                    events=drone_events())


def ber_tapsets(samples_per_symbol: int = 100) -> tuple[TapSet, ...]:
    """Three symbol-spaced multipaths."""
    s = samples_per_symbol
    return (TapSet.from_pairs([(0, 1.0), (s, 0.55 - 0.3j), (2 * s, 0.25j)]),)


PRESETS = {
    "rural": lambda: Scenario("rural", scene=rural_scene()),
    "suburban": lambda: Scenario("suburban", scene=suburban_scene()),
    "urban": lambda: Scenario("urban", scene=urban_scene()),
    "suburban_2tx": lambda: Scenario("suburban_2tx", scene=suburban_scene(1)),
    "suburban_3tx": lambda: Scenario("suburban_3tx", scene=suburban_scene(2)),
    "walk": walk_scenario,
    "drone": drone_scenario,
    "drone_truck": lambda: drone_scenario(truck=True),
    "ber3": lambda: Scenario("ber3", tapsets=ber_tapsets()),
}


def preset(name: str) -> Scenario:
    try:
        return PRESETS[name]()
    except KeyError:
        raise InvalidArgumentError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
