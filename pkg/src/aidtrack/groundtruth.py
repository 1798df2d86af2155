"""Ground truth records produced by the simulator and consumed by evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

from .camera import PixelBox
from .classes import ClassId
from .errors import ConfigurationError


@dataclass(frozen=True)
class GroundTruthObject:
    box: PixelBox
    class_id: ClassId
    position_world: tuple[float, float]
    person_id: int
    occluded: bool = False
    visible_fraction: float = 1.0


@dataclass(frozen=True)
class GroundTruthFrame:
    frame_id: int
    objects: tuple[GroundTruthObject, ...] = field(default_factory=tuple)
    timestamp: float = 0.0

    def __post_init__(self):
        ids = [o.person_id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ConfigurationError(f"duplicate person id in ground truth frame {self.frame_id}")
        object.__setattr__(self, "objects", tuple(self.objects))

    def by_person(self) -> dict[int, GroundTruthObject]:
        return {o.person_id: o for o in self.objects}
