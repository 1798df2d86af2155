"""Category identifiers shared by detection, tracking and evaluation."""

from enum import IntEnum


class ClassId(IntEnum):
    PEDESTRIAN = 0
    WHEELCHAIR = 1
    PUSH_WHEELCHAIR = 2
    CRUTCHES = 3
    WALKER = 4
    BACKGROUND = 5

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value) -> "ClassId":
        if isinstance(value, ClassId):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown class name {value!r}") from None
        return cls(int(value))


#: Number of foreground (person) classes.
M = 5
#: Number of score / observation categories (foreground + background).
N_CATEGORIES = 6

FOREGROUND = tuple(ClassId(i) for i in range(M))
CLASS_NAMES = tuple(c.label for c in ClassId)
MOBILITY_AIDS = (ClassId.WHEELCHAIR, ClassId.PUSH_WHEELCHAIR, ClassId.CRUTCHES, ClassId.WALKER)
