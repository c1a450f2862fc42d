"""Labels for the events a path can belong to."""

import enum


class HypothesisLabel(enum.Flag):
    """Ground-truth or hypothesized event for a path on ``[0, T]``.

    ``BROWNIAN_PRESENT`` and ``BROWNIAN_ABSENT`` are complementary; either can
    be combined with ``INFINITE_ACTIVITY``.
    """

    NONE = 0
    BROWNIAN_PRESENT = enum.auto()
    BROWNIAN_ABSENT = enum.auto()
    INFINITE_ACTIVITY = enum.auto()

    @classmethod
    def build(cls, brownian: bool, infinite_activity: bool) -> "HypothesisLabel":
        label = cls.BROWNIAN_PRESENT if brownian else cls.BROWNIAN_ABSENT
        if infinite_activity:
            label |= cls.INFINITE_ACTIVITY
        return label

    def validate(self):
        if (self & self.BROWNIAN_PRESENT) and (self & self.BROWNIAN_ABSENT):
            raise ValueError("BROWNIAN_PRESENT and BROWNIAN_ABSENT are mutually exclusive")
        return self

    def names(self):
        return [m.name for m in HypothesisLabel if m.value and m in self]
