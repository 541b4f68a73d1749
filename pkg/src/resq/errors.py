"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ResQError(Exception):
    """Base class for every error raised by this package."""


# grid environment
class OutOfBounds(ResQError, ValueError):
    def __init__(self, cell):
        super().__init__(f"cell {tuple(cell)} lies outside the grid")
        self.cell = cell


class EmptyPopulation(ResQError, ValueError):
    pass


class ArityMismatch(ResQError, ValueError):
    pass


class TerminalState(ResQError):
    pass


# geo / scenario ingestion
class OutOfRegion(ResQError, ValueError):
    def __init__(self, point):
        super().__init__(f"point {tuple(point)} lies outside the bounding box")
        self.point = point


class ParseError(ResQError, ValueError):
    def __init__(self, location, reason):
        super().__init__(f"{location}: {reason}")
        self.location = location
        self.reason = reason


class DuplicateId(ResQError, ValueError):
    def __init__(self, entity_id):
        super().__init__(f"duplicate id {entity_id!r}")
        self.entity_id = entity_id


class NonMonotonicTimestamps(ResQError, ValueError):
    pass


# policies
class NoWaitingVictims(ResQError):
    pass


class NonConvergence(ResQError):
    pass


class StaleTable(ResQError):
    pass


# learner
class NoVictims(ResQError, ValueError):
    pass


class StateMismatch(ResQError, ValueError):
    pass


# assignment oracle
class TooLarge(ResQError, ValueError):
    pass


# harness
class EmptyRun(ResQError, ValueError):
    pass


class ZeroRate(ResQError, ValueError):
    pass


class ConfigError(ResQError, ValueError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason
