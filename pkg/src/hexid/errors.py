"""Exception types raised across the package."""


class HexidError(Exception):
    """Base class for all package errors."""


class OutOfStroke(HexidError):
    def __init__(self, legs, lengths):
        self.legs = list(legs)
        self.lengths = lengths
        super().__init__(f"legs {[i + 1 for i in self.legs]} outside stroke limits")


class NoConvergence(HexidError):
    pass


class GimbalDegenerate(HexidError):
    pass


class AngleOutOfTable(HexidError):
    pass


class SingularPose(HexidError):
    pass


class WorkspaceViolation(HexidError):
    pass


class ZeroSignal(HexidError):
    pass


class OptimizerStalled(HexidError):
    pass


class FrequencyOutOfTable(HexidError):
    pass


class TooFewPeriods(HexidError):
    pass


class RankDeficientWindow(HexidError):
    pass


class GridMismatch(HexidError):
    pass


class PhaseUnwrapAmbiguous(HexidError):
    pass


class SingularFrm(HexidError):
    pass


class DegenerateMotionSet(HexidError):
    pass


class IllConditioned(HexidError):
    pass
