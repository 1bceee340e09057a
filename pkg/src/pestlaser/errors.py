"""Exception types shared across the simulator."""


class PestLaserError(Exception):
    """Base class for all simulator errors."""


class InvalidInput(PestLaserError):
    pass


class DegenerateDisparity(PestLaserError):
    """Disparity <= 0: target at infinity or correspondence failure."""


class InvalidDepth(PestLaserError):
    pass


class BehindCamera(PestLaserError):
    pass


class OutOfFrame(PestLaserError):
    """Projected pixel falls outside the sensor."""


class BeamParallelToMirror(PestLaserError):
    pass


class NoForwardIntersection(PestLaserError):
    pass


class MissedMirror(PestLaserError):
    """Beam lands farther from the mirror pivot than the mirror radius."""


class OutOfWorkspace(PestLaserError):
    pass


class NoConvergence(PestLaserError):
    def __init__(self, residual_m: float):
        super().__init__(f"aim solver did not converge, residual {residual_m:.3e} m")
        self.residual_m = residual_m


class InvalidPower(PestLaserError):
    pass


class CropDamageRisk(PestLaserError):
    """Laser power at or above the level that burns through the plant."""


class InvalidConfig(PestLaserError):
    pass


class InvalidStep(PestLaserError):
    pass


class EmptyScenario(PestLaserError):
    pass


class EmptyResults(PestLaserError):
    pass


class ParseError(PestLaserError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, col {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(PestLaserError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class IoError(PestLaserError):
    pass
