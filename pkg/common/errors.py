from typing import List, Optional


class AnchorCapError(Exception):
    """Base class for every error raised by this package"""


class ConfigError(AnchorCapError, ValueError):
    pass


class SceneParseError(AnchorCapError, ValueError):
    """A scene file line could not be parsed"""

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {reason}")


class SceneValidationError(AnchorCapError, ValueError):
    """A parsed scene breaks a data-model invariant"""

    def __init__(self, scene_id: str, violations: List[str]):
        self.scene_id = scene_id
        self.violations = violations
        super().__init__(f"scene {scene_id!r}: " + "; ".join(violations))


class ContractViolationError(AnchorCapError, ValueError):
    """Shape or mask contract broken by a caller"""


class NumericError(AnchorCapError, ArithmeticError):
    """NaN or Inf found; `op` names where it was detected"""

    def __init__(self, op: str, iteration: Optional[int] = None):
        self.op = op
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"non-finite value in {op}{where}")
