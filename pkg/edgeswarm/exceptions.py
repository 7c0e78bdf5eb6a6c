"""
File: edgeswarm/exceptions.py
Custom exceptions for the edgeswarm simulator
"""


class EdgeSwarmError(Exception):
    """Base exception for all simulator errors"""
    pass


class ValidationError(EdgeSwarmError):
    """Raised when user-supplied input (scenario, CSV, log, CLI args) is invalid"""
    pass


# ============================================
# sim-engine
# ============================================

class SchedulingInPast(EdgeSwarmError):
    """Raised when an event is scheduled before the current virtual clock"""
    pass


class UnknownStream(EdgeSwarmError):
    """Raised when a random stream is used before being registered"""
    pass


class MalformedLog(ValidationError):
    """Raised when a serialized event log cannot be parsed"""
    pass


# ============================================
# network
# ============================================

class MalformedHeader(ValidationError):
    """Raised when a towers CSV header does not match the documented schema"""
    pass


class RowError(ValidationError):
    """A single invalid towers CSV row (collected, not raised, unless every row fails)"""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class TopologyError(ValidationError):
    """Raised when every row of a towers CSV is invalid"""

    def __init__(self, row_errors):
        self.row_errors = list(row_errors)
        details = "; ".join(str(err) for err in self.row_errors[:5])
        super().__init__(f"all {len(self.row_errors)} tower rows invalid: {details}")


class NoCoverage(EdgeSwarmError):
    """Raised when a transfer is attempted over a link without coverage"""
    pass


# ============================================
# sba-registry
# ============================================

class DiscoveryTimeout(EdgeSwarmError):
    """Raised when a discovery request never gets an answer"""

    def __init__(self, message: str, finished_at=None):
        super().__init__(message)
        self.finished_at = finished_at


class Unauthorized(EdgeSwarmError):
    """Raised when a device without credential queries the registry"""
    pass


class NoFeasibleBundle(EdgeSwarmError):
    """Raised when no manifest fits the deploy-time budget and device memory"""
    pass


class NoConnectivity(EdgeSwarmError):
    """Raised when the registry cannot be reached over cellular or P2P"""
    pass


class TransferFailed(EdgeSwarmError):
    """Raised when a deployment leg exhausts its retry budget"""

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record


class PlannerInvariantError(EdgeSwarmError):
    """Raised in verify mode when the planner disagrees with brute-force search"""
    pass


# ============================================
# edge-device / agent-lifecycle
# ============================================

class InsufficientMemory(EdgeSwarmError):
    """Raised when an agent does not fit in the device's free memory"""
    pass


class UnknownAgent(EdgeSwarmError):
    """Raised when an agent id is not installed on the device"""
    pass


class AgentAlreadyInstalled(EdgeSwarmError):
    """Raised when an agent id is already present on the device"""
    pass


class IllegalTransition(EdgeSwarmError):
    """Raised when a lifecycle event has no edge from the current state"""
    pass


class AgentNotActive(EdgeSwarmError):
    """Raised when inference is requested from an agent that is not Active"""
    pass


class CapabilityMismatch(EdgeSwarmError):
    """Raised when a task is routed to an agent of another capability"""
    pass


class ReplacementError(EdgeSwarmError):
    """Raised when a replacement request violates its preconditions"""
    pass


# ============================================
# scenarios / metrics-cli
# ============================================

class ParseError(ValidationError):
    """Raised when a scenario or config file is not valid JSON"""
    pass


class ScenarioValidationError(ValidationError):
    """Raised when a scenario violates its schema; names the failing field path"""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class MismatchedRuns(ValidationError):
    """Raised when two reports of different scenarios or seeds are compared"""
    pass
