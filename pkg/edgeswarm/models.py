"""
File: edgeswarm/models.py
Data models shared by the registry, devices, scenarios and config
"""

from enum import Enum
from typing import Dict, Iterable, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Rat(str, Enum):
    """Cellular radio access technology generation"""

    G2 = "2G"
    G3 = "3G"
    G4 = "4G"
    G5 = "5G"

    @property
    def generation(self) -> int:
        return int(self.value[0])

    @classmethod
    def parse(cls, text: str) -> "Rat":
        """Case-insensitive parse of ``2g``..``5G``"""
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ValueError(f"unknown RAT {text!r}, expected one of 2G, 3G, 4G, 5G") from None


class Capability(str, Enum):
    DRUG_LABEL_CLASSIFICATION = "drug-label-classification"
    LOCALIZATION = "localization"
    HAZARD_DETECTION = "hazard-detection"


class ModelClass(str, Enum):
    DNN = "DNN"
    MLP = "MLP"
    LOGREG = "LOGREG"
    GPS_LOC = "GPS-LOC"
    PDR_LOC = "PDR-LOC"


# Accuracy and payload size must strictly decrease along this ladder.
MODEL_LADDER = (ModelClass.DNN, ModelClass.MLP, ModelClass.LOGREG)


class ArchMode(str, Enum):
    REMOTE = "remote"
    AGENT = "agent"


class OfferingMode(str, Enum):
    REMOTE_SERVICE = "remote-service"
    DEPLOYABLE_AGENT = "deployable-agent"


class RetryPolicy(BaseModel):
    """
    Retry policy for one request/response exchange

    An attempt that is not answered within ``attempt_timeout_s`` counts as
    failed; at most ``max_attempts`` are made. With ``transfer_factor`` set,
    the timeout tracks the exchange instead: ``transfer_factor`` times its
    expected duration, kept within [``min_timeout_s``, ``attempt_timeout_s``].
    """

    model_config = ConfigDict(frozen=True)

    max_attempts: int = Field(default=3, ge=1, description="Attempts including the first")
    attempt_timeout_s: float = Field(default=5.0, gt=0, description="Per-attempt timeout")
    backoff_s: float = Field(default=0.0, ge=0, description="Pause between attempts")
    transfer_factor: Optional[float] = Field(
        default=None, ge=1, description="Scale the timeout with the expected exchange time"
    )
    min_timeout_s: float = Field(default=0.25, gt=0, description="Floor of a scaled timeout")

    def should_retry(self, attempt: int) -> bool:
        """True if another attempt may follow attempt number ``attempt`` (1-based)"""
        return attempt < self.max_attempts

    def timeout_for(self, expected_s: Optional[float]) -> float:
        """
        Per-attempt timeout for an exchange expected to take ``expected_s``

        Example:
            >>> RetryPolicy(transfer_factor=2.0).timeout_for(0.06)
            0.25
            >>> RetryPolicy().timeout_for(0.06)
            5.0
        """
        if self.transfer_factor is None or expected_s is None:
            return self.attempt_timeout_s
        scaled = self.transfer_factor * expected_s
        return min(self.attempt_timeout_s, max(self.min_timeout_s, scaled))


class AgentManifest(BaseModel):
    """A deployable single-purpose agent bundling a pre-trained model"""

    model_config = ConfigDict(frozen=True)

    agent_id: str = Field(min_length=1)
    capability: Capability
    model_class: ModelClass
    payload_size: int = Field(gt=0, description="Bundle size in bytes")
    memory_footprint: int = Field(gt=0, description="Installed size in bytes")
    per_inference_energy: float = Field(ge=0, description="Battery percent per inference")
    per_inference_latency: float = Field(ge=0, description="Onboard seconds per inference")
    accuracy: float = Field(ge=0, le=1)
    ttl: float = Field(gt=0, description="Seconds from activation to expiry")
    dormant_allowed: bool = True


class EndpointProfile(BaseModel):
    """Latency/accuracy profile of a backend inference endpoint"""

    model_config = ConfigDict(frozen=True)

    compute_s: Optional[float] = Field(
        default=None, ge=0, description="Backend compute seconds; None uses registry default"
    )
    accuracy: float = Field(default=0.98, ge=0, le=1)
    response_bytes: int = Field(default=512, gt=0)


class ServiceOffering(BaseModel):
    """A registry entry: a remote endpoint or a deployable agent"""

    model_config = ConfigDict(frozen=True)

    offering_id: str = Field(min_length=1)
    capability: Capability
    mode: OfferingMode
    endpoint: Optional[EndpointProfile] = None
    manifest: Optional[AgentManifest] = None

    @model_validator(mode="after")
    def _one_payload(self) -> "ServiceOffering":
        if self.mode is OfferingMode.REMOTE_SERVICE:
            if self.endpoint is None or self.manifest is not None:
                raise ValueError("remote-service offering needs exactly an endpoint")
        else:
            if self.manifest is None or self.endpoint is not None:
                raise ValueError("deployable-agent offering needs exactly a manifest")
            if self.manifest.capability is not self.capability:
                raise ValueError("manifest capability differs from offering capability")
        return self


def check_catalog(manifests: Iterable[AgentManifest]) -> List[AgentManifest]:
    """
    Validate the DNN > MLP > LOGREG ordering within each capability

    Args:
        manifests: Agent manifests of a catalog

    Returns:
        The manifests as a list

    Raises:
        ValueError: If accuracy or payload size does not strictly decrease
            along the model ladder, or an agent id repeats
    """
    manifests = list(manifests)
    seen = set()
    by_capability: Dict[Capability, Dict[ModelClass, List[AgentManifest]]] = {}
    for manifest in manifests:
        if manifest.agent_id in seen:
            raise ValueError(f"duplicate agent id {manifest.agent_id!r}")
        seen.add(manifest.agent_id)
        by_capability.setdefault(manifest.capability, {}).setdefault(
            manifest.model_class, []
        ).append(manifest)

    for capability, classes in by_capability.items():
        present = [mc for mc in MODEL_LADDER if mc in classes]
        for higher, lower in zip(present, present[1:]):
            for a in classes[higher]:
                for b in classes[lower]:
                    if not a.accuracy > b.accuracy:
                        raise ValueError(
                            f"{capability.value}: accuracy of {higher.value} must exceed "
                            f"{lower.value} ({a.agent_id} vs {b.agent_id})"
                        )
                    if not a.payload_size > b.payload_size:
                        raise ValueError(
                            f"{capability.value}: payload of {higher.value} must exceed "
                            f"{lower.value} ({a.agent_id} vs {b.agent_id})"
                        )
    return manifests


class LifecycleState(str, Enum):
    REQUESTED = "Requested"
    DEPLOYING = "Deploying"
    DORMANT = "Dormant"
    ACTIVE = "Active"
    PAUSED = "Paused"
    EXPIRED = "Expired"
    UNINSTALLED = "Uninstalled"


# States whose agent holds device memory.
MEMORY_HOLDING_STATES = frozenset({
    LifecycleState.DEPLOYING,
    LifecycleState.DORMANT,
    LifecycleState.ACTIVE,
    LifecycleState.PAUSED,
    LifecycleState.EXPIRED,
})


class TaskCategory(str, Enum):
    FIRST_TRY = "first-try"
    RETRIED = "retried"
    TIMEOUT = "timeout"
    UNACCEPTABLE = "unacceptable"
