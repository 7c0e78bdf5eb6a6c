"""
File: edgeswarm/messages.py
JSON payload builders for the registry wire protocol
"""

import json
from typing import Dict, List, Optional, Sequence

from .models import AgentManifest, ServiceOffering


def message_size(message: Dict) -> int:
    """
    Size in bytes of a message's canonical JSON form

    Example:
        >>> message_size({"type": "DeployAck", "outcome": "installed"})
        42
    """
    return len(json.dumps(message, sort_keys=True, separators=(",", ":")).encode("utf-8"))


class MessageBuilder:
    """Build registry message payloads"""

    def discover_request(
        self,
        capability: str,
        position: Sequence[float],
        arch_mode: str,
        credential: bool,
    ) -> Dict:
        """Build DiscoverRequest payload"""
        return {
            "type": "DiscoverRequest",
            "capability": capability,
            "position": [float(position[0]), float(position[1])],
            "arch_mode": arch_mode,
            "credential": credential,
        }

    def discover_response(self, offerings: List[ServiceOffering]) -> Dict:
        """Build DiscoverResponse payload (offering summaries)"""
        summaries = []
        for offering in offerings:
            summary = {
                "offering_id": offering.offering_id,
                "capability": offering.capability.value,
                "mode": offering.mode.value,
            }
            if offering.manifest is not None:
                summary["agent_id"] = offering.manifest.agent_id
                summary["model_class"] = offering.manifest.model_class.value
                summary["payload_size"] = offering.manifest.payload_size
            summaries.append(summary)

        return {
            "type": "DiscoverResponse",
            "offerings": summaries,
        }

    def deploy_request(self, agent_id: str, device_id: str) -> Dict:
        """Build DeployRequest payload"""
        return {
            "type": "DeployRequest",
            "agent_id": agent_id,
            "device_id": device_id,
        }

    def manifest_message(self, manifest: AgentManifest) -> Dict:
        """Build the manifest reply that closes the first deployment round trip"""
        return {
            "type": "Manifest",
            "manifest": manifest.model_dump(mode="json"),
        }

    def bundle_message(self, manifest: AgentManifest) -> Dict:
        """Build the bundle transfer header; the model payload rides along it"""
        return {
            "type": "Bundle",
            "agent_id": manifest.agent_id,
            "payload_size": manifest.payload_size,
        }

    def deploy_ack(self, outcome: str, reason: Optional[str] = None) -> Dict:
        """Build DeployAck payload"""
        payload = {
            "type": "DeployAck",
            "outcome": outcome,
        }

        if reason:
            payload["reason"] = reason

        return payload

    def infer_request(self, task_id: str, capability: str, image_bytes: int) -> Dict:
        """Build InferRequest header; the image rides along it"""
        return {
            "type": "InferRequest",
            "task_id": task_id,
            "capability": capability,
            "image_bytes": image_bytes,
        }

    def infer_response(self, task_id: str, offering_id: str) -> Dict:
        """Build InferResponse payload"""
        return {
            "type": "InferResponse",
            "task_id": task_id,
            "offering_id": offering_id,
        }
