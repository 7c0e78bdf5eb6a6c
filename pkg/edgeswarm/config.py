"""
File: edgeswarm/config.py
Typed simulator configuration and its layered loading

Layers, later wins: packaged ``data/defaults.json``, the JSON file named by
``EDGESWARM_CONFIG``, then caller overrides (scenario ``config`` block, tests).
"""

import json
import logging
import os
from importlib import resources
from typing import Dict, List, Literal, Mapping, Optional

import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .exceptions import ParseError, ValidationError
from .models import Capability, OfferingMode, RetryPolicy, Rat, ServiceOffering, check_catalog
from .utils import deep_merge

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "EDGESWARM_CONFIG"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class EngineConfig(_Frozen):
    battery_tick_s: float = Field(default=60.0, gt=0)
    sweep_period_s: float = Field(default=60.0, gt=0)
    sensor_tick_s: float = Field(default=1.0, gt=0)


class RadioBin(_Frozen):
    """One SNR quality bin: applies from ``min_snr_db`` up to the next bin"""

    min_snr_db: Optional[float] = None
    bandwidth_fraction: float = Field(gt=0, le=1)
    loss_prob: float = Field(ge=0, le=1)


class RadioProfile(_Frozen):
    """Log-distance path loss parameters and SNR bins for one RAT"""

    snr0_db: float
    path_loss_exponent: float = Field(gt=0)
    bins: List[RadioBin] = Field(min_length=1)

    @field_validator("bins")
    @classmethod
    def _monotone_bins(cls, bins: List[RadioBin]) -> List[RadioBin]:
        if bins[0].min_snr_db is not None:
            raise ValueError("first bin must be open below (min_snr_db null)")
        for lower, upper in zip(bins, bins[1:]):
            if upper.min_snr_db is None:
                raise ValueError("only the first bin may omit min_snr_db")
            if lower.min_snr_db is not None and upper.min_snr_db <= lower.min_snr_db:
                raise ValueError("bin thresholds must strictly increase")
            if upper.bandwidth_fraction < lower.bandwidth_fraction:
                raise ValueError("bandwidth fraction must not decrease with SNR")
            if upper.loss_prob > lower.loss_prob:
                raise ValueError("loss probability must not increase with SNR")
        return bins

    def quality(self, snr_db: float) -> RadioBin:
        """Return the bin an SNR falls into"""
        chosen = self.bins[0]
        for radio_bin in self.bins[1:]:
            if snr_db >= radio_bin.min_snr_db:
                chosen = radio_bin
            else:
                break
        return chosen


class P2PConfig(_Frozen):
    enabled: bool = True
    range_m: float = Field(default=30.0, gt=0)
    bandwidth_bps: float = Field(default=2_000_000.0, gt=0)
    loss_prob: float = Field(default=0.05, ge=0, le=1)
    base_latency_s: float = Field(default=0.02, ge=0)


class NetworkConfig(_Frozen):
    reference_distance_m: float = Field(default=10.0, gt=0)
    fade_sigma_db: float = Field(default=4.0, ge=0)
    indoor_penalty_db: float = Field(default=20.0, ge=0)
    profiles: Dict[Rat, RadioProfile]
    p2p: P2PConfig = P2PConfig()
    sever_cellular_at_s: Optional[float] = Field(default=None, ge=0)

    @field_validator("profiles")
    @classmethod
    def _all_rats(cls, profiles: Dict[Rat, RadioProfile]) -> Dict[Rat, RadioProfile]:
        missing = [rat.value for rat in Rat if rat not in profiles]
        if missing:
            raise ValueError(f"missing radio profiles for {', '.join(missing)}")
        return profiles


class RegistryConfig(_Frozen):
    registry_id: str = "sba-registry"
    deploy_budget_s: float = Field(default=120.0, gt=0)
    backend_compute_s: float = Field(default=0.8, ge=0)
    acceptable_latency_s: float = Field(default=10.0, gt=0)
    remote_retry: RetryPolicy = RetryPolicy(max_attempts=3, attempt_timeout_s=5.0)
    discovery_retry: RetryPolicy = RetryPolicy(max_attempts=3, attempt_timeout_s=5.0, transfer_factor=2.0)
    deploy_retry: RetryPolicy = RetryPolicy(max_attempts=5, attempt_timeout_s=5.0, transfer_factor=2.0)
    deployment_mode: Literal["pull", "push"] = "pull"
    provision_at_s: float = Field(default=0.0, ge=0)
    provision_retry_s: float = Field(default=60.0, gt=0)
    verify_planner: bool = False


class LifecycleConfig(_Frozen):
    n_bad: int = Field(default=5, ge=1, description="Consecutive bad readings before pause")
    gps_error_max_m: float = Field(default=15.0, gt=0)


class BatteryConfig(_Frozen):
    idle_pct_per_h: float = Field(default=2.0, ge=0)
    radio_pct_per_mb: float = Field(default=0.005, ge=0)


class SensorConfig(_Frozen):
    gps_sigma_outdoor_m: float = Field(default=4.0, ge=0)
    gps_sigma_indoor_m: float = Field(default=25.0, ge=0)
    estimate_spread: float = Field(default=0.25, ge=0, lt=1)
    imu_heading_sigma_rad: float = Field(default=0.05, ge=0)
    imu_stride_spread: float = Field(default=0.05, ge=0, lt=1)


class SimConfig(_Frozen):
    """All module defaults of one simulation run"""

    engine: EngineConfig = EngineConfig()
    network: NetworkConfig
    registry: RegistryConfig = RegistryConfig()
    lifecycle: LifecycleConfig = LifecycleConfig()
    battery: BatteryConfig = BatteryConfig()
    sensors: SensorConfig = SensorConfig()
    offerings: List[ServiceOffering] = Field(default_factory=list)

    @model_validator(mode="after")
    def _catalog_order(self) -> "SimConfig":
        check_catalog(
            o.manifest for o in self.offerings if o.mode is OfferingMode.DEPLOYABLE_AGENT
        )
        ids = [o.offering_id for o in self.offerings]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate offering ids")
        return self

    def compute_seconds(self, capability: Capability) -> float:
        """Backend compute time of the remote endpoint for a capability"""
        for offering in self.offerings:
            if (
                offering.capability is capability
                and offering.mode is OfferingMode.REMOTE_SERVICE
                and offering.endpoint.compute_s is not None
            ):
                return offering.endpoint.compute_s
        return self.registry.backend_compute_s


def pydantic_error_path(exc: pydantic.ValidationError) -> str:
    """
    Render the first pydantic error as ``path: message``

    Example:
        >>> pydantic_error_path(err)  # doctest: +SKIP
        'devices[0].battery_pct: Input should be less than or equal to 100'
    """
    error = exc.errors()[0]
    path = ""
    for part in error.get("loc", ()):
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    message = error.get("msg", "invalid value")
    return f"{path}: {message}" if path else message


def default_config_dict() -> Dict:
    """The packaged defaults as a plain dict"""
    text = resources.files("edgeswarm").joinpath("data/defaults.json").read_text("utf-8")
    return json.loads(text)


def read_json_file(path: str) -> Dict:
    """Read a JSON object from disk, raising ParseError on bad JSON"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc

    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return data


def merged_config_dict(
    overrides: Optional[Mapping] = None,
    env: Optional[Mapping[str, str]] = None,
) -> Dict:
    """Defaults, then EDGESWARM_CONFIG, then overrides, as one dict"""
    env = os.environ if env is None else env
    data = default_config_dict()

    env_path = env.get(CONFIG_ENV_VAR)
    if env_path:
        logger.info("Loading config overrides from %s", env_path)
        data = deep_merge(data, read_json_file(env_path))

    if overrides:
        data = deep_merge(data, dict(overrides))
    return data


def load_config(
    overrides: Optional[Mapping] = None,
    env: Optional[Mapping[str, str]] = None,
) -> SimConfig:
    """
    Build the effective configuration

    Args:
        overrides: Highest-priority partial config (deep-merged)
        env: Environment mapping (default: os.environ)

    Returns:
        Validated SimConfig

    Raises:
        ValidationError: If the merged config violates the schema
        ParseError: If the EDGESWARM_CONFIG file is not valid JSON

    Example:
        config = load_config({"registry": {"deploy_budget_s": 60}})
    """
    data = merged_config_dict(overrides, env)
    try:
        return SimConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        raise ValidationError(f"invalid config: {pydantic_error_path(exc)}") from exc
