"""Hierarchical key-value configuration with dotted keys.

Config files are plain text, one ``dotted.key = value`` per line, with
``#`` comments.  Precedence: CLI overrides > file > built-in defaults.
"""

from __future__ import annotations

import copy
from pathlib import Path


DEFAULTS: dict[str, object] = {
    "seed": 0,
    "lastIteration": 9,
    "sim.endOfDaySec": 129600.0,
    # scheduler
    "scheduler.windowSizeSec": 60.0,
    "scheduler.stuckWallTimeoutSec": 30.0,
    # router
    "router.periodLengthSec": 3600.0,
    "router.walkSpeedMps": 1.4,
    "router.bikeSpeedMps": 4.0,
    "router.maxTransfers": 2,
    "router.noiseSigma": 0.0,
    "router.msaWeightFloor": 0.0,
    "router.railOverBusBonus": 0.0,
    "router.stopAccessRadiusMeters": 1500.0,
    "router.gradeMultipliersEnabled": False,
    # trip/tour mode choice
    "modeChoice.epsilon": 1.0,
    "modeChoice.epsilonTour": 1.0,
    "modeChoice.betaTransfer": 1.0,
    "modeChoice.defaultValueOfTime": 10.0,
    "modeChoice.tourModeChoiceEnabled": False,
    # discretionary activity choice
    "discretionary.enabled": False,
    "discretionary.seedInitialPlans": False,
    "discretionary.lambdaDest": 1.0,
    "discretionary.lambdaMode": 1.0,
    "discretionary.destinationSampleCount": 5,
    "discretionary.destinationMaxRadiusMeters": 10000.0,
    "discretionary.betaCost": 1.0,
    "discretionary.betaTransfer": 1.0,
    "discretionary.latePenalty": -50.0,
    "discretionary.destLogsumMultiplier": 1.0,
    # parking
    "parking.ubiquitous": True,
    "parking.dMaxMeters": 800.0,
    "parking.betaCost": 1.0,
    "parking.betaWalkPerMeter": 0.005,
    "parking.betaRangeAnxiety": 1.0,
    "parking.betaHomePreference": 0.5,
    "parking.betaEnrouteDetour": 0.005,
    "parking.epsilon": 1.0,
    # ride-hail
    "agents.rideHail.maxWaitingTimeInSec": 600.0,
    "agents.rideHail.maxExcessRideTime": 0.5,
    "agents.rideHail.maxRequestsPerVehicle": 5,
    "agents.rideHail.defaultBaseFare": 2.0,
    "agents.rideHail.defaultCostPerMile": 2.0,
    "agents.rideHail.defaultCostPerMinute": 0.2,
    "agents.rideHail.pooledBaseFare": 1.5,
    "agents.rideHail.pooledCostPerMile": 1.2,
    "agents.rideHail.pooledCostPerMinute": 0.1,
    "agents.rideHail.dispatchCycleSec": 30.0,
    "agents.rideHail.fleetSizeRatio": 0.0,
    "agents.rideHail.repositioningManager.name": "DEFAULT",
    "agents.rideHail.repositioningManager.demandWindowSec": 900.0,
    "agents.rideHail.repositioningManager.minDistanceMeters": 100.0,
    "agents.rideHail.refuelSocThreshold": 0.2,
    "agents.rideHail.rideHailManager.radiusInMeters": 20000.0,
    # household vehicles
    "agents.vehicles.meanPrivateVehicleStartingSOC": 1.0,
    "agents.vehicles.cavAutomationLevel": 4,
    "agents.vehicles.householdCavSchedulingEnabled": True,
    # physsim
    "physsim.effectiveVehicleLengthMeters": 7.5,
    "physsim.flowCapacityFactor": 1.0,
    "physsim.caccEnabled": False,
    "physsim.caccCurve": "0:1.0,0.5:1.3,1.0:2.0",
    # replanning
    "replanning.pKeepBest": 0.7,
    "replanning.pClearRoutes": 0.1,
    "replanning.pClearModes": 0.1,
    "replanning.pClearDiscretionary": 0.1,
    "replanning.planMemorySize": 5,
    "replanning.selectionScale": 1.0,
    "replanning.stuckScore": -1000.0,
    "replanning.betaActivityDefault": 10.0,
    # skims
    "skims.carryForwardDecay": 0.0,
    "skims.hourBinSec": 3600.0,
    # outputs
    "outputs.gzipEvents": True,
    "outputs.figures": True,
}


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str) -> object:
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes"):
        return True
    if low in ("false", "no"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


class Config:
    """Flat mapping of dotted keys to scalar values with typed access."""

    def __init__(self, values: dict[str, object] | None = None):
        self._values = copy.deepcopy(DEFAULTS)
        if values:
            self._values.update(values)

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict[str, object] | None = None) -> "Config":
        values: dict[str, object] = {}
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = _parse_scalar(val)
        cfg = cls(values)
        if overrides:
            for k, v in overrides.items():
                cfg.set(k, v if not isinstance(v, str) else _parse_scalar(v))
        return cfg

    def set(self, key: str, value: object) -> None:
        self._values[key] = value

    def get(self, key: str, default: object = None) -> object:
        return self._values.get(key, default)

    def get_float(self, key: str, default: float | None = None) -> float:
        v = self._values.get(key, default)
        if v is None:
            raise ConfigError(f"missing config key: {key}")
        return float(v)

    def get_int(self, key: str, default: int | None = None) -> int:
        v = self._values.get(key, default)
        if v is None:
            raise ConfigError(f"missing config key: {key}")
        return int(v)

    def get_bool(self, key: str, default: bool | None = None) -> bool:
        v = self._values.get(key, default)
        if v is None:
            raise ConfigError(f"missing config key: {key}")
        if isinstance(v, str):
            return v.lower() in ("true", "yes", "1")
        return bool(v)

    def get_str(self, key: str, default: str | None = None) -> str:
        v = self._values.get(key, default)
        if v is None:
            raise ConfigError(f"missing config key: {key}")
        return str(v)

    def with_prefix(self, prefix: str) -> dict[str, object]:
        """All keys under ``prefix.`` with the prefix stripped."""
        p = prefix.rstrip(".") + "."
        return {k[len(p):]: v for k, v in self._values.items() if k.startswith(p)}

    def items(self):
        return self._values.items()

    def copy(self) -> "Config":
        return Config(copy.deepcopy(self._values))
