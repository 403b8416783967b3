"""Capacity, cost, and energy models for preprocessing deployments.

Pure arithmetic over device profiles: how many units keep a trainer fed,
what those units cost to buy (CapEx, charged at node granularity) and to
run (OpEx, metered electricity), and throughput-per-dollar /
throughput-per-watt efficiency figures for side-by-side comparison.

All math is float64; dollar amounts are rounded to cents only when a
report is written out.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .pipeline import provision_workers

DEVICE_UNITS = ("core", "isp-device", "node", "accelerator")

THREE_YEARS_HOURS = 3 * 365 * 24  # 26280
DEFAULT_ELECTRICITY_USD_PER_KWH = 0.0733


@dataclass(frozen=True)
class DeviceProfile:
    """One kind of preprocessing device and its catalog numbers.

    ``preproc_throughput`` is the P in ceil(T/P): mini-batches/sec one
    unit sustains. ``capex_usd`` is the purchase price per unit, but
    purchases happen in whole nodes of ``units_per_node`` units.
    """

    name: str
    unit: str
    preproc_throughput: float
    power_watts: float
    capex_usd: float
    units_per_node: int = 1

    def __post_init__(self):
        if not self.name:
            raise ConfigError("device profile needs a name")
        if self.unit not in DEVICE_UNITS:
            raise ConfigError(
                f"device unit must be one of {DEVICE_UNITS}, got {self.unit!r}"
            )
        if self.preproc_throughput <= 0:
            raise ConfigError(f"{self.name}: preproc_throughput must be positive")
        if self.power_watts <= 0:
            raise ConfigError(f"{self.name}: power_watts must be positive")
        if self.capex_usd < 0:
            raise ConfigError(f"{self.name}: capex_usd must be non-negative")
        if self.units_per_node < 1:
            raise ConfigError(f"{self.name}: units_per_node must be >= 1")


@dataclass(frozen=True)
class CostParams:
    duration_hours: float = float(THREE_YEARS_HOURS)
    electricity_usd_per_kwh: float = DEFAULT_ELECTRICITY_USD_PER_KWH

    def __post_init__(self):
        if self.duration_hours <= 0:
            raise ConfigError("duration_hours must be positive")
        if self.electricity_usd_per_kwh <= 0:
            raise ConfigError("electricity_usd_per_kwh must be positive")


def required_units(trainer_rate: float, profile: DeviceProfile) -> int:
    """Minimal unit count n with n * P >= trainer_rate."""
    if trainer_rate <= 0:
        raise ValueError(f"trainer rate must be positive, got {trainer_rate}")
    return provision_workers(trainer_rate, profile.preproc_throughput)


def required_nodes(units: int, profile: DeviceProfile) -> int:
    if units < 0:
        raise ValueError("unit count must be non-negative")
    return -(-units // profile.units_per_node)


def gpu_utilization(n_units: int, profile: DeviceProfile, trainer_rate: float) -> float:
    """Fraction of the trainer's demand the given units can supply, capped at 1."""
    if n_units < 0:
        raise ValueError("unit count must be non-negative")
    if trainer_rate <= 0:
        raise ValueError(f"trainer rate must be positive, got {trainer_rate}")
    return min(1.0, n_units * profile.preproc_throughput / trainer_rate)


def opex(power_watts: float, params: CostParams) -> float:
    """Electricity bill in dollars for running at a power draw for the whole period."""
    if power_watts < 0:
        raise ValueError(f"power must be non-negative, got {power_watts}")
    kwh = (power_watts / 1000.0) * params.duration_hours
    return kwh * params.electricity_usd_per_kwh


def cost_efficiency(
    throughput: float, params: CostParams, capex_usd: float, opex_usd: float
) -> float:
    """Work delivered over the period per total dollar spent."""
    denom = capex_usd + opex_usd
    if denom <= 0:
        raise ValueError("capex + opex must be positive")
    return throughput * params.duration_hours / denom


def energy_efficiency(throughput: float, total_power_watts: float) -> float:
    """Work per second per watt drawn."""
    if total_power_watts <= 0:
        raise ValueError(f"total power must be positive, got {total_power_watts}")
    return throughput / total_power_watts


@dataclass(frozen=True)
class PlanRow:
    name: str
    unit: str
    units_required: int
    nodes: int
    total_power_watts: float
    capex_usd: float
    opex_usd: float
    cost_efficiency: float
    energy_efficiency: float
    cost_efficiency_ratio: float
    energy_efficiency_ratio: float

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "unit": self.unit,
            "units_required": self.units_required,
            "nodes": self.nodes,
            "total_power_watts": self.total_power_watts,
            "capex_usd": round(self.capex_usd, 2),
            "opex_usd": round(self.opex_usd, 2),
            "cost_efficiency": self.cost_efficiency,
            "energy_efficiency": self.energy_efficiency,
            "cost_efficiency_ratio": self.cost_efficiency_ratio,
            "energy_efficiency_ratio": self.energy_efficiency_ratio,
        }


_PLAN_COLUMNS = [
    "name",
    "unit",
    "units_required",
    "nodes",
    "total_power_watts",
    "capex_usd",
    "opex_usd",
    "cost_efficiency",
    "energy_efficiency",
    "cost_efficiency_ratio",
    "energy_efficiency_ratio",
]


@dataclass(frozen=True)
class PlanReport:
    """Side-by-side provisioning comparison at one trainer demand.

    Every row serves the same trainer rate for the same period, so the
    work term of both efficiency ratios cancels and they reduce to pure
    cost and power comparisons against the first (baseline) row.
    """

    trainer_rate: float
    params: CostParams
    rows: tuple[PlanRow, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "trainer_rate": self.trainer_rate,
            "duration_hours": self.params.duration_hours,
            "electricity_usd_per_kwh": self.params.electricity_usd_per_kwh,
            "baseline": self.rows[0].name if self.rows else None,
            "deployments": [r.as_dict() for r in self.rows],
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_PLAN_COLUMNS)
            for row in self.rows:
                d = row.as_dict()
                writer.writerow(
                    [
                        d["name"],
                        d["unit"],
                        d["units_required"],
                        d["nodes"],
                        f"{d['total_power_watts']:.3f}",
                        f"{d['capex_usd']:.2f}",
                        f"{d['opex_usd']:.2f}",
                        f"{d['cost_efficiency']:.6g}",
                        f"{d['energy_efficiency']:.6g}",
                        f"{d['cost_efficiency_ratio']:.6g}",
                        f"{d['energy_efficiency_ratio']:.6g}",
                    ]
                )


def plan_deployment(
    trainer_rate: float, profile: DeviceProfile, params: CostParams
) -> tuple[int, int, float, float, float]:
    """(units, nodes, power, capex, opex) to serve one trainer with one device kind.

    Power is drawn by the active units; CapEx is charged for whole nodes,
    idle slots included.
    """
    units = required_units(trainer_rate, profile)
    nodes = required_nodes(units, profile)
    power = units * profile.power_watts
    capex = nodes * profile.units_per_node * profile.capex_usd
    return units, nodes, power, capex, opex(power, params)


def compare_deployments(
    trainer_rate: float,
    profiles: list[DeviceProfile],
    params: CostParams | None = None,
) -> PlanReport:
    """Provision each profile for the same trainer and compare the bills.

    The first profile is the baseline for the ratio columns.
    """
    if len(profiles) < 2:
        raise ValueError(f"need at least 2 profiles to compare, got {len(profiles)}")
    if params is None:
        params = CostParams()

    rows = []
    base_ce = base_ee = None
    for profile in profiles:
        units, nodes, power, capex, op = plan_deployment(trainer_rate, profile, params)
        ce = cost_efficiency(trainer_rate, params, capex, op)
        ee = energy_efficiency(trainer_rate, power)
        if base_ce is None:
            base_ce, base_ee = ce, ee
        rows.append(
            PlanRow(
                name=profile.name,
                unit=profile.unit,
                units_required=units,
                nodes=nodes,
                total_power_watts=power,
                capex_usd=capex,
                opex_usd=op,
                cost_efficiency=ce,
                energy_efficiency=ee,
                cost_efficiency_ratio=ce / base_ce,
                energy_efficiency_ratio=ee / base_ee,
            )
        )
    return PlanReport(trainer_rate=trainer_rate, params=params, rows=tuple(rows))


# Illustrative catalog. Throughputs are relative placeholders meant to be
# replaced by calibration or a user catalog; power figures are typical
# published TDPs for the device classes involved.
DEFAULT_CATALOG: tuple[DeviceProfile, ...] = (
    DeviceProfile(
        name="cpu-core",
        unit="core",
        preproc_throughput=1.0,
        power_watts=7.5,
        capex_usd=150.0,
        units_per_node=32,
    ),
    DeviceProfile(
        name="smartssd-isp",
        unit="isp-device",
        preproc_throughput=8.0,
        power_watts=25.0,
        capex_usd=600.0,
        units_per_node=1,
    ),
    DeviceProfile(
        name="datacenter-gpu",
        unit="accelerator",
        preproc_throughput=40.0,
        power_watts=250.0,
        capex_usd=10000.0,
        units_per_node=1,
    ),
    DeviceProfile(
        name="datacenter-fpga",
        unit="accelerator",
        preproc_throughput=30.0,
        power_watts=225.0,
        capex_usd=7000.0,
        units_per_node=1,
    ),
)

_CATALOG_KEYS = {
    "name",
    "unit",
    "preproc_throughput",
    "power_watts",
    "capex_usd",
    "units_per_node",
}


def load_catalog(path: str | Path) -> list[DeviceProfile]:
    """Read a device catalog from a JSON document.

    Shape: {"devices": [{name, unit, preproc_throughput, power_watts,
    capex_usd, units_per_node?}, ...]}
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read catalog {path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("devices"), list):
        raise ConfigError(f"catalog {path} must be an object with a 'devices' list")
    profiles = []
    for i, entry in enumerate(doc["devices"]):
        if not isinstance(entry, dict):
            raise ConfigError(f"catalog device #{i} is not an object")
        unknown = set(entry) - _CATALOG_KEYS
        if unknown:
            raise ConfigError(f"catalog device #{i} has unknown keys {sorted(unknown)}")
        missing = _CATALOG_KEYS - {"units_per_node"} - set(entry)
        if missing:
            raise ConfigError(f"catalog device #{i} is missing keys {sorted(missing)}")
        profiles.append(DeviceProfile(**entry))
    if not profiles:
        raise ConfigError(f"catalog {path} lists no devices")
    return profiles


def save_catalog(profiles: list[DeviceProfile], path: str | Path) -> None:
    doc = {
        "devices": [
            {
                "name": p.name,
                "unit": p.unit,
                "preproc_throughput": p.preproc_throughput,
                "power_watts": p.power_watts,
                "capex_usd": p.capex_usd,
                "units_per_node": p.units_per_node,
            }
            for p in profiles
        ]
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
