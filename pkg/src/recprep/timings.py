"""Per-stage wall-time accounting for preprocessing runs."""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class StageTimings:
    """Cumulative seconds spent in each preprocessing stage.

    ``add`` accumulates, so one instance can aggregate any number of
    partitions (or be merged across workers with ``merge``).
    """

    extract_read: float = 0.0
    extract_decode: float = 0.0
    bucketize: float = 0.0
    sigridhash: float = 0.0
    log: float = 0.0
    batch_convert: float = 0.0
    rpc_transfer: float = 0.0

    def add(self, stage: str, seconds: float) -> None:
        setattr(self, stage, getattr(self, stage) + seconds)

    def merge(self, other: "StageTimings") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    @property
    def extract_seconds(self) -> float:
        return self.extract_read + self.extract_decode

    @property
    def transform_seconds(self) -> float:
        return self.bucketize + self.sigridhash + self.log

    @property
    def total_seconds(self) -> float:
        return sum(getattr(self, f.name) for f in fields(self))

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}
