"""Simulation-backed stream base class."""

from __future__ import annotations

import functools
import sys
from functools import cached_property
from typing import TYPE_CHECKING

from singer_sdk import SchemaDirectory, Stream, StreamSchema

from tap_doublespend import experiment, schemas
from tap_doublespend.config import ScenarioConfig

if sys.version_info >= (3, 12):
    from typing import override
else:
    from typing_extensions import override

if TYPE_CHECKING:
    from collections.abc import Iterable

    from singer_sdk.helpers.types import Context, Record

    from tap_doublespend.engine import RunOutcome


@functools.lru_cache(maxsize=32)
def cached_replications(config: ScenarioConfig, depth: int) -> tuple[RunOutcome, ...]:
    """Replications of ``config`` at ``depth``, shared by every stream of a sync."""
    return tuple(experiment.run_replications(config, depth))


class SimulationStream(Stream):
    """Stream whose records are computed by running the simulator."""

    replication_key: str | None = None
    schema = StreamSchema(SchemaDirectory(schemas))

    @cached_property
    def scenario(self) -> ScenarioConfig:
        """Scenario built from the tap settings."""
        return ScenarioConfig.from_mapping(self.config)

    def results(self) -> Iterable[Record]:
        """Compute the stream's records."""
        raise NotImplementedError

    @override
    def get_records(self, context: Context | None) -> Iterable[Record]:
        scenario = self.scenario
        self.logger.info(
            "Simulating %d replications with shares %s",
            scenario.replications,
            list(scenario.shares),
        )
        yield from self.results()
