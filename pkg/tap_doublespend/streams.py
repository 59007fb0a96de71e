"""Stream type classes for tap-doublespend."""

from __future__ import annotations

import sys
from typing import TYPE_CHECKING

from tap_doublespend import experiment
from tap_doublespend.client import SimulationStream, cached_replications

if sys.version_info >= (3, 12):
    from typing import override
else:
    from typing_extensions import override

if TYPE_CHECKING:
    from collections.abc import Iterable

    from singer_sdk.helpers.types import Record

DEFAULT_MALICIOUS_SHARES = (0.1, 0.2, 0.3, 0.4)


class EstimateStream(SimulationStream):
    """Double-spend probability per confirmation depth, with its confidence interval."""

    name = "double_spend_estimates"
    primary_keys = ("depth",)

    @override
    def results(self) -> Iterable[Record]:
        scenario = self.scenario
        for depth in scenario.depth_range:
            outcomes = cached_replications(scenario, depth)
            result = experiment.summarize(depth, outcomes, scenario.confidence)
            yield {**result.to_record(), "confidence": result.confidence}


class HashrateSweepStream(SimulationStream):
    """Double-spend probability as the malicious pool's share varies."""

    name = "hashrate_sweep"
    primary_keys = ("malicious_share", "depth")

    @override
    def results(self) -> Iterable[Record]:
        shares = self.config.get("malicious_shares") or DEFAULT_MALICIOUS_SHARES
        for result in experiment.estimate_hashrates(self.scenario, [float(s) for s in shares]):
            yield {**result.to_record(), "confidence": result.confidence}


class BlockShareStream(SimulationStream):
    """Main-chain blocks per pool in honest-only runs."""

    name = "block_shares"
    primary_keys = ("pool_id",)

    @override
    def results(self) -> Iterable[Record]:
        for share in experiment.block_share_report(self.scenario):
            yield {**share.to_record(), "share": share.share}


class RunOutcomeStream(SimulationStream):
    """One record per replication and depth."""

    name = "run_outcomes"
    primary_keys = ("depth", "seed")

    @override
    def results(self) -> Iterable[Record]:
        scenario = self.scenario
        for depth in scenario.depth_range:
            for outcome in cached_replications(scenario, depth):
                yield experiment.outcome_record(outcome)
