"""Double-spend simulator tap class."""

from __future__ import annotations

from typing import TYPE_CHECKING

from singer_sdk import Tap
from singer_sdk import typing as th  # JSON schema typing helpers

from tap_doublespend import config, streams
from tap_doublespend.model import DEFAULT_MAX_BLOCKS, DEFAULT_MAX_TRANSACTIONS

if TYPE_CHECKING:
    from tap_doublespend.client import SimulationStream


class TapDoubleSpend(Tap):
    """Tap emitting double-spend attack estimates from a Bitcoin network simulation."""

    name = "tap-doublespend"

    config_jsonschema = th.PropertiesList(
        th.Property(
            "difficulty",
            th.NumberType,
            default=config.DEFAULT_DIFFICULTY,
            description="Network mining difficulty",
        ),
        th.Property(
            "hashrate",
            th.NumberType,
            default=config.DEFAULT_HASHRATE_GHS,
            description="Total network hash-rate in GH/s",
        ),
        th.Property(
            "pools",
            th.ArrayType(
                th.ObjectType(
                    th.Property("share", th.NumberType, required=True),
                    th.Property("malicious", th.BooleanType, default=False),
                )
            ),
            description=(
                "Mining pools in id order, each with its share of the hash-rate. At most one "
                "may be malicious. Defaults to shares 0.18, 0.22, 0.10 and a malicious 0.50."
            ),
        ),
        th.Property(
            "peers",
            th.ObjectType(
                th.Property("honest", th.IntegerType, default=3),
                th.Property("malicious", th.IntegerType, default=1),
            ),
            description="Number of honest and malicious peers",
        ),
        th.Property(
            "depth",
            th.IntegerType,
            default=1,
            description="Confirmations the malicious pool waits for before forking",
        ),
        th.Property(
            "depths",
            th.ArrayType(th.IntegerType),
            default=[1, 4],
            description="Inclusive range of confirmation depths to estimate",
        ),
        th.Property(
            "victim",
            th.IntegerType,
            default=0,
            description="Honest peer paid by the malicious peer's first transaction",
        ),
        th.Property(
            "bounds",
            th.ObjectType(
                th.Property("max_events", th.IntegerType, default=config.DEFAULT_MAX_EVENTS),
                th.Property(
                    "max_transactions", th.IntegerType, default=DEFAULT_MAX_TRANSACTIONS
                ),
                th.Property("max_blocks", th.IntegerType, default=DEFAULT_MAX_BLOCKS),
            ),
            description="Limits after which a single run halts",
        ),
        th.Property(
            "replications",
            th.IntegerType,
            default=config.DEFAULT_REPLICATIONS,
            description="Seeded runs per depth",
        ),
        th.Property(
            "seed",
            th.IntegerType,
            default=config.DEFAULT_SEED,
            description="Master seed from which every replication seed is derived",
        ),
        th.Property(
            "confidence",
            th.NumberType,
            default=config.DEFAULT_CONFIDENCE,
            description="Confidence level of the reported intervals",
        ),
        th.Property(
            "workers",
            th.IntegerType,
            default=1,
            description="Worker processes used to run replications",
        ),
        th.Property(
            "malicious_shares",
            th.ArrayType(th.NumberType),
            default=list(streams.DEFAULT_MALICIOUS_SHARES),
            description="Malicious pool shares visited by the hashrate_sweep stream",
        ),
    ).to_dict()

    def discover_streams(self) -> list[SimulationStream]:
        """Return a list of discovered streams.

        Returns:
            A list of discovered streams.
        """
        return [
            streams.EstimateStream(self),
            streams.HashrateSweepStream(self),
            streams.BlockShareStream(self),
            streams.RunOutcomeStream(self),
        ]


if __name__ == "__main__":
    TapDoubleSpend.cli()
